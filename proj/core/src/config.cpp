#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "ditto/errors.hpp"
#include "ditto/experiment.hpp"

namespace ditto {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
struct is_vector : std::false_type {};
template <typename U>
struct is_vector<std::vector<U>> : std::true_type {};

// nlohmann converts -1 to a huge unsigned value; reject it instead.
template <typename T>
void check_unsigned(const json& v, const char* key) {
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_unsigned()) throw ConfigError(std::string(key) + " must be a non-negative integer");
  } else if constexpr (is_vector<T>::value) {
    if (v.is_array()) {
      for (const auto& e : v) check_unsigned<typename T::value_type>(e, key);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  check_unsigned<T>(j.at(key), key);
  out = j.at(key).get<T>();
}

SplitSizes parse_sizes(const json& j) {
  check_keys(j, "sizes", {"labeled", "unlabeled", "few_shot_pool", "eval"});
  SplitSizes s;
  read(j, "labeled", s.labeled);
  read(j, "unlabeled", s.unlabeled);
  read(j, "few_shot_pool", s.few_shot_pool);
  read(j, "eval", s.eval);
  return s;
}

DomainTransform parse_transform(const json& j) {
  check_keys(j, "transform", {"type", "degrees", "shift", "perm", "sigma"});
  DomainTransform t;
  const std::string type = j.value("type", "identity");
  if (type == "identity") {
    t.kind = TransformKind::Identity;
  } else if (type == "rotation") {
    t.kind = TransformKind::Rotation;
    read(j, "degrees", t.degrees);
  } else if (type == "translation") {
    t.kind = TransformKind::Translation;
    read(j, "shift", t.shift);
  } else if (type == "permutation") {
    t.kind = TransformKind::Permutation;
    read(j, "perm", t.permutation);
  } else if (type == "noise") {
    t.kind = TransformKind::Noise;
    read(j, "sigma", t.sigma);
  } else {
    throw ConfigError("unknown transform type '" + type + "'");
  }
  return t;
}

SyntheticSpec parse_data(const json& j, std::uint64_t& seed) {
  check_keys(j, "data", {"seed", "mixture", "rotation_ladder", "domains"});
  read(j, "seed", seed);
  if (j.contains("rotation_ladder") && j.contains("domains")) {
    throw ConfigError("data: give either rotation_ladder or domains, not both");
  }
  SyntheticSpec spec = rotation_ladder({15, 30, 45, 60});
  if (j.contains("rotation_ladder")) {
    const json& r = j.at("rotation_ladder");
    check_keys(r, "rotation_ladder", {"angles", "labeled", "unlabeled", "few_shot_pool", "eval"});
    std::vector<double> angles{15, 30, 45, 60};
    std::size_t labeled = 2000, unlabeled = 2000, pool = 100, eval = 1000;
    read(r, "angles", angles);
    read(r, "labeled", labeled);
    read(r, "unlabeled", unlabeled);
    read(r, "few_shot_pool", pool);
    read(r, "eval", eval);
    spec = rotation_ladder(angles, labeled, unlabeled, pool, eval);
  }
  if (j.contains("domains")) {
    spec.domains.clear();
    for (const auto& d : j.at("domains")) {
      check_keys(d, "domain", {"id", "kind", "transform", "sizes"});
      DomainSpec ds;
      ds.id = d.at("id").get<std::string>();
      const std::string kind = d.value("kind", "target");
      if (kind != "source" && kind != "target") throw ConfigError("domain kind must be source or target");
      ds.is_source = kind == "source";
      if (d.contains("transform")) ds.transform = parse_transform(d.at("transform"));
      if (d.contains("sizes")) ds.sizes = parse_sizes(d.at("sizes"));
      spec.domains.push_back(std::move(ds));
    }
  }
  if (j.contains("mixture")) {
    const json& m = j.at("mixture");
    check_keys(m, "mixture", {"num_classes", "dim", "means", "radius", "phase_deg", "sigma"});
    read(m, "num_classes", spec.mixture.num_classes);
    read(m, "dim", spec.mixture.dim);
    read(m, "means", spec.mixture.means);
    read(m, "radius", spec.mixture.radius);
    read(m, "phase_deg", spec.mixture.phase_deg);
    read(m, "sigma", spec.mixture.sigma);
  }
  return spec;
}

}  // namespace

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
  if (train.encoder.input_dim != data.mixture.dim) {
    throw ConfigError("model input dimension must equal the mixture dimension");
  }
  if (!(lambda >= 0.0) || !(rho >= 0.0)) throw ConfigError("lambda and rho must be non-negative");
  for (double r : rho_grid) {
    if (!(r > 0.0)) throw ConfigError("rho_grid entries must be positive");
  }
  if (variants.empty()) throw ConfigError("no variants configured");
  for (const auto& v : variants) TrainVariant::parse(v, lambda, rho);
  if (seeds.empty()) throw ConfigError("no seeds configured");
  if (source_fractions.empty()) throw ConfigError("no source fractions configured");
  for (double s : source_fractions) {
    if (!(s > 0.0 && s <= 100.0)) throw ConfigError("source fractions must lie in (0, 100]");
  }
  if (few_shot_k.empty()) throw ConfigError("few_shot_k must list at least one k (use 0)");
  if (!(cost_c_s >= 0.0)) throw ConfigError("cost c_s must be non-negative");
  for (double c : cost_c_t_over_s) {
    if (!(c >= 0.0)) throw ConfigError("cost c_t_over_s must be non-negative");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("<config>", 1, e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j, "config", {"data", "model", "train", "variants", "seeds", "source_fractions", "few_shot_k",
                             "cka_pairing", "export_features", "cost", "out"});
    if (j.contains("data")) c.data = parse_data(j.at("data"), c.data_seed);
    c.train.encoder.input_dim = c.data.mixture.dim;
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"hidden_dims", "activation", "disc_hidden"});
      read(m, "hidden_dims", c.train.encoder.hidden_dims);
      if (m.contains("activation")) c.train.encoder.activation = parse_activation(m.at("activation").get<std::string>());
      read(m, "disc_hidden", c.train.disc_hidden);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, "train", {"epochs", "batch_size", "lr", "disc_lr", "weight_decay", "lambda", "rho", "rho_grid",
                              "disjoint_source_pool", "disc_steps_per_step", "eval_each_epoch"});
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "lr", c.train.lr);
      read(t, "disc_lr", c.train.disc_lr);
      read(t, "weight_decay", c.train.weight_decay);
      read(t, "lambda", c.lambda);
      read(t, "rho", c.rho);
      read(t, "rho_grid", c.rho_grid);
      read(t, "disjoint_source_pool", c.train.ditto.disjoint_source_pool);
      read(t, "disc_steps_per_step", c.train.ditto.disc_steps_per_step);
      read(t, "eval_each_epoch", c.train.eval_each_epoch);
    }
    read(j, "variants", c.variants);
    read(j, "seeds", c.seeds);
    read(j, "source_fractions", c.source_fractions);
    read(j, "few_shot_k", c.few_shot_k);
    if (j.contains("cka_pairing")) {
      const auto p = j.at("cka_pairing").get<std::string>();
      if (p == "index") {
        c.cka_pairing = CkaPairing::Index;
      } else if (p == "class") {
        c.cka_pairing = CkaPairing::Class;
      } else {
        throw ConfigError("cka_pairing must be 'index' or 'class'");
      }
    }
    read(j, "export_features", c.export_features);
    if (j.contains("cost")) {
      const json& k = j.at("cost");
      check_keys(k, "cost", {"c_s", "c_t_over_s"});
      read(k, "c_s", c.cost_c_s);
      read(k, "c_t_over_s", c.cost_c_t_over_s);
    }
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ditto
