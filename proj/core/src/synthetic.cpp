#include "ditto/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ditto/errors.hpp"
#include "ditto/numfmt.hpp"
#include "ditto/rng.hpp"

namespace ditto {

std::vector<std::vector<double>> MixtureSpec::class_means() const {
  if (!means.empty()) return means;
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double a = (phase_deg + 360.0 * static_cast<double>(c) / static_cast<double>(num_classes)) *
                     std::numbers::pi / 180.0;
    std::vector<double> m(dim, 0.0);
    m[0] = radius * std::cos(a);
    if (dim > 1) m[1] = radius * std::sin(a);
    out.push_back(std::move(m));
  }
  return out;
}

void MixtureSpec::validate() const {
  if (num_classes < 2) throw ConfigError("mixture needs at least two classes");
  if (dim < 2) throw ConfigError("mixture dimension must be at least 2");
  if (!(sigma >= 0.0)) throw ConfigError("mixture sigma must be non-negative");
  const auto m = class_means();
  if (m.size() != num_classes) throw ConfigError("mixture lists the wrong number of means");
  for (const auto& v : m) {
    if (v.size() != dim) throw ConfigError("mixture mean has the wrong dimension");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      if (m[i] == m[j]) {
        throw ConfigError(sigma == 0.0 ? "degenerate mixture: coincident class means with sigma = 0"
                                       : "mixture class means must be pairwise distinct");
      }
    }
  }
  if (radius == 0.0 && means.empty()) throw ConfigError("degenerate mixture: zero radius");
}

DomainTransform DomainTransform::rotation(double degrees) {
  DomainTransform t;
  t.kind = TransformKind::Rotation;
  t.degrees = degrees;
  return t;
}

std::string DomainTransform::describe() const {
  switch (kind) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Rotation: return "rotation " + format_double(degrees) + " deg";
    case TransformKind::Translation: return "translation";
    case TransformKind::Permutation: return "permutation";
    case TransformKind::Noise: return "noise sigma " + format_double(sigma);
  }
  return "?";
}

void SyntheticSpec::validate() const {
  mixture.validate();
  std::size_t sources = 0;
  std::set<std::string> ids;
  for (const auto& d : domains) {
    if (d.id.empty() || d.id.find_first_of(",\n\r\" ") != std::string::npos) {
      throw ConfigError("domain id '" + d.id + "' is empty or contains a CSV delimiter");
    }
    if (!ids.insert(d.id).second) throw ConfigError("duplicate domain id '" + d.id + "'");
    sources += d.is_source ? 1 : 0;
    if (d.sizes.eval == 0) throw ConfigError("domain '" + d.id + "' needs eval > 0");
    if (!d.is_source && d.sizes.labeled > 0) {
      throw ConfigError("target '" + d.id + "' cannot have labeled rows; use few_shot_pool");
    }
    const auto& t = d.transform;
    if (t.kind == TransformKind::Rotation && !(t.degrees >= 0.0 && t.degrees < 360.0)) {
      throw ConfigError("rotation angle for '" + d.id + "' must lie in [0, 360)");
    }
    if (t.kind == TransformKind::Translation && t.shift.size() != mixture.dim) {
      throw ConfigError("translation for '" + d.id + "' has the wrong dimension");
    }
    if (t.kind == TransformKind::Permutation) {
      auto p = t.permutation;
      std::sort(p.begin(), p.end());
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != i) throw ConfigError("permutation for '" + d.id + "' is not a permutation");
      }
      if (p.size() != mixture.dim) throw ConfigError("permutation for '" + d.id + "' has the wrong size");
    }
    if (t.kind == TransformKind::Noise && !(t.sigma >= 0.0)) {
      throw ConfigError("noise sigma for '" + d.id + "' must be non-negative");
    }
  }
  if (sources != 1) throw ConfigError("exactly one source domain is required");
}

MixtureSpec radial_mixture() {
  MixtureSpec m;
  m.num_classes = 3;
  m.dim = 2;
  m.means = {{2.0, 0.0}, {5.0, 0.0}, {8.0, 0.0}};
  m.sigma = 0.7;
  return m;
}

SyntheticSpec rotation_ladder(const std::vector<double>& angles, std::size_t labeled, std::size_t unlabeled,
                              std::size_t few_shot_pool, std::size_t eval) {
  SyntheticSpec spec;
  spec.mixture = radial_mixture();
  DomainSpec src;
  src.id = "src";
  src.is_source = true;
  src.sizes = {labeled, unlabeled, 0, eval};
  spec.domains.push_back(src);
  for (double a : angles) {
    DomainSpec t;
    t.id = "rot" + format_double(a);
    t.transform = DomainTransform::rotation(a);
    t.sizes = {0, unlabeled, few_shot_pool, eval};
    spec.domains.push_back(t);
  }
  return spec;
}

namespace {

// Base draws: labels cycle through the classes so every split is balanced.
LabeledSet draw_base(const MixtureSpec& mix, const std::vector<std::vector<double>>& means, std::size_t n,
                     Rng& rng) {
  LabeledSet s;
  s.x = Tensor(n, mix.dim);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % mix.num_classes);
    s.y[i] = c;
    for (std::size_t j = 0; j < mix.dim; ++j) {
      s.x(i, j) = means[static_cast<std::size_t>(c)][j] + mix.sigma * rng.normal();
    }
  }
  return s;
}

void apply_transform(const DomainTransform& t, Tensor& x, Rng& rng) {
  switch (t.kind) {
    case TransformKind::Identity:
      return;
    case TransformKind::Rotation: {
      const double a = t.degrees * std::numbers::pi / 180.0;
      const double c = std::cos(a), s = std::sin(a);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const double u = x(i, 0), v = x(i, 1);
        x(i, 0) = c * u - s * v;
        x(i, 1) = s * u + c * v;
      }
      return;
    }
    case TransformKind::Translation:
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += t.shift[j];
      return;
    case TransformKind::Permutation: {
      const Tensor orig = x;
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = orig(i, t.permutation[j]);
      return;
    }
    case TransformKind::Noise:
      for (double& v : x.data()) v += t.sigma * rng.normal();
      return;
  }
}

}  // namespace

DomainDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto means = spec.mixture.class_means();
  const Rng root(seed);

  std::size_t max_eval = 0;
  for (const auto& d : spec.domains) max_eval = std::max(max_eval, d.sizes.eval);
  Rng eval_rng = root.fork(0);
  const LabeledSet base_eval = draw_base(spec.mixture, means, max_eval, eval_rng);

  DomainDataset data;
  data.num_classes = spec.mixture.num_classes;
  data.feature_dim = spec.mixture.dim;
  for (std::size_t di = 0; di < spec.domains.size(); ++di) {
    const DomainSpec& d = spec.domains[di];
    Rng rng = root.fork(1 + di);
    Rng noise_rng = rng.fork(99);
    auto make = [&](std::size_t n) {
      LabeledSet s = draw_base(spec.mixture, means, n, rng);
      apply_transform(d.transform, s.x, noise_rng);
      return s;
    };
    std::vector<std::size_t> prefix(d.sizes.eval);
    for (std::size_t i = 0; i < prefix.size(); ++i) prefix[i] = i;
    LabeledSet eval = base_eval.subset(prefix);
    apply_transform(d.transform, eval.x, noise_rng);

    if (d.is_source) {
      data.source = d.id;
      data.source_labeled = make(d.sizes.labeled);
      data.source_unlabeled = make(d.sizes.unlabeled).x;
      data.source_eval = std::move(eval);
    } else {
      TargetData t;
      t.unlabeled = make(d.sizes.unlabeled).x;
      t.few_shot = make(d.sizes.few_shot_pool);
      t.eval = std::move(eval);
      data.targets.emplace(d.id, std::move(t));
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------- CSV I/O

std::string dataset_csv_header(std::size_t dim) {
  std::string h = "domain,split,label";
  for (std::size_t j = 0; j < dim; ++j) h += ",f" + std::to_string(j);
  return h;
}

void write_split_csv(std::ostream& os, const std::string& domain, const std::string& split, const Tensor& x,
                     const std::vector<int>* labels) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    os << domain << ',' << split << ',';
    if (labels) os << (*labels)[i];
    for (double v : x.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& domain, const std::string& split,
                std::size_t dim, const Tensor& x, const std::vector<int>* labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << dataset_csv_header(dim) << '\n';
  write_split_csv(os, domain, split, x, labels);
  if (!os) throw InputError("failed writing " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

struct RawSplit {
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
};

}  // namespace

void write_dataset(const DomainDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["source"] = data.source;
  manifest["targets"] = data.target_ids();
  manifest["num_classes"] = data.num_classes;
  manifest["feature_dim"] = data.feature_dim;
  std::vector<std::string> files;
  auto emit = [&](const std::string& domain, const std::string& split, const Tensor& x,
                  const std::vector<int>* labels) {
    const std::string name = domain + "_" + split + ".csv";
    write_file(dir / name, domain, split, data.feature_dim, x, labels);
    files.push_back(name);
  };
  emit(data.source, "labeled", data.source_labeled.x, &data.source_labeled.y);
  emit(data.source, "unlabeled", data.source_unlabeled, nullptr);
  emit(data.source, "eval", data.source_eval.x, &data.source_eval.y);
  for (const auto& [id, t] : data.targets) {
    emit(id, "unlabeled", t.unlabeled, nullptr);
    emit(id, "fewshot", t.few_shot.x, &t.few_shot.y);
    emit(id, "eval", t.eval.x, &t.eval.y);
  }
  manifest["files"] = files;
  std::ofstream os(dir / "dataset.json", std::ios::binary);
  if (!os) throw InputError("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

DomainDataset load_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "dataset.json";
  std::ifstream is(mpath);
  if (!is) throw InputError("cannot open " + mpath.string());
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(mpath.string(), 1, e.what());
  }
  try {
    std::vector<std::filesystem::path> files;
    for (const auto& f : m.at("files")) files.push_back(dir / f.get<std::string>());
    return load_dataset_files(files, m.at("source").get<std::string>(),
                              m.at("targets").get<std::vector<std::string>>(), m.at("num_classes").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(mpath.string(), 1, std::string("bad manifest: ") + e.what());
  }
}

DomainDataset load_dataset_files(const std::vector<std::filesystem::path>& files, const std::string& source,
                                 const std::vector<std::string>& targets, std::size_t num_classes) {
  static const std::set<std::string> kSplits{"labeled", "unlabeled", "fewshot", "eval"};
  std::map<std::pair<std::string, std::string>, RawSplit> raw;
  std::size_t dim = 0;

  for (const auto& path : files) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path.string());
    const std::string src = path.string();
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(is, line)) throw ParseError(src, 1, "empty file");
    ++line_no;
    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "domain" || header[1] != "split" || header[2] != "label") {
      throw ParseError(src, line_no, "header must start with domain,split,label,f0");
    }
    const std::size_t file_dim = header.size() - 3;
    if (line != dataset_csv_header(file_dim) && line != dataset_csv_header(file_dim) + "\r") {
      throw ParseError(src, line_no, "feature columns must be named f0..f" + std::to_string(file_dim - 1));
    }
    if (dim == 0) dim = file_dim;
    if (file_dim != dim) {
      throw DataError(src + ": " + std::to_string(file_dim) + " feature columns, expected " + std::to_string(dim));
    }
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != header.size()) {
        throw ParseError(src, line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                           std::to_string(cells.size()));
      }
      const std::string& split = cells[1];
      if (!kSplits.contains(split)) throw ParseError(src, line_no, "unknown split '" + split + "'");
      RawSplit& rs = raw[{cells[0], split}];
      if (split == "unlabeled") {
        if (!cells[2].empty()) throw ParseError(src, line_no, "unlabeled row carries a label");
      } else {
        auto lbl = parse_int(cells[2]);
        if (!lbl) throw ParseError(src, line_no, "missing or non-integer label in " + split + " row");
        if (*lbl < 0 || static_cast<std::size_t>(*lbl) >= num_classes) {
          throw ParseError(src, line_no, "label " + cells[2] + " outside [0, " + std::to_string(num_classes) + ")");
        }
        rs.labels.push_back(static_cast<int>(*lbl));
      }
      for (std::size_t j = 3; j < cells.size(); ++j) {
        auto v = parse_double(cells[j]);
        if (!v) throw ParseError(src, line_no, "bad feature value '" + cells[j] + "'");
        rs.values.push_back(*v);
      }
      ++rs.rows;
    }
  }

  auto take_x = [&](const std::string& d, const std::string& s) {
    auto it = raw.find({d, s});
    if (it == raw.end()) return Tensor(0, dim);
    return Tensor(it->second.rows, dim, std::move(it->second.values));
  };
  auto take_l = [&](const std::string& d, const std::string& s) {
    LabeledSet ls;
    auto it = raw.find({d, s});
    if (it == raw.end()) {
      ls.x = Tensor(0, dim);
      return ls;
    }
    ls.y = std::move(it->second.labels);
    ls.x = Tensor(it->second.rows, dim, std::move(it->second.values));
    return ls;
  };

  DomainDataset data;
  data.source = source;
  data.num_classes = num_classes;
  data.feature_dim = dim;
  data.source_labeled = take_l(source, "labeled");
  data.source_unlabeled = take_x(source, "unlabeled");
  data.source_eval = take_l(source, "eval");
  for (const auto& t : targets) {
    TargetData td;
    td.unlabeled = take_x(t, "unlabeled");
    td.few_shot = take_l(t, "fewshot");
    td.eval = take_l(t, "eval");
    if (td.unlabeled.rows() == 0) throw DataError("target '" + t + "' has an empty unlabeled split");
    data.targets.emplace(t, std::move(td));
  }
  data.validate();
  return data;
}

}  // namespace ditto
