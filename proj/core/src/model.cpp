#include "ditto/model.hpp"

#include <algorithm>
#include <cmath>

#include "ditto/errors.hpp"

namespace ditto {
namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

std::string encoder_name(std::size_t layer, const char* leaf) {
  return "encoder.layer" + std::to_string(layer) + "." + leaf;
}

std::string disc_name(std::string_view target, const char* part) {
  return "disc." + std::string(target) + "." + part;
}

}  // namespace

void EncoderSpec::validate() const {
  if (input_dim == 0) throw ParamError("encoder input_dim must be positive");
  if (hidden_dims.empty()) throw ParamError("encoder needs at least one hidden layer");
  if (std::find(hidden_dims.begin(), hidden_dims.end(), std::size_t{0}) != hidden_dims.end()) {
    throw ParamError("encoder hidden dims must be positive");
  }
}

ModelBundle ModelBundle::init(const EncoderSpec& spec, std::size_t num_classes,
                              std::vector<std::string> target_ids, Rng& rng, std::size_t disc_hidden) {
  spec.validate();
  if (num_classes == 0) throw ParamError("num_classes must be positive");
  if (disc_hidden == 0) throw ParamError("discriminator hidden size must be positive");

  ModelBundle b;
  b.spec_ = spec;
  b.num_classes_ = num_classes;
  b.disc_hidden_ = disc_hidden;
  std::sort(target_ids.begin(), target_ids.end());
  if (std::adjacent_find(target_ids.begin(), target_ids.end()) != target_ids.end()) {
    throw ParamError("duplicate target id");
  }
  b.targets_ = std::move(target_ids);

  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    const std::size_t h = spec.hidden_dims[i];
    b.params_.add(encoder_name(i, "W"), glorot(fan_in, h, rng));
    b.params_.add(encoder_name(i, "b"), Tensor(1, h));
    fan_in = h;
  }
  const std::size_t feat = spec.feature_dim();
  b.params_.add("classifier.W", glorot(feat, num_classes, rng));
  b.params_.add("classifier.b", Tensor(1, num_classes));
  for (const auto& t : b.targets_) {
    b.params_.add(disc_name(t, "hidden.W"), glorot(feat, disc_hidden, rng));
    b.params_.add(disc_name(t, "hidden.b"), Tensor(1, disc_hidden));
    b.params_.add(disc_name(t, "head.W"), glorot(disc_hidden, 1, rng));
    b.params_.add(disc_name(t, "head.b"), Tensor(1, 1));
  }
  return b;
}

ModelBundle ModelBundle::from_params(const EncoderSpec& spec, std::size_t num_classes,
                                     std::vector<std::string> target_ids, std::size_t disc_hidden,
                                     ParamStore params) {
  spec.validate();
  ModelBundle b;
  b.spec_ = spec;
  b.num_classes_ = num_classes;
  b.disc_hidden_ = disc_hidden;
  std::sort(target_ids.begin(), target_ids.end());
  b.targets_ = std::move(target_ids);
  b.params_ = std::move(params);

  auto expect = [&](const std::string& name, std::size_t r, std::size_t c) {
    const Tensor& v = b.params_.at(name).value;
    if (v.rows() != r || v.cols() != c) {
      throw ShapeError("parameter " + name + " has shape " + v.shape_str() + ", expected [" +
                       std::to_string(r) + "x" + std::to_string(c) + "]");
    }
  };
  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    expect(encoder_name(i, "W"), fan_in, spec.hidden_dims[i]);
    expect(encoder_name(i, "b"), 1, spec.hidden_dims[i]);
    fan_in = spec.hidden_dims[i];
  }
  expect("classifier.W", fan_in, num_classes);
  expect("classifier.b", 1, num_classes);
  for (const auto& t : b.targets_) {
    expect(disc_name(t, "hidden.W"), fan_in, disc_hidden);
    expect(disc_name(t, "hidden.b"), 1, disc_hidden);
    expect(disc_name(t, "head.W"), disc_hidden, 1);
    expect(disc_name(t, "head.b"), 1, 1);
  }
  const std::size_t expected = 2 * spec.hidden_dims.size() + 2 + 4 * b.targets_.size();
  if (b.params_.size() != expected) throw ParamError("checkpoint holds unexpected parameters");
  return b;
}

void ModelBundle::check_input(const Tensor& x) const {
  if (x.cols() != spec_.input_dim) {
    throw ShapeError("encoder expects " + std::to_string(spec_.input_dim) + " input columns, got " +
                     x.shape_str());
  }
}

Var ModelBundle::encode(Tape& tape, Var x) {
  check_input(x.value());
  Var h = x;
  for (std::size_t i = 0; i < spec_.hidden_dims.size(); ++i) {
    Var w = tape.param(params_.at(encoder_name(i, "W")));
    Var b = tape.param(params_.at(encoder_name(i, "b")));
    h = activation(affine(h, w, b), spec_.activation);
  }
  return h;
}

Var ModelBundle::classify(Tape& tape, Var features) {
  return affine(features, tape.param(params_.at("classifier.W")), tape.param(params_.at("classifier.b")));
}

Var ModelBundle::discriminate(Tape& tape, std::string_view target, Var features) {
  if (!has_target(target)) throw LookupError("no discriminator for target '" + std::string(target) + "'");
  Var h = tanh(affine(features, tape.param(params_.at(disc_name(target, "hidden.W"))),
                      tape.param(params_.at(disc_name(target, "hidden.b")))));
  return sigmoid(affine(h, tape.param(params_.at(disc_name(target, "head.W"))),
                        tape.param(params_.at(disc_name(target, "head.b")))));
}

Tensor ModelBundle::extract_features(const Tensor& x) {
  Tape tape(false);
  return encode(tape, tape.constant(x)).value();
}

Tensor ModelBundle::logits(const Tensor& x) {
  Tape tape(false);
  return classify(tape, encode(tape, tape.constant(x))).value();
}

std::vector<int> ModelBundle::predict(const Tensor& x) {
  const Tensor z = logits(x);
  std::vector<int> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ParamGroup ModelBundle::task_params() {
  ParamGroup g = params_.select("encoder.");
  ParamGroup c = params_.select("classifier.");
  g.insert(g.end(), c.begin(), c.end());
  return g;
}

ParamGroup ModelBundle::discriminator_params(std::string_view target) {
  if (!has_target(target)) throw LookupError("no discriminator for target '" + std::string(target) + "'");
  return params_.select("disc." + std::string(target) + ".");
}

bool ModelBundle::has_target(std::string_view target) const {
  return std::binary_search(targets_.begin(), targets_.end(), target);
}

double accuracy_percent(ModelBundle& bundle, const Tensor& x, std::span<const int> labels) {
  if (x.rows() == 0) throw DataError("accuracy on an empty split");
  if (labels.size() != x.rows()) throw ShapeError("label count does not match rows");
  const auto pred = bundle.predict(x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace ditto
