#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ditto/autodiff.hpp"
#include "ditto/params.hpp"
#include "ditto/rng.hpp"
#include "ditto/tensor.hpp"

namespace ditto {

struct EncoderSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{32, 32};
  Activation activation = Activation::Tanh;

  std::size_t feature_dim() const { return hidden_dims.empty() ? 0 : hidden_dims.back(); }
  void validate() const;
};

inline constexpr std::size_t kDefaultDiscriminatorHidden = 64;

// Encoder M, classifier C and one discriminator per target domain, all held in
// a single ParamStore:
//   encoder.layer<i>.{W,b}
//   classifier.{W,b}
//   disc.<target>.{hidden,head}.{W,b}
class ModelBundle {
 public:
  // Glorot-uniform weights, zero biases. Draw order: encoder, classifier,
  // discriminators in target order, so the encoder/classifier initialization
  // does not depend on the number of targets.
  static ModelBundle init(const EncoderSpec& spec, std::size_t num_classes,
                          std::vector<std::string> target_ids, Rng& rng,
                          std::size_t disc_hidden = kDefaultDiscriminatorHidden);

  // Rebuilds a bundle around an existing store (checkpoint loading).
  static ModelBundle from_params(const EncoderSpec& spec, std::size_t num_classes,
                                 std::vector<std::string> target_ids, std::size_t disc_hidden,
                                 ParamStore params);

  Var encode(Tape& tape, Var x);
  Var classify(Tape& tape, Var features);
  // Sigmoid probability that the features come from the source domain.
  Var discriminate(Tape& tape, std::string_view target, Var features);

  // Inference-mode forward passes.
  Tensor extract_features(const Tensor& x);
  Tensor logits(const Tensor& x);
  std::vector<int> predict(const Tensor& x);

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamGroup task_params();
  ParamGroup discriminator_params(std::string_view target);

  const EncoderSpec& spec() const noexcept { return spec_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t disc_hidden() const noexcept { return disc_hidden_; }
  const std::vector<std::string>& targets() const noexcept { return targets_; }
  bool has_target(std::string_view target) const;

 private:
  ModelBundle() = default;
  void check_input(const Tensor& x) const;

  EncoderSpec spec_;
  std::size_t num_classes_ = 0;
  std::size_t disc_hidden_ = kDefaultDiscriminatorHidden;
  std::vector<std::string> targets_;
  ParamStore params_;
};

// Percentage of rows whose argmax prediction equals the label.
double accuracy_percent(ModelBundle& bundle, const Tensor& x, std::span<const int> labels);

// Text checkpoint: a metadata header followed by `name rows cols` and the
// row-major values in shortest round-trip decimal form.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

void write_params(std::ostream& os, const ParamStore& params);
ParamStore read_params(std::istream& is, const std::string& source_name = "<stream>");

}  // namespace ditto
