#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ditto/dataset.hpp"
#include "ditto/model.hpp"
#include "ditto/optim.hpp"
#include "ditto/rng.hpp"

namespace ditto {

// Sampling distribution over target domains.
struct LanguagePrior {
  std::map<std::string, double> probs;

  static LanguagePrior uniform(const std::vector<std::string>& targets);
  static LanguagePrior single(const std::string& target);
  void validate() const;
};

// Weights each target by its zero-shot deficit to the source:
//   delta_t = max(Z(s) - Z(t), 0),  w_t = delta_t + std(delta)   (population std)
// normalized to sum to one; uniform when every weight is zero.
LanguagePrior compute_prior(const std::map<std::string, double>& zero_shot_scores, const std::string& source,
                            const std::vector<std::string>& targets);

// Inverse-CDF draw over the prior's sorted target ids.
const std::string& sample_target(const LanguagePrior& prior, Rng& rng);

enum class VariantKind { Baseline, Ditto, DittoMinusSam, DittoMinusLa, DittoSingle, DittoUniform };

struct TrainVariant {
  VariantKind kind = VariantKind::Baseline;
  double lambda = 1.0;
  SamConfig sam{};
  std::string single_target;  // DittoSingle only

  // Builds a variant with the forced settings applied (rho = 0 for Baseline
  // and DiTTO-SAM, lambda = 0 for Baseline and DiTTO-LA).
  static TrainVariant make(VariantKind kind, double lambda = 1.0, double rho = 0.05, std::string target = {});
  // Accepts Baseline, DiTTO, DiTTO-SAM, DiTTO-LA, DiTTO(UNF), DiTTO(<target>)
  // (case-insensitive; "ditto-unf" and "ditto-single:<target>" also work).
  static TrainVariant parse(const std::string& name, double lambda = 1.0, double rho = 0.05);

  std::string name() const;
  // True for variants that train discriminators.
  bool adapts() const;
  // True when the prior comes from Baseline zero-shot scores.
  bool needs_baseline_prior() const { return kind == VariantKind::Ditto || kind == VariantKind::DittoMinusSam; }
  // Throws ConfigError on contradictory settings.
  void validate() const;
};

struct Optimizers {
  AdamWConfig task;           // encoder + classifier
  AdamWConfig discriminator;  // every D_t
};

struct Batch {
  Tensor x;
  std::vector<int> y;
};

// Cross-entropy on a labeled batch; AdamW (through SAM when rho > 0) on the
// encoder and classifier. Discriminators are not touched.
double baseline_step(ModelBundle& bundle, const Batch& batch, const Optimizers& opt,
                     const TrainVariant& variant, std::int64_t step);

struct DittoOptions {
  // Draw the source half of the domain batch from the unlabeled source pool
  // instead of reusing the labeled batch inputs.
  bool disjoint_source_pool = false;
  // Discriminator updates per encoder update (>= 1).
  int disc_steps_per_step = 1;
};

struct DittoStepResult {
  double task_loss = 0.0;
  double domain_loss = 0.0;  // binary cross-entropy of D_t on the domain batch
  std::string target;
};

// One joint step: SAM task gradient, sampled target t, gradient-reversed
// domain loss through D_t, then AdamW on encoder+classifier (summed
// gradients) and on D_t.
DittoStepResult ditto_step(ModelBundle& bundle, const Batch& batch, const LanguagePrior& prior,
                           const DomainDataset& data, const Optimizers& opt, const TrainVariant& variant,
                           Rng& rng, std::int64_t step, const DittoOptions& options = {});

struct TrainConfig {
  EncoderSpec encoder{};
  std::size_t disc_hidden = kDefaultDiscriminatorHidden;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  double disc_lr = 1e-2;
  double weight_decay = 0.01;
  DittoOptions ditto{};
  bool eval_each_epoch = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double adv_loss = 0.0;   // -lambda * domain loss, the encoder-side term
  double disc_loss = 0.0;  // domain loss minimized by the discriminators
  std::map<std::string, double> per_domain_acc;
};

struct TrainReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::map<std::string, std::size_t> target_samples;
  std::size_t adversarial_steps = 0;
  std::map<std::string, double> final_accuracy;
  double wall_seconds = 0.0;

  // One JSON object per epoch, then a summary record. Wall-clock time is not
  // written so the output is reproducible.
  std::string to_jsonl() const;
};

struct TrainResult {
  ModelBundle model;
  TrainReport report;
};

std::map<std::string, double> evaluate_domains(ModelBundle& bundle, const DomainDataset& data);

// Full run. `prior` is required for DiTTO and DiTTO-SAM; the other variants
// derive their own (uniform / single target) and ignore it.
TrainResult train(const TrainConfig& config, const DomainDataset& data, const TrainVariant& variant,
                  std::uint64_t seed, const std::optional<LanguagePrior>& prior = std::nullopt);

// Adds k labeled rows per target (sampled without replacement from each
// target's few-shot pool) to the labeled source set.
DomainDataset few_shot_augment(const DomainDataset& data, std::size_t k, Rng& rng);

}  // namespace ditto
