#include "ditto/adaptation.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ditto/errors.hpp"

namespace ditto {

// ---------------------------------------------------------------- prior

LanguagePrior LanguagePrior::uniform(const std::vector<std::string>& targets) {
  if (targets.empty()) throw InputError("uniform prior over zero targets");
  LanguagePrior p;
  for (const auto& t : targets) p.probs[t] = 1.0 / static_cast<double>(targets.size());
  return p;
}

LanguagePrior LanguagePrior::single(const std::string& target) {
  LanguagePrior p;
  p.probs[target] = 1.0;
  return p;
}

void LanguagePrior::validate() const {
  if (probs.empty()) throw InputError("empty language prior");
  double total = 0.0;
  for (const auto& [t, p] : probs) {
    if (!(p >= 0.0)) throw InputError("negative prior probability for " + t);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("prior does not sum to one");
}

LanguagePrior compute_prior(const std::map<std::string, double>& scores, const std::string& source,
                            const std::vector<std::string>& targets) {
  if (targets.empty()) throw InputError("compute_prior needs at least one target");
  auto score = [&](const std::string& d) {
    auto it = scores.find(d);
    if (it == scores.end()) throw InputError("missing zero-shot score for domain '" + d + "'");
    if (!(it->second >= 0.0 && it->second <= 100.0)) {
      throw InputError("zero-shot score for '" + d + "' outside [0, 100]");
    }
    return it->second;
  };
  const double zs = score(source);
  std::vector<double> delta;
  delta.reserve(targets.size());
  for (const auto& t : targets) delta.push_back(std::max(zs - score(t), 0.0));

  const double n = static_cast<double>(delta.size());
  const double mean = std::accumulate(delta.begin(), delta.end(), 0.0) / n;
  double var = 0.0;
  for (double d : delta) var += (d - mean) * (d - mean);
  const double sigma = std::sqrt(var / n);

  double total = 0.0;
  for (double& d : delta) {
    d += sigma;
    total += d;
  }
  if (total <= 0.0) {
    std::vector<std::string> sorted = targets;
    std::sort(sorted.begin(), sorted.end());
    return LanguagePrior::uniform(sorted);
  }
  LanguagePrior prior;
  for (std::size_t i = 0; i < targets.size(); ++i) prior.probs[targets[i]] = delta[i] / total;
  return prior;
}

const std::string& sample_target(const LanguagePrior& prior, Rng& rng) {
  if (prior.probs.empty()) throw InputError("sample_target on an empty prior");
  const double u = rng.uniform();
  double cdf = 0.0;
  const std::string* last_positive = nullptr;
  for (const auto& [t, p] : prior.probs) {
    if (p <= 0.0) continue;
    last_positive = &t;
    cdf += p;
    if (u < cdf) return t;
  }
  // Rounding left the cdf just under 1.
  return *last_positive;
}

// ---------------------------------------------------------------- variants

TrainVariant TrainVariant::make(VariantKind kind, double lambda, double rho, std::string target) {
  TrainVariant v;
  v.kind = kind;
  v.lambda = lambda;
  v.sam.rho = rho;
  v.single_target = std::move(target);
  switch (kind) {
    case VariantKind::Baseline:
      v.lambda = 0.0;
      v.sam.rho = 0.0;
      break;
    case VariantKind::DittoMinusSam:
      v.sam.rho = 0.0;
      break;
    case VariantKind::DittoMinusLa:
      v.lambda = 0.0;
      break;
    default:
      break;
  }
  v.validate();
  return v;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

TrainVariant TrainVariant::parse(const std::string& name, double lambda, double rho) {
  const std::string n = lower(name);
  if (n == "baseline") return make(VariantKind::Baseline, lambda, rho);
  if (n == "ditto") return make(VariantKind::Ditto, lambda, rho);
  if (n == "ditto-sam" || n == "ditto_minus_sam") return make(VariantKind::DittoMinusSam, lambda, rho);
  if (n == "ditto-la" || n == "ditto_minus_la") return make(VariantKind::DittoMinusLa, lambda, rho);
  if (n == "ditto(unf)" || n == "ditto-unf" || n == "ditto_uniform") {
    return make(VariantKind::DittoUniform, lambda, rho);
  }
  if (n.starts_with("ditto-single:")) {
    return make(VariantKind::DittoSingle, lambda, rho, name.substr(std::string("ditto-single:").size()));
  }
  if (n.starts_with("ditto(") && n.ends_with(")") && n.size() > 7) {
    return make(VariantKind::DittoSingle, lambda, rho, name.substr(6, name.size() - 7));
  }
  throw ConfigError("unknown variant '" + name + "'");
}

std::string TrainVariant::name() const {
  switch (kind) {
    case VariantKind::Baseline: return "Baseline";
    case VariantKind::Ditto: return "DiTTO";
    case VariantKind::DittoMinusSam: return "DiTTO-SAM";
    case VariantKind::DittoMinusLa: return "DiTTO-LA";
    case VariantKind::DittoSingle: return "DiTTO(" + single_target + ")";
    case VariantKind::DittoUniform: return "DiTTO(UNF)";
  }
  return "?";
}

bool TrainVariant::adapts() const {
  return kind != VariantKind::Baseline && kind != VariantKind::DittoMinusLa;
}

void TrainVariant::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(sam.rho >= 0.0)) throw ConfigError("rho must be non-negative");
  if (kind == VariantKind::Baseline && sam.rho != 0.0) throw ConfigError("Baseline requires rho = 0");
  if (kind == VariantKind::DittoMinusSam && sam.rho != 0.0) throw ConfigError("DiTTO-SAM requires rho = 0");
  if (kind == VariantKind::DittoMinusLa && lambda != 0.0) throw ConfigError("DiTTO-LA requires lambda = 0");
  if (kind == VariantKind::DittoSingle && single_target.empty()) {
    throw ConfigError("single-target variant needs a target id");
  }
}

// ---------------------------------------------------------------- steps

namespace {

double task_forward_backward(ModelBundle& bundle, const Batch& batch) {
  Tape tape;
  Var x = tape.constant(batch.x);
  Var loss = softmax_cross_entropy(bundle.classify(tape, bundle.encode(tape, x)), batch.y);
  tape.backward(loss);
  return loss.value()[0];
}

Tensor sample_rows(const Tensor& pool, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(pool.rows()));
  return pool.gather_rows(idx);
}

std::vector<int> domain_labels(std::size_t source_rows, std::size_t target_rows) {
  std::vector<int> y(source_rows + target_rows, 0);
  std::fill_n(y.begin(), source_rows, 1);
  return y;
}

}  // namespace

double baseline_step(ModelBundle& bundle, const Batch& batch, const Optimizers& opt,
                     const TrainVariant& variant, std::int64_t step) {
  if (batch.x.rows() == 0) throw DataError("empty training batch");
  const ParamGroup task = bundle.task_params();
  return sam_step([&] { return task_forward_backward(bundle, batch); }, task, variant.sam, opt.task, step);
}

DittoStepResult ditto_step(ModelBundle& bundle, const Batch& batch, const LanguagePrior& prior,
                           const DomainDataset& data, const Optimizers& opt, const TrainVariant& variant,
                           Rng& rng, std::int64_t step, const DittoOptions& options) {
  if (batch.x.rows() == 0) throw DataError("empty training batch");
  if (options.disc_steps_per_step < 1) throw ConfigError("disc_steps_per_step must be >= 1");
  const ParamGroup task = bundle.task_params();
  DittoStepResult res;

  // Task phase: gradient of the source loss at w + eps, parameters back at w.
  res.task_loss = sam_gradient([&] { return task_forward_backward(bundle, batch); }, task, variant.sam.rho);

  res.target = sample_target(prior, rng);
  const auto it = data.targets.find(res.target);
  if (it == data.targets.end() || it->second.unlabeled.rows() == 0) {
    throw DataError("no unlabeled rows for target '" + res.target + "'");
  }
  const Tensor& pool = it->second.unlabeled;
  const ParamGroup disc = bundle.discriminator_params(res.target);
  zero_grad(disc);

  const std::size_t m = batch.x.rows();
  auto source_half = [&]() -> Tensor {
    if (!options.disjoint_source_pool) return batch.x;
    if (data.source_unlabeled.rows() == 0) throw DataError("no unlabeled rows for source '" + data.source + "'");
    return sample_rows(data.source_unlabeled, m, rng);
  };

  // Adversarial phase: one backward gives D_t its minimizing gradient and
  // the encoder the reversed (maximizing) one, scaled by lambda.
  {
    const Tensor xs = source_half();
    const Tensor xt = sample_rows(pool, m, rng);
    const auto y = domain_labels(xs.rows(), xt.rows());
    Tape tape;
    Var feats = bundle.encode(tape, tape.constant(Tensor::vstack(xs, xt)));
    Var probs = bundle.discriminate(tape, res.target, grad_reverse(feats, variant.lambda));
    Var loss = binary_cross_entropy(probs, y);
    tape.backward(loss);
    res.domain_loss = loss.value()[0];
  }

  adamw_step(task, opt.task, step);
  adamw_step(disc, opt.discriminator, step);

  for (int extra = 1; extra < options.disc_steps_per_step; ++extra) {
    const Tensor xs = source_half();
    const Tensor xt = sample_rows(pool, m, rng);
    const auto y = domain_labels(xs.rows(), xt.rows());
    const Tensor feats = bundle.extract_features(Tensor::vstack(xs, xt));
    zero_grad(disc);
    Tape tape;
    Var loss = binary_cross_entropy(bundle.discriminate(tape, res.target, tape.constant(feats)), y);
    tape.backward(loss);
    adamw_step(disc, opt.discriminator, step);
  }
  return res;
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  encoder.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (disc_hidden == 0) throw ConfigError("disc_hidden must be positive");
  if (!(lr >= 0.0) || !(disc_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (ditto.disc_steps_per_step < 1) throw ConfigError("disc_steps_per_step must be >= 1");
}

std::string TrainReport::to_jsonl() const {
  using nlohmann::ordered_json;
  std::ostringstream os;
  for (const auto& e : epochs) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["task_loss"] = e.task_loss;
    j["adv_loss"] = e.adv_loss;
    j["disc_loss"] = e.disc_loss;
    j["per_domain_acc"] = e.per_domain_acc;
    os << j.dump() << '\n';
  }
  ordered_json s;
  s["summary"] = true;
  s["variant"] = variant;
  s["seed"] = seed;
  s["epochs"] = epochs.size();
  s["adversarial_steps"] = adversarial_steps;
  s["target_samples"] = target_samples;
  s["final_accuracy"] = final_accuracy;
  os << s.dump() << '\n';
  return os.str();
}

std::map<std::string, double> evaluate_domains(ModelBundle& bundle, const DomainDataset& data) {
  std::map<std::string, double> acc;
  for (const auto& d : data.domains()) {
    const LabeledSet& split = data.eval_split(d);
    if (split.empty()) throw DataError("empty eval split for domain '" + d + "'");
    acc[d] = accuracy_percent(bundle, split.x, split.y);
  }
  return acc;
}

TrainResult train(const TrainConfig& config, const DomainDataset& data, const TrainVariant& variant,
                  std::uint64_t seed, const std::optional<LanguagePrior>& prior_in) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  variant.validate();
  data.validate();
  if (config.encoder.input_dim != data.feature_dim) {
    throw ConfigError("encoder input_dim " + std::to_string(config.encoder.input_dim) +
                      " does not match dataset feature dim " + std::to_string(data.feature_dim));
  }

  const auto targets = data.target_ids();
  std::optional<LanguagePrior> prior;
  switch (variant.kind) {
    case VariantKind::Ditto:
    case VariantKind::DittoMinusSam:
      if (!prior_in) throw ConfigError(variant.name() + " needs a target prior");
      prior = prior_in;
      break;
    case VariantKind::DittoUniform:
      prior = LanguagePrior::uniform(targets);
      break;
    case VariantKind::DittoSingle:
      if (!data.targets.contains(variant.single_target)) {
        throw ConfigError("single-target variant names unknown target '" + variant.single_target + "'");
      }
      prior = LanguagePrior::single(variant.single_target);
      break;
    default:
      break;
  }
  if (prior) {
    prior->validate();
    for (const auto& [t, _] : prior->probs) {
      if (!data.targets.contains(t)) throw ConfigError("prior names unknown target '" + t + "'");
    }
  }

  const Rng root(seed);
  Rng init_rng = root.fork(0);
  Rng shuffle_rng = root.fork(1);
  Rng adv_rng = root.fork(2);

  ModelBundle bundle = ModelBundle::init(config.encoder, data.num_classes, targets, init_rng, config.disc_hidden);

  const std::size_t n = data.source_labeled.size();
  if (n == 0 && config.epochs > 0) throw DataError("no labeled source rows");
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const auto total = static_cast<std::int64_t>(std::max<std::size_t>(1, config.epochs * steps_per_epoch));

  Optimizers opt;
  opt.task.lr = config.lr;
  opt.task.weight_decay = config.weight_decay;
  opt.task.total_steps = total;
  opt.discriminator = opt.task;
  opt.discriminator.lr = config.disc_lr;

  TrainReport report;
  report.variant = variant.name();
  report.seed = seed;
  for (const auto& t : targets) report.target_samples[t] = 0;

  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(n);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::size_t adv_count = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(perm.data() + start, end - start);
      const LabeledSet sub = data.source_labeled.subset(idx);
      const Batch batch{sub.x, sub.y};
      if (variant.adapts()) {
        const auto r = ditto_step(bundle, batch, *prior, data, opt, variant, adv_rng, step, config.ditto);
        rec.task_loss += r.task_loss;
        rec.disc_loss += r.domain_loss;
        rec.adv_loss += -variant.lambda * r.domain_loss;
        ++report.target_samples[r.target];
        ++report.adversarial_steps;
        ++adv_count;
      } else {
        rec.task_loss += baseline_step(bundle, batch, opt, variant, step);
      }
      ++step;
    }
    rec.task_loss /= static_cast<double>(steps_per_epoch);
    if (adv_count > 0) {
      rec.disc_loss /= static_cast<double>(adv_count);
      rec.adv_loss /= static_cast<double>(adv_count);
    }
    if (config.eval_each_epoch) rec.per_domain_acc = evaluate_domains(bundle, data);
    report.epochs.push_back(std::move(rec));
  }

  report.final_accuracy = evaluate_domains(bundle, data);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(bundle), std::move(report)};
}

DomainDataset few_shot_augment(const DomainDataset& data, std::size_t k, Rng& rng) {
  DomainDataset out = data;
  if (k == 0) return out;
  for (auto& [id, t] : out.targets) {
    const std::size_t pool = t.few_shot.size();
    if (pool < k) {
      throw DataError("target '" + id + "' has " + std::to_string(pool) + " few-shot rows, need " +
                      std::to_string(k));
    }
    auto perm = rng.permutation(pool);
    const std::vector<std::size_t> take(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    const std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
    out.source_labeled.append(t.few_shot.subset(take));
    t.few_shot = t.few_shot.subset(rest);
  }
  return out;
}

}  // namespace ditto
