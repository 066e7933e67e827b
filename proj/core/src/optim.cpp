#include "ditto/optim.hpp"

#include <cmath>
#include <iostream>

#include "ditto/errors.hpp"

namespace ditto {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("AdamW eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
}

double lr_at(const AdamWConfig& config, std::int64_t step) {
  if (step < 0) throw ParamError("negative schedule step");
  if (step > config.total_steps) {
    std::clog << "warning: schedule step " << step << " beyond total_steps " << config.total_steps
              << "; learning rate clamped to 0\n";
    return 0.0;
  }
  return config.lr * (1.0 - static_cast<double>(step) / static_cast<double>(config.total_steps));
}

void adamw_step(const ParamGroup& params, const AdamWConfig& config, std::int64_t step) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);
  }
  const double lr = lr_at(config, step);
  for (Parameter* p : params) {
    const std::int64_t t = ++p->step;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad[k];
      p->m[k] = config.beta1 * p->m[k] + (1.0 - config.beta1) * g;
      p->v[k] = config.beta2 * p->v[k] + (1.0 - config.beta2) * g * g;
      const double m_hat = p->m[k] / bc1;
      const double v_hat = p->v[k] / bc2;
      const double w = p->value[k];
      p->value[k] = w - lr * (m_hat / (std::sqrt(v_hat) + config.eps) + config.weight_decay * w);
    }
  }
}

double Perturbation::norm() const {
  double s = 0.0;
  for (const auto& e : epsilon_) s += frobenius_sq(e);
  return std::sqrt(s);
}

std::optional<Perturbation> sam_perturb(const ParamGroup& params, double rho) {
  if (!(rho >= 0.0)) throw ParamError("SAM rho must be non-negative");
  double sq = 0.0;
  for (const Parameter* p : params) sq += frobenius_sq(p->grad);
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm in sam_perturb");
  if (norm < kDegenerateGradNorm) return std::nullopt;

  Perturbation rec;
  rec.params_ = params;
  rec.saved_.reserve(params.size());
  rec.epsilon_.reserve(params.size());
  const double factor = rho / norm;
  for (Parameter* p : params) {
    rec.saved_.push_back(p->value);
    Tensor eps = Tensor::zeros_like(p->grad);
    for (std::size_t k = 0; k < eps.size(); ++k) {
      eps[k] = factor * p->grad[k];
      p->value[k] += eps[k];
    }
    rec.epsilon_.push_back(std::move(eps));
  }
  return rec;
}

void sam_restore(const ParamGroup& params, Perturbation& record) {
  if (record.restored_) throw StateError("perturbation already restored");
  if (record.params_ != params) throw StateError("perturbation record belongs to a different parameter group");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(record.saved_[i])) {
      throw StateError("perturbation record shape mismatch for " + params[i]->name);
    }
    params[i]->value = record.saved_[i];
  }
  record.restored_ = true;
}

double sam_gradient(const LossAndGrad& loss, const ParamGroup& params, double rho) {
  zero_grad(params);
  const double value = loss();
  if (rho == 0.0) return value;
  auto pert = sam_perturb(params, rho);
  if (!pert) return value;
  zero_grad(params);
  loss();
  sam_restore(params, *pert);
  return value;
}

double sam_step(const LossAndGrad& loss, const ParamGroup& params, const SamConfig& sam,
                const AdamWConfig& adamw, std::int64_t step) {
  const double value = sam_gradient(loss, params, sam.rho);
  adamw_step(params, adamw, step);
  return value;
}

}  // namespace ditto
