#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ditto/params.hpp"

namespace ditto {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::int64_t total_steps = 1;  // linear decay reaches zero here

  void validate() const;
};

// lr * (1 - step / total_steps). Steps past the end clamp to 0 with a warning.
double lr_at(const AdamWConfig& config, std::int64_t step);

// One decoupled-weight-decay Adam update of every parameter in the group.
// `step` is the schedule position (0-based); bias correction uses each
// parameter's own update counter.
void adamw_step(const ParamGroup& params, const AdamWConfig& config, std::int64_t step);

struct SamConfig {
  double rho = 0.05;
};

// Saved pre-perturbation values for one sam_perturb/sam_restore pair.
class Perturbation {
 public:
  const std::vector<Tensor>& epsilon() const noexcept { return epsilon_; }
  double norm() const;
  bool restored() const noexcept { return restored_; }

 private:
  friend std::optional<Perturbation> sam_perturb(const ParamGroup&, double);
  friend void sam_restore(const ParamGroup&, Perturbation&);

  ParamGroup params_;
  std::vector<Tensor> saved_;
  std::vector<Tensor> epsilon_;
  bool restored_ = false;
};

inline constexpr double kDegenerateGradNorm = 1e-12;

// Moves the group to w + rho * g / ||g||, the norm taken over the whole
// group's gradient as one vector. Returns nullopt (no change) when
// ||g|| < kDegenerateGradNorm.
std::optional<Perturbation> sam_perturb(const ParamGroup& params, double rho);

// Puts back the saved values. Throws StateError on a second call or when the
// record belongs to a different group.
void sam_restore(const ParamGroup& params, Perturbation& record);

// Runs forward + backward for a fixed batch, accumulating into the gradient
// slots, and returns the loss.
using LossAndGrad = std::function<double()>;

// Leaves the sharpness-aware gradient (evaluated at w + eps) in the group's
// gradient slots with parameter values back at w. Returns the loss at w.
// With rho == 0 or a degenerate gradient the slots hold the plain gradient.
double sam_gradient(const LossAndGrad& loss, const ParamGroup& params, double rho);

// sam_gradient followed by adamw_step.
double sam_step(const LossAndGrad& loss, const ParamGroup& params, const SamConfig& sam,
                const AdamWConfig& adamw, std::int64_t step);

}  // namespace ditto
