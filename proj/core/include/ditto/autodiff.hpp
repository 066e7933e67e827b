#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ditto/params.hpp"
#include "ditto/tensor.hpp"

namespace ditto {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

enum class Activation { Tanh, Relu };

Activation parse_activation(std::string_view name);
std::string to_string(Activation a);

// Define-by-run reverse-mode tape. A fresh tape is built for every forward
// pass. A tape created with record=false keeps values only (inference mode)
// and refuses backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Leaf whose gradient is kept on the tape (readable via grad()).
  Var leaf(Tensor value);
  // Leaf that never receives a gradient (input data).
  Var constant(Tensor value);
  // Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Records an op output. `inputs` must be ids already on this tape.
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  // Reverse sweep from a 1x1 loss. Node gradients are reset first, so
  // repeated calls are deterministic; parameter gradient slots accumulate.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add_row_bias(Var x, Var bias);
Var affine(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
Var tanh(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var activation(Var x, Activation kind);

// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy on probabilities clamped to [kBceClamp, 1 - kBceClamp].
Var binary_cross_entropy(Var probs, std::span<const int> targets);

// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(Var x, double lambda);

// Builds a scalar loss on the given tape from the parameters in the store.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares backward() against central differences over every parameter
// coordinate. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
// Gradient slots are left holding the analytic gradient.
GradCheckResult finite_diff_check(const LossBuilder& build, ParamStore& params, double h = 1e-5);

}  // namespace ditto
