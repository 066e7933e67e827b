#include "ditto/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ditto/errors.hpp"

namespace ditto {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation: " + std::string(name));
}

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  for (std::size_t i : inputs) {
    if (i >= nodes_.size()) throw StateError("op input " + std::to_string(i) + " is not on this tape");
  }
  Node n;
  n.value = std::move(value);
  if (record_) {
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                               [&](std::size_t i) { return nodes_[i].needs_grad; });
    if (n.needs_grad) {
      n.inputs = std::move(inputs);
      n.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (!record_) throw StateError("backward() on a tape created in inference mode");
  if (loss.tape != this) throw StateError("loss was not recorded on this tape");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " + lv.shape_str());
  }
  if (!lv.all_finite()) throw NumericError("non-finite loss in backward()");
  // A constant loss does not depend on any parameter.
  if (!nodes_[loss.id].needs_grad) return;

  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.grad.same_shape(n.value)) {
      n.grad.fill(0.0);
    } else {
      n.grad = Tensor::zeros_like(n.value);
    }
  }
  nodes_[loss.id].grad[0] = 1.0;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.param == nullptr || !n.needs_grad) continue;
    Tensor& slot = n.param->grad;
    if (!slot.same_shape(n.grad)) {
      throw ShapeError("gradient slot shape mismatch for " + n.param->name);
    }
    for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += n.grad[k];
  }
}

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw StateError("operands recorded on different tapes");
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_finite(av, "matmul");
  require_finite(bv, "matmul");
  Tensor out = matmul_raw(av, bv);
  return a.tape->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) accumulate(t.grad_mut(ia), matmul_nt(g, t.value(ib)));
    if (t.needs_grad(ib)) accumulate(t.grad_mut(ib), matmul_tn(t.value(ia), g));
  });
}

namespace {

void column_sums_into(const Tensor& g, Tensor& db) {
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
}

}  // namespace

Var add_row_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("bias shape " + bv.shape_str() + " does not broadcast over " + xv.shape_str());
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return x.tape->push(std::move(out), {x.id, bias.id}, [ix = x.id, ib = bias.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ix)) accumulate(t.grad_mut(ix), g);
    if (t.needs_grad(ib)) column_sums_into(g, t.grad_mut(ib));
  });
}

Var affine(Var x, Var w, Var bias) {
  require_same_tape(x, w);
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  if (xv.cols() != wv.rows()) {
    throw ShapeError("affine shape mismatch: x " + xv.shape_str() + " vs W " + wv.shape_str());
  }
  if (bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeError("affine bias shape " + bv.shape_str() + " vs W " + wv.shape_str());
  }
  require_finite(xv, "affine");
  Tensor out = matmul_raw(xv, wv);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return x.tape->push(std::move(out), {x.id, w.id, bias.id},
                      [ix = x.id, iw = w.id, ib = bias.id](Tape& t, std::size_t self) {
                        const Tensor& g = t.grad(self);
                        if (t.needs_grad(ix)) accumulate(t.grad_mut(ix), matmul_nt(g, t.value(iw)));
                        if (t.needs_grad(iw)) accumulate(t.grad_mut(iw), matmul_tn(t.value(ix), g));
                        if (t.needs_grad(ib)) column_sums_into(g, t.grad_mut(ib));
                      });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add shape mismatch: " + a.value().shape_str() + " vs " + b.value().shape_str());
  }
  Tensor out = a.value();
  accumulate(out, b.value());
  return a.tape->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    if (t.needs_grad(ia)) accumulate(t.grad_mut(ia), t.grad(self));
    if (t.needs_grad(ib)) accumulate(t.grad_mut(ib), t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("mul shape mismatch: " + a.value().shape_str() + " vs " + b.value().shape_str());
  }
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  return a.tape->push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_mut(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * t.value(ib)[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_mut(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * t.value(ia)[k];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape->push(std::move(out), {x.id}, [ix = x.id, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += factor * g[k];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->push(Tensor(1, 1, s), {x.id}, [ix = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_mut(ix).data()) v += g;
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  return x.tape->push(std::move(out), {x.id}, [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * (1.0 - y[k] * y[k]);
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape->push(std::move(out), {x.id}, [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (xv[k] > 0.0) gx[k] += g[k];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return x.tape->push(std::move(out), {x.id}, [ix = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * y[k] * (1.0 - y[k]);
  });
}

Var activation(Var x, Activation kind) {
  return kind == Activation::Tanh ? tanh(x) : relu(x);
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t m = z.rows(), classes = z.cols();
  if (m == 0) throw ShapeError("softmax_cross_entropy on an empty batch");
  if (labels.size() != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     z.shape_str());
  }
  Tensor probs(m, classes);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw LabelError("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
    }
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs(r, c) = std::exp(row[c] - mx);
      denom += probs(r, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) /= denom;
    total += std::log(denom) + mx - row[static_cast<std::size_t>(y)];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape->push(
      Tensor(1, 1, total / static_cast<double>(m)), {logits.id},
      [iz = logits.id, probs = std::move(probs), ys = std::move(ys)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(probs.rows());
        Tensor& gz = t.grad_mut(iz);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double onehot = static_cast<int>(c) == ys[r] ? 1.0 : 0.0;
            gz(r, c) += g * (probs(r, c) - onehot);
          }
        }
      });
}

Var binary_cross_entropy(Var probs, std::span<const int> targets) {
  const Tensor& p = probs.value();
  const std::size_t m = p.rows();
  if (m == 0 || p.cols() != 1) throw ShapeError("binary_cross_entropy expects [m x 1], got " + p.shape_str());
  if (targets.size() != m) throw ShapeError("binary_cross_entropy: target count mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int y = targets[r];
    if (y != 0 && y != 1) throw LabelError("binary target must be 0 or 1, got " + std::to_string(y));
    const double pc = std::clamp(p[r], kBceClamp, 1.0 - kBceClamp);
    total -= y == 1 ? std::log(pc) : std::log(1.0 - pc);
  }
  std::vector<int> ys(targets.begin(), targets.end());
  return probs.tape->push(Tensor(1, 1, total / static_cast<double>(m)), {probs.id},
                          [ip = probs.id, ys = std::move(ys)](Tape& t, std::size_t self) {
                            const Tensor& pv = t.value(ip);
                            const double g = t.grad(self)[0] / static_cast<double>(pv.rows());
                            Tensor& gp = t.grad_mut(ip);
                            for (std::size_t r = 0; r < pv.rows(); ++r) {
                              const double q = pv[r];
                              // Zero derivative where the clamp is active.
                              if (q < kBceClamp || q > 1.0 - kBceClamp) continue;
                              gp[r] += g * (ys[r] == 1 ? -1.0 / q : 1.0 / (1.0 - q));
                            }
                          });
}

Var grad_reverse(Var x, double lambda) {
  if (!(lambda >= 0.0)) throw ParamError("grad_reverse lambda must be >= 0");
  return x.tape->push(x.value(), {x.id}, [ix = x.id, lambda](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += -lambda * g[k];
  });
}

GradCheckResult finite_diff_check(const LossBuilder& build, ParamStore& params, double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw ParamError("finite_diff_check step must lie in (0, 1e-2]");
  params.zero_grad();
  {
    Tape tape;
    Var loss = build(tape, params);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(false);
    const double v = build(tape, params).value()[0];
    if (!std::isfinite(v)) throw NumericError("non-finite loss during finite differences");
    return v;
  };

  GradCheckResult res;
  for (auto& [name, p] : params) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + h;
      const double up = eval();
      p.value[k] = orig - h;
      const double down = eval();
      p.value[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[k];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      if (err > res.max_rel_error || res.worst_param.empty()) {
        res = {err, name, k, analytic, numeric};
      }
    }
  }
  return res;
}

}  // namespace ditto
