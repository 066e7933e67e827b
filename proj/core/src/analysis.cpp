#include "ditto/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ditto/errors.hpp"

namespace ditto {

double EvalTable::at(const std::string& method, const std::string& domain) const {
  auto m = accuracy.find(method);
  if (m == accuracy.end()) throw LookupError("no results for method '" + method + "'");
  auto d = m->second.find(domain);
  if (d == m->second.end()) throw LookupError("no result for domain '" + domain + "' under " + method);
  return d->second;
}

std::vector<std::string> EvalTable::methods() const {
  std::vector<std::string> out;
  for (const auto& [m, _] : accuracy) out.push_back(m);
  return out;
}

std::vector<std::string> EvalTable::domains(const std::string& method) const {
  std::vector<std::string> out;
  auto it = accuracy.find(method);
  if (it == accuracy.end()) throw LookupError("no results for method '" + method + "'");
  for (const auto& [d, _] : it->second) out.push_back(d);
  return out;
}

std::vector<std::string> EvalTable::targets(const std::string& method) const {
  auto d = domains(method);
  std::erase(d, source);
  return d;
}

void EvalTable::merge(const EvalTable& other) {
  if (source.empty()) source = other.source;
  if (other.source != source) throw InputError("merging eval tables with different sources");
  for (const auto& [m, per] : other.accuracy) {
    for (const auto& [d, a] : per) accuracy[m][d] = a;
  }
}

void EvalTable::validate() const {
  std::optional<std::vector<std::string>> ref;
  for (const auto& [m, per] : accuracy) {
    if (!per.contains(source)) throw DataError("method " + m + " lacks the source domain");
    auto t = targets(m);
    if (ref && *ref != t) throw DataError("method " + m + " reports a different target set");
    ref = std::move(t);
  }
}

namespace {

Tensor center_columns(const Tensor& x) {
  Tensor c = x;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= n;
    for (std::size_t i = 0; i < x.rows(); ++i) c(i, j) -= mean;
  }
  return c;
}

}  // namespace

double linear_cka(const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows()) {
    throw ShapeError("linear_cka row mismatch: " + x.shape_str() + " vs " + y.shape_str());
  }
  if (x.rows() < 2) throw ShapeError("linear_cka needs at least two rows");
  const Tensor xc = center_columns(x);
  const Tensor yc = center_columns(y);
  const double cross = frobenius_sq(matmul_tn(yc, xc));
  const double xx = std::sqrt(frobenius_sq(matmul_tn(xc, xc)));
  const double yy = std::sqrt(frobenius_sq(matmul_tn(yc, yc)));
  if (xx < 1e-12 || yy < 1e-12) return 0.0;
  return std::clamp(cross / (xx * yy), 0.0, 1.0);
}

std::pair<Tensor, Tensor> pair_by_class(const Tensor& x, std::span<const int> xl, const Tensor& y,
                                        std::span<const int> yl) {
  if (xl.size() != x.rows() || yl.size() != y.rows()) throw ShapeError("pair_by_class label count mismatch");
  std::map<int, std::vector<std::size_t>> xi, yi;
  for (std::size_t i = 0; i < xl.size(); ++i) xi[xl[i]].push_back(i);
  for (std::size_t i = 0; i < yl.size(); ++i) yi[yl[i]].push_back(i);
  std::vector<std::size_t> xs, ys;
  for (const auto& [cls, rows] : xi) {
    auto it = yi.find(cls);
    if (it == yi.end()) continue;
    const std::size_t n = std::min(rows.size(), it->second.size());
    xs.insert(xs.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n));
    ys.insert(ys.end(), it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return {x.gather_rows(xs), y.gather_rows(ys)};
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("pearson: length mismatch");
  if (xs.size() < 2) throw ShapeError("pearson needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Spread at rounding level counts as zero variance.
  auto flat = [n](double ss, double mean) {
    const double tol = 1e-12 * std::max(1.0, std::abs(mean));
    return ss <= n * tol * tol;
  };
  if (flat(sxx, mx) || flat(syy, my)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> mean_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("spearman: length mismatch");
  const auto rx = mean_ranks(xs);
  const auto ry = mean_ranks(ys);
  return pearson(rx, ry);
}

EvalTable zero_shot_eval(ModelBundle& bundle, const DomainDataset& data, const std::string& method) {
  EvalTable table;
  table.source = data.source;
  for (const auto& d : data.domains()) {
    const LabeledSet& split = data.eval_split(d);
    if (split.empty()) throw DataError("empty eval split for domain '" + d + "'");
    table.accuracy[method][d] = accuracy_percent(bundle, split.x, split.y);
  }
  return table;
}

double gap_table(const EvalTable& eval, const std::string& method) {
  const double zs = eval.at(method, eval.source);
  const auto targets = eval.targets(method);
  if (targets.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : targets) total += zs - eval.at(method, t);
  return total / static_cast<double>(targets.size());
}

std::optional<double> relative_gain(double baseline_acc, double method_acc) {
  if (baseline_acc == 0.0) return std::nullopt;
  return (method_acc - baseline_acc) / baseline_acc * 100.0;
}

void CostParams::validate() const {
  if (!(c_s >= 0.0 && n_labeled_source >= 0.0 && c_t_over_s >= 0.0 && k >= 0.0 && num_targets >= 0.0)) {
    throw InputError("cost parameters must be non-negative");
  }
}

double annotation_cost(const CostParams& p) {
  p.validate();
  return p.c_s * p.n_labeled_source + p.c_s * p.c_t_over_s * p.k * p.num_targets;
}

CkaCorrelation cka_accuracy_correlation(const std::map<std::string, Tensor>& features, const EvalTable& eval,
                                        const std::string& method, const std::string& source) {
  auto src = features.find(source);
  if (src == features.end()) throw LookupError("no features for source '" + source + "'");
  CkaCorrelation out;
  std::vector<double> ckas, accs;
  for (const auto& [d, f] : features) {
    if (d == source) continue;
    const double c = linear_cka(src->second, f);
    out.cka[d] = c;
    ckas.push_back(c);
    accs.push_back(eval.at(method, d));
  }
  if (ckas.size() < 3) throw InputError("CKA/accuracy correlation needs at least three targets");
  out.pearson = pearson(ckas, accs);
  out.spearman = spearman(ckas, accs);
  return out;
}

}  // namespace ditto
