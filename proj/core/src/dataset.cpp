#include "ditto/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "ditto/errors.hpp"
#include "ditto/rng.hpp"

namespace ditto {

LabeledSet LabeledSet::subset(std::span<const std::size_t> idx) const {
  LabeledSet out;
  out.x = x.gather_rows(idx);
  out.y.reserve(idx.size());
  for (auto i : idx) out.y.push_back(y[i]);
  return out;
}

void LabeledSet::append(const LabeledSet& other) {
  if (other.empty()) return;
  x = empty() ? other.x : Tensor::vstack(x, other.x);
  y.insert(y.end(), other.y.begin(), other.y.end());
}

std::vector<std::string> DomainDataset::target_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : targets) ids.push_back(id);
  return ids;
}

std::vector<std::string> DomainDataset::domains() const {
  std::vector<std::string> d{source};
  for (const auto& [id, _] : targets) d.push_back(id);
  return d;
}

const LabeledSet& DomainDataset::eval_split(const std::string& domain) const {
  if (domain == source) return source_eval;
  auto it = targets.find(domain);
  if (it == targets.end()) throw LookupError("unknown domain '" + domain + "'");
  return it->second.eval;
}

void DomainDataset::validate() const {
  if (num_classes < 2) throw DataError("dataset needs at least two classes");
  if (feature_dim == 0) throw DataError("dataset feature dimension is zero");
  if (targets.contains(source)) throw DataError("source id '" + source + "' also listed as a target");

  auto check_x = [&](const Tensor& x, const std::string& what) {
    if (x.rows() > 0 && x.cols() != feature_dim) {
      throw DataError(what + ": expected " + std::to_string(feature_dim) + " features, got " +
                      std::to_string(x.cols()));
    }
    if (!x.all_finite()) throw DataError(what + ": non-finite feature value");
  };
  auto check_l = [&](const LabeledSet& s, const std::string& what) {
    check_x(s.x, what);
    if (s.y.size() != s.x.rows()) throw DataError(what + ": label count does not match rows");
    for (int y : s.y) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw DataError(what + ": label " + std::to_string(y) + " out of range");
      }
    }
  };
  check_l(source_labeled, source + "/labeled");
  check_x(source_unlabeled, source + "/unlabeled");
  check_l(source_eval, source + "/eval");
  if (source_eval.empty()) throw DataError("domain '" + source + "' has no eval rows");
  for (const auto& [id, t] : targets) {
    check_x(t.unlabeled, id + "/unlabeled");
    check_l(t.few_shot, id + "/fewshot");
    check_l(t.eval, id + "/eval");
    if (t.eval.empty()) throw DataError("domain '" + id + "' has no eval rows");
  }
}

DomainDataset subsample_source(const DomainDataset& data, double percent, std::uint64_t seed) {
  if (!(percent > 0.0 && percent <= 100.0)) throw ConfigError("source fraction must lie in (0, 100]");
  DomainDataset out = data;
  const std::size_t n = data.source_labeled.size();
  if (n == 0 || percent == 100.0) return out;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * percent / 100.0)));
  Rng rng(seed);
  auto perm = rng.permutation(n);
  perm.resize(keep);
  out.source_labeled = data.source_labeled.subset(perm);
  return out;
}

}  // namespace ditto
