#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ditto/tensor.hpp"

namespace ditto {

struct LabeledSet {
  Tensor x;
  std::vector<int> y;

  std::size_t size() const noexcept { return x.rows(); }
  bool empty() const noexcept { return x.rows() == 0; }
  LabeledSet subset(std::span<const std::size_t> idx) const;
  void append(const LabeledSet& other);
};

struct TargetData {
  Tensor unlabeled;
  LabeledSet few_shot;  // labeled pool eligible for k-shot augmentation
  LabeledSet eval;
};

// One source domain plus any number of targets. Target ids iterate sorted.
struct DomainDataset {
  std::string source;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  LabeledSet source_labeled;
  Tensor source_unlabeled;
  LabeledSet source_eval;
  std::map<std::string, TargetData> targets;

  std::vector<std::string> target_ids() const;
  // Eval split of any domain, source included.
  const LabeledSet& eval_split(const std::string& domain) const;
  std::vector<std::string> domains() const;  // source first, then targets

  // Throws DataError on inconsistent dimensions, bad labels or missing eval rows.
  void validate() const;
};

// Keeps `percent`% of the labeled source rows (at least one), chosen by a
// seeded shuffle then prefix.
DomainDataset subsample_source(const DomainDataset& data, double percent, std::uint64_t seed);

}  // namespace ditto
