#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ditto/dataset.hpp"
#include "ditto/model.hpp"
#include "ditto/tensor.hpp"

namespace ditto {

// Accuracy in percent per (method, domain).
struct EvalTable {
  std::string source;
  std::map<std::string, std::map<std::string, double>> accuracy;  // method -> domain -> %

  double at(const std::string& method, const std::string& domain) const;
  std::vector<std::string> methods() const;
  std::vector<std::string> domains(const std::string& method) const;
  std::vector<std::string> targets(const std::string& method) const;
  void merge(const EvalTable& other);
  // Every method must report the same target set.
  void validate() const;
};

// Linear CKA between paired row sets:
//   ||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F)
// with column-centered Xc, Yc; 0 when either denominator factor is < 1e-12.
double linear_cka(const Tensor& x, const Tensor& y);

// Reorders two unpaired labeled feature sets so row i of each output shares
// a class: classes in ascending order, per class the first min(count) rows.
std::pair<Tensor, Tensor> pair_by_class(const Tensor& x, std::span<const int> x_labels, const Tensor& y,
                                        std::span<const int> y_labels);

// Sample correlation; nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);
// Pearson on mean ranks (ties share the average rank).
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);
std::vector<double> mean_ranks(std::span<const double> xs);

// Accuracy (percent) per domain of `bundle` on the eval splits.
EvalTable zero_shot_eval(ModelBundle& bundle, const DomainDataset& data, const std::string& method);

// Mean over targets of Z(source) - Z(target).
double gap_table(const EvalTable& eval, const std::string& method);

// (method - baseline) / baseline * 100; nullopt for a zero baseline.
std::optional<double> relative_gain(double baseline_acc, double method_acc);

struct CostParams {
  double c_s = 3.0;  // cents per labeled source instance
  double n_labeled_source = 0.0;
  double c_t_over_s = 1.0;
  double k = 0.0;
  double num_targets = 0.0;

  void validate() const;
};

// Labeling cost in cents: c_s * n + c_s * c_{t/s} * k * |T|.
double annotation_cost(const CostParams& p);

struct CkaCorrelation {
  std::map<std::string, double> cka;  // per target
  std::optional<double> pearson;
  std::optional<double> spearman;
};

// CKA(source features, target features) per target, correlated with the
// targets' accuracies under `method`. Needs at least three targets.
CkaCorrelation cka_accuracy_correlation(const std::map<std::string, Tensor>& features, const EvalTable& eval,
                                        const std::string& method, const std::string& source);

}  // namespace ditto
