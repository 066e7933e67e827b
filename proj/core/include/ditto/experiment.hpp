#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ditto/adaptation.hpp"
#include "ditto/analysis.hpp"
#include "ditto/synthetic.hpp"

namespace ditto {

enum class CkaPairing { Index, Class };

struct ExperimentConfig {
  SyntheticSpec data = rotation_ladder({15, 30, 45, 60});
  std::uint64_t data_seed = 1;
  TrainConfig train{};
  double lambda = 1.0;
  double rho = 0.05;
  // When non-empty, every SAM variant runs once per rho in the grid.
  std::vector<double> rho_grid;
  std::vector<std::string> variants{"Baseline", "DiTTO"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> source_fractions{100.0};
  std::vector<std::size_t> few_shot_k{0};
  CkaPairing cka_pairing = CkaPairing::Index;
  bool export_features = false;
  double cost_c_s = 3.0;
  std::vector<double> cost_c_t_over_s{1.0};
  std::filesystem::path out = "results";

  void validate() const;
};

// Fields absent from the JSON keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Subsample size used for a source fraction (matches subsample_source).
std::size_t subsample_count(std::size_t n, double percent);

// Training data for one (S, k, seed) cell: the source subsample followed by
// k few-shot rows per target. run_experiment and single runs share it.
DomainDataset prepare_run_data(const DomainDataset& data, double source_fraction, std::size_t k,
                               std::uint64_t seed);

// Prior for DiTTO / DiTTO-SAM runs; empty for variants that do not need one.
// Trains the Baseline on `data` with the same seed to score the targets.
std::optional<LanguagePrior> baseline_prior(const TrainConfig& config, const DomainDataset& data,
                                            const TrainVariant& variant, std::uint64_t seed);

// One trained (variant, S, k, seed) cell.
struct RunRecord {
  std::string method;
  double source_fraction = 100.0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t n_source = 0;
  std::map<std::string, double> accuracy;  // rounded to two decimals, as exported
  std::map<std::string, double> cka;       // per target
  std::string error;                       // non-empty when the run failed
};

struct ExperimentResult {
  std::string source;
  std::vector<std::string> targets;
  std::vector<RunRecord> runs;
  std::filesystem::path out;
};

// Trains and evaluates every (variant, S, k, seed) cell and writes, under
// config.out:
//   runs/<variant>/S<S>_k<k>_seed<seed>/{report.jsonl,eval.csv,cka.csv}
//   results.csv   long-form accuracies for every run
//   summary.csv   mean relative gain over targets, per seed / mean / best seed
//   failures.csv  only when some run failed
// A Baseline is always trained per (S, k, seed) for the target prior and the
// relative gains; its files are written only if it is a listed variant.
ExperimentResult run_experiment(const ExperimentConfig& config, const DomainDataset& data);

std::string variant_slug(const std::string& method);
double round2(double v);

// CSV writers (header lines exact).
void write_eval_csv(const std::filesystem::path& path, const std::string& method,
                    const std::map<std::string, double>& accuracy, const std::map<std::string, double>* baseline);
void write_cka_csv(const std::filesystem::path& path, const std::map<std::string, double>& cka,
                   const std::map<std::string, double>& accuracy);
void write_results_csv(const std::filesystem::path& path, const std::vector<RunRecord>& runs);
std::vector<RunRecord> read_results_csv(const std::filesystem::path& path);
std::string summary_csv(const ExperimentConfig& config, const std::vector<RunRecord>& runs,
                        const std::string& source);

// Encoder features for every eval row: `domain,row_index,class_label_or_empty,f0..`.
// Unlabeled splits are included when `include_unlabeled` is set.
void export_features(ModelBundle& bundle, const DomainDataset& data, const std::filesystem::path& path,
                     bool include_unlabeled = false);
std::map<std::string, Tensor> eval_features(ModelBundle& bundle, const DomainDataset& data);
// Reads an export back as per-domain feature matrices (row order preserved).
std::map<std::string, Tensor> read_features_csv(const std::filesystem::path& path);

// Paired per-target CKA on eval features (index pairing, or class pairing).
std::map<std::string, double> target_cka(ModelBundle& bundle, const DomainDataset& data, CkaPairing pairing);

struct CostRow {
  std::string method;
  double source_fraction = 0.0;
  std::size_t k = 0;
  double c_t_over_s = 0.0;
  std::optional<double> cost;      // nullopt when no run fixes n_labeled_source for this S
  std::optional<double> accuracy;  // mean target accuracy over seeds; nullopt = absent
};

// One row per (method, S, k, c_t_over_s) over the requested grid.
std::vector<CostRow> cost_report(const std::vector<RunRecord>& runs, const std::vector<std::string>& methods,
                                 const std::vector<double>& fractions, const std::vector<std::size_t>& ks,
                                 const std::vector<double>& c_t_over_s, double c_s, std::size_t num_targets,
                                 const std::string& source);
void write_cost_csv(const std::filesystem::path& path, const std::vector<CostRow>& rows);

}  // namespace ditto
