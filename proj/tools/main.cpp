// Command-line front end. Settings are resolved as built-in defaults, then the
// --config file, then explicit flags.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "ditto/adaptation.hpp"
#include "ditto/analysis.hpp"
#include "ditto/errors.hpp"
#include "ditto/experiment.hpp"
#include "ditto/numfmt.hpp"
#include "ditto/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ditto;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> variants;
  std::vector<double> fractions;
  std::vector<std::size_t> ks;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.variants.empty()) cfg.variants = c.variants;
  if (!c.fractions.empty()) cfg.source_fractions = c.fractions;
  if (!c.ks.empty()) cfg.few_shot_k = c.ks;
  cfg.validate();
  return cfg;
}

DomainDataset dataset_for(const Common& c, const ExperimentConfig& cfg) {
  if (!c.data.empty()) return load_dataset(c.data);
  return generate_synthetic(cfg.data, cfg.data_seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

void print_accuracy(const std::string& title, const std::map<std::string, double>& acc) {
  std::cout << title << '\n';
  for (const auto& [d, a] : acc) std::cout << "  " << d << "  " << format_fixed(a, 2) << '\n';
}

int cmd_generate(const Common& c, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = resolve(c);
  if (seed) cfg.data_seed = *seed;
  const fs::path out = c.out.empty() ? fs::path("data") : fs::path(c.out);
  const DomainDataset data = generate_synthetic(cfg.data, cfg.data_seed);
  write_dataset(data, out);
  std::cout << "wrote " << data.domains().size() << " domains to " << out.string() << '\n';
  return 0;
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  if (cfg.variants.size() != 1 || cfg.seeds.size() != 1 || cfg.source_fractions.size() != 1 ||
      cfg.few_shot_k.size() != 1) {
    throw ConfigError("train runs a single cell; pass one --variant, --seed, --source-fraction and --k");
  }
  const DomainDataset full = dataset_for(c, cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const DomainDataset data = prepare_run_data(full, cfg.source_fractions.front(), cfg.few_shot_k.front(), seed);
  const TrainVariant variant = TrainVariant::parse(cfg.variants.front(), cfg.lambda, cfg.rho);
  const auto prior = baseline_prior(cfg.train, data, variant, seed);
  TrainResult run = train(cfg.train, data, variant, seed, prior);

  fs::create_directories(cfg.out);
  save_checkpoint(run.model, cfg.out / "model.ckpt");
  write_text(cfg.out / "report.jsonl", run.report.to_jsonl());
  std::map<std::string, double> acc;
  for (const auto& [d, a] : run.report.final_accuracy) acc[d] = round2(a);
  write_eval_csv(cfg.out / "eval.csv", variant.name(), acc, nullptr);
  write_cka_csv(cfg.out / "cka.csv", target_cka(run.model, data, cfg.cka_pairing), acc);
  print_accuracy(variant.name() + " seed " + std::to_string(seed), acc);
  return 0;
}

CkaPairing parse_pairing(const std::string& s) {
  if (s == "index") return CkaPairing::Index;
  if (s == "class") return CkaPairing::Class;
  throw ConfigError("pairing must be 'index' or 'class'");
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, const std::string& out,
             const std::string& method, const std::string& baseline_path, const std::string& pairing) {
  ModelBundle model = load_checkpoint(model_path);
  const DomainDataset data = load_dataset(data_dir);
  std::map<std::string, double> acc;
  for (const auto& [d, a] : evaluate_domains(model, data)) acc[d] = round2(a);
  std::optional<std::map<std::string, double>> base;
  if (!baseline_path.empty()) {
    ModelBundle b = load_checkpoint(baseline_path);
    base.emplace();
    for (const auto& [d, a] : evaluate_domains(b, data)) (*base)[d] = round2(a);
  }
  print_accuracy(method, acc);
  if (!out.empty()) {
    fs::create_directories(out);
    write_eval_csv(fs::path(out) / "eval.csv", method, acc, base ? &*base : nullptr);
    write_cka_csv(fs::path(out) / "cka.csv", target_cka(model, data, parse_pairing(pairing)), acc);
  }
  return 0;
}

int cmd_analyze(const std::string& model_path, const std::string& data_dir, const std::string& out,
                const std::string& pairing, bool include_unlabeled) {
  ModelBundle model = load_checkpoint(model_path);
  const DomainDataset data = load_dataset(data_dir);
  EvalTable eval = zero_shot_eval(model, data, "model");
  const auto cka = target_cka(model, data, parse_pairing(pairing));

  nlohmann::ordered_json j;
  j["source"] = data.source;
  j["gap"] = gap_table(eval, "model");
  j["cka"] = cka;
  j["accuracy"] = eval.accuracy.at("model");
  if (cka.size() >= 3) {
    std::vector<double> xs, ys;
    for (const auto& [t, v] : cka) {
      xs.push_back(v);
      ys.push_back(eval.at("model", t));
    }
    const auto p = pearson(xs, ys);
    const auto s = spearman(xs, ys);
    j["pearson"] = p ? nlohmann::ordered_json(*p) : nlohmann::ordered_json(nullptr);
    j["spearman"] = s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
  }
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "analysis.json", j.dump(2) + "\n");
    export_features(model, data, fs::path(out) / "features.csv", include_unlabeled);
  }
  return 0;
}

int cmd_cost(const Common& c, const std::string& results, const std::string& source) {
  ExperimentConfig cfg = resolve(c);
  const auto runs = read_results_csv(results);
  std::vector<std::string> methods;
  std::set<std::string> targets;
  for (const auto& r : runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    for (const auto& [d, a] : r.accuracy) {
      if (d != source) targets.insert(d);
    }
  }
  // Without a config the grid is whatever the results contain.
  if (c.config.empty() && c.fractions.empty() && c.ks.empty()) {
    std::set<double> fs_set;
    std::set<std::size_t> k_set;
    for (const auto& r : runs) {
      fs_set.insert(r.source_fraction);
      k_set.insert(r.k);
    }
    cfg.source_fractions.assign(fs_set.begin(), fs_set.end());
    cfg.few_shot_k.assign(k_set.begin(), k_set.end());
  }
  const auto rows = cost_report(runs, methods, cfg.source_fractions, cfg.few_shot_k, cfg.cost_c_t_over_s,
                                cfg.cost_c_s, targets.size(), source);
  fs::create_directories(cfg.out);
  write_cost_csv(cfg.out / "cost.csv", rows);
  std::cout << "wrote " << rows.size() << " rows to " << (cfg.out / "cost.csv").string() << '\n';
  return 0;
}

int cmd_run_all(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const DomainDataset data = dataset_for(c, cfg);
  const ExperimentResult res = run_experiment(cfg, data);
  std::size_t failed = 0;
  for (const auto& r : res.runs) failed += r.error.empty() ? 0 : 1;
  std::cout << "runs: " << res.runs.size() << ", failed: " << failed << '\n';
  std::cout << summary_csv(cfg, res.runs, res.source);
  return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-target domain adaptation experiments on synthetic domains"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool lists) {
    sub->add_option("--config", common.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory");
    if (lists) {
      sub->add_option("--data", common.data, "Dataset directory (default: generate from the config)");
      sub->add_option("--seed", common.seeds, "Training seed(s)");
      sub->add_option("--variant", common.variants, "Variant name(s), e.g. Baseline, DiTTO, DiTTO(rot45)");
      sub->add_option("--source-fraction", common.fractions, "Percent of labeled source rows");
      sub->add_option("--k", common.ks, "Few-shot rows per target");
    }
  };

  auto* gen = app.add_subcommand("generate", "Write the configured synthetic dataset as CSV");
  add_common(gen, false);
  std::optional<std::uint64_t> data_seed;
  gen->add_option("--seed", data_seed, "Data seed (overrides data.seed)");

  auto* tr = app.add_subcommand("train", "Train one variant and save a checkpoint");
  add_common(tr, true);

  std::string model_path, data_dir, eval_out, method = "model", baseline_path, pairing = "index";
  auto* ev = app.add_subcommand("eval", "Per-domain accuracy and CKA of a checkpoint");
  ev->add_option("--model", model_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", eval_out, "Directory for eval.csv and cka.csv");
  ev->add_option("--method", method, "Method label written to eval.csv");
  ev->add_option("--baseline", baseline_path, "Baseline checkpoint for relative gains")->check(CLI::ExistingFile);
  ev->add_option("--pairing", pairing, "CKA row pairing: index or class");

  bool include_unlabeled = false;
  auto* an = app.add_subcommand("analyze", "CKA/accuracy correlation, gap and feature export");
  an->add_option("--model", model_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  an->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  an->add_option("--out", eval_out, "Directory for analysis.json and features.csv");
  an->add_option("--pairing", pairing, "CKA row pairing: index or class");
  an->add_flag("--include-unlabeled", include_unlabeled, "Also export unlabeled-split features");

  std::string results, source = "src";
  auto* co = app.add_subcommand("cost", "Annotation cost vs accuracy table from results.csv");
  add_common(co, false);
  co->add_option("--results", results, "results.csv from run-all")->required()->check(CLI::ExistingFile);
  co->add_option("--source", source, "Source domain id");
  co->add_option("--source-fraction", common.fractions, "Source fractions to report");
  co->add_option("--k", common.ks, "Few-shot sizes to report");

  auto* all = app.add_subcommand("run-all", "Run the full variant x seed x S x k grid");
  add_common(all, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(common, data_seed);
    if (*tr) return cmd_train(common);
    if (*ev) return cmd_eval(model_path, data_dir, eval_out, method, baseline_path, pairing);
    if (*an) return cmd_analyze(model_path, data_dir, eval_out, pairing, include_unlabeled);
    if (*co) return cmd_cost(common, results, source);
    if (*all) return cmd_run_all(common);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
