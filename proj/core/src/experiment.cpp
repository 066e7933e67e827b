#include "ditto/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "ditto/errors.hpp"
#include "ditto/numfmt.hpp"

namespace ditto {
namespace fs = std::filesystem;

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::size_t subsample_count(std::size_t n, double percent) {
  if (n == 0 || percent >= 100.0) return n;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * percent / 100.0)));
}

std::string variant_slug(const std::string& method) {
  std::string s;
  for (char c : method) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '=';
    s.push_back(keep ? c : '_');
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  return os;
}

std::string cell(std::optional<double> v) { return v ? format_fixed(*v, 2) : ""; }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t subsample_seed(std::uint64_t seed, double fraction) {
  return seed * 1000003ULL + static_cast<std::uint64_t>(std::llround(fraction * 100.0));
}

struct MethodSpec {
  std::string label;
  TrainVariant variant;
  bool emit = true;
};

std::vector<MethodSpec> expand_methods(const ExperimentConfig& c) {
  std::vector<MethodSpec> out;
  for (const auto& name : c.variants) {
    const TrainVariant v = TrainVariant::parse(name, c.lambda, c.rho);
    if (v.sam.rho > 0.0 && !c.rho_grid.empty()) {
      for (double r : c.rho_grid) {
        TrainVariant vr = v;
        vr.sam.rho = r;
        out.push_back({v.name() + "@rho=" + format_double(r), vr});
      }
    } else {
      out.push_back({v.name(), v});
    }
  }
  return out;
}

std::map<std::string, double> rounded(const std::map<std::string, double>& acc) {
  std::map<std::string, double> out;
  for (const auto& [d, a] : acc) out[d] = round2(a);
  return out;
}

// Mean over targets of relative_gain(base(t), method(t)).
std::optional<double> mean_gain(const std::map<std::string, double>& base, const std::map<std::string, double>& meth,
                                const std::string& source) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& [d, b] : base) {
    if (d == source) continue;
    auto it = meth.find(d);
    if (it == meth.end()) return std::nullopt;
    auto g = relative_gain(b, it->second);
    if (!g) return std::nullopt;
    total += *g;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

double mean_target_accuracy(const std::map<std::string, double>& acc, const std::string& source) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& [d, a] : acc) {
    if (d == source) continue;
    total += a;
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

// ---------------------------------------------------------------- CSV writers

void write_eval_csv(const fs::path& path, const std::string& method, const std::map<std::string, double>& accuracy,
                    const std::map<std::string, double>* baseline) {
  auto os = open_out(path);
  os << "domain,method,accuracy,relative_gain\n";
  for (const auto& [d, a] : accuracy) {
    std::optional<double> g;
    if (baseline) {
      auto it = baseline->find(d);
      if (it != baseline->end()) g = relative_gain(round2(it->second), round2(a));
    }
    os << d << ',' << method << ',' << format_fixed(a, 2) << ',' << cell(g) << '\n';
  }
}

void write_cka_csv(const fs::path& path, const std::map<std::string, double>& cka,
                   const std::map<std::string, double>& accuracy) {
  auto os = open_out(path);
  os << "domain,cka,accuracy\n";
  for (const auto& [d, c] : cka) {
    auto it = accuracy.find(d);
    os << d << ',' << format_double(c) << ',' << (it != accuracy.end() ? format_fixed(it->second, 2) : "") << '\n';
  }
}

void write_results_csv(const fs::path& path, const std::vector<RunRecord>& runs) {
  auto os = open_out(path);
  os << "method,source_fraction,k,seed,n_source,domain,accuracy,cka\n";
  for (const auto& r : runs) {
    if (!r.error.empty()) continue;
    for (const auto& [d, a] : r.accuracy) {
      auto c = r.cka.find(d);
      os << r.method << ',' << format_double(r.source_fraction) << ',' << r.k << ',' << r.seed << ',' << r.n_source
         << ',' << d << ',' << format_fixed(a, 2) << ',' << (c != r.cka.end() ? format_double(c->second) : "")
         << '\n';
    }
  }
}

std::vector<RunRecord> read_results_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line) || split_line(line) != std::vector<std::string>{"method", "source_fraction", "k",
                                                                                "seed", "n_source", "domain",
                                                                                "accuracy", "cka"}) {
    throw ParseError(path.string(), 1, "unexpected results header");
  }
  std::vector<RunRecord> runs;
  std::map<std::tuple<std::string, double, std::size_t, std::uint64_t>, std::size_t> index;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_line(line);
    if (c.size() != 8) throw ParseError(path.string(), line_no, "expected 8 columns");
    auto frac = parse_double(c[1]);
    auto k = parse_int(c[2]);
    auto seed = parse_int(c[3]);
    auto n = parse_int(c[4]);
    auto acc = parse_double(c[6]);
    if (!frac || !k || !seed || !n || !acc || *k < 0 || *seed < 0 || *n < 0) {
      throw ParseError(path.string(), line_no, "malformed results row");
    }
    const auto key = std::make_tuple(c[0], *frac, static_cast<std::size_t>(*k), static_cast<std::uint64_t>(*seed));
    auto it = index.find(key);
    if (it == index.end()) {
      RunRecord r;
      r.method = c[0];
      r.source_fraction = *frac;
      r.k = static_cast<std::size_t>(*k);
      r.seed = static_cast<std::uint64_t>(*seed);
      r.n_source = static_cast<std::size_t>(*n);
      runs.push_back(std::move(r));
      it = index.emplace(key, runs.size() - 1).first;
    }
    RunRecord& r = runs[it->second];
    r.accuracy[c[5]] = *acc;
    if (!c[7].empty()) {
      auto v = parse_double(c[7]);
      if (!v) throw ParseError(path.string(), line_no, "malformed cka value");
      r.cka[c[5]] = *v;
    }
  }
  return runs;
}

std::string summary_csv(const ExperimentConfig& config, const std::vector<RunRecord>& runs,
                        const std::string& source) {
  auto find = [&](const std::string& m, double s, std::size_t k, std::uint64_t seed) -> const RunRecord* {
    for (const auto& r : runs) {
      if (r.method == m && r.source_fraction == s && r.k == k && r.seed == seed && r.error.empty()) return &r;
    }
    return nullptr;
  };
  std::vector<std::string> methods;
  for (const auto& r : runs) {
    if (r.method != "Baseline" && std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }

  std::ostringstream os;
  os << "method,k,aggregate";
  for (double s : config.source_fractions) os << ",S=" << format_double(s) << '%';
  os << '\n';
  for (const auto& m : methods) {
    for (std::size_t k : config.few_shot_k) {
      std::vector<std::vector<std::optional<double>>> per_seed(config.seeds.size());
      std::vector<std::optional<double>> mean_row, best_row;
      for (double s : config.source_fractions) {
        double total = 0.0;
        std::size_t count = 0;
        const RunRecord* best_m = nullptr;
        const RunRecord* best_b = nullptr;
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
          const RunRecord* b = find("Baseline", s, k, config.seeds[i]);
          const RunRecord* r = find(m, s, k, config.seeds[i]);
          std::optional<double> g;
          if (b && r) g = mean_gain(b->accuracy, r->accuracy, source);
          per_seed[i].push_back(g);
          if (g) {
            total += *g;
            ++count;
          }
          if (r && (!best_m || mean_target_accuracy(r->accuracy, source) > mean_target_accuracy(best_m->accuracy, source))) {
            best_m = r;
          }
          if (b && (!best_b || mean_target_accuracy(b->accuracy, source) > mean_target_accuracy(best_b->accuracy, source))) {
            best_b = b;
          }
        }
        mean_row.push_back(count ? std::optional<double>(total / static_cast<double>(count)) : std::nullopt);
        best_row.push_back(best_m && best_b ? mean_gain(best_b->accuracy, best_m->accuracy, source) : std::nullopt);
      }
      auto emit = [&](const std::string& agg, const std::vector<std::optional<double>>& row) {
        os << m << ',' << k << ',' << agg;
        for (const auto& v : row) os << ',' << cell(v);
        os << '\n';
      };
      for (std::size_t i = 0; i < config.seeds.size(); ++i) emit("seed=" + std::to_string(config.seeds[i]), per_seed[i]);
      emit("mean", mean_row);
      emit("best", best_row);
    }
  }
  return os.str();
}

// ---------------------------------------------------------------- features

std::map<std::string, Tensor> eval_features(ModelBundle& bundle, const DomainDataset& data) {
  std::map<std::string, Tensor> out;
  for (const auto& d : data.domains()) out[d] = bundle.extract_features(data.eval_split(d).x);
  return out;
}

void export_features(ModelBundle& bundle, const DomainDataset& data, const fs::path& path, bool include_unlabeled) {
  auto os = open_out(path);
  const std::size_t dim = bundle.spec().feature_dim();
  os << "domain,row_index,class_label_or_empty";
  for (std::size_t j = 0; j < dim; ++j) os << ",f" << j;
  os << '\n';
  auto rows = [&](const std::string& d, const Tensor& x, const std::vector<int>* y, std::size_t offset) {
    const Tensor f = bundle.extract_features(x);
    for (std::size_t i = 0; i < f.rows(); ++i) {
      os << d << ',' << offset + i << ',';
      if (y) os << (*y)[i];
      for (double v : f.row(i)) os << ',' << format_double(v);
      os << '\n';
    }
  };
  for (const auto& d : data.domains()) {
    const LabeledSet& e = data.eval_split(d);
    rows(d, e.x, &e.y, 0);
    if (include_unlabeled) {
      const Tensor& u = d == data.source ? data.source_unlabeled : data.targets.at(d).unlabeled;
      rows(d, u, nullptr, e.size());
    }
  }
  if (!os) throw InputError("failed writing " + path.string());
}

std::map<std::string, Tensor> read_features_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string(), 1, "empty features file");
  const auto header = split_line(line);
  if (header.size() < 4 || header[0] != "domain" || header[1] != "row_index") {
    throw ParseError(path.string(), 1, "unexpected features header");
  }
  const std::size_t dim = header.size() - 3;
  std::map<std::string, std::vector<double>> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_line(line);
    if (c.size() != header.size()) throw ParseError(path.string(), line_no, "wrong column count");
    auto& v = values[c[0]];
    for (std::size_t j = 3; j < c.size(); ++j) {
      auto x = parse_double(c[j]);
      if (!x) throw ParseError(path.string(), line_no, "bad feature value");
      v.push_back(*x);
    }
  }
  std::map<std::string, Tensor> out;
  for (auto& [d, v] : values) {
    const std::size_t rows = v.size() / dim;
    out.emplace(d, Tensor(rows, dim, std::move(v)));
  }
  return out;
}

std::map<std::string, double> target_cka(ModelBundle& bundle, const DomainDataset& data, CkaPairing pairing) {
  const Tensor src = bundle.extract_features(data.source_eval.x);
  std::map<std::string, double> out;
  for (const auto& [id, t] : data.targets) {
    const Tensor f = bundle.extract_features(t.eval.x);
    if (pairing == CkaPairing::Index) {
      out[id] = linear_cka(src, f);
    } else {
      auto [a, b] = pair_by_class(src, data.source_eval.y, f, t.eval.y);
      out[id] = linear_cka(a, b);
    }
  }
  return out;
}

// ---------------------------------------------------------------- experiment

DomainDataset prepare_run_data(const DomainDataset& data, double source_fraction, std::size_t k,
                               std::uint64_t seed) {
  const DomainDataset sub = subsample_source(data, source_fraction, subsample_seed(seed, source_fraction));
  Rng rng = Rng(seed).fork(1000 + k);
  return few_shot_augment(sub, k, rng);
}

std::optional<LanguagePrior> baseline_prior(const TrainConfig& config, const DomainDataset& data,
                                            const TrainVariant& variant, std::uint64_t seed) {
  if (!variant.needs_baseline_prior()) return std::nullopt;
  const TrainResult base = train(config, data, TrainVariant::make(VariantKind::Baseline), seed);
  return compute_prior(base.report.final_accuracy, data.source, data.target_ids());
}

ExperimentResult run_experiment(const ExperimentConfig& config, const DomainDataset& data) {
  config.validate();
  data.validate();
  const auto methods = expand_methods(config);
  const bool baseline_listed = std::any_of(methods.begin(), methods.end(),
                                           [](const MethodSpec& m) { return m.variant.kind == VariantKind::Baseline; });

  ExperimentResult result;
  result.source = data.source;
  result.targets = data.target_ids();
  result.out = config.out;
  fs::create_directories(config.out);

  std::vector<std::string> failures;
  for (double s : config.source_fractions) {
    for (std::size_t k : config.few_shot_k) {
      for (std::uint64_t seed : config.seeds) {
        RunRecord cell;
        cell.source_fraction = s;
        cell.k = k;
        cell.seed = seed;

        std::optional<DomainDataset> ds;
        std::optional<TrainResult> base;
        std::string base_error;
        try {
          cell.n_source = subsample_count(data.source_labeled.size(), s);
          ds = prepare_run_data(data, s, k, seed);
          base = train(config.train, *ds, TrainVariant::make(VariantKind::Baseline), seed);
        } catch (const std::exception& e) {
          base_error = std::string("baseline: ") + e.what();
        }

        for (const auto& m : methods) {
          RunRecord rec = cell;
          rec.method = m.label;
          const fs::path dir = config.out / "runs" / variant_slug(m.label) /
                               ("S" + format_double(s) + "_k" + std::to_string(k) + "_seed" + std::to_string(seed));
          try {
            if (!base) throw Error(base_error);
            std::optional<TrainResult> own;
            TrainResult* run = &*base;
            if (m.variant.kind != VariantKind::Baseline) {
              std::optional<LanguagePrior> prior;
              if (m.variant.needs_baseline_prior()) {
                prior = compute_prior(base->report.final_accuracy, ds->source, ds->target_ids());
              }
              own = train(config.train, *ds, m.variant, seed, prior);
              run = &*own;
            }
            rec.accuracy = rounded(run->report.final_accuracy);
            rec.cka = target_cka(run->model, *ds, config.cka_pairing);

            fs::create_directories(dir);
            {
              auto os = open_out(dir / "report.jsonl");
              os << run->report.to_jsonl();
            }
            const auto base_acc = rounded(base->report.final_accuracy);
            write_eval_csv(dir / "eval.csv", m.label, rec.accuracy, &base_acc);
            write_cka_csv(dir / "cka.csv", rec.cka, rec.accuracy);
            if (config.export_features) export_features(run->model, *ds, dir / "features.csv");
          } catch (const std::exception& e) {
            rec.error = e.what();
            rec.accuracy.clear();
            failures.push_back(m.label + "," + format_double(s) + "," + std::to_string(k) + "," +
                               std::to_string(seed) + ",\"" + rec.error + "\"");
          }
          result.runs.push_back(std::move(rec));
        }
        if (!baseline_listed && base) {
          RunRecord rec = cell;
          rec.method = "Baseline";
          rec.accuracy = rounded(base->report.final_accuracy);
          result.runs.push_back(std::move(rec));
        }
      }
    }
  }

  // Internal baselines feed the summary but are not listed in results.csv.
  std::vector<RunRecord> listed;
  for (const auto& r : result.runs) {
    const bool internal = !baseline_listed && r.method == "Baseline";
    if (!internal) listed.push_back(r);
  }
  write_results_csv(config.out / "results.csv", listed);
  {
    auto os = open_out(config.out / "summary.csv");
    os << summary_csv(config, result.runs, data.source);
  }
  if (!failures.empty()) {
    auto os = open_out(config.out / "failures.csv");
    os << "method,source_fraction,k,seed,error\n";
    for (const auto& f : failures) os << f << '\n';
  }
  return result;
}

// ---------------------------------------------------------------- cost

std::vector<CostRow> cost_report(const std::vector<RunRecord>& runs, const std::vector<std::string>& methods,
                                 const std::vector<double>& fractions, const std::vector<std::size_t>& ks,
                                 const std::vector<double>& c_t_over_s, double c_s, std::size_t num_targets,
                                 const std::string& source) {
  std::vector<CostRow> rows;
  for (const auto& m : methods) {
    for (double s : fractions) {
      std::optional<std::size_t> n_source;
      for (const auto& r : runs) {
        if (r.source_fraction == s) n_source = r.n_source;
      }
      for (std::size_t k : ks) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& r : runs) {
          if (r.method == m && r.source_fraction == s && r.k == k && r.error.empty() && !r.accuracy.empty()) {
            total += mean_target_accuracy(r.accuracy, source);
            ++count;
          }
        }
        for (double c : c_t_over_s) {
          CostRow row;
          row.method = m;
          row.source_fraction = s;
          row.k = k;
          row.c_t_over_s = c;
          if (n_source) {
            row.cost = annotation_cost({c_s, static_cast<double>(*n_source), c, static_cast<double>(k),
                                        static_cast<double>(num_targets)});
          }
          if (count) row.accuracy = total / static_cast<double>(count);
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

void write_cost_csv(const fs::path& path, const std::vector<CostRow>& rows) {
  auto os = open_out(path);
  os << "method,source_fraction,k,c_t_over_s,cost,accuracy\n";
  for (const auto& r : rows) {
    os << r.method << ',' << format_double(r.source_fraction) << ',' << r.k << ',' << format_double(r.c_t_over_s)
       << ',' << (r.cost ? format_double(*r.cost) : "") << ',' << (r.accuracy ? format_fixed(*r.accuracy, 2) : "absent")
       << '\n';
  }
}

}  // namespace ditto
