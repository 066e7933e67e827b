#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ditto/analysis.hpp"
#include "ditto/errors.hpp"
#include "ditto/synthetic.hpp"
#include "test_support.hpp"

using namespace ditto;
using ditto::test_util::random_tensor;

namespace {

// HSIC-based linear CKA computed with explicit n x n Gram matrices:
// HSIC(K, L) = tr(K H L H) / (n-1)^2, CKA = HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L)).
double hsic_cka(const Tensor& x, const Tensor& y) {
  const std::size_t n = x.rows();
  auto gram = [n](const Tensor& a) {
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * a(j, c);
        k[i * n + j] = s;
      }
    }
    // Double centering: H K H.
    std::vector<double> row(n), col(n);
    double all = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        row[i] += k[i * n + j] / n;
        col[j] += k[i * n + j] / n;
        all += k[i * n + j] / (static_cast<double>(n) * n);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) k[i * n + j] += all - row[i] - col[j];
    }
    return k;
  };
  const auto kx = gram(x), ky = gram(y);
  auto hsic = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) s += a[i] * b[i];
    return s / ((n - 1.0) * (n - 1.0));
  };
  return hsic(kx, ky) / std::sqrt(hsic(kx, kx) * hsic(ky, ky));
}

// Random orthogonal matrix via Gram-Schmidt.
Tensor random_orthogonal(std::size_t d, Rng& rng) {
  Tensor q = random_tensor(d, d, rng);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < d; ++r) q(r, c) -= dot * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) q(r, c) /= norm;
  }
  return q;
}

double textbook_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace

TEST(Cka, PropertiesOnRandomMatrices) {
  for (int i = 0; i < 25; ++i) {
    Rng rng(300 + i);
    const std::size_t n = 10 + rng.below(30), d1 = 2 + rng.below(6), d2 = 2 + rng.below(6);
    const Tensor x = random_tensor(n, d1, rng);
    const Tensor y = random_tensor(n, d2, rng);
    EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-10);
    EXPECT_NEAR(linear_cka(x, matmul_raw(x, random_orthogonal(d1, rng))), 1.0, 1e-10);
    Tensor scaled = x;
    for (auto& v : scaled.data()) v *= 3.0;
    EXPECT_NEAR(linear_cka(x, scaled), 1.0, 1e-10);
    const double xy = linear_cka(x, y);
    EXPECT_NEAR(xy, linear_cka(y, x), 1e-12);
    EXPECT_GE(xy, 0.0);
    EXPECT_LE(xy, 1.0);
    EXPECT_NEAR(xy, hsic_cka(x, y), 1e-10);
    EXPECT_NEAR(linear_cka(matmul_raw(x, random_orthogonal(d1, rng)), y), xy, 1e-10);
    const auto perm = rng.permutation(n);
    EXPECT_NEAR(linear_cka(x.gather_rows(perm), y.gather_rows(perm)), xy, 1e-10);
  }
}

TEST(Cka, DegenerateAndShapeCases) {
  EXPECT_EQ(linear_cka(Tensor(5, 2, 1.0), Tensor{{1}, {2}, {3}, {4}, {5}}), 0.0);
  EXPECT_THROW(linear_cka(Tensor(4, 2), Tensor(5, 2)), ShapeError);
  EXPECT_THROW(linear_cka(Tensor(1, 2), Tensor(1, 2)), ShapeError);
}

TEST(Cka, PairByClassAlignsLabels) {
  const Tensor x{{0}, {1}, {2}, {3}};
  const Tensor y{{10}, {11}, {12}};
  const std::vector<int> xl{1, 0, 1, 0}, yl{0, 1, 1};
  const auto [a, b] = pair_by_class(x, xl, y, yl);
  EXPECT_EQ(a, (Tensor{{1}, {0}, {2}}));
  EXPECT_EQ(b, (Tensor{{10}, {11}, {12}}));
}

TEST(Pearson, KnownAndOracle) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y2, yn;
  for (double v : x) {
    y2.push_back(2 * v + 1);
    yn.push_back(-v);
  }
  EXPECT_NEAR(*pearson(x, y2), 1.0, 1e-15);
  EXPECT_NEAR(*pearson(x, yn), -1.0, 1e-15);
  EXPECT_FALSE(pearson(x, std::vector<double>(5, 2.0)).has_value());
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(20), b(20);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    EXPECT_NEAR(*pearson(a, b), textbook_pearson(a, b), 1e-12);
  }
}

TEST(Spearman, RanksAndInvariance) {
  EXPECT_EQ(mean_ranks(std::vector<double>{1, 2, 2, 3}), (std::vector<double>{1, 2.5, 2.5, 4}));
  const std::vector<double> x{0.3, -1.0, 2.5, 0.7, 1.1};
  std::vector<double> mono, rev;
  for (double v : x) {
    mono.push_back(std::exp(v) + 3.0);
    rev.push_back(-v * v * v);
  }
  EXPECT_NEAR(*spearman(x, mono), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, rev), -1.0, 1e-15);
  Rng rng(8);
  std::vector<double> a(15), b(15);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  std::vector<double> a2;
  for (double v : a) a2.push_back(std::atan(v) * 7.0);
  EXPECT_NEAR(*spearman(a, b), *spearman(a2, b), 1e-12);
}

TEST(ZeroShotEval, ConstantAndPerfectModels) {
  const DomainDataset d = generate_synthetic(rotation_ladder({30}, 30, 10, 0, 300), 1);
  Rng rng(0);
  EncoderSpec spec;
  spec.hidden_dims = {4};
  ModelBundle b = ModelBundle::init(spec, 3, d.target_ids(), rng);
  // Constant prediction: only the class-2 bias is non-zero.
  b.params().at("classifier.W").value.fill(0.0);
  b.params().at("classifier.b").value = Tensor{{0, 0, 1}};
  const EvalTable t = zero_shot_eval(b, d, "const");
  EXPECT_NEAR(t.at("const", "src"), 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(t.at("const", "rot30"), 100.0 / 3.0, 1e-12);
}

TEST(ZeroShotEval, MatchesBruteForceRecount) {
  const DomainDataset d = generate_synthetic(rotation_ladder({30, 60}, 30, 10, 0, 200), 2);
  Rng rng(1);
  ModelBundle b = ModelBundle::init(EncoderSpec{}, 3, d.target_ids(), rng);
  const EvalTable t = zero_shot_eval(b, d, "m");
  for (const auto& dom : d.domains()) {
    const auto& split = d.eval_split(dom);
    const Tensor logits = b.logits(split.x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 3; ++c) {
        if (logits(i, c) > logits(i, best)) best = c;
      }
      hits += static_cast<int>(best) == split.y[i];
    }
    EXPECT_EQ(t.at("m", dom), 100.0 * static_cast<double>(hits) / static_cast<double>(split.size()));
  }
}

TEST(GapTable, SimpleCases) {
  EvalTable t;
  t.source = "s";
  t.accuracy["m"] = {{"s", 60}, {"a", 50}, {"b", 40}};
  EXPECT_EQ(gap_table(t, "m"), 15.0);
  t.accuracy["m"] = {{"s", 55}, {"a", 55}};
  EXPECT_EQ(gap_table(t, "m"), 0.0);
  EXPECT_THROW(t.at("missing", "s"), LookupError);
}

TEST(GapTable, PublishedBaselinesGiveReportedGap) {
  EvalTable t;
  t.source = "EN";
  t.accuracy["Baseline"] = {{"EN", 57.17}, {"AR", 47.09}, {"BG", 50.00}, {"DE", 49.44}, {"EL", 48.70},
                            {"ES", 50.12}, {"FR", 51.96}, {"HI", 46.57}, {"RU", 49.64}, {"SW", 37.82},
                            {"TH", 36.61}, {"TR", 45.35}, {"UR", 45.19}, {"VI", 49.20}, {"ZH", 48.74}};
  EXPECT_NEAR(gap_table(t, "Baseline"), 10.3, 0.1);
}

TEST(EvalTable, ValidateRequiresSameTargets) {
  EvalTable t;
  t.source = "s";
  t.accuracy["a"] = {{"s", 1}, {"x", 2}};
  t.accuracy["b"] = {{"s", 1}, {"y", 2}};
  EXPECT_THROW(t.validate(), DataError);
}

TEST(RelativeGain, Values) {
  EXPECT_EQ(*relative_gain(50, 50), 0.0);
  EXPECT_EQ(*relative_gain(50, 25), -50.0);
  EXPECT_FALSE(relative_gain(0, 10).has_value());
  // Two-decimal inputs give 20.51, not the published 20.52, which came from
  // unrounded accuracies.
  EXPECT_NEAR(*relative_gain(47.09, 56.75), 20.5139, 1e-4);
}

TEST(AnnotationCost, ForcedArithmeticAndStructure) {
  EXPECT_EQ(annotation_cost({3, 1000, 1, 0, 5}), 3000.0);
  EXPECT_EQ(annotation_cost({3, 1000, 1, 500, 5}), 10500.0);
  // Affine in k with slope c_s * c_t/s * |T|.
  const double c0 = annotation_cost({3, 1000, 1.5, 0, 4});
  for (double k : {1.0, 10.0, 100.0}) EXPECT_DOUBLE_EQ(annotation_cost({3, 1000, 1.5, k, 4}) - c0, 3 * 1.5 * 4 * k);
  // Monotone in every argument.
  const CostParams base{3, 1000, 1, 10, 5};
  const double ref = annotation_cost(base);
  for (int field = 0; field < 5; ++field) {
    CostParams p = base;
    double* f[] = {&p.c_s, &p.n_labeled_source, &p.c_t_over_s, &p.k, &p.num_targets};
    *f[field] += 1.0;
    EXPECT_GE(annotation_cost(p), ref);
  }
  EXPECT_THROW(annotation_cost({-1, 1, 1, 1, 1}), InputError);
}

TEST(CkaCorrelation, IdenticalDomainsHaveNoSignal) {
  Rng rng(1);
  const Tensor f = random_tensor(30, 4, rng);
  EvalTable t;
  t.source = "s";
  t.accuracy["m"] = {{"s", 90}, {"a", 80}, {"b", 70}, {"c", 60}};
  const auto r = cka_accuracy_correlation({{"s", f}, {"a", f}, {"b", f}, {"c", f}}, t, "m", "s");
  for (const auto& [d, c] : r.cka) EXPECT_NEAR(c, 1.0, 1e-12);
  EXPECT_FALSE(r.pearson.has_value());
  EXPECT_FALSE(r.spearman.has_value());
  EXPECT_THROW(cka_accuracy_correlation({{"s", f}, {"a", f}}, t, "m", "s"), InputError);
}
