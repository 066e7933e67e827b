#include <gtest/gtest.h>

#include <cmath>

#include "ditto/analysis.hpp"
#include "ditto/errors.hpp"
#include "ditto/model.hpp"
#include "test_support.hpp"

using namespace ditto;
using ditto::test_util::random_tensor;

namespace {

ModelBundle make_bundle(std::uint64_t seed, Activation act = Activation::Tanh) {
  Rng rng(seed);
  EncoderSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {5, 4};
  spec.activation = act;
  return ModelBundle::init(spec, 3, {"t2", "t1"}, rng, 6);
}

double act(double v, Activation a) { return a == Activation::Tanh ? std::tanh(v) : std::max(0.0, v); }

// Plain-loop dense layer: out = x W + b.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

Tensor apply(Tensor t, const std::function<double(double)>& f) {
  for (auto& v : t.data()) v = f(v);
  return t;
}

}  // namespace

TEST(ModelInit, StructureAndZeroBiases) {
  ModelBundle b = make_bundle(1);
  EXPECT_EQ(b.targets(), (std::vector<std::string>{"t1", "t2"}));
  EXPECT_EQ(b.params().at("encoder.layer0.W").value.rows(), 3u);
  EXPECT_EQ(b.params().at("encoder.layer1.W").value.cols(), 4u);
  EXPECT_EQ(b.params().at("classifier.W").value.cols(), 3u);
  EXPECT_EQ(b.params().at("disc.t1.hidden.W").value.cols(), 6u);
  EXPECT_EQ(b.params().at("disc.t2.head.W").value.cols(), 1u);
  std::size_t discs = 0;
  for (auto& [name, p] : b.params()) {
    if (name.ends_with(".b")) EXPECT_EQ(p.value, Tensor::zeros_like(p.value)) << name;
    if (name.ends_with("head.W")) ++discs;
    EXPECT_TRUE(p.value.all_finite());
  }
  EXPECT_EQ(discs, 2u);
  EXPECT_EQ(b.task_params().size(), 6u);
  EXPECT_EQ(b.discriminator_params("t1").size(), 4u);
}

TEST(ModelInit, SameSeedIsBitIdentical) {
  ModelBundle a = make_bundle(7), b = make_bundle(7), c = make_bundle(8);
  EXPECT_TRUE(a.params().same_values(b.params()));
  EXPECT_FALSE(a.params().same_values(c.params()));
}

TEST(ModelInit, TaskWeightsIndependentOfTargetCount) {
  EncoderSpec spec;
  Rng r1(3), r2(3);
  ModelBundle a = ModelBundle::init(spec, 3, {"a"}, r1);
  ModelBundle b = ModelBundle::init(spec, 3, {"a", "b", "c"}, r2);
  EXPECT_TRUE(a.params().same_values(b.params(), "encoder."));
  EXPECT_TRUE(a.params().same_values(b.params(), "classifier."));
}

TEST(ModelInit, GlorotStandardDeviation) {
  // Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)) has standard
  // deviation sqrt(2 / (fan_in + fan_out)).
  const double expected = std::sqrt(2.0 / 200.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    EncoderSpec spec;
    spec.input_dim = 100;
    spec.hidden_dims = {100};
    ModelBundle b = ModelBundle::init(spec, 2, {}, rng);
    const Tensor& w = b.params().at("encoder.layer0.W").value;
    double s2 = 0.0, s = 0.0;
    for (double v : w.data()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(w.size());
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    EXPECT_NEAR(sd, expected, 0.1 * expected) << "seed " << seed;
  }
}

TEST(ModelInit, RejectsBadSpecs) {
  Rng rng(0);
  EncoderSpec spec;
  spec.hidden_dims = {};
  EXPECT_THROW(ModelBundle::init(spec, 3, {}, rng), ParamError);
  spec.hidden_dims = {4, 0};
  EXPECT_THROW(ModelBundle::init(spec, 3, {}, rng), ParamError);
  EXPECT_THROW(ModelBundle::init(EncoderSpec{}, 0, {}, rng), ParamError);
  EXPECT_THROW(ModelBundle::init(EncoderSpec{}, 3, {"a", "a"}, rng), ParamError);
}

TEST(Encode, ZeroWeightsReluGivesZeroFeatures) {
  ModelBundle b = make_bundle(2, Activation::Relu);
  for (auto& [name, p] : b.params()) p.value.fill(0.0);
  Rng rng(1);
  const Tensor f = b.extract_features(random_tensor(4, 3, rng));
  EXPECT_EQ(f, Tensor(4, 4));
}

TEST(Encode, IdentityLayerReluIsIdentityOnNonnegativeInput) {
  Rng rng(0);
  EncoderSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {3};
  spec.activation = Activation::Relu;
  ModelBundle b = ModelBundle::init(spec, 2, {}, rng);
  b.params().at("encoder.layer0.W").value = Tensor{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const Tensor x{{0.5, 2.0, 0.0}, {3.0, 0.25, 1.0}};
  EXPECT_EQ(b.extract_features(x), x);
}

TEST(Forward, MatchesLayerByLayerOracle) {
  for (Activation a : {Activation::Tanh, Activation::Relu}) {
    ModelBundle b = make_bundle(11, a);
    Rng rng(4);
    for (auto& [name, p] : b.params()) {
      if (name.ends_with(".b")) p.value = random_tensor(1, p.value.cols(), rng, 0.3);
    }
    const Tensor x = random_tensor(6, 3, rng);
    auto& P = b.params();
    auto f = [&](double v) { return act(v, a); };
    Tensor h = apply(dense(x, P.at("encoder.layer0.W").value, P.at("encoder.layer0.b").value), f);
    h = apply(dense(h, P.at("encoder.layer1.W").value, P.at("encoder.layer1.b").value), f);
    const Tensor logits = dense(h, P.at("classifier.W").value, P.at("classifier.b").value);
    Tensor d = apply(dense(h, P.at("disc.t1.hidden.W").value, P.at("disc.t1.hidden.b").value),
                     [](double v) { return std::tanh(v); });
    d = apply(dense(d, P.at("disc.t1.head.W").value, P.at("disc.t1.head.b").value),
              [](double v) { return 1.0 / (1.0 + std::exp(-v)); });

    const Tensor feats = b.extract_features(x);
    const Tensor lg = b.logits(x);
    Tape tape(false);
    const Tensor probs = b.discriminate(tape, "t1", tape.constant(feats)).value();
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(feats[i], h[i], 1e-12);
    for (std::size_t i = 0; i < lg.size(); ++i) EXPECT_NEAR(lg[i], logits[i], 1e-12);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(probs[i], d[i], 1e-12);
  }
}

TEST(Classify, ZeroFeaturesGiveBiasRows) {
  ModelBundle b = make_bundle(3);
  b.params().at("classifier.b").value = Tensor{{0.5, -1.0, 2.0}};
  Tape tape(false);
  const Tensor out = b.classify(tape, tape.constant(Tensor(3, 4))).value();
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(out(r, 2), 2.0);
}

TEST(Classify, ArgmaxInvariantToCommonShift) {
  ModelBundle b = make_bundle(5);
  Rng rng(6);
  const Tensor x = random_tensor(20, 3, rng);
  const auto before = b.predict(x);
  for (auto& v : b.params().at("classifier.b").value.data()) v += 3.5;
  EXPECT_EQ(b.predict(x), before);
}

TEST(Discriminate, ZeroParamsGiveOneHalf) {
  ModelBundle b = make_bundle(4);
  for (auto p : b.discriminator_params("t2")) p->value.fill(0.0);
  Rng rng(1);
  Tape tape(false);
  const Tensor out = b.discriminate(tape, "t2", tape.constant(random_tensor(5, 4, rng))).value();
  for (double v : out.data()) EXPECT_EQ(v, 0.5);
}

TEST(Discriminate, OutputsInOpenUnitInterval) {
  ModelBundle b = make_bundle(4);
  Rng rng(2);
  Tape tape(false);
  const Tensor out = b.discriminate(tape, "t1", tape.constant(random_tensor(50, 4, rng, 3.0))).value();
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_THROW(b.discriminate(tape, "nope", tape.constant(Tensor(1, 4))), LookupError);
}

TEST(Features, ConsistentDeterministicAndSelfSimilar) {
  ModelBundle b = make_bundle(9);
  Rng rng(3);
  const Tensor x = random_tensor(30, 3, rng);
  Tape tape;
  const Tensor via_encode = b.encode(tape, tape.constant(x)).value();
  const Tensor f1 = b.extract_features(x), f2 = b.extract_features(x);
  EXPECT_EQ(f1, via_encode);
  EXPECT_EQ(f1, f2);
  EXPECT_NEAR(linear_cka(f1, f1), 1.0, 1e-12);
  EXPECT_THROW(b.extract_features(Tensor(2, 5)), ShapeError);
}

TEST(Pipeline, EndToEndGradientCheck) {
  for (int i = 0; i < 10; ++i) {
    ModelBundle b = make_bundle(20 + i);
    Rng rng(30 + i);
    const Tensor x = random_tensor(7, 3, rng);
    std::vector<int> y(7);
    for (auto& v : y) v = static_cast<int>(rng.below(3));
    const auto res = finite_diff_check(
        [&](Tape& t, ParamStore&) { return softmax_cross_entropy(b.classify(t, b.encode(t, t.constant(x))), y); },
        b.params());
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param;
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  ModelBundle b = make_bundle(12, Activation::Relu);
  const auto dir = ditto::test_util::scratch_dir("ckpt");
  save_checkpoint(b, dir / "m.ckpt");
  ModelBundle c = load_checkpoint(dir / "m.ckpt");
  EXPECT_TRUE(b.params().same_values(c.params()));
  EXPECT_EQ(c.targets(), b.targets());
  EXPECT_EQ(c.spec().activation, Activation::Relu);
  EXPECT_EQ(c.disc_hidden(), 6u);
}

TEST(Checkpoint, CorruptFileReportsLine) {
  const auto dir = ditto::test_util::scratch_dir("ckpt_bad");
  {
    std::ofstream os(dir / "bad.ckpt");
    os << "ditto-checkpoint 1\ninput_dim two\n";
  }
  try {
    load_checkpoint(dir / "bad.ckpt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Accuracy, CountsMatches) {
  ModelBundle b = make_bundle(1);
  Rng rng(2);
  const Tensor x = random_tensor(40, 3, rng);
  const auto pred = b.predict(x);
  std::vector<int> y = pred;
  for (std::size_t i = 0; i < 10; ++i) y[i] = (y[i] + 1) % 3;
  EXPECT_DOUBLE_EQ(accuracy_percent(b, x, y), 75.0);
  EXPECT_THROW(accuracy_percent(b, Tensor(0, 3), {}), DataError);
}
