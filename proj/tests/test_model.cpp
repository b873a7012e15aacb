#include <gtest/gtest.h>

#include <filesystem>

#include "dlab/model.hpp"

using namespace dlab;

namespace {

Example make_example(std::vector<float> x, Label l) {
  Example e;
  e.features.dim = x.size() / 2;
  e.features.fused = std::move(x);
  e.label = l;
  return e;
}

// Two Gaussian clouds separated along the first axis by a wide margin.
std::vector<Example> separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool yta = i % 3 == 0;
    const float x0 = static_cast<float>((yta ? 2.0 : -2.0) + 0.3 * standard_normal(rng));
    const float x1 = static_cast<float>(0.5 * standard_normal(rng));
    out.push_back(make_example({x0, x1}, yta ? Label::YTA : Label::NTA));
  }
  return out;
}

double cross_entropy(std::array<double, 2> z, std::size_t t) {
  const double m = std::max(z[0], z[1]);
  return -(z[t] - m - std::log(std::exp(z[0] - m) + std::exp(z[1] - m)));
}

// Two-sided p for Student t by composite Simpson integration of the density
// over [0, |t|]: p = 1 - 2 * integral.
double t_pvalue_oracle(double t, double df) {
  const double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) { return std::exp(logc - (df + 1) / 2 * std::log1p(x * x / df)); };
  const double a = 0, b = std::abs(t);
  const int n = 200000;
  const double h = (b - a) / n;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST(Features, EmptySingleAndMean) {
  EmbeddingMatrix m({"c:a", "c:b", "c:c"}, 4, {1, 2, 3, 4, 0, 2, 0, 2, -1, 2, 6, 0}, false);
  std::vector<float> post{9, 8, 7, 6};
  auto f0 = build_features(post, ContextSet{}, m);
  EXPECT_TRUE(f0.empty_context);
  EXPECT_EQ(f0.fused, (std::vector<float>{9, 8, 7, 6, 0, 0, 0, 0}));

  ContextSet one{"ann", "p", {{"a", std::nullopt, "", std::nullopt}}};
  auto f1 = build_features(post, one, m);
  EXPECT_FALSE(f1.empty_context);
  EXPECT_EQ(std::vector<float>(f1.context_part().begin(), f1.context_part().end()), (std::vector<float>{1, 2, 3, 4}));

  // Hand arithmetic: ((1+0-1)/3, (2+2+2)/3, (3+0+6)/3, (4+2+0)/3) = (0, 2, 3, 2).
  ContextSet three{"ann", "p", {{"a", {}, "", {}}, {"b", {}, "", {}}, {"c", {}, "", {}}}};
  auto f3 = build_features(post, three, m);
  EXPECT_EQ(std::vector<float>(f3.context_part().begin(), f3.context_part().end()), (std::vector<float>{0, 2, 3, 2}));
  EXPECT_THROW(build_features(std::vector<float>{1, 2}, three, m), UsageError);
}

TEST(Features, NormalizedInputsGiveUnitContext) {
  const float s = 1.0f / std::sqrt(2.0f);
  EmbeddingMatrix m({"c:a", "c:b"}, 2, {1, 0, s, s}, true);
  ContextSet ctx{"ann", "p", {{"a", {}, "", {}}, {"b", {}, "", {}}}};
  auto f = build_features(std::vector<float>{1, 0}, ctx, m);
  const double n = std::hypot(f.context_part()[0], f.context_part()[1]);
  EXPECT_NEAR(n, 1.0, 1e-6);
}

TEST(Focal, HandComputedValue) {
  // p_t = 0.7 from d = z_other - z_t = ln(3/7).
  const double d = std::log(0.3 / 0.7);
  auto r = focal_loss({0.0, d}, 0, 2.0, {0.5, 0.5});
  EXPECT_NEAR(r.loss, 0.5 * 0.09 * -std::log(0.7), 1e-12);
  // Recomputed exactly: 0.0160504; the quoted 0.016048 is a rounded figure.
  EXPECT_NEAR(r.loss, 0.0160504, 1e-7);
  EXPECT_NEAR(r.loss, 0.016048, 5e-6);
}

TEST(Focal, GammaZeroIsCrossEntropy) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::array<double, 2> z{3 * standard_normal(rng), 3 * standard_normal(rng)};
    const std::size_t t = uniform_index(rng, 2);
    EXPECT_NEAR(focal_loss(z, t, 0.0, {1, 1}).loss, cross_entropy(z, t), 1e-9);
  }
}

TEST(Focal, ConfidentTargetHasZeroLoss) {
  EXPECT_NEAR(focal_loss({500.0, -500.0}, 0, 2.0, {1, 1}).loss, 0.0, 1e-9);
  EXPECT_NEAR(focal_loss({-500.0, 500.0}, 1, 0.0, {1, 1}).loss, 0.0, 1e-9);
  auto r = focal_loss({-500.0, 500.0}, 0, 2.0, {1, 1});
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(std::isfinite(r.grad[0]));
  EXPECT_THROW(focal_loss({NAN, 0.0}, 0, 2.0, {1, 1}), InvariantError);
  EXPECT_THROW(focal_loss({0.0, 0.0}, 0, -1.0, {1, 1}), UsageError);
}

TEST(Focal, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    std::array<double, 2> z{2 * standard_normal(rng), 2 * standard_normal(rng)};
    const double gamma = 4.0 * uniform01(rng);
    const std::array<double, 2> alpha{0.1 + uniform01(rng), 0.1 + uniform01(rng)};
    const std::size_t t = uniform_index(rng, 2);
    auto r = focal_loss(z, t, gamma, alpha);
    for (std::size_t j = 0; j < 2; ++j) {
      auto zp = z, zm = z;
      zp[j] += h;
      zm[j] -= h;
      const double fd = (focal_loss(zp, t, gamma, alpha).loss - focal_loss(zm, t, gamma, alpha).loss) / (2 * h);
      const double rel = std::abs(fd - r.grad[j]) / std::max(1e-6, std::abs(fd));
      EXPECT_LT(rel, 1e-4) << "z=(" << z[0] << "," << z[1] << ") g=" << gamma << " j=" << j;
    }
  }
}

TEST(Train, SeparableFixtureIsLearned) {
  auto data = separable(90, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  auto m = train(data, cfg);
  ASSERT_EQ(m.loss_history.size(), 10u);
  EXPECT_LT(m.loss_history.back(), m.loss_history.front());
  auto rep = evaluate(m, data);
  EXPECT_DOUBLE_EQ(rep.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(rep.macro_f1, 1.0);
}

TEST(Train, ZeroLearningRateLeavesParams) {
  auto data = separable(30, 4);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  auto m = train(data, cfg);
  for (double w : m.weights) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(m.bias[0], 0.0);
  EXPECT_EQ(m.bias[1], 0.0);
}

TEST(Train, DeterministicPerSeed) {
  auto data = separable(60, 5);
  TrainConfig cfg;
  cfg.seed = 17;
  auto a = train(data, cfg), b = train(data, cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  cfg.seed = 18;
  auto c = train(data, cfg);
  EXPECT_NE(a.weights, c.weights);
}

TEST(Train, AlphaAndErrors) {
  auto data = separable(30, 6);  // 10 YTA, 20 NTA
  auto alpha = class_alpha(data);
  EXPECT_DOUBLE_EQ(alpha[0], 30.0 / 20.0);
  EXPECT_DOUBLE_EQ(alpha[1], 30.0 / 40.0);
  std::vector<Example> one_class;
  for (const auto& e : data) {
    if (e.label == Label::NTA) one_class.push_back(e);
  }
  EXPECT_THROW(train(one_class, TrainConfig{}), DataError);
  TrainConfig explicit_alpha;
  explicit_alpha.alpha = std::array<double, 2>{1.0, 1.0};
  EXPECT_NO_THROW(train(one_class, explicit_alpha));
  EXPECT_THROW(train({}, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Predict, TieAndNormalization) {
  ModelParams m;
  m.dim = 4;
  m.weights.assign(8, 0.0);
  auto p = predict(m, std::vector<float>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(p.probabilities[0], 0.5);
  EXPECT_DOUBLE_EQ(p.probabilities[1], 0.5);
  EXPECT_EQ(p.label, Label::NTA);
  EXPECT_THROW(predict(m, std::vector<float>{1, 2}), UsageError);

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    for (auto& w : m.weights) w = 5 * standard_normal(rng);
    m.bias = {standard_normal(rng), standard_normal(rng)};
    std::vector<float> x(4);
    for (auto& v : x) v = static_cast<float>(standard_normal(rng));
    auto q = predict(m, x);
    EXPECT_NEAR(q.probabilities[0] + q.probabilities[1], 1.0, 1e-9);
  }
}

TEST(Metrics, ConfusionMatrixHandComputed) {
  // YTA positive: TP=3 FP=1 FN=2 TN=4.
  std::vector<Label> truth, pred;
  auto add = [&](Label t, Label p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  add(Label::YTA, Label::YTA, 3);
  add(Label::NTA, Label::YTA, 1);
  add(Label::YTA, Label::NTA, 2);
  add(Label::NTA, Label::NTA, 4);
  auto r = score_predictions(truth, pred);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.7);
  EXPECT_NEAR(r.per_class[0].f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[1].f1, 8.0 / 11.0, 1e-12);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0 + 8.0 / 11.0) / 2, 1e-12);
  EXPECT_NEAR(r.macro_f1, 0.69697, 1e-5);
  EXPECT_EQ(r.per_class[0].support, 5u);
}

TEST(Metrics, MajorityPredictorOnSkewedSet) {
  std::vector<Label> truth(100, Label::NTA), pred(100, Label::NTA);
  for (int i = 0; i < 30; ++i) truth[i] = Label::YTA;
  auto r = score_predictions(truth, pred);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.7);
  // F1_nta = 2 * 0.7 / 1.7, F1_yta = 0.
  EXPECT_NEAR(r.macro_f1, 0.7 / 1.7, 1e-12);
  EXPECT_NEAR(r.macro_f1, 0.412, 1e-3);
}

TEST(Metrics, IdentitiesOnRandomPredictions) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + uniform_index(rng, 50);
    std::vector<Label> t(n), p(n);
    for (std::size_t k = 0; k < n; ++k) {
      t[k] = uniform_index(rng, 2) ? Label::YTA : Label::NTA;
      p[k] = uniform_index(rng, 2) ? Label::YTA : Label::NTA;
    }
    auto r = score_predictions(t, p);
    double hits = 0;
    for (auto c : r.correct) hits += c;
    EXPECT_EQ(r.accuracy, hits / static_cast<double>(n));
    EXPECT_GE(r.macro_f1, 0.0);
    EXPECT_LE(r.macro_f1, 1.0);
  }
  std::vector<Label> all{Label::YTA, Label::NTA};
  EXPECT_DOUBLE_EQ(score_predictions(all, all).macro_f1, 1.0);
  EXPECT_THROW(score_predictions({}, {}), DataError);
}

TEST(Welch, IdenticalSamples) {
  std::vector<int> a{1, 0, 1, 1, 0};
  auto r = significance_test(a, a);
  EXPECT_DOUBLE_EQ(r.t, 0.0);
  EXPECT_NEAR(r.p, 1.0, 1e-12);
  std::vector<int> ones(5, 1);
  EXPECT_DOUBLE_EQ(significance_test(ones, ones).p, 1.0);
  EXPECT_THROW(significance_test(std::vector<int>{1}, a), UsageError);
}

TEST(Welch, MatchesNumericalIntegrationOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(5 + uniform_index(rng, 40)), b(5 + uniform_index(rng, 40));
    const double shift = uniform01(rng);
    for (auto& x : a) x = standard_normal(rng) + shift;
    for (auto& x : b) x = 2 * standard_normal(rng);
    auto r = significance_test(a, b);
    EXPECT_NEAR(r.p, t_pvalue_oracle(r.t, r.df), 1e-7);
  }
  std::vector<int> strong_a{1, 1, 1, 1, 1, 1, 1, 1, 1, 0}, strong_b{0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  auto s = significance_test(strong_a, strong_b);
  EXPECT_LT(s.p, 0.01);
  EXPECT_NEAR(s.p, t_pvalue_oracle(s.t, s.df), 1e-7);
}

TEST(Welch, ArgumentSwapNegatesT) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> a(10 + uniform_index(rng, 50)), b(10 + uniform_index(rng, 50));
    for (auto& x : a) x = uniform01(rng) < 0.7;
    for (auto& x : b) x = uniform01(rng) < 0.5;
    auto ab = significance_test(a, b), ba = significance_test(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p, ba.p);
  }
}

TEST(ModelFile, RoundTripAndCorruption) {
  auto data = separable(40, 12);
  TrainConfig cfg;
  cfg.seed = 99;
  auto m = train(data, cfg);
  const auto path = (std::filesystem::temp_directory_path() / "dlab_model_rt.dlmd").string();
  write_model(m, path);
  auto back = read_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.dim, m.dim);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.config.seed, 99u);
  EXPECT_EQ(back.config.epochs, cfg.epochs);
  EXPECT_EQ(back.loss_history, m.loss_history);

  auto bytes = encode_model(m);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_model(flipped), DataError);
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(decode_model("XXXX" + bytes.substr(4)), DataError);
}

TEST(MultiRun, SeedsAndPooling) {
  auto data = separable(60, 13);
  TrainConfig cfg;
  cfg.seed = 40;
  cfg.runs = 3;
  auto rep = train_and_evaluate(data, data, cfg);
  EXPECT_EQ(rep.run_seeds, (std::vector<std::uint64_t>{40, 41, 42}));
  EXPECT_EQ(rep.pooled_correct().size(), 180u);
  double mean = 0;
  for (const auto& r : rep.runs) mean += r.accuracy / 3.0;
  EXPECT_NEAR(rep.mean_accuracy, mean, 1e-12);
}
