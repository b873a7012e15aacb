#pragma once

// Linear verdict classifier over [post embedding | mean context embedding],
// trained with focal loss and Adam; evaluation metrics and Welch's t-test.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/embed.hpp"
#include "dlab/sampler.hpp"

namespace dlab {

inline constexpr std::size_t kClasses = 2;  // index = static_cast<size_t>(Label)

struct FeatureVector {
  std::size_t dim = 0;       // d; fused has 2d entries
  std::vector<float> fused;  // [post | context]
  bool empty_context = true;

  std::span<const float> post_part() const { return {fused.data(), dim}; }
  std::span<const float> context_part() const { return {fused.data() + dim, dim}; }
};

inline FeatureVector build_features(std::span<const float> post_emb, const ContextSet& context,
                                    const EmbeddingMatrix& embeddings) {
  const std::size_t d = post_emb.size();
  if (d != embeddings.dim()) throw UsageError("build_features: post embedding dim mismatch");
  FeatureVector f;
  f.dim = d;
  f.fused.assign(2 * d, 0.0f);
  std::copy(post_emb.begin(), post_emb.end(), f.fused.begin());
  if (context.items.empty()) return f;
  std::vector<double> acc(d, 0.0);
  for (const auto& item : context.items) {
    const auto row = embeddings.at(item.embedding_key());
    for (std::size_t i = 0; i < d; ++i) acc[i] += row[i];
  }
  const double n = static_cast<double>(context.items.size());
  double ss = 0;
  for (double& x : acc) {
    x /= n;
    ss += x * x;
  }
  const double scale = embeddings.normalized() && ss > 0 ? 1.0 / std::sqrt(ss) : 1.0;
  for (std::size_t i = 0; i < d; ++i) f.fused[d + i] = static_cast<float>(acc[i] * scale);
  f.empty_context = false;
  return f;
}

struct Example {
  FeatureVector features;
  Label label = Label::NTA;
};

// ---------------------------------------------------------------------------
// Focal loss on two logits

struct FocalResult {
  double loss = 0;
  std::array<double, kClasses> grad{};
};

inline FocalResult focal_loss(std::array<double, kClasses> logits, std::size_t target, double gamma,
                              std::array<double, kClasses> alpha) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) throw InvariantError("focal_loss: non-finite logits");
  if (gamma < 0) throw UsageError("focal_loss: gamma must be >= 0");
  if (target >= kClasses) throw UsageError("focal_loss: bad class index");
  const std::size_t other = 1 - target;
  // d = z_other - z_target; p_t = sigmoid(-d), q = 1 - p_t = sigmoid(d)
  const double d = logits[other] - logits[target];
  const double log_p = d > 0 ? -(d + std::log1p(std::exp(-d))) : -std::log1p(std::exp(d));
  const double q = d > 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  const double p = std::exp(log_p);
  const double a = alpha[target];
  const double mod = std::pow(q, gamma);
  FocalResult r;
  r.loss = -a * mod * log_p;
  // dL/dz_j = -a [ q^g - g q^(g-1) p log p ] (delta_tj - p_j)
  const double inner = (gamma > 0 && q > 0) ? gamma * std::pow(q, gamma - 1.0) * p * log_p : 0.0;
  const double factor = -a * (mod - inner);
  r.grad[target] = factor * q;
  r.grad[other] = -factor * q;
  return r;
}

// ---------------------------------------------------------------------------
// Parameters, training

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double gamma = 2.0;
  std::optional<std::array<double, kClasses>> alpha;  // unset: n / (2 n_c) from the training set
  std::size_t batch_size = 32;
  std::size_t runs = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(learning_rate >= 0)) throw UsageError("learning_rate must be >= 0");
    if (gamma < 0) throw UsageError("focal gamma must be >= 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (runs < 1) throw UsageError("runs must be >= 1");
    if (alpha && ((*alpha)[0] <= 0 || (*alpha)[1] <= 0)) throw UsageError("alpha entries must be positive");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"epochs", epochs}, {"lr", learning_rate}, {"gamma", gamma},
                     {"batch_size", batch_size}, {"runs", runs}, {"seed", seed}};
    j["alpha"] = alpha ? nlohmann::json(*alpha) : nlohmann::json("auto");
    return j;
  }
};

struct ModelParams {
  std::size_t dim = 0;          // fused feature length
  std::vector<double> weights;  // kClasses x dim, row = class
  std::array<double, kClasses> bias{};
  std::array<double, kClasses> alpha{1.0, 1.0};
  TrainConfig config;
  std::vector<double> loss_history;  // mean training loss per epoch

  std::array<double, kClasses> logits(std::span<const float> x) const {
    if (x.size() != dim) throw UsageError("model: feature dim " + std::to_string(x.size()) + " != " + std::to_string(dim));
    std::array<double, kClasses> z = bias;
    for (std::size_t c = 0; c < kClasses; ++c) {
      const double* w = weights.data() + c * dim;
      double s = 0;
      for (std::size_t i = 0; i < dim; ++i) s += w[i] * x[i];
      z[c] += s;
    }
    return z;
  }
};

inline std::array<double, kClasses> class_alpha(const std::vector<Example>& data) {
  std::array<std::size_t, kClasses> n{};
  for (const auto& e : data) ++n[static_cast<std::size_t>(e.label)];
  if (n[0] == 0 || n[1] == 0) {
    throw DataError("training set has a single class; set an explicit focal alpha");
  }
  const double total = static_cast<double>(data.size());
  return {total / (2.0 * static_cast<double>(n[0])), total / (2.0 * static_cast<double>(n[1]))};
}

inline ModelParams train(const std::vector<Example>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty dataset");
  ModelParams m;
  m.dim = data.front().features.fused.size();
  for (const auto& e : data) {
    if (e.features.fused.size() != m.dim) throw UsageError("train: inconsistent feature dims");
  }
  m.config = cfg;
  m.alpha = cfg.alpha ? *cfg.alpha : class_alpha(data);
  m.weights.assign(kClasses * m.dim, 0.0);

  const std::size_t np = m.weights.size() + kClasses;
  std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const Example& e = data[order[k]];
        const auto x = std::span<const float>(e.features.fused);
        const auto fr = focal_loss(m.logits(x), static_cast<std::size_t>(e.label), cfg.gamma, m.alpha);
        epoch_loss += fr.loss;
        for (std::size_t c = 0; c < kClasses; ++c) {
          double* g = grad.data() + c * m.dim;
          for (std::size_t i = 0; i < m.dim; ++i) g[i] += fr.grad[c] * x[i];
          grad[m.weights.size() + c] += fr.grad[c];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < np; ++i) {
        const double g = grad[i] * inv;
        m1[i] = b1 * m1[i] + (1 - b1) * g;
        m2[i] = b2 * m2[i] + (1 - b2) * g * g;
        const double upd = cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        if (i < m.weights.size()) {
          m.weights[i] -= upd;
        } else {
          m.bias[i - m.weights.size()] -= upd;
        }
      }
    }
    m.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return m;
}

struct Prediction {
  Label label = Label::NTA;
  std::array<double, kClasses> probabilities{};
};

// Ties go to NTA.
inline Prediction predict(const ModelParams& m, std::span<const float> x) {
  const auto z = m.logits(x);
  const double mx = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
  Prediction p;
  p.probabilities = {e0 / (e0 + e1), e1 / (e0 + e1)};
  p.label = z[0] > z[1] ? Label::YTA : Label::NTA;
  return p;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

struct EvalReport {
  double accuracy = 0;
  double macro_f1 = 0;
  std::array<ClassMetrics, kClasses> per_class{};
  std::size_t n = 0;
  std::vector<std::uint8_t> correct;  // per test example
};

inline EvalReport score_predictions(const std::vector<Label>& truth, const std::vector<Label>& predicted) {
  if (truth.size() != predicted.size()) throw UsageError("score: size mismatch");
  if (truth.empty()) throw DataError("score: empty test set");
  EvalReport r;
  r.n = truth.size();
  std::array<std::array<std::size_t, kClasses>, kClasses> cm{};  // [truth][pred]
  std::size_t hits = 0;
  r.correct.reserve(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    const bool ok = truth[i] == predicted[i];
    hits += ok;
    r.correct.push_back(ok);
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n);
  for (std::size_t c = 0; c < kClasses; ++c) {
    const std::size_t tp = cm[c][c];
    const std::size_t pred = cm[0][c] + cm[1][c];
    const std::size_t actual = cm[c][0] + cm[c][1];
    auto& m = r.per_class[c];
    m.support = actual;
    if (pred == 0 && actual == 0) warn("class " + std::string(to_string(static_cast<Label>(c))) + " absent from truth and predictions");
    m.precision = pred ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    m.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
  return r;
}

inline EvalReport evaluate(const ModelParams& m, const std::vector<Example>& test) {
  std::vector<Label> truth, pred;
  truth.reserve(test.size());
  pred.reserve(test.size());
  for (const auto& e : test) {
    truth.push_back(e.label);
    pred.push_back(predict(m, e.features.fused).label);
  }
  return score_predictions(truth, pred);
}

struct MultiRunReport {
  std::vector<EvalReport> runs;
  std::vector<std::uint64_t> run_seeds;
  double mean_accuracy = 0;
  double mean_macro_f1 = 0;

  // Correctness indicators of all runs, concatenated in run order.
  std::vector<std::uint8_t> pooled_correct() const {
    std::vector<std::uint8_t> out;
    for (const auto& r : runs) out.insert(out.end(), r.correct.begin(), r.correct.end());
    return out;
  }
};

// Run r trains with seed cfg.seed + r.
inline MultiRunReport train_and_evaluate(const std::vector<Example>& train_set, const std::vector<Example>& test_set,
                                         const TrainConfig& cfg) {
  cfg.validate();
  MultiRunReport rep;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + r;
    rep.run_seeds.push_back(run_cfg.seed);
    rep.runs.push_back(evaluate(train(train_set, run_cfg), test_set));
    rep.mean_accuracy += rep.runs.back().accuracy;
    rep.mean_macro_f1 += rep.runs.back().macro_f1;
  }
  rep.mean_accuracy /= static_cast<double>(cfg.runs);
  rep.mean_macro_f1 /= static_cast<double>(cfg.runs);
  return rep;
}

// ---------------------------------------------------------------------------
// Welch's two-sample t-test

struct TTest {
  double t = 0;
  double p = 1;
  double df = 0;
};

template <typename A, typename B>
TTest significance_test(const std::vector<A>& a, const std::vector<B>& b) {
  if (a.size() < 2 || b.size() < 2) throw UsageError("significance_test: each sample needs >= 2 values");
  auto moments = [](const auto& v) {
    double mean = 0;
    for (auto x : v) mean += static_cast<double>(x);
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (auto x : v) ss += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  TTest r;
  if (sa + sb == 0) {
    if (ma == mb) return r;
    r.t = ma > mb ? INFINITY : -INFINITY;
    r.p = 0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

// ---------------------------------------------------------------------------
// Model file: "DLMD", u16 version, u32 header length, JSON header,
// f64 LE weights then bias, u64 FNV-1a of everything before it.

inline constexpr std::uint16_t kModelVersion = 1;

inline std::string encode_model(const ModelParams& m) {
  nlohmann::json h{{"dim", m.dim},       {"gamma", m.config.gamma}, {"alpha", m.alpha},
                   {"seed", m.config.seed}, {"epochs", m.config.epochs}, {"lr", m.config.learning_rate},
                   {"batch_size", m.config.batch_size}, {"version", std::string(kVersion)},
                   {"loss_history", m.loss_history}};
  const std::string header = h.dump();
  std::string out = "DLMD";
  put_le<std::uint16_t>(out, kModelVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (double w : m.weights) put_le<double>(out, w);
  for (double b : m.bias) put_le<double>(out, b);
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

inline ModelParams decode_model(std::string_view bytes) {
  if (bytes.size() < 18 || bytes.substr(0, 4) != "DLMD") throw DataError("model file: bad magic");
  if (get_le<std::uint16_t>(bytes, 4) != kModelVersion) throw DataError("model file: unsupported version");
  const std::string_view payload = bytes.substr(0, bytes.size() - 8);
  if (get_le<std::uint64_t>(bytes, bytes.size() - 8) != fnv1a64(payload)) throw DataError("model file: checksum mismatch");
  const std::size_t hlen = get_le<std::uint32_t>(bytes, 6);
  if (10 + hlen > payload.size()) throw DataError("model file: truncated header");
  ModelParams m;
  try {
    const auto h = nlohmann::json::parse(payload.substr(10, hlen));
    m.dim = h.at("dim").get<std::size_t>();
    m.alpha = h.at("alpha").get<std::array<double, kClasses>>();
    m.config.gamma = h.at("gamma").get<double>();
    m.config.seed = h.at("seed").get<std::uint64_t>();
    m.config.epochs = h.at("epochs").get<std::size_t>();
    m.config.learning_rate = h.at("lr").get<double>();
    m.config.batch_size = h.value("batch_size", std::size_t{32});
    m.config.alpha = m.alpha;
    m.loss_history = h.value("loss_history", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: bad header: ") + e.what());
  }
  const std::size_t nw = kClasses * m.dim;
  if (payload.size() != 10 + hlen + 8 * (nw + kClasses)) throw DataError("model file: weight block size mismatch");
  std::size_t off = 10 + hlen;
  m.weights.resize(nw);
  for (auto& w : m.weights) {
    w = get_le<double>(bytes, off);
    off += 8;
  }
  for (auto& b : m.bias) {
    b = get_le<double>(bytes, off);
    off += 8;
  }
  return m;
}

inline void write_model(const ModelParams& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  const std::string bytes = encode_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelParams read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

}  // namespace dlab
