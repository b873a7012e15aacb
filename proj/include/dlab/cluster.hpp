#pragma once

// Automatic categorization: mean-centered truncated SVD, seeded k-means++ /
// Lloyd clustering, silhouette diagnostics, centroid inspection and a 2-D
// PCA projection for plotting.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dlab/common.hpp"
#include "dlab/corpus.hpp"
#include "dlab/embed.hpp"

namespace dlab {

struct SvdFit {
  EmbeddingMatrix reduced;
  Eigen::MatrixXd components;  // target x dim, orthonormal rows (zero rows when rank-deficient)
  Eigen::VectorXd singular_values;
  Eigen::VectorXd mean;
  double total_sum_squares = 0;  // ||A - mean||_F^2

  double captured_variance() const { return singular_values.squaredNorm(); }
};

namespace detail {

inline Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m) {
  Eigen::MatrixXd a(m.rows(), m.dim());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.dim(); ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return a;
}

inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

// Top `target` right-singular directions of centered `a`. Uses an exact thin
// SVD when the sketch would cover the full rank anyway, otherwise randomized
// subspace iteration with oversampling 10 and `power_iters` passes.
inline void principal_directions(const Eigen::MatrixXd& a, std::size_t target, std::uint64_t seed,
                                 int power_iters, Eigen::MatrixXd& components, Eigen::VectorXd& sigma) {
  const auto n = a.rows(), d = a.cols();
  const Eigen::Index full = std::min(n, d);
  const Eigen::Index sketch = std::min<Eigen::Index>(static_cast<Eigen::Index>(target) + 10, full);
  Eigen::MatrixXd v;
  Eigen::VectorXd s;
  if (sketch >= full) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
    v = svd.matrixV();
    s = svd.singularValues();
  } else {
    Rng rng(seed);
    Eigen::MatrixXd omega(d, sketch);
    for (Eigen::Index j = 0; j < sketch; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) omega(i, j) = standard_normal(rng);
    }
    Eigen::MatrixXd q = orthonormal_basis(a * omega);
    for (int it = 0; it < power_iters; ++it) {
      const Eigen::MatrixXd z = orthonormal_basis(a.transpose() * q);
      q = orthonormal_basis(a * z);
    }
    const Eigen::MatrixXd b = q.transpose() * a;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinV);
    v = svd.matrixV();
    s = svd.singularValues();
  }
  const auto t = static_cast<Eigen::Index>(target);
  components = Eigen::MatrixXd::Zero(t, d);
  sigma = Eigen::VectorXd::Zero(t);
  const double smax = s.size() ? s(0) : 0.0;
  bool deficient = false;
  for (Eigen::Index i = 0; i < t; ++i) {
    if (i >= s.size() || s(i) <= 1e-10 * std::max(smax, 1e-300)) {
      deficient = true;
      continue;
    }
    Eigen::VectorXd dir = v.col(i);
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0) dir = -dir;
    components.row(i) = dir.transpose();
    sigma(i) = s(i);
  }
  if (deficient) warn("truncated SVD: data rank below target dimension; padding with zero components");
}

}  // namespace detail

inline SvdFit fit_truncated_svd(const EmbeddingMatrix& m, std::size_t target_dim, std::uint64_t seed = 0,
                                int power_iters = 2) {
  if (target_dim < 1 || target_dim >= m.dim()) throw UsageError("truncated SVD: need 1 <= target_dim < dim");
  if (m.rows() < target_dim) throw UsageError("truncated SVD: need rows >= target_dim");
  Eigen::MatrixXd a = detail::to_eigen(m);
  SvdFit fit;
  fit.mean = a.colwise().mean().transpose();
  a.rowwise() -= fit.mean.transpose();
  fit.total_sum_squares = a.squaredNorm();
  detail::principal_directions(a, target_dim, seed, power_iters, fit.components, fit.singular_values);
  const Eigen::MatrixXd coords = a * fit.components.transpose();
  std::vector<float> data(m.rows() * target_dim);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < target_dim; ++c) {
      data[r * target_dim + c] = static_cast<float>(coords(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  fit.reduced = EmbeddingMatrix(m.ids(), target_dim, std::move(data), false);
  return fit;
}

inline EmbeddingMatrix truncated_svd(const EmbeddingMatrix& m, std::size_t target_dim, std::uint64_t seed = 0) {
  return fit_truncated_svd(m, target_dim, seed).reduced;
}

// ---------------------------------------------------------------------------
// k-means

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> centroids;          // k x dim
  std::vector<double> initial_centroids;  // k-means++ seeding, k x dim
  std::vector<std::string> ids;           // row order of the clustered matrix
  std::vector<int> labels;                // per row, in [0, k)
  double inertia = 0;
  std::vector<double> inertia_history;    // after each assignment step
  std::size_t iterations = 0;

  std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }

  std::map<std::string, int> assignment() const {
    std::map<std::string, int> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = labels[i];
    return out;
  }

  std::vector<std::size_t> members(std::size_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(c)) out.push_back(i);
    }
    return out;
  }
};

namespace detail {

template <typename A, typename B>
double squared_distance(std::span<const A> a, std::span<const B> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

inline std::vector<double> rows_as_double(const EmbeddingMatrix& m) {
  return {m.data().begin(), m.data().end()};
}

}  // namespace detail

inline std::vector<double> kmeans_plus_plus(const std::vector<double>& points, std::size_t n, std::size_t dim,
                                            std::size_t k, Rng& rng) {
  auto point = [&](std::size_t i) { return std::span<const double>(points.data() + i * dim, dim); };
  std::vector<double> centers;
  centers.reserve(k * dim);
  auto add = [&](std::size_t i) {
    const auto p = point(i);
    centers.insert(centers.end(), p.begin(), p.end());
  };
  add(uniform_index(rng, n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(point(i), std::span<const double>(centers.data(), dim));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0) {
      pick = uniform_index(rng, n);
    } else {
      const double r = uniform01(rng) * total;
      double acc = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0 && pick > 0) --pick;
    }
    add(pick);
    const std::span<const double> newest(centers.data() + c * dim, dim);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::squared_distance(point(i), newest));
  }
  return centers;
}

// Seeded k-means++ then Lloyd iterations until the largest centroid shift is
// below 1e-4 or 300 iterations. An empty cluster is re-seeded at the point
// farthest from its own centroid (taken from a cluster with >1 members).
inline ClusterModel kmeans(const EmbeddingMatrix& m, std::size_t k, std::uint64_t seed,
                           std::size_t max_iter = 300, double tol = 1e-4) {
  const std::size_t n = m.rows(), dim = m.dim();
  if (k < 1) throw UsageError("kmeans: k must be >= 1");
  if (n < k) throw UsageError("kmeans: need at least k rows");
  const std::vector<double> pts = detail::rows_as_double(m);
  auto point = [&](std::size_t i) { return std::span<const double>(pts.data() + i * dim, dim); };

  ClusterModel model;
  model.k = k;
  model.dim = dim;
  model.seed = seed;
  model.ids = m.ids();
  Rng rng(seed);
  model.centroids = kmeans_plus_plus(pts, n, dim, k, rng);
  model.initial_centroids = model.centroids;
  model.labels.assign(n, 0);
  std::vector<double> dist(n);

  auto assign = [&] {
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = detail::squared_distance(point(i), model.centroid(c));
        if (d < best) {
          best = d;
          arg = static_cast<int>(c);
        }
      }
      model.labels[i] = arg;
      dist[i] = best;
      inertia += best;
    }
    return inertia;
  };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    model.inertia_history.push_back(assign());
    model.iterations = iter + 1;

    std::vector<std::size_t> counts(k, 0);
    for (int l : model.labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(model.labels[i])] > 1 && (far == n || dist[i] > dist[far])) far = i;
      }
      if (far == n) break;
      --counts[static_cast<std::size_t>(model.labels[far])];
      model.labels[far] = static_cast<int>(c);
      dist[far] = 0;
      counts[c] = 1;
    }

    std::vector<double> next(k * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto l = static_cast<std::size_t>(model.labels[i]);
      const auto p = point(i);
      for (std::size_t j = 0; j < dim; ++j) next[l * dim + j] += p[j];
    }
    double shift = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::copy_n(model.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim), dim,
                    next.begin() + static_cast<std::ptrdiff_t>(c * dim));
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) next[c * dim + j] /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(detail::squared_distance(
                                  std::span<const double>(next.data() + c * dim, dim), model.centroid(c))));
    }
    model.centroids = std::move(next);
    if (shift < tol) break;
  }
  model.inertia = 0;
  for (std::size_t i = 0; i < n; ++i) {
    model.inertia += detail::squared_distance(point(i), model.centroid(static_cast<std::size_t>(model.labels[i])));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Silhouette

struct SilhouetteReport {
  std::map<std::string, double> per_point;
  double mean = 0;
};

// s(i) = (b - a) / max(a, b) with Euclidean distances; singleton clusters score 0.
inline SilhouetteReport silhouette(const EmbeddingMatrix& m, const ClusterModel& model) {
  if (model.k < 2) throw UsageError("silhouette is undefined for k < 2");
  const std::size_t n = model.ids.size();
  std::vector<std::size_t> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.find(model.ids[i]);
    if (!r) throw DataError("silhouette: matrix lacks id '" + model.ids[i] + "'");
    row[i] = *r;
  }
  std::vector<std::size_t> sizes(model.k, 0);
  for (int l : model.labels) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < model.k; ++c) {
    if (sizes[c] == 0) throw UsageError("silhouette: cluster " + std::to_string(c) + " is empty");
  }
  SilhouetteReport rep;
  double total = 0;
  std::vector<double> sums(model.k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sums[static_cast<std::size_t>(model.labels[j])] += std::sqrt(detail::squared_distance(m.row(row[i]), m.row(row[j])));
    }
    const auto own = static_cast<std::size_t>(model.labels[i]);
    double s = 0;
    if (sizes[own] > 1) {
      const double a = sums[own] / static_cast<double>(sizes[own] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < model.k; ++c) {
        if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
      }
      const double denom = std::max(a, b);
      s = denom > 0 ? (b - a) / denom : 0.0;
    }
    rep.per_point[model.ids[i]] = s;
    total += s;
  }
  rep.mean = n ? total / static_cast<double>(n) : 0.0;
  return rep;
}

// Members of `cluster` nearest its centroid (Euclidean), ties by id.
inline std::vector<std::string> nearest_to_centroid(const ClusterModel& model, const EmbeddingMatrix& m,
                                                    std::size_t cluster, std::size_t n) {
  if (cluster >= model.k) throw UsageError("cluster index out of range");
  std::vector<std::pair<double, std::string>> scored;
  for (std::size_t i : model.members(cluster)) {
    scored.emplace_back(detail::squared_distance(m.at(model.ids[i]), model.centroid(cluster)), model.ids[i]);
  }
  if (scored.empty()) {
    warn("cluster " + std::to_string(cluster) + " is empty");
    return {};
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

// ---------------------------------------------------------------------------
// PCA projection

struct Pca2d {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> variance_ratios{0, 0};
};

inline Pca2d pca_2d(const EmbeddingMatrix& m, std::uint64_t seed = 0) {
  if (m.rows() < 2) throw UsageError("pca_2d needs at least 2 rows");
  Eigen::MatrixXd a = detail::to_eigen(m);
  a.rowwise() -= a.colwise().mean();
  const double total = a.squaredNorm();
  const std::size_t target = std::min<std::size_t>(2, m.dim());
  Eigen::MatrixXd comps;
  Eigen::VectorXd sigma;
  detail::principal_directions(a, target, seed, 4, comps, sigma);
  Pca2d out;
  const Eigen::MatrixXd proj = a * comps.transpose();
  out.coords.resize(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < target; ++c) {
      out.coords[r][c] = proj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  for (std::size_t c = 0; c < target; ++c) {
    out.variance_ratios[c] = total > 0 ? sigma(static_cast<Eigen::Index>(c)) * sigma(static_cast<Eigen::Index>(c)) / total : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: <prefix>.json header, <prefix>.centroids.embx, <prefix>.assign.jsonl

inline void write_cluster_model(const ClusterModel& model, const std::string& prefix,
                                const nlohmann::json& meta = {}) {
  nlohmann::json header{{"k", model.k}, {"dim", model.dim}, {"seed", model.seed},
                        {"inertia", model.inertia}, {"iterations", model.iterations}};
  for (auto it = meta.begin(); it != meta.end(); ++it) header[it.key()] = it.value();
  std::ofstream(prefix + ".json") << header.dump(2) << '\n';
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < model.k; ++c) ids.push_back("centroid:" + std::to_string(c));
  export_embeddings(EmbeddingMatrix(ids, model.dim, {model.centroids.begin(), model.centroids.end()}),
                    prefix + ".centroids.embx");
  std::ofstream assign(prefix + ".assign.jsonl");
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    assign << nlohmann::json{{"comment_id", model.ids[i]}, {"cluster", model.labels[i]}}.dump() << '\n';
  }
}

inline ClusterModel read_cluster_model(const std::string& prefix) {
  std::ifstream hin(prefix + ".json");
  if (!hin) throw DataError("cannot open " + prefix + ".json");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hin);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(prefix + ".json: " + e.what());
  }
  ClusterModel model;
  model.k = header.at("k").get<std::size_t>();
  model.dim = header.at("dim").get<std::size_t>();
  model.seed = header.at("seed").get<std::uint64_t>();
  model.inertia = header.at("inertia").get<double>();
  const auto centroids = import_embeddings(prefix + ".centroids.embx");
  if (centroids.rows() != model.k || centroids.dim() != model.dim) throw DataError("centroid file does not match header");
  model.centroids.assign(centroids.data().begin(), centroids.data().end());
  detail::for_each_jsonl(prefix + ".assign.jsonl", [&](const nlohmann::json& o, std::size_t) {
    model.ids.push_back(o.at("comment_id").get<std::string>());
    const int label = o.at("cluster").get<int>();
    if (label < 0 || static_cast<std::size_t>(label) >= model.k) throw DataError("cluster label out of range");
    model.labels.push_back(label);
  });
  return model;
}

// Review rows per cluster: n centroid-nearest plus n seeded-random members.
// `key_of` maps a clustered row id back to a comment id.
inline void write_inspection(const ClusterModel& model, const EmbeddingMatrix& m, const Corpus& corpus,
                             std::size_t n, std::uint64_t seed, std::ostream& os,
                             const std::function<std::string(const std::string&)>& key_of =
                                 [](const std::string& s) { return s; }) {
  for (std::size_t c = 0; c < model.k; ++c) {
    auto emit = [&](const std::string& row_id, const char* kind) {
      const std::string cid = key_of(row_id);
      const Comment* cm = corpus.find_comment(cid);
      os << nlohmann::json{{"cluster", c}, {"kind", kind}, {"comment_id", cid}, {"text", cm ? cm->text : ""}}.dump()
         << '\n';
    };
    for (const auto& id : nearest_to_centroid(model, m, c, n)) emit(id, "nearest");
    const auto members = model.members(c);
    Rng rng(derive_seed(seed, c));
    for (std::size_t idx : sample_without_replacement(members.size(), n, rng)) emit(model.ids[members[idx]], "random");
  }
}

}  // namespace dlab
