#pragma once

// Dense text embeddings: a deterministic signed-hash n-gram embedder, the
// EMBX interchange format for externally computed vectors, and exact cosine
// top-k retrieval.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dlab/common.hpp"
#include "dlab/parallel.hpp"

namespace dlab {

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                  bool normalized = false)
      : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), normalized_(normalized) {
    if (dim_ == 0) throw DataError("embedding dim must be positive");
    if (data_.size() != ids_.size() * dim_) {
      throw DataError("embedding data size " + std::to_string(data_.size()) + " != rows*dim " +
                      std::to_string(ids_.size() * dim_));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) throw DataError("duplicate embedding id '" + ids_[i] + "'");
    }
    if (normalized_) {
      for (std::size_t i = 0; i < ids_.size(); ++i) {
        double ss = 0;
        for (float x : row(i)) ss += static_cast<double>(x) * x;
        if (std::abs(std::sqrt(ss) - 1.0) > 1e-6) {
          throw DataError("row '" + ids_[i] + "' is not unit-norm in a normalized matrix");
        }
      }
    }
  }

  std::size_t rows() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  bool normalized() const { return normalized_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const float> at(std::string_view id) const {
    auto r = find(id);
    if (!r) throw DataError("no embedding for id '" + std::string(id) + "'");
    return row(*r);
  }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.ids_ == b.ids_ && a.dim_ == b.dim_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Hashed n-gram embedder

enum class EmbedderKind : std::uint8_t { HashedNgram, External };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::HashedNgram;
  std::size_t dim = 4096;
  std::size_t ngram_lo = 1;
  std::size_t ngram_hi = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim == 0) throw UsageError("embedder dim must be positive");
    if (kind == EmbedderKind::HashedNgram) {
      if (dim < 8) throw UsageError("hashed_ngram requires dim >= 8");
      if (ngram_lo < 1 || ngram_lo > ngram_hi || ngram_hi > 3) {
        throw UsageError("hashed_ngram requires 1 <= lo <= hi <= 3");
      }
    }
  }
};

struct TextEmbedding {
  std::vector<float> values;
  bool normalizable = true;  // false for texts without tokens (zero vector)
};

inline TextEmbedding embed_text(std::string_view text, const EmbedderConfig& cfg) {
  cfg.validate();
  if (cfg.kind != EmbedderKind::HashedNgram) throw UsageError("embed_text requires the hashed_ngram embedder");
  std::vector<double> acc(cfg.dim, 0.0);
  const auto toks = word_tokens(text);
  const std::uint64_t salt = splitmix64(cfg.seed);
  for (std::size_t n = cfg.ngram_lo; n <= cfg.ngram_hi; ++n) {
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      Fnv64 h;
      h.update(&salt, sizeof salt);
      for (std::size_t k = 0; k < n; ++k) {
        if (k) h.update(" ", 1);
        h.update(toks[i + k]);
      }
      const std::uint64_t x = splitmix64(h.digest());
      acc[x % cfg.dim] += (x >> 63) ? -1.0 : 1.0;
    }
  }
  double ss = 0;
  for (double v : acc) ss += v * v;
  TextEmbedding out;
  out.values.assign(cfg.dim, 0.0f);
  if (ss == 0.0) {
    out.normalizable = false;
    return out;
  }
  const double inv = 1.0 / std::sqrt(ss);
  for (std::size_t i = 0; i < cfg.dim; ++i) out.values[i] = static_cast<float>(acc[i] * inv);
  return out;
}

// Embeds (id, text) pairs in parallel; row order follows the input order.
// Texts without tokens keep a zero row, so the matrix is flagged normalized
// only when every row is unit-norm.
inline EmbeddingMatrix embed_batch(const std::vector<std::pair<std::string, std::string>>& items,
                                   const EmbedderConfig& cfg, std::size_t workers = worker_count()) {
  cfg.validate();
  std::vector<float> data(items.size() * cfg.dim);
  std::vector<char> ok(items.size(), 1);
  parallel_for(items.size(), workers, [&](std::size_t i) {
    auto e = embed_text(items[i].second, cfg);
    ok[i] = e.normalizable;
    std::copy(e.values.begin(), e.values.end(), data.begin() + static_cast<std::ptrdiff_t>(i * cfg.dim));
  });
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.first);
  const bool all_unit = std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
  return EmbeddingMatrix(std::move(ids), cfg.dim, std::move(data), all_unit);
}

// ---------------------------------------------------------------------------
// EMBX format: "EMBX", u16 version, u32 dim, u64 rows, rows*dim f32 (LE,
// row-major), newline-terminated ids, u64 FNV-1a checksum of all preceding bytes.

enum class EmbxErrorKind { BadMagic, BadVersion, RowCountMismatch, ChecksumMismatch, Io };

class EmbxError : public DataError {
 public:
  EmbxError(EmbxErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  EmbxErrorKind kind() const { return kind_; }

 private:
  EmbxErrorKind kind_;
};

inline constexpr std::uint16_t kEmbxVersion = 1;

inline std::string encode_embx(const EmbeddingMatrix& m) {
  std::string out = "EMBX";
  put_le<std::uint16_t>(out, kEmbxVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  put_le<std::uint64_t>(out, m.rows());
  out.reserve(out.size() + m.data().size() * 4 + m.rows() * 16 + 8);
  for (float v : m.data()) put_le<float>(out, v);
  for (const auto& id : m.ids()) {
    if (id.find('\n') != std::string::npos) throw DataError("EMBX ids cannot contain newlines");
    out += id;
    out += '\n';
  }
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

inline EmbeddingMatrix decode_embx(std::string_view bytes) {
  constexpr std::size_t kHeader = 4 + 2 + 4 + 8;
  if (bytes.size() < 4 || bytes.substr(0, 4) != "EMBX") throw EmbxError(EmbxErrorKind::BadMagic, "EMBX: bad magic");
  if (bytes.size() < kHeader + 8) throw EmbxError(EmbxErrorKind::ChecksumMismatch, "EMBX: truncated file");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kEmbxVersion) {
    throw EmbxError(EmbxErrorKind::BadVersion, "EMBX: unsupported version " + std::to_string(version));
  }
  const std::string_view payload = bytes.substr(0, bytes.size() - 8);
  if (get_le<std::uint64_t>(bytes, bytes.size() - 8) != fnv1a64(payload)) {
    throw EmbxError(EmbxErrorKind::ChecksumMismatch, "EMBX: checksum mismatch");
  }
  const auto dim = get_le<std::uint32_t>(bytes, 6);
  const auto rows = get_le<std::uint64_t>(bytes, 10);
  if (dim == 0) throw EmbxError(EmbxErrorKind::RowCountMismatch, "EMBX: zero dim");
  const std::uint64_t floats = rows * dim;
  if (rows != 0 && floats / rows != dim) throw EmbxError(EmbxErrorKind::RowCountMismatch, "EMBX: size overflow");
  if (payload.size() < kHeader + floats * 4) {
    throw EmbxError(EmbxErrorKind::RowCountMismatch, "EMBX: payload shorter than rows*dim floats");
  }
  std::vector<float> data(floats);
  for (std::uint64_t i = 0; i < floats; ++i) data[i] = get_le<float>(bytes, kHeader + i * 4);
  std::string_view id_block = payload.substr(kHeader + floats * 4);
  std::vector<std::string> ids;
  while (!id_block.empty()) {
    const auto nl = id_block.find('\n');
    if (nl == std::string_view::npos) throw EmbxError(EmbxErrorKind::RowCountMismatch, "EMBX: unterminated id");
    ids.emplace_back(id_block.substr(0, nl));
    id_block.remove_prefix(nl + 1);
  }
  if (ids.size() != rows) {
    throw EmbxError(EmbxErrorKind::RowCountMismatch,
                    "EMBX: header declares " + std::to_string(rows) + " rows, found " + std::to_string(ids.size()) + " ids");
  }
  bool unit = rows > 0;
  for (std::uint64_t r = 0; r < rows && unit; ++r) {
    double ss = 0;
    for (std::uint32_t k = 0; k < dim; ++k) ss += static_cast<double>(data[r * dim + k]) * data[r * dim + k];
    unit = std::abs(std::sqrt(ss) - 1.0) <= 1e-6;
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(data), unit);
}

inline void export_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EmbxError(EmbxErrorKind::Io, "cannot write " + path);
  const std::string bytes = encode_embx(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline EmbeddingMatrix import_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmbxError(EmbxErrorKind::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_embx(ss.str());
}

// ---------------------------------------------------------------------------
// Similarity

// Zero vectors have cosine 0 with everything.
template <typename A, typename B>
double cosine_similarity(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    throw UsageError("cosine: dim mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(uu * vv), -1.0, 1.0);
}

inline double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine_similarity(std::span<const double>(u), std::span<const double>(v));
}

struct ScoredId {
  std::string id;
  double score = 0;
  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// Exact top-k over `candidates` (row indices) by cosine to `query`; ties by ascending id.
template <typename T>
std::vector<ScoredId> top_k_similar(std::span<const T> query, const EmbeddingMatrix& m, std::size_t k,
                                    const std::vector<std::size_t>& candidates) {
  if (k < 1) throw UsageError("top_k: k must be >= 1");
  if (query.size() != m.dim()) throw UsageError("top_k: query dim mismatch");
  std::vector<ScoredId> scored;
  scored.reserve(candidates.size());
  for (std::size_t r : candidates) scored.push_back({m.ids()[r], cosine_similarity(query, m.row(r))});
  auto better = [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
  scored.resize(keep);
  return scored;
}

template <typename T>
std::vector<ScoredId> top_k_similar(std::span<const T> query, const EmbeddingMatrix& m, std::size_t k,
                                    const std::unordered_set<std::string>& exclude = {}) {
  std::vector<std::size_t> candidates;
  candidates.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!exclude.contains(m.ids()[r])) candidates.push_back(r);
  }
  return top_k_similar(query, m, k, candidates);
}

}  // namespace dlab
