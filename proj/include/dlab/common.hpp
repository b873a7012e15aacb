#pragma once

// Shared plumbing: error types with CLI exit codes, checksums, seeded RNG
// helpers and small text utilities used by every module.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dlab {

inline constexpr std::string_view kVersion = "dlab 0.1.0";

// Exit codes: 1 usage, 2 data, 3 invariant violation.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, 1) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 2) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(what, 3) {}
};

inline void warn(std::string_view msg) { std::clog << "warning: " << msg << '\n'; }

// 64-bit FNV-1a, used for file checksums and seed derivation.
class Fnv64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  Fnv64 h;
  h.update(s);
  return h.digest();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a parent seed and a tag, so that
// per-stage / per-run / per-pair randomness never depends on execution order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ splitmix64(fnv1a64(tag)));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// mt19937_64 output is fully specified by the standard; the distributions
// are not, so bounded draws and shuffles are done here.
using Rng = std::mt19937_64;

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

// First `count` entries of a seeded partial Fisher-Yates over `n` items.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                           Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  count = std::min(count, n);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  }
  idx.resize(count);
  return idx;
}

// Little-endian scalar encoding, independent of host byte order.
template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  if constexpr (sizeof(T) == 8) {
    std::memcpy(&bits, &value, 8);
  } else if constexpr (sizeof(T) == 4) {
    std::uint32_t b;
    std::memcpy(&b, &value, 4);
    bits = b;
  } else if constexpr (sizeof(T) == 2) {
    std::uint16_t b;
    std::memcpy(&b, &value, 2);
    bits = b;
  } else {
    static_assert(sizeof(T) == 1);
    std::uint8_t b;
    std::memcpy(&b, &value, 1);
    bits = b;
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  T value;
  if constexpr (sizeof(T) == 8) {
    std::memcpy(&value, &bits, 8);
  } else if constexpr (sizeof(T) == 4) {
    auto b = static_cast<std::uint32_t>(bits);
    std::memcpy(&value, &b, 4);
  } else if constexpr (sizeof(T) == 2) {
    auto b = static_cast<std::uint16_t>(bits);
    std::memcpy(&value, &b, 2);
  } else {
    auto b = static_cast<std::uint8_t>(bits);
    std::memcpy(&value, &b, 1);
  }
  return value;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '\'' || c >= 0x80;
}

// Lowercased word tokens: maximal runs of ASCII alphanumerics, apostrophes
// and non-ASCII bytes. Leading/trailing apostrophes are trimmed.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t a = i, b = j;
    while (a < b && text[a] == '\'') ++a;
    while (b > a && text[b - 1] == '\'') --b;
    if (b > a) out.push_back(ascii_lower(text.substr(a, b - a)));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    std::string item(s.substr(start, end - start));
    auto first = item.find_first_not_of(" \t");
    auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
    start = end + 1;
  }
  return out;
}

}  // namespace dlab
