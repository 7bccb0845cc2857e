// pdaf/common.hpp

// Copyright 2026  PDAF Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace pdaf {

// ---------------------------------------------------------------------------
// Errors. Every failure mode surfaces as a typed exception with a message
// that names the offending values; nothing fails silently.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// Shapes disagree (matmul operands, broadcast failure, params vs grads).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside an op's mathematical domain (log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf surfaced where finite values are required, or a softmax row with
/// no attendable entry.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (truncated WAV, bad JSON line).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid file in a codec/layout this toolkit does not handle.
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a documented precondition (overlapping alignment segments,
/// all-silence utterance, too few speakers).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Serialized artifact carries the wrong magic/version.
class VersionError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 has a pinned algorithm, but the standard distributions do
// not, so every draw used anywhere in the toolkit goes through the explicit
// implementations below. Fixed seed => bit-identical streams on any platform.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw DomainError("Rng::uniform_int: n must be positive, got " + std::to_string(n));
    // Rejection sampling over the largest multiple of n that fits in 64 bits.
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare; two draws per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T> &v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  /// Derive an independent child stream; used so subsystems do not perturb
  /// each other's draw sequences.
  Rng fork(uint64_t stream_id) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1)));
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string &s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw ParseError("Rng::set_state: malformed engine state string");
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// FNV-1a content hashing; used for config fingerprints and rerun caching.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void *data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char *p = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string &s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hash_hex(uint64_t h) {
  static const char *digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

/// Hash of a whole file's bytes; throws ParseError if unreadable.
inline uint64_t hash_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Little-endian binary IO for artifact files. All on-disk formats are
// little-endian regardless of host order.
// ---------------------------------------------------------------------------

namespace io {

template <typename T>
void write_le(std::ostream &os, T v) {
  static_assert(std::is_arithmetic_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  // Hosts we target are little-endian; byte-swap would go here otherwise.
  os.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream &is, const std::string &what) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char *>(buf), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError("truncated read of " + what + " at byte offset " +
                     std::to_string(static_cast<long long>(is.tellg())));
  }
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_string(std::ostream &os, const std::string &s) {
  write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream &is, const std::string &what) {
  const uint32_t n = read_le<uint32_t>(is, what + " length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (is.gcount() != static_cast<std::streamsize>(n)) {
    throw ParseError("truncated read of " + what);
  }
  return s;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Bounded parallel map. PDAF_THREADS caps the worker count; each index writes
// only its own output slot, so results do not depend on scheduling.
// ---------------------------------------------------------------------------

inline int max_threads() {
  if (const char *env = std::getenv("PDAF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline void parallel_for(int64_t n, const std::function<void(int64_t)> &fn) {
  const int workers = std::min<int64_t>(max_threads(), n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next(0);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto &t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pdaf
