#pragma once

// Shared plumbing: error types, small vectors, hashing, counter-based
// random streams, deterministic reductions and a slot-based parallel map.

#include <array>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fmlab {

// ---------------------------------------------------------------------------
// Errors. Exit-code mapping used by the CLI: ValidationError -> 2,
// NumericError -> 3, InvariantViolation -> 4.

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDomainError : ValidationError {
  using ValidationError::ValidationError;
};

// ---------------------------------------------------------------------------
// Small fixed-capacity vectors; coordinates beyond the active dimension are
// kept at zero so equality and hashing stay well defined.

using IVec = std::array<std::int64_t, 3>;
using RVec = std::array<double, 3>;

inline RVec rvec(double x, double y = 0.0, double z = 0.0) { return {x, y, z}; }
inline IVec ivec(std::int64_t x, std::int64_t y = 0, std::int64_t z = 0) {
  return {x, y, z};
}

inline double max_norm(const RVec& v, int d) {
  double m = 0.0;
  for (int k = 0; k < d; ++k) m = std::max(m, std::abs(v[k]));
  return m;
}

inline RVec sub(const RVec& a, const RVec& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline std::int64_t max_norm_int(const IVec& a, const IVec& b, int d) {
  std::int64_t m = 0;
  for (int k = 0; k < d; ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// ---------------------------------------------------------------------------
// Hashing. FNV-1a for byte streams (manifest checksums), the splitmix64
// finalizer for random-stream derivation.

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

struct ByteHasher {
  std::uint64_t state = 0xcbf29ce484222325ULL;
  void add(const void* data, std::size_t n) { state = fnv1a64(data, n, state); }
  template <class T>
  void add_pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    add(&v, sizeof(v));
  }
  void add_string(std::string_view s) {
    std::uint64_t len = s.size();
    add_pod(len);
    add(s.data(), s.size());
  }
  std::uint64_t digest() const { return state; }
};

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Counter-based random streams. A stream is a 64-bit key; drawing at a
// counter is a pure function of (key, counter), so realizations can be
// generated in any order and on any number of workers with identical output.

struct RngStream {
  std::uint64_t key = 0;

  RngStream child(std::uint64_t index) const {
    return RngStream{mix64(key ^ mix64(index))};
  }
  RngStream child(std::string_view tag) const {
    return RngStream{mix64(key ^ fnv1a64(tag))};
  }
  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key ^ mix64(counter ^ 0x5851f42d4c957f2dULL));
  }
  // uniform in [0,1), 53 significant bits
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }
};

inline RngStream master_stream(std::uint64_t seed) {
  return RngStream{mix64(seed)};
}

// ---------------------------------------------------------------------------
// Fixed-topology pairwise reduction. The summation tree depends only on the
// number of slots, never on scheduling, so parallel runs reproduce bit-equal
// sums.

inline double pairwise_sum(const double* p, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = p[0];
    for (std::size_t i = 1; i < n; ++i) s += p[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}

inline double pairwise_sum(std::span<const double> v) {
  return pairwise_sum(v.data(), v.size());
}

// ---------------------------------------------------------------------------
// Slot-based parallel map: task i writes only slot i, so results do not
// depend on the worker count. The first exception wins and is rethrown on
// the calling thread.

template <class F>
void parallel_for_indexed(std::size_t n, int workers, F&& body) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto drain = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  pool.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(drain);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fmlab
