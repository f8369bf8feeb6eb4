#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fieldrecon {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] inline void fail(const std::string& what) { throw std::runtime_error(what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(what);
}

/// Deterministic random stream, one per logical task. Substreams are derived
/// from (seed, stream) with a splitmix64 hash, so the draw sequence of any
/// unit of work is fixed by its ids and never by scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix(mix(seed))) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : eng_(mix(mix(seed) + mix(stream))) {}

  /// Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller; pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename Scalar>
  ArrayX<Scalar> normal_array(Eigen::Index n) {
    ArrayX<Scalar> out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = Scalar(normal());
    return out;
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = eng_();
    while (r >= limit) r = eng_();
    return r % n;
  }

  /// k distinct values from [0, n), partial Fisher-Yates, in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    require(0 <= k && k <= n, "Rng::sample_without_replacement: need 0 <= k <= n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
      const int j = i + int(below(std::uint64_t(n - i)));
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; results
/// must be written to per-index slots so the outcome is independent of the
/// thread count. n_threads <= 1 runs inline.
inline void parallel_for(int n, const std::function<void(int)>& fn, int n_threads = 0) {
  if (n_threads <= 0) n_threads = int(std::thread::hardware_concurrency());
  if (n_threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  n_threads = std::min(n_threads, n);
  std::vector<std::thread> workers;
  workers.reserve(size_t(n_threads));
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
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
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fieldrecon
