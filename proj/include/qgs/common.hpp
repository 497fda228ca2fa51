#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qgs {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr cplx I_unit{0.0, 1.0};

/// Input that violates a structural or bound requirement.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Square root with Im >= 0; principal branch, so Im > 0 whenever Im z > 0.
inline cplx sqrt_upper(cplx z) {
  cplx k = std::sqrt(z);
  if (k.imag() < 0.0) k = -k;
  return k;
}

inline double op_norm(const CMat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMat> svd(m);
  return svd.singularValues()(0);
}

/// Worker count: QGS_THREADS if set, otherwise the hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QGS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 1024));
  }
  return hw;
}

/// Runs fn(i) for i in [0, n) on up to worker_count() threads.
/// The first exception thrown by any task is rethrown on the caller.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t + 1 < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// SplitMix64 step, used to derive independent seeds from one master seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace qgs
