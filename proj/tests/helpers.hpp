#pragma once

#include "toothsonic/error.hpp"
#include "toothsonic/random.hpp"
#include "toothsonic/signal.hpp"

#include <doctest.h>

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

namespace testing {

using toothsonic::ErrorCode;

inline Eigen::ArrayXd sine(double hz, Eigen::Index n, double amplitude = 1.0, double phase = 0.0) {
  Eigen::ArrayXd x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / toothsonic::kSampleRate + phase);
  return x;
}

inline Eigen::ArrayXd white(Eigen::Index n, std::uint64_t seed, double sigma = 1.0) {
  toothsonic::Rng rng(seed);
  Eigen::ArrayXd x(n);
  for (auto& v : x) v = sigma * rng.normal();
  return x;
}

inline toothsonic::AudioClip clip_of(Eigen::ArrayXd samples) {
  toothsonic::AudioClip c;
  c.samples = std::move(samples);
  return c;
}

/// Direct-sum DFT power |X_k|^2 / N, k = 0..N/2.
inline Eigen::ArrayXd brute_power(const Eigen::ArrayXd& x) {
  const auto n = x.size();
  Eigen::ArrayXd p(n / 2 + 1);
  for (Eigen::Index k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    p[k] = std::norm(acc) / static_cast<double>(n);
  }
  return p;
}

inline double db(double ratio) { return 20.0 * std::log10(ratio); }

/// Runs fn and reports the toothsonic error code it threw, if any.
template <typename Fn>
std::optional<ErrorCode> error_of(Fn&& fn) {
  try {
    fn();
  } catch (const toothsonic::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("toothsonic_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
