#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double werner_fidelity(double p) { return (3.0 * p + 1.0) / 4.0; }

inline double werner_log_negativity(double p) { return std::max(0.0, std::log2((3.0 * p + 1.0) / 2.0)); }

// (Tr sqrt(sqrt(a) b sqrt(a)))^2 for two density matrices.
inline double uhlmann_fidelity(const Eigen::Matrix4cd& a, const Eigen::Matrix4cd& b) {
  auto msqrt = [](const Eigen::Matrix4cd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(m);
    Eigen::Vector4d v = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::Matrix4cd(es.eigenvectors() * v.cast<std::complex<double>>().asDiagonal() *
                            es.eigenvectors().adjoint());
  };
  const Eigen::Matrix4cd sa = msqrt(a);
  const Eigen::Matrix4cd inner = sa * b * sa;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(0.5 * (inner + inner.adjoint()));
  const double tr = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return tr * tr;
}

// All-pairs greedy pairing: each a in order takes the closest unmatched b,
// the earlier b on equal distance.
inline std::int64_t brute_force_coincidences(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
                                             std::int64_t half_width, std::int64_t offset) {
  std::vector<bool> used(b.size(), false);
  std::int64_t n = 0;
  for (std::int64_t x : a) {
    std::int64_t best = -1;
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      const std::int64_t d = std::llabs(x - (b[j] + offset));
      if (d <= half_width && d < best_d) {
        best_d = d;
        best = static_cast<std::int64_t>(j);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      ++n;
    }
  }
  return n;
}

}  // namespace oracle
