#include "qlan/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "qlan/error.hpp"

namespace qlan {

std::string_view to_string(Bell which) {
  switch (which) {
    case Bell::PhiPlus: return "phi+";
    case Bell::PhiMinus: return "phi-";
    case Bell::PsiPlus: return "psi+";
    case Bell::PsiMinus: return "psi-";
  }
  return "?";
}

Bell parse_bell(std::string_view label) {
  if (label == "phi+") return Bell::PhiPlus;
  if (label == "phi-") return Bell::PhiMinus;
  if (label == "psi+") return Bell::PsiPlus;
  if (label == "psi-") return Bell::PsiMinus;
  throw ValidationError(fmt::format("unknown Bell state '{}'", label));
}

void validate_density_matrix(const Matrix4c& rho) {
  if (!rho.allFinite()) throw ValidationError("density matrix has non-finite entries");
  const double asym = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (asym > kStateTolerance) {
    throw ValidationError(fmt::format("density matrix not Hermitian (max |rho - rho^dag| = {:.3e})", asym));
  }
  const Complex tr = rho.trace();
  if (std::abs(tr - Complex(1.0, 0.0)) > kStateTolerance) {
    throw ValidationError(fmt::format("density matrix trace {:.12f}{:+.3e}i is not 1", tr.real(), tr.imag()));
  }
  const Matrix4c herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(herm, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -kStateTolerance) {
    throw ValidationError(fmt::format("density matrix has negative eigenvalue {:.3e}", min_eig));
  }
}

TwoQubitState TwoQubitState::from_matrix(const Matrix4c& rho) {
  validate_density_matrix(rho);
  return TwoQubitState(rho);
}

std::array<double, 32> TwoQubitState::serialize() const {
  std::array<double, 32> out{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      out[2 * (4 * r + c)] = rho_(r, c).real();
      out[2 * (4 * r + c) + 1] = rho_(r, c).imag();
    }
  }
  return out;
}

TwoQubitState TwoQubitState::deserialize(std::span<const double, 32> values) {
  Matrix4c rho;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      rho(r, c) = Complex(values[2 * (4 * r + c)], values[2 * (4 * r + c) + 1]);
    }
  }
  return from_matrix(rho);
}

TwoQubitState bell_state(Bell which) {
  Eigen::Vector4cd psi = Eigen::Vector4cd::Zero();
  const double s = 1.0 / std::sqrt(2.0);
  switch (which) {
    case Bell::PhiPlus: psi(0) = s; psi(3) = s; break;
    case Bell::PhiMinus: psi(0) = s; psi(3) = -s; break;
    case Bell::PsiPlus: psi(1) = s; psi(2) = s; break;
    case Bell::PsiMinus: psi(1) = s; psi(2) = -s; break;
  }
  Matrix4c rho = psi * psi.adjoint();
  // Entries are exactly 0 or +-1/2; avoid carrying (1/sqrt2)^2 rounding.
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      rho(r, c) = Complex(std::round(rho(r, c).real() * 2.0) / 2.0, 0.0);
    }
  }
  return TwoQubitState::from_matrix(rho);
}

TwoQubitState maximally_mixed_state() {
  return TwoQubitState::from_matrix(Matrix4c::Identity() * 0.25);
}

TwoQubitState werner_state(double p, Bell which) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError(fmt::format("Werner weight p = {} outside [0, 1]", p));
  }
  return mix(bell_state(which), maximally_mixed_state(), p);
}

TwoQubitState mix(const TwoQubitState& rho, const TwoQubitState& sigma, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError(fmt::format("mixing weight p = {} outside [0, 1]", p));
  }
  return TwoQubitState::from_matrix(p * rho.matrix() + (1.0 - p) * sigma.matrix());
}

double fidelity(const TwoQubitState& state, const TwoQubitState& target) {
  const double purity = (target.matrix() * target.matrix()).trace().real();
  if (std::abs(purity - 1.0) > 1e-6) {
    throw UnsupportedTargetError(
        fmt::format("fidelity target must be pure (Tr(sigma^2) = {:.6f})", purity));
  }
  const double f = (state.matrix() * target.matrix()).trace().real();
  return std::clamp(f, 0.0, 1.0);
}

Matrix4c partial_transpose(const Matrix4c& rho) {
  Matrix4c out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        for (int l = 0; l < 2; ++l) {
          out(2 * i + j, 2 * k + l) = rho(2 * i + l, 2 * k + j);
        }
      }
    }
  }
  return out;
}

double log_negativity(const TwoQubitState& state) {
  const Matrix4c pt = partial_transpose(state.matrix());
  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(0.5 * (pt + pt.adjoint()), Eigen::EigenvaluesOnly);
  const double trace_norm = eig.eigenvalues().cwiseAbs().sum();
  return std::max(0.0, std::log2(trace_norm));
}

double ebit_rate(double log_negativity, double coincidence_rate) {
  if (log_negativity < 0.0 || coincidence_rate < 0.0) {
    throw ValidationError("ebit_rate inputs must be non-negative");
  }
  return log_negativity * coincidence_rate;
}

TwoQubitState rotate_second(const TwoQubitState& state, double angle_rad) {
  Eigen::Vector4cd phases;
  const Complex e = std::polar(1.0, angle_rad);
  phases << 1.0, e, 1.0, e;
  const Matrix4c u = phases.asDiagonal();
  return TwoQubitState::from_matrix(u * state.matrix() * u.adjoint());
}

}  // namespace qlan
