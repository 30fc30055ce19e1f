#pragma once

#include <array>
#include <bitset>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace qlan {

using Complex = std::complex<double>;
using Matrix4c = Eigen::Matrix4cd;
using Matrix2c = Eigen::Matrix2cd;

/// Absolute tolerance for Hermiticity, trace and eigenvalue checks.
inline constexpr double kStateTolerance = 1e-9;

enum class Bell { PhiPlus, PhiMinus, PsiPlus, PsiMinus };

std::string_view to_string(Bell which);
Bell parse_bell(std::string_view label);

/// Polarization state of a photon pair as a 4x4 density matrix in the fixed
/// basis |HH>, |HV>, |VH>, |VV>. Instances are always physical: the only way
/// in is through from_matrix(), which rejects anything that is not Hermitian,
/// unit-trace and positive semidefinite within kStateTolerance.
class TwoQubitState {
 public:
  static TwoQubitState from_matrix(const Matrix4c& rho);

  const Matrix4c& matrix() const noexcept { return rho_; }
  Complex operator()(int row, int col) const { return rho_(row, col); }

  /// 16 complex entries, row-major, as interleaved (real, imag) pairs.
  std::array<double, 32> serialize() const;
  static TwoQubitState deserialize(std::span<const double, 32> values);

  bool operator==(const TwoQubitState& other) const { return rho_ == other.rho_; }

 private:
  explicit TwoQubitState(const Matrix4c& rho) : rho_(rho) {}

  Matrix4c rho_;
};

/// Throws ValidationError with a description of the first violated invariant.
void validate_density_matrix(const Matrix4c& rho);

TwoQubitState bell_state(Bell which);
TwoQubitState werner_state(double p, Bell which);
TwoQubitState maximally_mixed_state();

/// p * rho + (1 - p) * sigma.
TwoQubitState mix(const TwoQubitState& rho, const TwoQubitState& sigma, double p);

/// <psi|rho|psi> for a pure target |psi><psi|. Throws UnsupportedTargetError
/// when the target's purity deviates from 1 by more than 1e-6.
double fidelity(const TwoQubitState& state, const TwoQubitState& target);

/// Partial transpose over the second qubit.
Matrix4c partial_transpose(const Matrix4c& rho);

/// log2 of the trace norm of the partial transpose, clamped at 0.
double log_negativity(const TwoQubitState& state);

/// Ebits per second. Both arguments must be non-negative.
double ebit_rate(double log_negativity, double coincidence_rate);

/// Applies U = diag(1, e^{i angle}) to the second photon (birefringent phase).
TwoQubitState rotate_second(const TwoQubitState& state, double angle_rad);

/// Per-link figures of merit; the *_sigma fields are one standard deviation.
struct LinkMetrics {
  double fidelity = 0.0;
  double fidelity_sigma = 0.0;
  double log_negativity = 0.0;
  double log_negativity_sigma = 0.0;
  double coincidence_rate = 0.0;  // 1/s
  double coincidence_rate_sigma = 0.0;
  double ebit_rate = 0.0;  // ebits/s
  double ebit_rate_sigma = 0.0;

  bool operator==(const LinkMetrics&) const = default;
};

// ---------------------------------------------------------------------------
// Polarization tomography

/// Single-photon projector settings: the six Pauli eigenstates.
enum class Eigenstate : std::uint8_t { H = 0, V = 1, D = 2, A = 3, R = 4, L = 5 };

inline constexpr std::array<Eigenstate, 6> kEigenstates = {
    Eigenstate::H, Eigenstate::V, Eigenstate::D,
    Eigenstate::A, Eigenstate::R, Eigenstate::L};

std::string_view to_string(Eigenstate e);
std::optional<Eigenstate> parse_eigenstate(std::string_view label);

/// Measurement basis of an eigenstate: 0 = Z (H/V), 1 = X (D/A), 2 = Y (R/L).
int basis_of(Eigenstate e);

/// a (x) b with the first factor acting on the first photon.
Matrix4c kron(const Matrix2c& a, const Matrix2c& b);

/// Projector |e><e| for one photon.
Matrix2c projector(Eigenstate e);

/// Counts (or, for noiseless tests, probabilities) for the 36 two-sided
/// projector settings. Settings are grouped by basis pair: the four
/// projectors of a basis pair form one complete measurement.
class TomographyCounts {
 public:
  void set(Eigenstate a, Eigenstate b, double count);
  void add(Eigenstate a, Eigenstate b, double count);
  bool has(Eigenstate a, Eigenstate b) const;
  double at(Eigenstate a, Eigenstate b) const;

  bool complete() const { return present_.all(); }
  double total() const;
  /// Sum of the four settings sharing the basis pair of (a, b).
  double basis_total(Eigenstate a, Eigenstate b) const;

  bool operator==(const TomographyCounts&) const = default;

 private:
  static std::size_t index(Eigenstate a, Eigenstate b) {
    return static_cast<std::size_t>(a) * 6 + static_cast<std::size_t>(b);
  }

  std::array<double, 36> values_{};
  std::bitset<36> present_;
};

/// Born-rule probabilities Tr(rho Pa x Pb) for every setting; each basis
/// pair sums to 1.
TomographyCounts tomography_probabilities(const TwoQubitState& state);

/// Linear least-squares inversion of basis-normalized frequencies followed by
/// projection onto the physical set (negative eigenvalues clipped to zero,
/// trace renormalized). Throws ValidationError on missing settings, negative
/// counts, or a basis pair whose total is zero.
TwoQubitState reconstruct_state(const TomographyCounts& counts);

}  // namespace qlan
