#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/qstate.hpp"

namespace qlan {

namespace {

// Bloch vector (1, x, y, z) of each eigenstate; index 0 pairs with identity.
constexpr std::array<std::array<double, 4>, 6> kBloch = {{
    {1.0, 0.0, 0.0, 1.0},   // H
    {1.0, 0.0, 0.0, -1.0},  // V
    {1.0, 1.0, 0.0, 0.0},   // D
    {1.0, -1.0, 0.0, 0.0},  // A
    {1.0, 0.0, 1.0, 0.0},   // R
    {1.0, 0.0, -1.0, 0.0},  // L
}};

std::array<Matrix2c, 4> paulis() {
  const Complex i(0.0, 1.0);
  Matrix2c id = Matrix2c::Identity();
  Matrix2c x;
  x << 0, 1, 1, 0;
  Matrix2c y;
  y << 0, -i, i, 0;
  Matrix2c z;
  z << 1, 0, 0, -1;
  return {id, x, y, z};
}

// Linear map from Pauli coefficients r_ij to setting probabilities.
const Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 36, 16>>& design_solver() {
  static const auto solver = [] {
    Eigen::Matrix<double, 36, 16> m;
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) m(6 * a + b, 4 * i + j) = kBloch[a][i] * kBloch[b][j] / 4.0;
    return Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 36, 16>>(m);
  }();
  return solver;
}

}  // namespace

std::string_view to_string(Eigenstate e) {
  static constexpr std::array<std::string_view, 6> names = {"H", "V", "D", "A", "R", "L"};
  return names[static_cast<std::size_t>(e)];
}

std::optional<Eigenstate> parse_eigenstate(std::string_view label) {
  for (Eigenstate e : kEigenstates) {
    if (to_string(e) == label) return e;
  }
  return std::nullopt;
}

Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
  Matrix4c out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) out(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
  return out;
}

int basis_of(Eigenstate e) { return static_cast<int>(e) / 2; }

Matrix2c projector(Eigenstate e) {
  const auto& s = kBloch[static_cast<std::size_t>(e)];
  const auto p = paulis();
  return 0.5 * (p[0] + s[1] * p[1] + s[2] * p[2] + s[3] * p[3]);
}

void TomographyCounts::set(Eigenstate a, Eigenstate b, double count) {
  values_[index(a, b)] = count;
  present_.set(index(a, b));
}

void TomographyCounts::add(Eigenstate a, Eigenstate b, double count) {
  values_[index(a, b)] += count;
  present_.set(index(a, b));
}

bool TomographyCounts::has(Eigenstate a, Eigenstate b) const { return present_.test(index(a, b)); }

double TomographyCounts::at(Eigenstate a, Eigenstate b) const { return values_[index(a, b)]; }

double TomographyCounts::total() const {
  double sum = 0.0;
  for (double v : values_) sum += v;
  return sum;
}

double TomographyCounts::basis_total(Eigenstate a, Eigenstate b) const {
  const int ba = basis_of(a);
  const int bb = basis_of(b);
  double sum = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      sum += values_[index(static_cast<Eigenstate>(2 * ba + i), static_cast<Eigenstate>(2 * bb + j))];
  return sum;
}

TomographyCounts tomography_probabilities(const TwoQubitState& state) {
  TomographyCounts out;
  for (Eigenstate a : kEigenstates) {
    for (Eigenstate b : kEigenstates) {
      const double p = (state.matrix() * kron(projector(a), projector(b))).trace().real();
      out.set(a, b, std::max(0.0, p));
    }
  }
  return out;
}

TwoQubitState reconstruct_state(const TomographyCounts& counts) {
  if (!counts.complete()) throw ValidationError("tomography counts are missing settings");
  Eigen::Matrix<double, 36, 1> freq;
  for (Eigenstate a : kEigenstates) {
    for (Eigenstate b : kEigenstates) {
      const double n = counts.at(a, b);
      if (!(n >= 0.0)) {
        throw ValidationError(fmt::format("negative count for setting {}{}", to_string(a), to_string(b)));
      }
      const double group = counts.basis_total(a, b);
      if (!(group > 0.0)) {
        throw ValidationError(fmt::format("basis pair of setting {}{} has no counts", to_string(a), to_string(b)));
      }
      freq(6 * static_cast<int>(a) + static_cast<int>(b)) = n / group;
    }
  }

  const Eigen::Matrix<double, 16, 1> r = design_solver().solve(freq);
  const auto p = paulis();
  Matrix4c rho = Matrix4c::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rho += (r(4 * i + j) / 4.0) * kron(p[i], p[j]);
  rho = 0.5 * (rho + rho.adjoint()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix4c> eig(rho);
  Eigen::Vector4d vals = eig.eigenvalues().cwiseMax(0.0);
  const double tr = vals.sum();
  if (!(tr > 0.0)) throw ValidationError("reconstructed state has no positive weight");
  vals /= tr;
  Matrix4c physical = eig.eigenvectors() * vals.cast<Complex>().asDiagonal() * eig.eigenvectors().adjoint();
  physical = 0.5 * (physical + physical.adjoint()).eval();
  return TwoQubitState::from_matrix(physical);
}

}  // namespace qlan
