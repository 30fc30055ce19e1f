#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "qlan/allocator.hpp"
#include "qlan/error.hpp"

namespace qlan {

void CalibrationTarget::validate(const NetworkModel& model) const {
  const auto names = model.node_names();
  for (const auto& n : {link.low(), link.high()}) {
    if (std::find(names.begin(), names.end(), n) == names.end()) {
      throw ValidationError(fmt::format("target {}: unknown node {}", name, n));
    }
  }
  if (channels.empty()) throw ValidationError(fmt::format("target {}: no channels", name));
  for (int c : channels) {
    if (c < 1 || c > model.plan.pair_count) throw ValidationError(fmt::format("target {}: no channel {}", name, c));
  }
  if (!(fidelity > 0.25 && fidelity <= 1.0)) {
    throw ValidationError(fmt::format("target {}: fidelity {} outside (0.25, 1]", name, fidelity));
  }
  if (!(coincidence_rate > 0.0)) throw ValidationError(fmt::format("target {}: rate must be positive", name));
}

void CalibrationOptions::validate() const {
  if (!(fidelity_tolerance > 0.0 && rate_tolerance > 0.0 && smoothness > 0.0)) {
    throw ValidationError("calibration tolerances must be positive");
  }
}

namespace {

// Parameters: ln(pair rate) per channel, then extra loss (dB) per fitted node.
class Residuals {
 public:
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  Residuals(const NetworkModel& start, std::span<const CalibrationTarget> targets, const CalibrationOptions& o,
            std::vector<std::size_t> nodes)
      : start_(start), targets_(targets), opt_(o), nodes_(std::move(nodes)) {}

  int inputs() const { return channels() + static_cast<int>(nodes_.size()); }
  int values() const { return 2 * static_cast<int>(targets_.size()) + std::max(0, channels() - 2); }

  NetworkModel model(const Eigen::VectorXd& x) const {
    NetworkModel m = start_;
    for (int n = 0; n < channels(); ++n) m.source.channels[static_cast<std::size_t>(n)].pair_rate = std::exp(x(n));
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      m.nodes[nodes_[k]].fiber.extra_loss_db = x(channels() + static_cast<int>(k));
    }
    return m;
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const NetworkModel m = model(x);
    const int t = static_cast<int>(targets_.size());
    for (int i = 0; i < t; ++i) {
      const auto& g = targets_[static_cast<std::size_t>(i)];
      const auto p = predict_link(g.link, g.channels, m);
      r(i) = (p.metrics.fidelity - g.fidelity) / opt_.fidelity_tolerance;
      r(t + i) = std::log(p.metrics.coincidence_rate / g.coincidence_rate) / opt_.rate_tolerance;
    }
    for (int n = 1; n + 1 < channels(); ++n) r(2 * t + n - 1) = (x(n - 1) - 2.0 * x(n) + x(n + 1)) / opt_.smoothness;
    return 0;
  }

 private:
  int channels() const { return start_.source.pair_count(); }

  const NetworkModel& start_;
  std::span<const CalibrationTarget> targets_;
  CalibrationOptions opt_;
  std::vector<std::size_t> nodes_;
};

}  // namespace

CalibrationResult calibrate(const NetworkModel& start, std::span<const CalibrationTarget> targets,
                            const CalibrationOptions& options) {
  start.validate();
  options.validate();
  if (targets.empty()) throw ValidationError("calibration needs at least one target");
  std::vector<std::size_t> nodes;
  for (std::size_t k = 0; k < start.nodes.size(); ++k) {
    const bool used = std::any_of(targets.begin(), targets.end(), [&](const CalibrationTarget& g) {
      return g.link.low() == start.nodes[k].name || g.link.high() == start.nodes[k].name;
    });
    if (used) nodes.push_back(k);
  }
  for (const auto& g : targets) g.validate(start);

  Residuals f(start, targets, options, nodes);
  if (f.values() < f.inputs()) {
    throw ValidationError(fmt::format("{} targets cannot determine {} channel rates and {} node losses",
                                      targets.size(), start.source.pair_count(), nodes.size()));
  }
  Eigen::VectorXd x(f.inputs());
  for (int n = 0; n < start.source.pair_count(); ++n) {
    const double rate = start.source.channels[static_cast<std::size_t>(n)].pair_rate;
    if (!(rate > 0.0)) throw ValidationError(fmt::format("channel {} needs a positive starting rate", n + 1));
    x(n) = std::log(rate);
  }
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    x(start.source.pair_count() + static_cast<int>(k)) = start.nodes[nodes[k]].fiber.extra_loss_db;
  }

  Eigen::NumericalDiff<Residuals, Eigen::Central> diff(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals, Eigen::Central>> lm(diff);
  lm.parameters.maxfev = 4000;
  const auto status = lm.minimize(x);

  CalibrationResult out;
  out.model = f.model(x);
  for (const auto& n : out.model.nodes) {
    if (n.fiber.extra_loss_db < 0.0) {
      throw RuntimeFailure(fmt::format("calibration needs a gain at node {} ({:.2f} dB); the targets are "
                                       "inconsistent with the detectors",
                                       n.name, n.fiber.extra_loss_db));
    }
  }
  out.model.validate();
  for (const auto& g : targets) out.predictions.push_back(predict_link(g.link, g.channels, out.model));
  Eigen::VectorXd r(f.values());
  f(x, r);
  out.cost = 0.5 * r.squaredNorm();
  out.evaluations = static_cast<int>(lm.nfev);
  out.converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                  status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall;
  return out;
}

}  // namespace qlan
