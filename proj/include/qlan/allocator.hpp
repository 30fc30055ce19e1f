#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qlan/coincidence.hpp"
#include "qlan/photonics.hpp"
#include "qlan/spectrum.hpp"

namespace qlan {

/// Everything the analytic predictor needs about the network.
struct NetworkModel {
  ChannelPlan plan;
  SourceModel source;
  std::vector<NodeOptics> nodes;
  double window_ns = kDefaultWindowNs;

  const NodeOptics& node(const NodeId& name) const;
  std::vector<NodeId> node_names() const;
  void validate() const;
};

/// Three-node desk-scale calibration: fluxes, losses and detectors chosen so
/// the predicted link fidelities land near the published table.
NetworkModel calibrated_model();

struct ScoreOptions {
  bool accidentals = true;
  bool dead_time = true;
};

struct LinkPrediction {
  Link link;
  std::set<int> channels;
  double pairing_efficiency = 0.0;  // probability a detected pair falls in the window
  double true_rate = 0.0;           // 1/s, summed over one basis pair
  double accidental_rate = 0.0;     // 1/s, same normalization
  double singles_signal = 0.0;      // 1/s per analyzer setting, after dead time
  double singles_idler = 0.0;
  TwoQubitState state = maximally_mixed_state();
  LinkMetrics metrics;
};

/// Window capture probability for the relative delay between two nodes.
double pairing_efficiency(const NodeOptics& x, const NodeOptics& y, double window_ns);

LinkPrediction predict_link(const Link& link, const std::set<int>& channels, const NetworkModel& model,
                            const ScoreOptions& options = {});

/// One prediction per allocated link, in link order. No Monte Carlo.
std::vector<LinkPrediction> score(const Allocation& alloc, const NetworkModel& model,
                                  const ScoreOptions& options = {});

enum class ObjectiveKind { BalanceRates, MaxAvgFidelity, MaxTotalEbits };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view text);

struct Objective {
  ObjectiveKind kind = ObjectiveKind::BalanceRates;
  std::vector<Link> links;  // each must receive at least one channel
  std::set<int> reserve;    // never assigned
  /// Allocations that starve a link below this predicted rate are infeasible.
  double min_rate = 10.0;
  /// Forbid leaving non-reserved channels unassigned.
  bool use_all_channels = false;

  void validate(const NetworkModel& model) const;
};

/// Cost to minimize: max/min rate ratio, minus mean fidelity, or minus total
/// ebit rate. +inf when a link is under the rate floor.
double objective_cost(const Objective& objective, std::span<const LinkPrediction> predictions);

/// Exhaustive search over every assignment of the free channels to one of the
/// objective's links or to nobody. Ties go to fewer channels used, then to the
/// lexicographically smallest assignment vector (0 = unassigned, i + 1 = the
/// i-th objective link). Throws ValidationError when no assignment is feasible.
Allocation optimize(const Objective& objective, const NetworkModel& model, const ScoreOptions& options = {});

// ---------------------------------------------------------------------------
// Calibration

/// A measured link the model should reproduce.
struct CalibrationTarget {
  std::string name;
  Link link;
  std::set<int> channels;
  double fidelity = 0.0;
  double coincidence_rate = 0.0;  // 1/s, same normalization as LinkMetrics

  void validate(const NetworkModel& model) const;
};

struct CalibrationOptions {
  double fidelity_tolerance = 0.01;  // absolute
  double rate_tolerance = 0.05;      // relative
  /// Allowed second difference of ln(flux) across neighbouring channels; the
  /// source spectrum is smooth, and interior channels seen only in sums need it.
  double smoothness = 0.3;

  void validate() const;
};

struct CalibrationResult {
  NetworkModel model;
  std::vector<LinkPrediction> predictions;  // one per target, in order
  double cost = 0.0;                        // half the sum of squared scaled residuals
  int evaluations = 0;
  bool converged = false;
};

/// Weighted least squares (Levenberg-Marquardt) over every channel's pair rate
/// and the extra loss of every node that appears in a target. Everything else
/// in `start` is kept. Throws ValidationError when the targets cannot pin the
/// parameters down and RuntimeFailure when the fit leaves the physical range.
CalibrationResult calibrate(const NetworkModel& start, std::span<const CalibrationTarget> targets,
                            const CalibrationOptions& options = {});

}  // namespace qlan
