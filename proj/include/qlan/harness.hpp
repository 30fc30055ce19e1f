#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qlan/allocator.hpp"
#include "qlan/coincidence.hpp"
#include "qlan/controlplane.hpp"

namespace qlan {

struct MeasurementConfig {
  std::int64_t epoch = 10;  // first scheduled PPS epoch, s
  double duration_s = kDefaultIntegrationS;
  double window_ns = kDefaultWindowNs;
  std::int64_t search_range_bins = 4000;
  int bootstrap_resamples = kBootstrapResamples;

  void validate() const;
  bool operator==(const MeasurementConfig&) const = default;
};

struct TransportConfig {
  double capacity_bps = 1e9;
  ChannelParams channel;                       // every controller session
  std::map<NodeId, double> command_delay_s;    // extra controller -> node delay
  std::set<NodeId> unreachable;                // agents that never answer
  double timeout_s = 30.0;
  double arm_lead_s = 1.0;

  void validate() const;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string label;  // printed in the Alloc column
  std::uint64_t seed = 1;
  NetworkModel model;
  std::optional<Allocation> allocation;
  std::optional<Objective> objective;
  MeasurementConfig measurement;
  TransportConfig transport;
  std::vector<CalibrationTarget> targets;  // only read by calibration runs
  CalibrationOptions calibration;

  void validate() const;
};

/// INI-style text. Every physical quantity carries its unit ("60 s",
/// "0.2 dB/km", "6.2e6 /s"); a missing or foreign unit is a ValidationError
/// naming the section and key.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);

struct LinkRow {
  Link link;
  std::set<int> channels;
  LinkMetrics metrics;     // raw coincidences, as in the published table
  LinkMetrics subtracted;  // accidental floor removed before reconstruction
  TwoQubitState state = maximally_mixed_state();
  std::int64_t coincidences = 0;
  double accidental_estimate = 0.0;
  std::int64_t singles_signal = 0;
  std::int64_t singles_idler = 0;
  double predicted_fidelity = 0.0;
  double predicted_rate = 0.0;
  // Timing diagnostics.
  std::int64_t scheduled_epoch = 0;
  std::int64_t signal_epoch = 0;
  std::int64_t idler_epoch = 0;
  std::int64_t epoch_correction_bins = 0;
  std::int64_t offset_bins = 0;
  double residual_ns = 0.0;  // recovered offset minus the modeled mean delay
  bool peak_significant = false;
  double signal_demand_bps = 0.0;
  double idler_demand_bps = 0.0;

  bool operator==(const LinkRow&) const = default;
};

struct RunReport {
  std::string scenario;
  std::string label;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  double window_ns = 0.0;
  std::vector<LinkRow> rows;
  double capacity_bps = 0.0;
  double peak_stream_bps = 0.0;
  double peak_total_bps = 0.0;
  int deferred_transfers = 0;

  const LinkRow& row(const Link& link) const;
  double mean_fidelity() const;
  void validate() const;
  bool operator==(const RunReport&) const = default;
};

/// Allocation, apply, arm, simulate, fetch, align, count, reconstruct and
/// report. Deterministic for a fixed config. Errors carry the failing stage.
RunReport run_scenario(const ScenarioConfig& config);

/// Same, and hands back the per-link aligned captures for inspection.
struct LinkCaptures {
  Link link;
  EventStream signal;
  EventStream idler;
};
RunReport run_scenario(const ScenarioConfig& config, std::vector<LinkCaptures>* captures);

/// Allocation the config asks for: the explicit one, or the optimizer's.
Allocation resolve_allocation(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Report output

std::string report_text(const RunReport& report);
Json report_to_json(const RunReport& report);
RunReport report_from_json(const Json& j);

enum class ReportFormat { Text, Json };
void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path);

}  // namespace qlan
