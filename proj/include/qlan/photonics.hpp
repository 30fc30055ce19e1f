#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qlan/qstate.hpp"
#include "qlan/spectrum.hpp"
#include "qlan/timing.hpp"

namespace qlan {

enum class DetectorKind { SNSPD, APD };

std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view text);

/// SNSPD and APD differ only in their parameter values.
struct DetectorModel {
  DetectorKind kind = DetectorKind::SNSPD;
  double efficiency = 0.80;
  double dark_count_rate = 100.0;  // 1/s
  double jitter_sigma_ns = 0.05;
  double dead_time_ns = 50.0;

  static DetectorModel snspd();
  static DetectorModel apd();

  void validate() const;
  bool operator==(const DetectorModel&) const = default;
};

/// Deployed fiber between the WSS and a node's analyzer.
struct FiberLink {
  double length_m = 0.0;
  double attenuation_db_per_km = 0.2;
  double extra_loss_db = 0.0;  // connectors, analyzer, coupling

  /// Speed of light in silica, ns per meter of fiber.
  static constexpr double kDelayNsPerM = 4.9;

  void validate() const;
  double loss_db() const { return length_m * 1e-3 * attenuation_db_per_km + extra_loss_db; }
  double transmission() const;
  double delay_ns() const { return length_m * kDelayNsPerM; }

  bool operator==(const FiberLink&) const = default;
};

struct ChannelSource {
  double pair_rate = 0.0;  // pairs/s emitted into the channel pair
  TwoQubitState pair_state = bell_state(Bell::PsiPlus);
  double rotation_rad = 0.0;  // frequency-dependent birefringence on the idler

  bool operator==(const ChannelSource&) const = default;
};

/// SPDC source: one entry per channel pair, index 0 is channel 1.
struct SourceModel {
  std::vector<ChannelSource> channels;
  /// Each link's polarization controller cancels the rate-weighted mean
  /// rotation of the channels routed over it; only the spread remains.
  bool compensate_link_rotation = true;

  const ChannelSource& channel(int n) const;
  int pair_count() const { return static_cast<int>(channels.size()); }
  void validate() const;

  bool operator==(const SourceModel&) const = default;
};

/// Emission times (ns, from 0) of a homogeneous Poisson process. Reproducible
/// for a fixed (channel, seed). A zero duration yields an empty sequence.
std::vector<double> simulate_pair_stream(int channel, double rate, double duration_s, std::uint64_t seed);

/// Surviving arrival times before binning: thinning by transmission and
/// efficiency, fiber delay, Gaussian detector jitter, per-epoch clock offset,
/// Poissonian dark counts, then non-paralyzable dead time. Events outside
/// [0, duration) are not recorded. Output is sorted.
std::vector<double> detect_times(std::span<const double> emissions_ns, const FiberLink& fiber,
                                 const DetectorModel& det, const ClockModel& clock, double duration_s,
                                 std::uint64_t seed, double extra_attenuation_db = 0.0);

/// detect_times() binned by the TDC onto epoch 0.
EventStream detect(std::span<const double> emissions_ns, const FiberLink& fiber, const DetectorModel& det,
                   const ClockModel& clock, double duration_s, std::uint64_t seed,
                   double extra_attenuation_db = 0.0);

/// S_a * S_b * window.
double accidental_rate(double singles_a, double singles_b, double window_s);

/// (C_t rho + C_a I/4) / (C_t + C_a).
TwoQubitState effective_state(const TwoQubitState& pair_state, double true_rate, double accidental_rate);

struct WeightedState {
  double weight = 0.0;  // true coincidence rate carried by this channel
  TwoQubitState state;
};

/// Mixes the channel states by weight, then applies accidental mixing with
/// C_t = sum of weights.
TwoQubitState effective_state(std::span<const WeightedState> channels, double accidental_rate);

/// Channel states as seen on a link, after the link's rotation compensation,
/// weighted by pair rate.
std::vector<WeightedState> link_channel_states(const SourceModel& source, const std::set<int>& channels);

// ---------------------------------------------------------------------------
// Link-level capture used by the end-to-end harness

/// Everything about one end node that shapes its detection record.
struct NodeOptics {
  NodeId name;
  std::uint16_t id = 0;
  FiberLink fiber;
  DetectorModel detector;
  ClockModel clock;
  double wss_loss_db = 5.0;

  /// Channel transmission through WSS and fiber times detector efficiency.
  double efficiency() const;
  /// Source-to-timestamp delay: fiber propagation plus mean clock offset.
  double mean_delay_ns() const { return fiber.delay_ns() + clock.mean_offset_ns; }

  bool operator==(const NodeOptics&) const = default;
};

/// Both analyzers step together round-robin through `settings`, `cycles`
/// times; each visit lasts slot_s(). `dwell_s` is the total time per setting.
struct TomographySchedule {
  std::vector<std::pair<Eigenstate, Eigenstate>> settings;
  double dwell_s = 60.0 / 36.0;
  int cycles = 1;

  /// All 36 settings, one pass per second of `total_s` (at least one pass),
  /// so every setting samples every PPS epoch's clock draw.
  static TomographySchedule full(double total_s);
  double duration_s() const { return dwell_s * static_cast<double>(settings.size()); }
  double slot_s() const { return dwell_s / static_cast<double>(cycles); }
  std::size_t slot_count() const { return settings.size() * static_cast<std::size_t>(cycles); }
  const std::pair<Eigenstate, Eigenstate>& setting_at(std::size_t slot) const {
    return settings[slot % settings.size()];
  }
  /// Time over which one complete basis pair collects the same pairs that
  /// the schedule spreads over its four single-outcome slots: a quarter of
  /// the duration. Coincidence rates are normalized by this.
  double rate_normalization_s() const { return duration_s() / 4.0; }
  void validate() const;
};

struct LinkCapture {
  EventStream signal;  // node receiving the signal photons (Link::low())
  EventStream idler;
};

struct LinkCaptureRequest {
  const SourceModel* source = nullptr;
  std::set<int> channels;
  NodeOptics signal_node;
  NodeOptics idler_node;
  TomographySchedule schedule;
  std::int64_t scheduled_epoch = 0;
  /// Epochs at which each agent actually started. The photonic realization
  /// is laid out relative to the measurement start and keyed only by seed,
  /// so a late start changes epoch labels, never the recorded photons.
  std::int64_t signal_epoch = 0;
  std::int64_t idler_epoch = 0;
  std::uint64_t seed = 0;
};

/// Polarization-resolved capture for one logical link. Pair detections, lone
/// detections and dark counts are drawn as independent Poisson processes
/// (exact thinning of the emission process), so cost scales with detected,
/// not emitted, photons.
LinkCapture simulate_link_capture(const LinkCaptureRequest& request);

}  // namespace qlan
