#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "qlan/qstate.hpp"
#include "qlan/timing.hpp"

namespace qlan {

inline constexpr double kDefaultWindowNs = 10.0;
inline constexpr double kDefaultIntegrationS = 60.0;
inline constexpr int kBootstrapResamples = 200;

struct CoincidenceResult {
  std::int64_t coincidences = 0;
  std::int64_t singles_a = 0;
  std::int64_t singles_b = 0;
  double window_ns = kDefaultWindowNs;
  double integration_s = kDefaultIntegrationS;
  /// Expected uncorrelated coincidences, singles_a * singles_b * tau / T with
  /// tau the full acceptance width (2w + 1) bins.
  double accidental_estimate = 0.0;

  void validate() const;
  double rate() const;
  double subtracted() const { return static_cast<double>(coincidences) - accidental_estimate; }

  /// Exact merge of results over disjoint time segments with equal window.
  CoincidenceResult& operator+=(const CoincidenceResult& other);

  bool operator==(const CoincidenceResult&) const = default;
};

/// Window of W ns accepts |bin_a - (bin_b + offset)| <= W / 5 bins. Throws
/// ValidationError unless W is a positive multiple of 5 ns.
std::int64_t window_half_width_bins(double window_ns);

/// Effective acceptance time of the window in seconds, (2w + 1) * 5 ns.
double window_acceptance_s(double window_ns);

/// Greedy one-to-one pairing of sorted bin sequences. Each a, in order, takes
/// the nearest still unmatched b within the window; equal distance prefers the
/// earlier b. Returns index pairs (i_a, i_b).
std::vector<std::pair<std::size_t, std::size_t>> match_events(std::span<const std::int64_t> a,
                                                              std::span<const std::int64_t> b,
                                                              std::int64_t half_width_bins, std::int64_t offset);

/// Requires equal epoch_start on both streams; see align_epochs().
CoincidenceResult count_coincidences(const EventStream& a, const EventStream& b, double window_ns,
                                     std::int64_t offset, double integration_s = kDefaultIntegrationS);

/// Coincidences tallied by the analyzer settings carried on the two events.
TomographyCounts tally_settings(const EventStream& a, const EventStream& b, double window_ns,
                                std::int64_t offset);

/// Count per lag bin_b - bin_a over [-max_lag, max_lag], all pairs. The
/// histogram summed over lags [k - w, k + w] matches count_coincidences at
/// offset -k up to the one-to-one pairing.
std::map<std::int64_t, std::uint64_t> coincidence_histogram(const EventStream& a, const EventStream& b,
                                                            std::int64_t max_lag);

/// Probability that a true pair lands inside the window when the relative
/// arrival delay is N(mean_ns, sigma_ns) and the offset search has locked onto
/// the most populated bin lag. Averaged over the TDC phase.
double window_capture_probability(double mean_ns, double sigma_ns, double window_ns);

/// Each basis pair receives `pairs_per_basis` detected pairs split over its
/// four outcomes by a multinomial draw with Born-rule probabilities.
TomographyCounts simulate_tomography_counts(const TwoQubitState& state, std::int64_t pairs_per_basis,
                                            std::uint64_t seed);

/// Point metrics against |Psi+>: no uncertainties.
LinkMetrics link_metrics(const TwoQubitState& state, const CoincidenceResult& result);

struct BootstrapOptions {
  int resamples = kBootstrapResamples;
  std::uint64_t seed = 0;
  /// Reconstruct from counts with the accidental estimate removed.
  bool subtract_accidentals = false;
};

/// Reconstructs from `counts`, then estimates one-sigma uncertainties by
/// parametric bootstrap: each basis pair is redrawn multinomially from its
/// observed frequencies and the coincidence total from a Poisson law.
LinkMetrics link_metrics(const TomographyCounts& counts, const CoincidenceResult& result,
                         const BootstrapOptions& options = {});

/// Subtracts a uniform accidental floor spread over the 36 settings, clipping
/// at zero.
TomographyCounts subtract_accidentals(const TomographyCounts& counts, double accidentals);

}  // namespace qlan
