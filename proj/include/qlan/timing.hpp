#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace qlan {

/// TDC resolution: the 200 MHz FPGA clock gives 5 ns bins.
inline constexpr double kBinNs = 5.0;
inline constexpr std::int64_t kBinsPerSecond = 200'000'000;

/// Node clock relative to the network reference, re-drawn at every PPS epoch.
struct ClockModel {
  double mean_offset_ns = 0.0;
  double jitter_sigma_ns = 0.0;
  double drift_ns_per_s = 0.0;

  void validate() const;
  bool operator==(const ClockModel&) const = default;
};

/// mean_offset + drift * epoch + N(0, jitter_sigma). The draw depends only on
/// (seed, epoch), so repeated calls agree.
double sample_clock(const ClockModel& clock, std::int64_t epoch_s, std::uint64_t seed);

struct TimeTag {
  std::int64_t bin = 0;
  std::uint8_t basis = 0;     // local analyzer setting when the event was recorded
  std::uint8_t detector = 0;  // detector channel at the node

  bool operator==(const TimeTag&) const = default;
};

/// Time-tagged detection record of one node for one capture. Bin indices
/// count 5 ns ticks from the PPS edge that opened the capture.
struct EventStream {
  std::uint16_t node = 0;
  std::int64_t epoch_start = 0;  // seconds, PPS aligned
  std::vector<TimeTag> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  std::vector<std::int64_t> bins() const;
  /// Events with the given analyzer setting, order preserved.
  EventStream filter_basis(std::uint8_t basis) const;
  /// Throws ValidationError unless bin indices are non-decreasing and >= 0.
  void validate() const;

  bool operator==(const EventStream&) const = default;
};

/// bin = floor((t - epoch_start) / 5 ns) for sorted absolute times in ns.
EventStream tdc_bin(std::span<const double> times_ns, std::int64_t epoch_start_s,
                    std::uint16_t node = 0, std::uint8_t basis = 0);

/// Counts of bin_b - bin_a over lags [-max_lag, max_lag].
struct LagHistogram {
  std::int64_t max_lag = 0;
  std::vector<std::uint64_t> counts;  // index lag + max_lag

  std::uint64_t at(std::int64_t lag) const;
  std::uint64_t total() const;
};

LagHistogram lag_histogram(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                           std::int64_t max_lag);

struct OffsetEstimate {
  std::int64_t shift = 0;  // b is a delayed by `shift` bins
  std::uint64_t peak = 0;
  double background_mean = 0.0;
  double background_std = 0.0;
  bool significant = false;  // peak > mean + 5 std of the off-peak lags
};

/// Lags within this many bins of the peak are left out of the background.
inline constexpr std::int64_t kPeakExclusionBins = 10;

/// Coincidence-peak search over integer shifts in [-search_range, search_range].
/// Ties go to the smallest |shift|. Throws NoPeakError when no shift yields
/// any coincidence.
OffsetEstimate estimate_offset(const EventStream& a, const EventStream& b, std::int64_t search_range);

/// epoch_a_s - epoch_b_s in whole seconds. Throws ClockFaultError when the
/// difference is not an integer number of seconds.
std::int64_t integer_epoch_difference(double epoch_a_s, double epoch_b_s);

/// Re-indexes the later stream onto the earlier epoch (2e8 bins per second).
std::pair<EventStream, EventStream> align_epochs(EventStream a, EventStream b);

// ---------------------------------------------------------------------------
// Binary timetag segments
//
// Little-endian. 16-byte header: magic "QTT1", node id u16, basis setting u8,
// reserved u8 (zero), epoch_start u64 seconds. Then one u32 bin index per
// event. Indices wrap at 2^32 (about 21.47 s); a decrease of more than 2^31
// between consecutive indices is read as one wrap.

inline constexpr std::size_t kTimetagHeaderBytes = 16;

struct TimetagHeader {
  std::uint16_t node = 0;
  std::uint8_t basis = 0;
  std::uint64_t epoch_start = 0;
};

/// One segment holds events of a single analyzer setting.
std::vector<std::byte> encode_timetags(const EventStream& stream);
EventStream decode_timetags(std::span<const std::byte> data);
TimetagHeader decode_timetag_header(std::span<const std::byte> data);

/// Splits a stream into maximal runs of equal setting, one segment each.
std::vector<std::vector<std::byte>> encode_segments(const EventStream& stream);
EventStream decode_segments(std::span<const std::vector<std::byte>> segments);

}  // namespace qlan
