#include "qlan/timing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/random.hpp"

namespace qlan {

void ClockModel::validate() const {
  if (!(jitter_sigma_ns >= 0.0)) throw ValidationError("clock jitter must be non-negative");
  if (!std::isfinite(mean_offset_ns) || !std::isfinite(drift_ns_per_s)) {
    throw ValidationError("clock offset and drift must be finite");
  }
}

double sample_clock(const ClockModel& clock, std::int64_t epoch_s, std::uint64_t seed) {
  double offset = clock.mean_offset_ns + clock.drift_ns_per_s * static_cast<double>(epoch_s);
  if (clock.jitter_sigma_ns > 0.0) {
    Rng rng(derive_seed(seed, {0x50505300ULL, static_cast<std::uint64_t>(epoch_s)}));
    std::normal_distribution<double> n(0.0, clock.jitter_sigma_ns);
    offset += n(rng);
  }
  return offset;
}

std::vector<std::int64_t> EventStream::bins() const {
  std::vector<std::int64_t> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.bin);
  return out;
}

EventStream EventStream::filter_basis(std::uint8_t basis) const {
  EventStream out{node, epoch_start, {}};
  for (const auto& e : events) {
    if (e.basis == basis) out.events.push_back(e);
  }
  return out;
}

void EventStream::validate() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].bin < 0) throw ValidationError("event stream has a negative bin index");
    if (i > 0 && events[i].bin < events[i - 1].bin) {
      throw ValidationError(fmt::format("event stream bins decrease at index {}", i));
    }
  }
}

EventStream tdc_bin(std::span<const double> times_ns, std::int64_t epoch_start_s, std::uint16_t node,
                    std::uint8_t basis) {
  EventStream out{node, epoch_start_s, {}};
  out.events.reserve(times_ns.size());
  const double origin = static_cast<double>(epoch_start_s) * 1e9;
  for (std::size_t i = 0; i < times_ns.size(); ++i) {
    const double rel = times_ns[i] - origin;
    if (rel < 0.0) {
      throw ValidationError(fmt::format("event at {} ns precedes epoch start {} s", times_ns[i], epoch_start_s));
    }
    if (i > 0 && times_ns[i] < times_ns[i - 1]) throw ValidationError("tdc_bin expects sorted event times");
    out.events.push_back({static_cast<std::int64_t>(std::floor(rel / kBinNs)), basis, 0});
  }
  return out;
}

std::uint64_t LagHistogram::at(std::int64_t lag) const {
  if (lag < -max_lag || lag > max_lag) return 0;
  return counts[static_cast<std::size_t>(lag + max_lag)];
}

std::uint64_t LagHistogram::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

LagHistogram lag_histogram(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                           std::int64_t max_lag) {
  if (max_lag < 0) throw ValidationError("max_lag must be non-negative");
  LagHistogram h{max_lag, std::vector<std::uint64_t>(static_cast<std::size_t>(2 * max_lag + 1), 0)};
  std::size_t lo = 0;
  for (std::int64_t ta : a) {
    while (lo < b.size() && b[lo] < ta - max_lag) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j] <= ta + max_lag; ++j) {
      ++h.counts[static_cast<std::size_t>(b[j] - ta + max_lag)];
    }
  }
  return h;
}

OffsetEstimate estimate_offset(const EventStream& a, const EventStream& b, std::int64_t search_range) {
  if (a.empty() || b.empty()) throw ValidationError("estimate_offset needs two non-empty streams");
  if (search_range < 0) throw ValidationError("search range must be non-negative");
  const auto ba = a.bins();
  const auto bb = b.bins();
  const LagHistogram h = lag_histogram(ba, bb, search_range);

  OffsetEstimate est;
  bool found = false;
  for (std::int64_t lag = -search_range; lag <= search_range; ++lag) {
    const auto c = h.at(lag);
    if (c == 0) continue;
    const bool better = !found || c > est.peak ||
                        (c == est.peak && std::llabs(lag) < std::llabs(est.shift));
    if (better) {
      est.peak = c;
      est.shift = lag;
      found = true;
    }
  }
  if (!found) {
    throw NoPeakError(fmt::format("no coincidences between node {} and node {} within +-{} bins", a.node,
                                  b.node, search_range));
  }

  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::int64_t lag = -search_range; lag <= search_range; ++lag) {
    if (std::llabs(lag - est.shift) <= kPeakExclusionBins) continue;
    const double c = static_cast<double>(h.at(lag));
    sum += c;
    sum2 += c * c;
    ++n;
  }
  if (n > 0) {
    est.background_mean = sum / static_cast<double>(n);
    est.background_std = std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - est.background_mean * est.background_mean));
  }
  est.significant = static_cast<double>(est.peak) > est.background_mean + 5.0 * est.background_std;
  return est;
}

std::int64_t integer_epoch_difference(double epoch_a_s, double epoch_b_s) {
  const double diff = epoch_a_s - epoch_b_s;
  const double whole = std::round(diff);
  if (std::abs(diff - whole) > 1e-9) {
    throw ClockFaultError(fmt::format("epochs {} s and {} s differ by a non-integer {} s", epoch_a_s, epoch_b_s, diff));
  }
  return static_cast<std::int64_t>(whole);
}

std::pair<EventStream, EventStream> align_epochs(EventStream a, EventStream b) {
  EventStream& later = a.epoch_start > b.epoch_start ? a : b;
  const std::int64_t earlier = std::min(a.epoch_start, b.epoch_start);
  const std::int64_t shift = (later.epoch_start - earlier) * kBinsPerSecond;
  if (shift != 0) {
    for (auto& e : later.events) e.bin += shift;
    later.epoch_start = earlier;
  }
  return {std::move(a), std::move(b)};
}

}  // namespace qlan
