#include "qlan/coincidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/random.hpp"

namespace qlan {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(floor(u + x) in [lo, hi]) for x ~ N(m, s), averaged over u in [0, 1).
double lag_range_probability(double m, double s, std::int64_t lo, std::int64_t hi) {
  constexpr int kPhaseSteps = 400;
  double sum = 0.0;
  for (int i = 0; i < kPhaseSteps; ++i) {
    const double u = (i + 0.5) / kPhaseSteps;
    const double top = static_cast<double>(hi + 1) - u - m;
    const double bottom = static_cast<double>(lo) - u - m;
    if (s == 0.0) {
      sum += (bottom <= 0.0 && 0.0 < top) ? 1.0 : 0.0;
    } else {
      sum += normal_cdf(top / s) - normal_cdf(bottom / s);
    }
  }
  return sum / kPhaseSteps;
}

Eigenstate setting_of(std::uint8_t basis) {
  if (basis > 5) throw ValidationError(fmt::format("event carries unknown analyzer setting {}", basis));
  return static_cast<Eigenstate>(basis);
}

void zero_fill(TomographyCounts& counts) {
  for (Eigenstate a : kEigenstates)
    for (Eigenstate b : kEigenstates) counts.set(a, b, 0.0);
}

void check_aligned(const EventStream& a, const EventStream& b) {
  if (a.epoch_start != b.epoch_start) {
    throw ValidationError(fmt::format("streams are not epoch-aligned (epochs {} and {})", a.epoch_start,
                                      b.epoch_start));
  }
}

struct Draw {
  double fidelity, log_negativity, rate, ebit_rate;
};

}  // namespace

void CoincidenceResult::validate() const {
  if (!(window_ns > 0.0)) throw ValidationError("coincidence window must be positive");
  if (coincidences < 0 || singles_a < 0 || singles_b < 0) throw ValidationError("counts must be non-negative");
  if (coincidences > std::min(singles_a, singles_b)) {
    throw ValidationError("coincidences exceed the smaller singles count");
  }
}

double CoincidenceResult::rate() const {
  if (!(integration_s > 0.0)) throw ValidationError("integration time must be positive");
  return static_cast<double>(coincidences) / integration_s;
}

CoincidenceResult& CoincidenceResult::operator+=(const CoincidenceResult& other) {
  if (window_ns != other.window_ns) throw ValidationError("cannot merge results with different windows");
  coincidences += other.coincidences;
  singles_a += other.singles_a;
  singles_b += other.singles_b;
  integration_s += other.integration_s;
  accidental_estimate += other.accidental_estimate;
  return *this;
}

std::int64_t window_half_width_bins(double window_ns) {
  const double bins = window_ns / kBinNs;
  if (!(window_ns > 0.0) || std::abs(bins - std::round(bins)) > 1e-9) {
    throw ValidationError(fmt::format("coincidence window {} ns is not a positive multiple of 5 ns", window_ns));
  }
  return std::llround(bins);
}

double window_acceptance_s(double window_ns) {
  return static_cast<double>(2 * window_half_width_bins(window_ns) + 1) * kBinNs * 1e-9;
}

std::vector<std::pair<std::size_t, std::size_t>> match_events(std::span<const std::int64_t> a,
                                                              std::span<const std::int64_t> b,
                                                              std::int64_t half_width_bins,
                                                              std::int64_t offset) {
  if (half_width_bins < 0) throw ValidationError("window half-width must be non-negative");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::vector<char> used(b.size(), 0);
  std::size_t lo = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t ta = a[i];
    while (lo < b.size() && (used[lo] || b[lo] + offset < ta - half_width_bins)) ++lo;
    std::size_t best = kNone;
    std::int64_t best_d = 0;
    for (std::size_t j = lo; j < b.size(); ++j) {
      const std::int64_t tb = b[j] + offset;
      if (tb > ta + half_width_bins) break;
      if (used[j]) continue;
      const std::int64_t d = tb >= ta ? tb - ta : ta - tb;
      if (best == kNone || d < best_d) {
        best = j;
        best_d = d;
      }
      // Distances only grow from here on.
      if (tb >= ta) break;
    }
    if (best != kNone) {
      used[best] = 1;
      out.emplace_back(i, best);
    }
  }
  return out;
}

CoincidenceResult count_coincidences(const EventStream& a, const EventStream& b, double window_ns,
                                     std::int64_t offset, double integration_s) {
  check_aligned(a, b);
  const std::int64_t w = window_half_width_bins(window_ns);
  if (!(integration_s > 0.0)) throw ValidationError("integration time must be positive");
  const auto ba = a.bins();
  const auto bb = b.bins();
  CoincidenceResult r;
  r.coincidences = static_cast<std::int64_t>(match_events(ba, bb, w, offset).size());
  r.singles_a = static_cast<std::int64_t>(a.size());
  r.singles_b = static_cast<std::int64_t>(b.size());
  r.window_ns = window_ns;
  r.integration_s = integration_s;
  r.accidental_estimate = static_cast<double>(r.singles_a) * static_cast<double>(r.singles_b) *
                          window_acceptance_s(window_ns) / integration_s;
  return r;
}

TomographyCounts tally_settings(const EventStream& a, const EventStream& b, double window_ns,
                                std::int64_t offset) {
  check_aligned(a, b);
  const auto ba = a.bins();
  const auto bb = b.bins();
  TomographyCounts counts;
  zero_fill(counts);
  for (const auto& [i, j] : match_events(ba, bb, window_half_width_bins(window_ns), offset)) {
    counts.add(setting_of(a.events[i].basis), setting_of(b.events[j].basis), 1.0);
  }
  return counts;
}

std::map<std::int64_t, std::uint64_t> coincidence_histogram(const EventStream& a, const EventStream& b,
                                                            std::int64_t max_lag) {
  check_aligned(a, b);
  const auto ba = a.bins();
  const auto bb = b.bins();
  const LagHistogram h = lag_histogram(ba, bb, max_lag);
  std::map<std::int64_t, std::uint64_t> out;
  for (std::int64_t lag = -max_lag; lag <= max_lag; ++lag) out[lag] = h.at(lag);
  return out;
}

double window_capture_probability(double mean_ns, double sigma_ns, double window_ns) {
  if (!(sigma_ns >= 0.0)) throw ValidationError("relative jitter must be non-negative");
  const std::int64_t w = window_half_width_bins(window_ns);
  const double m = mean_ns / kBinNs;
  const double s = sigma_ns / kBinNs;
  const auto base = static_cast<std::int64_t>(std::floor(m));
  std::int64_t peak = base;
  double peak_p = -1.0;
  for (std::int64_t k = base - 1; k <= base + 1; ++k) {
    const double p = lag_range_probability(m, s, k, k);
    if (p > peak_p + 1e-12 || (std::abs(p - peak_p) <= 1e-12 && std::llabs(k) < std::llabs(peak))) {
      peak = k;
      peak_p = p;
    }
  }
  return lag_range_probability(m, s, peak - w, peak + w);
}

TomographyCounts simulate_tomography_counts(const TwoQubitState& state, std::int64_t pairs_per_basis,
                                            std::uint64_t seed) {
  if (pairs_per_basis <= 0) throw ValidationError("pairs per basis must be positive");
  const TomographyCounts probs = tomography_probabilities(state);
  TomographyCounts out;
  for (int ba = 0; ba < 3; ++ba) {
    for (int bb = 0; bb < 3; ++bb) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(3 * ba + bb)}));
      const auto ea0 = static_cast<Eigenstate>(2 * ba);
      const auto eb0 = static_cast<Eigenstate>(2 * bb);
      double mass = probs.basis_total(ea0, eb0);
      std::int64_t left = pairs_per_basis;
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const auto ea = static_cast<Eigenstate>(2 * ba + i);
          const auto eb = static_cast<Eigenstate>(2 * bb + j);
          const double p = probs.at(ea, eb);
          std::int64_t n = 0;
          if (i == 1 && j == 1) {
            n = left;
          } else if (left > 0 && mass > 0.0 && p > 0.0) {
            n = std::binomial_distribution<std::int64_t>(left, std::min(1.0, p / mass))(rng);
          }
          out.set(ea, eb, static_cast<double>(n));
          left -= n;
          mass -= p;
        }
      }
    }
  }
  return out;
}

LinkMetrics link_metrics(const TwoQubitState& state, const CoincidenceResult& result) {
  result.validate();
  if (!(result.integration_s > 0.0)) throw ValidationError("zero integration time");
  LinkMetrics m;
  m.fidelity = fidelity(state, bell_state(Bell::PsiPlus));
  m.log_negativity = log_negativity(state);
  m.coincidence_rate = result.rate();
  m.ebit_rate = ebit_rate(m.log_negativity, m.coincidence_rate);
  return m;
}

TomographyCounts subtract_accidentals(const TomographyCounts& counts, double accidentals) {
  if (accidentals < 0.0) throw ValidationError("accidental estimate must be non-negative");
  const double per_setting = accidentals / 36.0;
  TomographyCounts out;
  for (Eigenstate a : kEigenstates)
    for (Eigenstate b : kEigenstates) out.set(a, b, std::max(0.0, counts.at(a, b) - per_setting));
  return out;
}

LinkMetrics link_metrics(const TomographyCounts& counts, const CoincidenceResult& result,
                         const BootstrapOptions& options) {
  result.validate();
  if (!(result.integration_s > 0.0)) throw ValidationError("zero integration time");
  if (options.resamples < 2) throw ValidationError("bootstrap needs at least two resamples");

  const TomographyCounts base =
      options.subtract_accidentals ? subtract_accidentals(counts, result.accidental_estimate) : counts;
  const double coincidences = options.subtract_accidentals
                                  ? std::max(0.0, result.subtracted())
                                  : static_cast<double>(result.coincidences);
  const TwoQubitState state = reconstruct_state(base);
  LinkMetrics m;
  m.fidelity = fidelity(state, bell_state(Bell::PsiPlus));
  m.log_negativity = log_negativity(state);
  m.coincidence_rate = coincidences / result.integration_s;
  m.ebit_rate = ebit_rate(m.log_negativity, m.coincidence_rate);

  std::vector<Draw> draws;
  draws.reserve(static_cast<std::size_t>(options.resamples));
  for (int r = 0; r < options.resamples; ++r) {
    Rng rng(derive_seed(options.seed, {0xb007ULL, static_cast<std::uint64_t>(r)}));
    TomographyCounts resampled;
    for (int ba = 0; ba < 3; ++ba) {
      for (int bb = 0; bb < 3; ++bb) {
        const auto ea0 = static_cast<Eigenstate>(2 * ba);
        const auto eb0 = static_cast<Eigenstate>(2 * bb);
        const double total = base.basis_total(ea0, eb0);
        const std::int64_t n = std::llround(total);
        double mass = total;
        std::int64_t left = n;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const auto ea = static_cast<Eigenstate>(2 * ba + i);
            const auto eb = static_cast<Eigenstate>(2 * bb + j);
            const double v = base.at(ea, eb);
            if (n < 1) {
              resampled.set(ea, eb, v);
              continue;
            }
            std::int64_t k = 0;
            if (i == 1 && j == 1) {
              k = left;
            } else if (left > 0 && mass > 0.0 && v > 0.0) {
              k = std::binomial_distribution<std::int64_t>(left, std::min(1.0, v / mass))(rng);
            }
            resampled.set(ea, eb, static_cast<double>(k));
            left -= k;
            mass -= v;
          }
        }
      }
    }
    const TwoQubitState s = reconstruct_state(resampled);
    const double c =
        coincidences > 0.0 ? static_cast<double>(std::poisson_distribution<std::int64_t>(coincidences)(rng)) : 0.0;
    Draw d{fidelity(s, bell_state(Bell::PsiPlus)), log_negativity(s), c / result.integration_s, 0.0};
    d.ebit_rate = ebit_rate(d.log_negativity, d.rate);
    draws.push_back(d);
  }

  auto stdev = [&](double Draw::*field) {
    double mean = 0.0;
    for (const auto& d : draws) mean += d.*field;
    mean /= static_cast<double>(draws.size());
    double ss = 0.0;
    for (const auto& d : draws) ss += (d.*field - mean) * (d.*field - mean);
    return std::sqrt(ss / static_cast<double>(draws.size() - 1));
  };
  m.fidelity_sigma = stdev(&Draw::fidelity);
  m.log_negativity_sigma = stdev(&Draw::log_negativity);
  m.coincidence_rate_sigma = stdev(&Draw::rate);
  m.ebit_rate_sigma = stdev(&Draw::ebit_rate);
  return m;
}

}  // namespace qlan
