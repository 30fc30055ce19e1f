#include <cmath>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "qlan/coincidence.hpp"
#include "qlan/error.hpp"
#include "qlan/random.hpp"

using namespace qlan;

namespace {

EventStream stream_of(const std::vector<std::int64_t>& bins) {
  EventStream s{0, 0, {}};
  for (auto b : bins) s.events.push_back({b, 0, 0});
  return s;
}

EventStream poisson_stream(double rate_per_s, double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> gap(rate_per_s * 1e-9);
  std::vector<double> t;
  for (double x = gap(rng); x < duration_s * 1e9; x += gap(rng)) t.push_back(x);
  return tdc_bin(t, 0);
}

}  // namespace

TEST_CASE("window helpers") {
  CHECK(window_half_width_bins(10.0) == 2);
  CHECK(window_half_width_bins(5.0) == 1);
  CHECK(window_acceptance_s(10.0) == doctest::Approx(25e-9));
  CHECK_THROWS_AS(window_half_width_bins(7.0), ValidationError);
  CHECK_THROWS_AS(window_half_width_bins(0.0), ValidationError);
}

TEST_CASE("identical streams match completely") {
  const auto s = stream_of({1, 5, 9, 100, 101, 4000});
  CHECK(count_coincidences(s, s, 5.0, 0).coincidences == 6);
}

TEST_CASE("offset handling") {
  std::vector<std::int64_t> a, b;
  for (std::int64_t i = 0; i < 20; ++i) {
    a.push_back(100 * i + 3);
    b.push_back(100 * i);
  }
  const auto sa = stream_of(a), sb = stream_of(b);
  CHECK(count_coincidences(sa, sb, 10.0, 0).coincidences == 0);
  CHECK(count_coincidences(sa, sb, 10.0, 3).coincidences == 20);
}

TEST_CASE("greedy pairing prefers the nearest, then the earlier partner") {
  const std::vector<std::int64_t> a = {10};
  const std::vector<std::int64_t> b = {8, 12};
  const auto m = match_events(a, b, 2, 0);
  REQUIRE(m.size() == 1);
  CHECK(m[0].second == 0);
  const std::vector<std::int64_t> b2 = {7, 11};
  CHECK(match_events(a, b2, 3, 0)[0].second == 1);
  // One partner per event.
  const std::vector<std::int64_t> a3 = {10, 10};
  const std::vector<std::int64_t> b3 = {10};
  CHECK(match_events(a3, b3, 2, 0).size() == 1);
}

TEST_CASE("two-pointer counter equals the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<int> len(0, 200);
    std::uniform_int_distribution<std::int64_t> pos(0, 600);
    std::vector<std::int64_t> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& x : a) x = pos(rng);
    for (auto& x : b) x = pos(rng);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(0, 4)(rng);
    const std::int64_t off = std::uniform_int_distribution<std::int64_t>(-5, 5)(rng);
    CHECK(static_cast<std::int64_t>(match_events(a, b, w, off).size()) ==
          oracle::brute_force_coincidences(a, b, w, off));
  }
}

TEST_CASE("coincidence result invariants and merge") {
  const auto a = poisson_stream(1e4, 1.0, 1);
  const auto b = poisson_stream(1e4, 1.0, 2);
  const auto r = count_coincidences(a, b, 10.0, 0, 1.0);
  CHECK(r.coincidences <= std::min(r.singles_a, r.singles_b));
  CHECK(r.singles_a == static_cast<std::int64_t>(a.size()));
  CoincidenceResult sum = r;
  sum += r;
  CHECK(sum.coincidences == 2 * r.coincidences);
  CHECK(sum.integration_s == doctest::Approx(2.0));
  CHECK(sum.accidental_estimate == doctest::Approx(2 * r.accidental_estimate));
  CoincidenceResult bad = r;
  bad.coincidences = r.singles_a + 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(count_coincidences(a, EventStream{0, 1, {}}, 10.0, 0), ValidationError);
}

TEST_CASE("accidental coincidences follow S_a S_b tau T") {
  const double s = 1e4, t = 60.0;
  const auto a = poisson_stream(s, t, 11);
  const auto b = poisson_stream(s, t, 12);
  const auto r = count_coincidences(a, b, 10.0, 0, t);
  // tau is the full acceptance: 5 bins of 5 ns for a 10 ns window.
  const double expected = s * s * 25e-9 * t;
  CHECK(std::abs(static_cast<double>(r.coincidences) - expected) < 5.0 * std::sqrt(expected));
  CHECK(r.accidental_estimate == doctest::Approx(static_cast<double>(r.singles_a * r.singles_b) * 25e-9 / t));
}

TEST_CASE("histogram of a shifted copy peaks at the shift") {
  const auto a = poisson_stream(5e3, 1.0, 3);
  EventStream b = a;
  for (auto& e : b.events) e.bin += 17;
  const auto h = coincidence_histogram(a, b, 50);
  CHECK(h.size() == 101);
  CHECK(h.at(17) == a.size());
  for (const auto& [lag, n] : h) {
    if (lag != 17) CHECK(n < a.size() / 10);
  }
  CHECK(estimate_offset(a, b, 50).shift == 17);
}

TEST_CASE("histogram of independent streams is flat") {
  const auto a = poisson_stream(2e4, 2.0, 5);
  const auto b = poisson_stream(2e4, 2.0, 6);
  const auto h = coincidence_histogram(a, b, 200);
  const double mean = static_cast<double>(a.size() * b.size()) * kBinNs * 1e-9 / 2.0;
  for (const auto& [lag, n] : h) CHECK(std::abs(static_cast<double>(n) - mean) < 5.0 * std::sqrt(mean) + 1.0);
}

TEST_CASE("empty stream histogram is all zeros") {
  const auto h = coincidence_histogram(EventStream{}, stream_of({1, 2, 3}), 5);
  for (const auto& [lag, n] : h) CHECK(n == 0);
}

TEST_CASE("histogram window sum matches the counter") {
  const auto a = poisson_stream(2e4, 0.5, 8);
  EventStream b = poisson_stream(2e4, 0.5, 9);
  for (std::size_t i = 0; i < a.size(); i += 3) b.events.push_back({a.events[i].bin + 40, 0, 0});
  std::sort(b.events.begin(), b.events.end(), [](const TimeTag& x, const TimeTag& y) { return x.bin < y.bin; });
  const auto h = coincidence_histogram(a, b, 60);
  std::uint64_t sum = 0;
  for (std::int64_t lag = 38; lag <= 42; ++lag) sum += h.at(lag);
  const auto c = count_coincidences(a, b, 10.0, -40, 0.5).coincidences;
  CHECK(static_cast<double>(c) <= static_cast<double>(sum));
  CHECK(static_cast<double>(c) >= 0.99 * static_cast<double>(sum));
}

TEST_CASE("tomography count simulation follows the Born rule") {
  const auto c = simulate_tomography_counts(bell_state(Bell::PsiPlus), 100000, 4);
  CHECK(c.at(Eigenstate::H, Eigenstate::H) == 0.0);
  CHECK(c.basis_total(Eigenstate::H, Eigenstate::V) == 100000.0);
  const double hv = c.at(Eigenstate::H, Eigenstate::V) / 100000.0;
  CHECK(std::abs(hv - 0.5) < 5.0 * std::sqrt(0.25 / 100000.0));
  CHECK(simulate_tomography_counts(bell_state(Bell::PsiPlus), 100, 4) ==
        simulate_tomography_counts(bell_state(Bell::PsiPlus), 100, 4));
  CHECK_THROWS_AS(simulate_tomography_counts(bell_state(Bell::PsiPlus), 0, 4), ValidationError);
}

TEST_CASE("point metrics") {
  CoincidenceResult r;
  r.coincidences = 0;
  r.singles_a = r.singles_b = 10;
  CHECK(link_metrics(bell_state(Bell::PsiPlus), r).ebit_rate == 0.0);
  r.coincidences = 10;
  r.integration_s = 2.0;
  const auto m = link_metrics(werner_state(0.8, Bell::PsiPlus), r);
  CHECK(m.fidelity == doctest::Approx(0.85));
  CHECK(m.coincidence_rate == doctest::Approx(5.0));
  CHECK(m.ebit_rate == doctest::Approx(5.0 * oracle::werner_log_negativity(0.8)));
  r.integration_s = 0.0;
  CHECK_THROWS_AS(link_metrics(bell_state(Bell::PsiPlus), r), ValidationError);
}

TEST_CASE("ebit rate is linear in rate and monotone in log-negativity") {
  CoincidenceResult r;
  r.singles_a = r.singles_b = 100000;
  r.integration_s = 1.0;
  r.coincidences = 1000;
  const double base = link_metrics(werner_state(0.7, Bell::PsiPlus), r).ebit_rate;
  r.coincidences = 3000;
  CHECK(link_metrics(werner_state(0.7, Bell::PsiPlus), r).ebit_rate == doctest::Approx(3 * base));
  double last = -1.0;
  for (double p = 0.4; p <= 1.0; p += 0.1) {
    const double v = link_metrics(werner_state(p, Bell::PsiPlus), r).ebit_rate;
    CHECK(v > last);
    last = v;
  }
}

TEST_CASE("bootstrap uncertainty shrinks as one over root N") {
  const auto state = werner_state(0.8, Bell::PsiPlus);
  auto sigma = [&](std::int64_t per_basis) {
    const auto c = simulate_tomography_counts(state, per_basis, 31);
    CoincidenceResult r;
    r.coincidences = static_cast<std::int64_t>(c.total());
    r.singles_a = r.singles_b = r.coincidences * 10;
    return link_metrics(c, r, {200, 5, false}).fidelity_sigma;
  };
  const double ratio = sigma(1000) / sigma(10000);
  const double ideal = std::sqrt(10.0);
  CHECK(ratio > ideal / 2.0);
  CHECK(ratio < ideal * 2.0);
}

TEST_CASE("bootstrap metrics are reproducible and consistent") {
  const auto c = simulate_tomography_counts(werner_state(0.9, Bell::PsiPlus), 2000, 3);
  CoincidenceResult r;
  r.coincidences = static_cast<std::int64_t>(c.total());
  r.singles_a = r.singles_b = 100000;
  r.integration_s = 60.0;
  r.accidental_estimate = 900.0;
  const auto m = link_metrics(c, r, {100, 9, false});
  CHECK(m == link_metrics(c, r, {100, 9, false}));
  CHECK(m.ebit_rate == doctest::Approx(m.log_negativity * m.coincidence_rate));
  CHECK(m.fidelity_sigma > 0.0);
  const auto sub = link_metrics(c, r, {100, 9, true});
  CHECK(sub.coincidence_rate == doctest::Approx((static_cast<double>(r.coincidences) - 900.0) / 60.0));
  CHECK(sub.fidelity > m.fidelity);
  CHECK_THROWS_AS(link_metrics(c, r, {1, 9, false}), ValidationError);
}

TEST_CASE("accidental subtraction clips at zero") {
  TomographyCounts c;
  for (Eigenstate a : kEigenstates)
    for (Eigenstate b : kEigenstates) c.set(a, b, 3.0);
  const auto s = subtract_accidentals(c, 36.0 * 5.0);
  CHECK(s.at(Eigenstate::H, Eigenstate::L) == 0.0);
  CHECK(subtract_accidentals(c, 36.0).at(Eigenstate::D, Eigenstate::D) == doctest::Approx(2.0));
  CHECK_THROWS_AS(subtract_accidentals(c, -1.0), ValidationError);
}

TEST_CASE("window capture probability") {
  // No jitter, delay on a bin edge: every pair lands in the peak bin.
  CHECK(window_capture_probability(0.0, 0.0, 10.0) == doctest::Approx(1.0));
  CHECK(window_capture_probability(0.0, 1e-6, 10.0) == doctest::Approx(1.0));
  const double wide = window_capture_probability(0.0, 10.0, 10.0);
  CHECK(wide < 0.9);
  CHECK(wide > 0.6);
  CHECK(window_capture_probability(0.0, 10.0, 20.0) > wide);
  // Monte Carlo oracle for a jittered delay with random TDC phase.
  Rng rng(17);
  std::normal_distribution<double> g(3.0, 6.0);
  std::uniform_real_distribution<double> u(0.0, kBinNs);
  std::map<std::int64_t, int> lags;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double t0 = u(rng);
    lags[static_cast<std::int64_t>(std::floor((t0 + g(rng)) / kBinNs))]++;
  }
  std::int64_t peak = 0;
  for (const auto& [k, c] : lags)
    if (c > lags[peak]) peak = k;
  int inside = 0;
  for (std::int64_t k = peak - 2; k <= peak + 2; ++k) inside += lags[k];
  CHECK(window_capture_probability(3.0, 6.0, 10.0) == doctest::Approx(static_cast<double>(inside) / n).epsilon(0.01));
}
