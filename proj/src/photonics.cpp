#include "qlan/photonics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/random.hpp"

namespace qlan {

namespace {

constexpr std::uint64_t kClockStream = 0xc10c;
constexpr std::uint64_t kDetectStream = 0xde7ec7;
constexpr std::uint64_t kDarkStream = 0xda2c;

// Uniform Poisson arrivals on [t0, t1), appended unsorted.
void poisson_arrivals(Rng& rng, double rate_per_ns, double t0, double t1, std::vector<double>& out) {
  if (rate_per_ns <= 0.0 || t1 <= t0) return;
  std::poisson_distribution<std::int64_t> count(rate_per_ns * (t1 - t0));
  std::uniform_real_distribution<double> u(t0, t1);
  const std::int64_t n = count(rng);
  for (std::int64_t i = 0; i < n; ++i) out.push_back(u(rng));
}

// Per-epoch clock offsets, cached across events of the same second.
class ClockTrack {
 public:
  ClockTrack(const ClockModel& clock, std::int64_t epoch0, std::uint64_t seed)
      : clock_(clock), epoch0_(epoch0), seed_(seed) {}

  double offset_at(double t_ns) {
    const auto k = static_cast<std::int64_t>(std::floor(t_ns / 1e9));
    auto it = cache_.find(k);
    if (it != cache_.end()) return it->second;
    const double v = sample_clock(clock_, epoch0_ + k, seed_);
    cache_.emplace(k, v);
    return v;
  }

 private:
  ClockModel clock_;
  std::int64_t epoch0_;
  std::uint64_t seed_;
  std::unordered_map<std::int64_t, double> cache_;
};

// Sorts, keeps [0, end) and applies non-paralyzable dead time in place.
void finish_record(std::vector<double>& t, double end_ns, double dead_time_ns) {
  std::sort(t.begin(), t.end());
  std::vector<double> kept;
  kept.reserve(t.size());
  double last = -1e300;
  for (double x : t) {
    if (x < 0.0 || x >= end_ns) continue;
    if (!kept.empty() && x - last < dead_time_ns) continue;
    kept.push_back(x);
    last = x;
  }
  t.swap(kept);
}

}  // namespace

std::string_view to_string(DetectorKind kind) { return kind == DetectorKind::SNSPD ? "snspd" : "apd"; }

DetectorKind parse_detector_kind(std::string_view text) {
  if (text == "snspd" || text == "SNSPD") return DetectorKind::SNSPD;
  if (text == "apd" || text == "APD") return DetectorKind::APD;
  throw ValidationError(fmt::format("unknown detector kind '{}'", text));
}

DetectorModel DetectorModel::snspd() { return {DetectorKind::SNSPD, 0.80, 100.0, 0.05, 50.0}; }

DetectorModel DetectorModel::apd() { return {DetectorKind::APD, 0.20, 5000.0, 0.35, 10'000.0}; }

void DetectorModel::validate() const {
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw ValidationError(fmt::format("detector efficiency {} outside (0, 1]", efficiency));
  }
  if (!(dark_count_rate >= 0.0) || !(jitter_sigma_ns >= 0.0) || !(dead_time_ns >= 0.0)) {
    throw ValidationError("detector rates and times must be non-negative");
  }
}

void FiberLink::validate() const {
  if (!(length_m >= 0.0)) throw ValidationError("fiber length must be non-negative");
  if (!(attenuation_db_per_km >= 0.0) || !(extra_loss_db >= 0.0)) {
    throw ValidationError("fiber losses must be non-negative");
  }
}

double FiberLink::transmission() const { return std::pow(10.0, -loss_db() / 10.0); }

const ChannelSource& SourceModel::channel(int n) const {
  if (n < 1 || n > pair_count()) throw ValidationError(fmt::format("source has no channel {}", n));
  return channels[static_cast<std::size_t>(n - 1)];
}

void SourceModel::validate() const {
  if (channels.empty()) throw ValidationError("source model has no channels");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (!(channels[i].pair_rate > 0.0)) {
      throw ValidationError(fmt::format("channel {} pair rate must be positive", i + 1));
    }
  }
}

std::vector<double> simulate_pair_stream(int channel, double rate, double duration_s, std::uint64_t seed) {
  if (!(rate > 0.0)) throw ValidationError("pair rate must be positive");
  if (!(duration_s >= 0.0)) throw ValidationError("duration must be non-negative");
  std::vector<double> out;
  if (duration_s == 0.0) return out;
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(channel)}));
  std::exponential_distribution<double> gap(rate * 1e-9);
  const double end = duration_s * 1e9;
  out.reserve(static_cast<std::size_t>(rate * duration_s * 1.05) + 16);
  for (double t = gap(rng); t < end; t += gap(rng)) out.push_back(t);
  return out;
}

std::vector<double> detect_times(std::span<const double> emissions_ns, const FiberLink& fiber,
                                 const DetectorModel& det, const ClockModel& clock, double duration_s,
                                 std::uint64_t seed, double extra_attenuation_db) {
  fiber.validate();
  det.validate();
  clock.validate();
  if (!(duration_s >= 0.0)) throw ValidationError("duration must be non-negative");
  const double survive =
      fiber.transmission() * std::pow(10.0, -extra_attenuation_db / 10.0) * det.efficiency;
  Rng rng(derive_seed(seed, {kDetectStream}));
  std::bernoulli_distribution keep(std::min(1.0, survive));
  std::normal_distribution<double> jitter(0.0, 1.0);
  ClockTrack track(clock, 0, derive_seed(seed, {kClockStream}));

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(static_cast<double>(emissions_ns.size()) * survive * 1.1) + 16);
  for (double t : emissions_ns) {
    if (!keep(rng)) continue;
    out.push_back(t + fiber.delay_ns() + track.offset_at(t) + det.jitter_sigma_ns * jitter(rng));
  }
  Rng dark_rng(derive_seed(seed, {kDarkStream}));
  poisson_arrivals(dark_rng, det.dark_count_rate * 1e-9, 0.0, duration_s * 1e9, out);
  finish_record(out, duration_s * 1e9, det.dead_time_ns);
  return out;
}

EventStream detect(std::span<const double> emissions_ns, const FiberLink& fiber, const DetectorModel& det,
                   const ClockModel& clock, double duration_s, std::uint64_t seed, double extra_attenuation_db) {
  const auto times = detect_times(emissions_ns, fiber, det, clock, duration_s, seed, extra_attenuation_db);
  return tdc_bin(times, 0);
}

double accidental_rate(double singles_a, double singles_b, double window_s) {
  if (singles_a < 0.0 || singles_b < 0.0 || window_s < 0.0) {
    throw ValidationError("accidental_rate inputs must be non-negative");
  }
  return singles_a * singles_b * window_s;
}

TwoQubitState effective_state(const TwoQubitState& pair_state, double true_rate, double accidental_rate) {
  const WeightedState one{true_rate, pair_state};
  return effective_state(std::span<const WeightedState>(&one, 1), accidental_rate);
}

TwoQubitState effective_state(std::span<const WeightedState> channels, double accidental_rate) {
  if (accidental_rate < 0.0) throw ValidationError("accidental rate must be non-negative");
  double true_rate = 0.0;
  Matrix4c rho = Matrix4c::Zero();
  for (const auto& c : channels) {
    if (c.weight < 0.0) throw ValidationError("true coincidence rate must be non-negative");
    true_rate += c.weight;
    rho += c.weight * c.state.matrix();
  }
  if (true_rate + accidental_rate <= 0.0) {
    throw ValidationError("effective_state needs a non-zero true or accidental rate");
  }
  rho += accidental_rate * 0.25 * Matrix4c::Identity();
  rho /= (true_rate + accidental_rate);
  return TwoQubitState::from_matrix(0.5 * (rho + rho.adjoint()));
}

std::vector<WeightedState> link_channel_states(const SourceModel& source, const std::set<int>& channels) {
  double total = 0.0, mean_angle = 0.0;
  for (int n : channels) {
    const auto& ch = source.channel(n);
    total += ch.pair_rate;
    mean_angle += ch.pair_rate * ch.rotation_rad;
  }
  const double compensation = (source.compensate_link_rotation && total > 0.0) ? mean_angle / total : 0.0;
  std::vector<WeightedState> out;
  for (int n : channels) {
    const auto& ch = source.channel(n);
    out.push_back({ch.pair_rate, rotate_second(ch.pair_state, ch.rotation_rad - compensation)});
  }
  return out;
}

double NodeOptics::efficiency() const {
  return fiber.transmission() * std::pow(10.0, -wss_loss_db / 10.0) * detector.efficiency;
}

TomographySchedule TomographySchedule::full(double total_s) {
  TomographySchedule s;
  for (Eigenstate a : kEigenstates)
    for (Eigenstate b : kEigenstates) s.settings.emplace_back(a, b);
  s.dwell_s = total_s / static_cast<double>(s.settings.size());
  s.cycles = std::max(1, static_cast<int>(std::lround(total_s)));
  return s;
}

void TomographySchedule::validate() const {
  if (settings.empty()) throw ValidationError("tomography schedule has no settings");
  if (!(dwell_s > 0.0)) throw ValidationError("tomography dwell time must be positive");
  if (cycles < 1) throw ValidationError("tomography schedule needs at least one cycle");
}

LinkCapture simulate_link_capture(const LinkCaptureRequest& req) {
  if (!req.source) throw ValidationError("link capture needs a source model");
  if (req.channels.empty()) throw ValidationError("link capture needs at least one channel");
  req.schedule.validate();
  for (const NodeOptics* n : {&req.signal_node, &req.idler_node}) {
    n->fiber.validate();
    n->detector.validate();
    n->clock.validate();
  }

  const NodeOptics& x = req.signal_node;
  const NodeOptics& y = req.idler_node;
  const double eta_x = x.efficiency();
  const double eta_y = y.efficiency();
  const double slot_ns = req.schedule.slot_s() * 1e9;
  const double end_ns = req.schedule.duration_s() * 1e9;
  const auto channel_states = link_channel_states(*req.source, req.channels);

  ClockTrack clock_x(x.clock, req.scheduled_epoch, derive_seed(req.seed, {kClockStream, x.id}));
  ClockTrack clock_y(y.clock, req.scheduled_epoch, derive_seed(req.seed, {kClockStream, y.id}));

  std::vector<double> tx, ty;
  for (std::size_t slot = 0; slot < req.schedule.slot_count(); ++slot) {
    const auto [a, b] = req.schedule.setting_at(slot);
    const Matrix4c pab = kron(projector(a), projector(b));
    const Matrix4c pa = kron(projector(a), Matrix2c::Identity());
    const Matrix4c pb = kron(Matrix2c::Identity(), projector(b));
    double both = 0.0, x_all = 0.0, y_all = 0.0;
    for (const auto& ch : channel_states) {
      const Matrix4c& rho = ch.state.matrix();
      const double p_ab = std::max(0.0, (rho * pab).trace().real());
      const double p_a = std::max(0.0, (rho * pa).trace().real());
      const double p_b = std::max(0.0, (rho * pb).trace().real());
      both += ch.weight * eta_x * eta_y * p_ab;
      x_all += ch.weight * eta_x * p_a;
      y_all += ch.weight * eta_y * p_b;
    }
    const double x_only = std::max(0.0, x_all - both);
    const double y_only = std::max(0.0, y_all - both);

    const double t0 = static_cast<double>(slot) * slot_ns;
    const double t1 = t0 + slot_ns;
    Rng rng(derive_seed(req.seed, {0x5107ULL, slot}));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> emitted;

    auto arrive = [&](std::vector<double>& out, double tau, const NodeOptics& n, ClockTrack& clk) {
      out.push_back(tau + n.fiber.delay_ns() + clk.offset_at(tau) + n.detector.jitter_sigma_ns * gauss(rng));
    };

    poisson_arrivals(rng, both * 1e-9, t0, t1, emitted);
    for (double tau : emitted) {
      arrive(tx, tau, x, clock_x);
      arrive(ty, tau, y, clock_y);
    }
    emitted.clear();
    poisson_arrivals(rng, x_only * 1e-9, t0, t1, emitted);
    for (double tau : emitted) arrive(tx, tau, x, clock_x);
    emitted.clear();
    poisson_arrivals(rng, y_only * 1e-9, t0, t1, emitted);
    for (double tau : emitted) arrive(ty, tau, y, clock_y);

    poisson_arrivals(rng, x.detector.dark_count_rate * 1e-9, t0, t1, tx);
    poisson_arrivals(rng, y.detector.dark_count_rate * 1e-9, t0, t1, ty);
  }
  finish_record(tx, end_ns, x.detector.dead_time_ns);
  finish_record(ty, end_ns, y.detector.dead_time_ns);

  const std::int64_t common = std::max(req.signal_epoch, req.idler_epoch);
  auto to_stream = [&](const std::vector<double>& t, const NodeOptics& n, std::int64_t epoch, bool first) {
    EventStream s{n.id, epoch, {}};
    s.events.reserve(t.size());
    const std::int64_t lead = (common - epoch) * kBinsPerSecond;
    for (double v : t) {
      auto slot = static_cast<std::size_t>(std::max(0.0, v) / slot_ns);
      slot = std::min(slot, req.schedule.slot_count() - 1);
      const auto& ab = req.schedule.setting_at(slot);
      const auto setting = first ? ab.first : ab.second;
      s.events.push_back({static_cast<std::int64_t>(std::floor(v / kBinNs)) + lead,
                          static_cast<std::uint8_t>(setting), 0});
    }
    return s;
  };
  return {to_stream(tx, x, req.signal_epoch, true), to_stream(ty, y, req.idler_epoch, false)};
}

}  // namespace qlan
