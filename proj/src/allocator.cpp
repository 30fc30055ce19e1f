#include "qlan/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include <fmt/format.h>

#include "qlan/error.hpp"

namespace qlan {

namespace {

constexpr int kMaxExhaustiveChannels = 12;
constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Summary {
  double rate = 0.0;
  double fidelity = 0.0;
  double ebit_rate = 0.0;
};

double cost_of(ObjectiveKind kind, double min_rate, std::span<const Summary> links) {
  double lo = kInfinity, hi = 0.0, fid = 0.0, ebits = 0.0;
  for (const auto& s : links) {
    if (s.rate < min_rate || s.rate <= 0.0) return kInfinity;
    lo = std::min(lo, s.rate);
    hi = std::max(hi, s.rate);
    fid += s.fidelity;
    ebits += s.ebit_rate;
  }
  switch (kind) {
    case ObjectiveKind::BalanceRates:
      return hi / lo;
    case ObjectiveKind::MaxAvgFidelity:
      return -fid / static_cast<double>(links.size());
    case ObjectiveKind::MaxTotalEbits:
      return -ebits;
  }
  return kInfinity;
}

bool same_cost(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

struct Candidate {
  double cost = kInfinity;
  int used = 0;
  std::vector<int> values;  // per free channel

  bool better_than(const Candidate& other) const {
    if (cost == kInfinity) return false;
    if (other.cost == kInfinity) return true;
    if (!same_cost(cost, other.cost)) return cost < other.cost;
    if (used != other.used) return used < other.used;
    return values < other.values;
  }
};

}  // namespace

const NodeOptics& NetworkModel::node(const NodeId& name) const {
  for (const auto& n : nodes) {
    if (n.name == name) return n;
  }
  throw ValidationError(fmt::format("unknown node '{}'", name));
}

std::vector<NodeId> NetworkModel::node_names() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes) out.push_back(n.name);
  return out;
}

void NetworkModel::validate() const {
  plan.validate();
  source.validate();
  if (source.pair_count() != plan.pair_count) {
    throw ValidationError(fmt::format("source has {} channels but the plan has {}", source.pair_count(),
                                      plan.pair_count));
  }
  if (nodes.size() < 2) throw ValidationError("a network needs at least two nodes");
  std::set<NodeId> names;
  std::set<std::uint16_t> ids;
  for (const auto& n : nodes) {
    if (n.name.empty()) throw ValidationError("node name must not be empty");
    if (!names.insert(n.name).second) throw ValidationError(fmt::format("duplicate node name '{}'", n.name));
    if (!ids.insert(n.id).second) throw ValidationError(fmt::format("duplicate node id {}", n.id));
    n.fiber.validate();
    n.detector.validate();
    n.clock.validate();
    if (!(n.wss_loss_db >= 0.0)) throw ValidationError("WSS loss must be non-negative");
  }
  window_half_width_bins(window_ns);
}

NetworkModel calibrated_model() {
  NetworkModel m;
  const double fluxes[] = {3.59e6, 4.66e6, 3.5e6, 4.08e6, 2.22e6, 1.5e6, 1.65e6, 2.6e6};
  const double fidelity0 = 0.95;
  const TwoQubitState pair = werner_state((4.0 * fidelity0 - 1.0) / 3.0, Bell::PsiPlus);
  for (int n = 0; n < 8; ++n) m.source.channels.push_back({fluxes[n], pair, 0.30 * n});

  NodeOptics a{"A", 0, {5.0, 0.2, 10.23}, DetectorModel::snspd(), {0.0, 7.07, 0.0}, 5.0};
  NodeOptics b{"B", 1, {250.0, 0.2, 18.36}, DetectorModel::apd(), {35.0, 7.07, 0.0}, 5.0};
  NodeOptics c{"C", 2, {1200.0, 0.2, 17.45}, DetectorModel::snspd(), {-120.0, 7.07, 0.0}, 5.0};
  m.nodes = {a, b, c};
  return m;
}

double pairing_efficiency(const NodeOptics& x, const NodeOptics& y, double window_ns) {
  const double mean = y.mean_delay_ns() - x.mean_delay_ns();
  const double sigma = std::sqrt(x.clock.jitter_sigma_ns * x.clock.jitter_sigma_ns +
                                 y.clock.jitter_sigma_ns * y.clock.jitter_sigma_ns +
                                 x.detector.jitter_sigma_ns * x.detector.jitter_sigma_ns +
                                 y.detector.jitter_sigma_ns * y.detector.jitter_sigma_ns);
  return window_capture_probability(mean, sigma, window_ns);
}

LinkPrediction predict_link(const Link& link, const std::set<int>& channels, const NetworkModel& model,
                            const ScoreOptions& options) {
  if (channels.empty()) throw ValidationError(fmt::format("link {} has no channels", link.label()));
  const NodeOptics& x = model.node(link.low());
  const NodeOptics& y = model.node(link.high());
  if (x.name == y.name) throw ValidationError("a link joins two distinct nodes");

  LinkPrediction p;
  p.link = link;
  p.channels = channels;
  p.pairing_efficiency = pairing_efficiency(x, y, model.window_ns);

  const double eta_x = x.efficiency();
  const double eta_y = y.efficiency();
  auto weighted = link_channel_states(model.source, channels);
  double flux = 0.0;
  for (auto& w : weighted) {
    flux += w.weight;
    w.weight *= eta_x * eta_y * p.pairing_efficiency;
    p.true_rate += w.weight;
  }

  // Unpolarized singles summed over both outcomes of one analyzer basis.
  const double sx = flux * eta_x + 2.0 * x.detector.dark_count_rate;
  const double sy = flux * eta_y + 2.0 * y.detector.dark_count_rate;
  if (options.accidentals) p.accidental_rate = sx * sy * window_acceptance_s(model.window_ns);
  p.state = effective_state(weighted, p.accidental_rate);

  double fx = 1.0, fy = 1.0;
  if (options.dead_time) {
    fx = 1.0 / (1.0 + 0.5 * sx * x.detector.dead_time_ns * 1e-9);
    fy = 1.0 / (1.0 + 0.5 * sy * y.detector.dead_time_ns * 1e-9);
  }
  p.singles_signal = 0.5 * sx * fx;
  p.singles_idler = 0.5 * sy * fy;

  p.metrics.fidelity = fidelity(p.state, bell_state(Bell::PsiPlus));
  p.metrics.log_negativity = log_negativity(p.state);
  p.metrics.coincidence_rate = (p.true_rate + p.accidental_rate) * fx * fy;
  p.metrics.ebit_rate = ebit_rate(p.metrics.log_negativity, p.metrics.coincidence_rate);
  return p;
}

std::vector<LinkPrediction> score(const Allocation& alloc, const NetworkModel& model, const ScoreOptions& options) {
  alloc.validate(model.plan);
  std::vector<LinkPrediction> out;
  for (const auto& [link, channels] : alloc.links()) out.push_back(predict_link(link, channels, model, options));
  return out;
}

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::BalanceRates:
      return "balance_rates";
    case ObjectiveKind::MaxAvgFidelity:
      return "max_avg_fidelity";
    case ObjectiveKind::MaxTotalEbits:
      return "max_total_ebits";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(std::string_view text) {
  for (auto k : {ObjectiveKind::BalanceRates, ObjectiveKind::MaxAvgFidelity, ObjectiveKind::MaxTotalEbits}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError(fmt::format("unknown objective '{}'", text));
}

void Objective::validate(const NetworkModel& model) const {
  if (links.empty()) throw ValidationError("objective names no links");
  const auto names = model.node_names();
  const auto mesh = logical_mesh(names);
  std::set<Link> seen;
  for (const auto& l : links) {
    if (std::find(mesh.begin(), mesh.end(), l) == mesh.end()) {
      throw ValidationError(fmt::format("objective link {} is not in the logical mesh", l.label()));
    }
    if (!seen.insert(l).second) throw ValidationError(fmt::format("objective lists link {} twice", l.label()));
  }
  for (int c : reserve) {
    if (c < 1 || c > model.plan.pair_count) throw ValidationError(fmt::format("reserved channel {} does not exist", c));
  }
  if (!(min_rate >= 0.0)) throw ValidationError("minimum rate must be non-negative");
  if (model.plan.pair_count > kMaxExhaustiveChannels) {
    throw ValidationError(fmt::format("exhaustive search supports at most {} channel pairs", kMaxExhaustiveChannels));
  }
}

double objective_cost(const Objective& objective, std::span<const LinkPrediction> predictions) {
  std::vector<Summary> s;
  for (const auto& p : predictions) {
    s.push_back({p.metrics.coincidence_rate, p.metrics.fidelity, p.metrics.ebit_rate});
  }
  return cost_of(objective.kind, objective.min_rate, s);
}

Allocation optimize(const Objective& objective, const NetworkModel& model, const ScoreOptions& options) {
  model.validate();
  objective.validate(model);

  std::vector<int> free;
  for (int c = 1; c <= model.plan.pair_count; ++c) {
    if (!objective.reserve.count(c)) free.push_back(c);
  }
  const int n_links = static_cast<int>(objective.links.size());
  const int n_free = static_cast<int>(free.size());
  if (n_free < n_links) throw ValidationError("not enough unreserved channels for the required links");

  // Score of every (link, channel subset) pair, indexed by subset bitmask.
  std::vector<std::vector<Summary>> table(static_cast<std::size_t>(n_links));
  for (int l = 0; l < n_links; ++l) {
    auto& row = table[static_cast<std::size_t>(l)];
    row.resize(std::size_t{1} << n_free);
    for (std::size_t mask = 1; mask < row.size(); ++mask) {
      std::set<int> chans;
      for (int i = 0; i < n_free; ++i) {
        if (mask & (std::size_t{1} << i)) chans.insert(free[static_cast<std::size_t>(i)]);
      }
      const auto p = predict_link(objective.links[static_cast<std::size_t>(l)], chans, model, options);
      row[mask] = {p.metrics.coincidence_rate, p.metrics.fidelity, p.metrics.ebit_rate};
    }
  }

  // value 0 = unassigned, v = link v - 1.
  const int lowest = objective.use_all_channels ? 1 : 0;
  const int choices = n_links + 1 - lowest;

  auto search = [&](int first_value) {
    Candidate best;
    std::vector<int> values(static_cast<std::size_t>(n_free), lowest);
    values[0] = first_value;
    std::vector<std::size_t> masks(static_cast<std::size_t>(n_links));
    std::vector<Summary> links(static_cast<std::size_t>(n_links));
    while (true) {
      std::fill(masks.begin(), masks.end(), 0);
      int used = 0;
      for (int i = 0; i < n_free; ++i) {
        const int v = values[static_cast<std::size_t>(i)];
        if (v > 0) {
          masks[static_cast<std::size_t>(v - 1)] |= std::size_t{1} << i;
          ++used;
        }
      }
      bool feasible = true;
      for (int l = 0; l < n_links && feasible; ++l) {
        const std::size_t m = masks[static_cast<std::size_t>(l)];
        if (m == 0) {
          feasible = false;
        } else {
          links[static_cast<std::size_t>(l)] = table[static_cast<std::size_t>(l)][m];
        }
      }
      if (feasible) {
        Candidate c{cost_of(objective.kind, objective.min_rate, links), used, values};
        if (c.better_than(best)) best = std::move(c);
      }
      // Odometer over positions 1..n_free-1; position 0 is fixed per task.
      int pos = n_free - 1;
      while (pos >= 1 && values[static_cast<std::size_t>(pos)] == lowest + choices - 1) {
        values[static_cast<std::size_t>(pos)] = lowest;
        --pos;
      }
      if (pos < 1) break;
      ++values[static_cast<std::size_t>(pos)];
    }
    return best;
  };

  std::vector<std::future<Candidate>> tasks;
  for (int v = lowest; v < lowest + choices; ++v) tasks.push_back(std::async(std::launch::async, search, v));
  Candidate best;
  for (auto& t : tasks) {
    Candidate c = t.get();
    if (c.better_than(best)) best = std::move(c);
  }
  if (best.cost == kInfinity) throw ValidationError("no feasible allocation satisfies the objective");

  Allocation out;
  for (int l = 0; l < n_links; ++l) {
    std::set<int> chans;
    for (int i = 0; i < n_free; ++i) {
      if (best.values[static_cast<std::size_t>(i)] == l + 1) chans.insert(free[static_cast<std::size_t>(i)]);
    }
    out.assign(objective.links[static_cast<std::size_t>(l)], chans);
  }
  out.validate(model.plan);
  return out;
}

}  // namespace qlan
