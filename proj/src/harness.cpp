#include "qlan/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/random.hpp"

namespace qlan {

namespace {

constexpr const char* kControllerName = "controller";
constexpr const char* kWssName = "wss";
// Spacing between consecutive link captures beyond their duration, enough
// to absorb late starts.
constexpr std::int64_t kCaptureGapS = 30;

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

std::string token_for(const std::string& name, std::uint64_t seed) {
  return fmt::format("{:016x}", derive_seed(seed, {hash_label("token"), hash_label(name)}));
}

struct LinkJob {
  Link link;
  std::set<int> channels;
  std::int64_t scheduled_epoch = 0;
  std::int64_t signal_epoch = 0;
  std::int64_t idler_epoch = 0;
  LinkCapture capture;
  FetchedStream signal;
  FetchedStream idler;
};

LinkRow analyze(const ScenarioConfig& cfg, const LinkJob& job, const TomographySchedule& schedule,
                std::vector<LinkCaptures>* keep, std::size_t index) {
  const auto& m = cfg.measurement;
  const NodeOptics& x = cfg.model.node(job.link.low());
  const NodeOptics& y = cfg.model.node(job.link.high());

  LinkRow row;
  row.link = job.link;
  row.channels = job.channels;
  row.scheduled_epoch = job.scheduled_epoch;
  row.signal_epoch = job.signal.stream.epoch_start;
  row.idler_epoch = job.idler.stream.epoch_start;
  row.signal_demand_bps = job.signal.demand_bps;
  row.idler_demand_bps = job.idler.demand_bps;

  auto [a, b] = align_epochs(job.signal.stream, job.idler.stream);
  row.epoch_correction_bins =
      std::llabs(job.signal.stream.epoch_start - job.idler.stream.epoch_start) * kBinsPerSecond;

  const OffsetEstimate off = estimate_offset(a, b, m.search_range_bins);
  row.offset_bins = off.shift;
  row.peak_significant = off.significant;
  row.residual_ns = static_cast<double>(off.shift) * kBinNs - (y.mean_delay_ns() - x.mean_delay_ns());

  CoincidenceResult result = count_coincidences(a, b, m.window_ns, -off.shift, schedule.duration_s());
  // Rates refer to complete basis pairs; the accidental estimate keeps the
  // wall-clock normalization it was computed with.
  result.integration_s = schedule.rate_normalization_s();
  const TomographyCounts counts = tally_settings(a, b, m.window_ns, -off.shift);

  row.coincidences = result.coincidences;
  row.accidental_estimate = result.accidental_estimate;
  row.singles_signal = result.singles_a;
  row.singles_idler = result.singles_b;

  const std::uint64_t boot_seed = derive_seed(cfg.seed, {hash_label("bootstrap"), hash_label(job.link.label())});
  row.metrics = link_metrics(counts, result, {m.bootstrap_resamples, boot_seed, false});
  row.subtracted = link_metrics(counts, result, {m.bootstrap_resamples, boot_seed, true});
  row.state = reconstruct_state(counts);

  const LinkPrediction pred = predict_link(job.link, job.channels, cfg.model);
  row.predicted_fidelity = pred.metrics.fidelity;
  row.predicted_rate = pred.metrics.coincidence_rate;

  if (keep) (*keep)[index] = LinkCaptures{job.link, std::move(a), std::move(b)};
  return row;
}

}  // namespace

Allocation resolve_allocation(const ScenarioConfig& config) {
  if (config.allocation) return *config.allocation;
  if (!config.objective) throw ValidationError("scenario has neither an allocation nor an objective");
  return optimize(*config.objective, config.model);
}

RunReport run_scenario(const ScenarioConfig& config) { return run_scenario(config, nullptr); }

RunReport run_scenario(const ScenarioConfig& cfg, std::vector<LinkCaptures>* captures) {
  stage("validate", [&] { cfg.validate(); });
  const Allocation alloc = stage("allocate", [&] {
    Allocation a = resolve_allocation(cfg);
    a.validate(cfg.model.plan);
    return a;
  });

  // Control plane: one controller, the WSS agent and a time tagger per node.
  SimNetwork net(cfg.seed);
  net.set_default_params(cfg.transport.channel);
  BlobStore blobs;
  Controller controller(net, kControllerName, token_for(kControllerName, cfg.seed), blobs);
  controller.set_timeout(cfg.transport.timeout_s);
  controller.set_arm_lead(cfg.transport.arm_lead_s);
  const auto names = cfg.model.node_names();
  WssAgent wss(net, kWssName, token_for(kWssName, cfg.seed), cfg.model.plan, names);
  std::vector<std::unique_ptr<NodeAgent>> agents;
  for (const auto& n : cfg.model.nodes) {
    agents.push_back(std::make_unique<NodeAgent>(net, n.name, token_for(n.name, cfg.seed), n.id, blobs));
    if (cfg.transport.unreachable.count(n.name)) agents.back()->set_up(false);
  }
  auto agent = [&](const NodeId& name) -> NodeAgent& {
    for (auto& a : agents) {
      if (a->name() == name) return *a;
    }
    throw ValidationError(fmt::format("no agent for node {}", name));
  };
  net.connect(kControllerName, kWssName, controller.token());
  for (const auto& n : names) {
    net.connect(kControllerName, n, controller.token());
    auto it = cfg.transport.command_delay_s.find(n);
    if (it != cfg.transport.command_delay_s.end()) {
      ChannelParams p = cfg.transport.channel;
      p.delay_s += it->second;
      net.set_params(kControllerName, n, p);
    }
  }

  const Allocation routed = stage("apply", [&] {
    const WssConfig routes = controller.apply_allocation(kWssName, alloc);
    Allocation r = allocation_from_routes(routes, cfg.model.plan);
    if (!(r == alloc)) throw RuntimeFailure("WSS routing table does not realize the requested allocation");
    return r;
  });

  const TomographySchedule schedule = TomographySchedule::full(cfg.measurement.duration_s);
  const auto stride = static_cast<std::int64_t>(std::ceil(cfg.measurement.duration_s)) + kCaptureGapS;

  std::vector<LinkJob> jobs;
  for (const auto& [link, chans] : alloc.links()) {
    LinkJob j;
    j.link = link;
    j.channels = *routed.channels(link);
    j.scheduled_epoch = cfg.measurement.epoch + static_cast<std::int64_t>(jobs.size()) * stride;
    jobs.push_back(std::move(j));
  }

  stage("arm", [&] {
    for (auto& j : jobs) {
      const auto started = controller.arm_measurement({j.link.low(), j.link.high()}, j.scheduled_epoch,
                                                      schedule.duration_s(), schedule);
      j.signal_epoch = started.at(j.link.low());
      j.idler_epoch = started.at(j.link.high());
    }
  });

  stage("simulate", [&] {
    std::vector<std::future<LinkCapture>> tasks;
    for (const auto& j : jobs) {
      LinkCaptureRequest req;
      req.source = &cfg.model.source;
      req.channels = j.channels;
      req.signal_node = cfg.model.node(j.link.low());
      req.idler_node = cfg.model.node(j.link.high());
      req.schedule = schedule;
      req.scheduled_epoch = j.scheduled_epoch;
      req.signal_epoch = j.signal_epoch;
      req.idler_epoch = j.idler_epoch;
      req.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(j.scheduled_epoch),
                                        hash_label(j.link.low()), hash_label(j.link.high())});
      tasks.push_back(std::async(std::launch::async, [req] { return simulate_link_capture(req); }));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      jobs[i].capture = tasks[i].get();
      agent(jobs[i].link.low()).record(jobs[i].scheduled_epoch, std::move(jobs[i].capture.signal));
      agent(jobs[i].link.high()).record(jobs[i].scheduled_epoch, std::move(jobs[i].capture.idler));
    }
  });

  DataPlaneBudget budget(cfg.transport.capacity_bps);
  int deferred = 0;
  stage("fetch", [&] {
    for (auto& j : jobs) {
      auto got = controller.fetch_data({{j.link.low(), j.scheduled_epoch}, {j.link.high(), j.scheduled_epoch}},
                                       budget);
      deferred += static_cast<int>(got[0].deferred) + static_cast<int>(got[1].deferred);
      j.signal = std::move(got[0]);
      j.idler = std::move(got[1]);
    }
  });

  RunReport report;
  report.scenario = cfg.name;
  report.label = cfg.label;
  report.seed = cfg.seed;
  report.duration_s = schedule.duration_s();
  report.window_ns = cfg.measurement.window_ns;
  report.capacity_bps = budget.capacity();
  report.peak_stream_bps = budget.peak_stream_demand();
  report.peak_total_bps = budget.peak_in_use();
  report.deferred_transfers = deferred;

  stage("analyze", [&] {
    if (captures) captures->assign(jobs.size(), LinkCaptures{});
    std::vector<std::future<LinkRow>> tasks;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      tasks.push_back(std::async(std::launch::async, [&, i] { return analyze(cfg, jobs[i], schedule, captures, i); }));
    }
    for (auto& t : tasks) report.rows.push_back(t.get());
  });
  stage("report", [&] { report.validate(); });
  return report;
}

const LinkRow& RunReport::row(const Link& link) const {
  for (const auto& r : rows) {
    if (r.link == link) return r;
  }
  throw ValidationError(fmt::format("report has no row for link {}", link.label()));
}

double RunReport::mean_fidelity() const {
  if (rows.empty()) throw ValidationError("report has no rows");
  double sum = 0.0;
  for (const auto& r : rows) sum += r.metrics.fidelity;
  return sum / static_cast<double>(rows.size());
}

void RunReport::validate() const {
  if (rows.empty()) throw ValidationError("report has no link rows");
  for (const auto& r : rows) {
    for (const LinkMetrics* m : {&r.metrics, &r.subtracted}) {
      if (!(m->fidelity >= 0.0 && m->fidelity <= 1.0 + 1e-9)) throw ValidationError("fidelity outside [0, 1]");
      if (!(m->log_negativity >= 0.0 && m->log_negativity <= 1.0 + 1e-9)) {
        throw ValidationError("log-negativity outside [0, 1]");
      }
      if (!(m->coincidence_rate >= 0.0)) throw ValidationError("negative coincidence rate");
      if (std::abs(m->ebit_rate - m->log_negativity * m->coincidence_rate) > 1e-9 * std::max(1.0, m->ebit_rate)) {
        throw ValidationError(fmt::format("link {}: R_E differs from E_N x rate", r.link.label()));
      }
    }
  }
}

}  // namespace qlan
