// qlan: run desk-scale entanglement-distribution scenarios.
//
// Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/harness.hpp"

namespace fs = std::filesystem;
using namespace qlan;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::vector<std::byte> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot read '{}'", p.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return static_cast<std::byte>(c); });
  return out;
}

void write_bytes(const fs::path& p, const std::vector<std::byte>& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw RuntimeFailure(fmt::format("cannot write '{}'", p.string()));
}

void save_timetags(const fs::path& dir, const std::vector<LinkCaptures>& caps) {
  for (const auto& c : caps) {
    for (const auto& [role, stream] : {std::pair{"signal", &c.signal}, std::pair{"idler", &c.idler}}) {
      const fs::path d = dir / c.link.label() / role;
      fs::create_directories(d);
      const auto segs = encode_segments(*stream);
      for (std::size_t i = 0; i < segs.size(); ++i) write_bytes(d / fmt::format("seg_{:03}.qtt", i), segs[i]);
    }
  }
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
            bool timetags) {
  ScenarioConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  std::vector<LinkCaptures> caps;
  const RunReport report = run_scenario(cfg, timetags ? &caps : nullptr);
  std::cout << report_text(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    emit_report(report, ReportFormat::Text, fs::path(out_dir) / "report.txt");
    emit_report(report, ReportFormat::Json, fs::path(out_dir) / "report.json");
    if (timetags) save_timetags(fs::path(out_dir) / "timetags", caps);
  }
  return 0;
}

int cmd_optimize(const std::string& config_path) {
  const ScenarioConfig cfg = load_config(config_path);
  const Allocation alloc = resolve_allocation(cfg);
  if (cfg.objective) {
    std::cout << fmt::format("Objective {} over {} link(s)\n", to_string(cfg.objective->kind),
                             cfg.objective->links.size());
  }
  const auto preds = score(alloc, cfg.model);
  std::size_t width = 6;
  for (const auto& p : preds) width = std::max(width, format_channels(p.channels).size());
  std::cout << fmt::format("{:<5} {:<{}} {:>10} {:>8} {:>12} {:>10} {:>12}\n", "Link", "Ch.", width, "Fidelity",
                           "E_N", "Rate (1/s)", "R_E", "Pairing eff.");
  for (const auto& p : preds) {
    std::cout << fmt::format("{:<5} {:<{}} {:>10.3f} {:>8.3f} {:>12.1f} {:>10.1f} {:>12.3f}\n", p.link.label(),
                             format_channels(p.channels), width, p.metrics.fidelity, p.metrics.log_negativity,
                             p.metrics.coincidence_rate, p.metrics.ebit_rate, p.pairing_efficiency);
  }
  if (cfg.objective) std::cout << fmt::format("Cost {:.6g}\n", objective_cost(*cfg.objective, preds));
  return 0;
}

int cmd_calibrate(const std::string& config_path) {
  const ScenarioConfig cfg = load_config(config_path);
  if (cfg.targets.empty()) throw ValidationError(fmt::format("'{}' has no [target ...] sections", config_path));
  const CalibrationResult r = calibrate(cfg.model, cfg.targets, cfg.calibration);
  std::cout << fmt::format("Fitted {} target(s) in {} evaluations, cost {:.4g}{}\n", cfg.targets.size(),
                           r.evaluations, r.cost, r.converged ? "" : " (not converged)");
  std::cout << fmt::format("{:<8} {:<5} {:<6} {:>9} {:>9} {:>11} {:>11}\n", "Target", "Link", "Ch.", "F want",
                           "F fit", "Rate want", "Rate fit");
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
    const auto& t = cfg.targets[i];
    const auto& p = r.predictions[i];
    std::cout << fmt::format("{:<8} {:<5} {:<6} {:>9.3f} {:>9.3f} {:>11.2f} {:>11.2f}\n", t.name, t.link.label(),
                             format_channels(t.channels), t.fidelity, p.metrics.fidelity, t.coincidence_rate,
                             p.metrics.coincidence_rate);
  }
  std::cout << "\n; fitted values\n";
  for (std::size_t n = 0; n < r.model.source.channels.size(); ++n) {
    std::string rate = fmt::format("{:.3g}", r.model.source.channels[n].pair_rate);
    if (const auto e = rate.find("e+"); e != std::string::npos) rate.replace(e, rate.find_first_not_of("+0", e + 1) - e, "e");
    std::cout << fmt::format("[channel {}]\nrate = {} /s\n", n + 1, rate);
  }
  for (const auto& node : r.model.nodes) {
    std::cout << fmt::format("[node {}]\nextra_loss = {:.2f} dB\n", node.name, node.fiber.extra_loss_db);
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path p = fs::path(run_dir) / "report.json";
  std::ifstream in(p);
  if (!in) throw ValidationError(fmt::format("no report.json in '{}'", run_dir));
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("'{}' is not JSON: {}", p.string(), e.what()));
  }
  std::cout << report_text(report_from_json(j));
  return 0;
}

int cmd_inspect(const std::string& target) {
  std::vector<fs::path> files;
  if (fs::is_directory(target)) {
    for (const auto& e : fs::directory_iterator(target)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(target);
  }
  if (files.empty()) throw ValidationError(fmt::format("no timetag files in '{}'", target));
  std::vector<std::vector<std::byte>> segs;
  for (const auto& f : files) {
    segs.push_back(read_bytes(f));
    const TimetagHeader h = decode_timetag_header(segs.back());
    const auto setting = h.basis < 6 ? std::string(to_string(static_cast<Eigenstate>(h.basis))) : "?";
    std::cout << fmt::format("{}: node {} setting {} epoch {} events {}\n", f.filename().string(), h.node, setting,
                             h.epoch_start, (segs.back().size() - kTimetagHeaderBytes) / 4);
  }
  const EventStream s = decode_segments(segs);
  if (s.empty()) {
    std::cout << "empty stream\n";
    return 0;
  }
  const double span_s = static_cast<double>(s.events.back().bin - s.events.front().bin) * kBinNs * 1e-9;
  std::cout << fmt::format("total {} events, bins {}..{}, span {:.3f} s", s.size(), s.events.front().bin,
                           s.events.back().bin, span_s);
  if (span_s > 0.0) {
    std::cout << fmt::format(", {:.1f} events/s, {:.3f} Mb/s", static_cast<double>(s.size()) / span_s,
                             stream_demand_bps(s.size(), span_s) * 1e-6);
  }
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale quantum LAN simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, timetag_path;
  std::optional<std::uint64_t> seed;
  bool timetags = false;

  auto* run = app.add_subcommand("run", "Run a scenario and print its report");
  run->add_option("config", config_path, "Scenario file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Write report.txt and report.json here");
  run->add_flag("--save-timetags", timetags, "Also write the aligned captures as timetag segments");

  auto* opt = app.add_subcommand("optimize", "Show the allocation a scenario resolves to, with predictions");
  opt->add_option("config", config_path, "Scenario file")->required();

  auto* cal = app.add_subcommand("calibrate", "Fit channel rates and node losses to a scenario's targets");
  cal->add_option("config", config_path, "Scenario file with [target ...] sections")->required();

  auto* rep = app.add_subcommand("report", "Print the report stored in a run directory");
  rep->add_option("run-dir", run_dir, "Directory written by 'run --out'")->required();

  auto* ins = app.add_subcommand("inspect-timetags", "Summarize a timetag segment file or directory");
  ins->add_option("file", timetag_path, "Segment file or directory of segments")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(config_path, seed, out_dir, timetags);
    if (*opt) return cmd_optimize(config_path);
    if (*cal) return cmd_calibrate(config_path);
    if (*rep) return cmd_report(run_dir);
    if (*ins) return cmd_inspect(timetag_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.category() == ErrorCategory::Validation ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
