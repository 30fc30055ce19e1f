#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <doctest.h>

#include "qlan/error.hpp"
#include "qlan/harness.hpp"

using namespace qlan;

namespace {

const std::filesystem::path kScenarios = QLAN_SCENARIO_DIR;

ScenarioConfig short_run(const std::string& name, double duration_s = 4.0) {
  ScenarioConfig c = load_config(kScenarios / (name + ".cfg"));
  c.measurement.duration_s = duration_s;
  c.measurement.bootstrap_resamples = 20;
  return c;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimal = R"(
[scenario]
name = tiny
seed = 3
[plan]
center = 192.3125 THz
width = 25 GHz
pairs = 2
[source]
bell = psi+
fidelity = 0.95
[channel 1]
rate = 1e5 /s
[channel 2]
rate = 1e5 /s
[node A]
id = 0
detector = snspd
fiber = 1 km
[node B]
id = 1
detector = apd
fiber = 2 km
[allocation]
A-B = 1-2
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("config parsing reads units") {
  const ScenarioConfig c = parse_config(kMinimal);
  CHECK(c.name == "tiny");
  CHECK(c.seed == 3);
  CHECK(c.model.plan.pair_count == 2);
  CHECK(c.model.node("A").fiber.length_m == doctest::Approx(1000.0));
  CHECK(c.model.node("B").detector.kind == DetectorKind::APD);
  CHECK(c.model.source.channel(2).pair_rate == doctest::Approx(1e5));
  CHECK(c.allocation.has_value());
  CHECK(parse_config(replace(kMinimal, "fiber = 1 km", "fiber = 1000 m")).model.node("A").fiber.length_m ==
        doctest::Approx(1000.0));
}

TEST_CASE("config errors name the section and key") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string no_unit = message(replace(kMinimal, "fiber = 1 km", "fiber = 1"));
  CHECK(no_unit.find("node A") != std::string::npos);
  CHECK(no_unit.find("fiber") != std::string::npos);
  const std::string wrong_unit = message(replace(kMinimal, "fiber = 1 km", "fiber = 1 ns"));
  CHECK(wrong_unit.find("fiber") != std::string::npos);
  CHECK(message(replace(kMinimal, "A-B = 1-2", "A-B = 1-3")) != "no error");
  CHECK(message(replace(kMinimal, "pairs = 2", "pairs = 3")) != "no error");
  CHECK(message(std::string(kMinimal) + "[bogus]\nx = 1\n") != "no error");
  CHECK(message(replace(kMinimal, "seed = 3", "seed = 3\ncolour = red")) != "no error");
  CHECK_THROWS_AS(load_config(kScenarios / "missing.cfg"), ValidationError);
}

TEST_CASE("bundled scenarios parse") {
  for (const char* name : {"allocation1", "allocation2", "balance"}) {
    const ScenarioConfig c = load_config(kScenarios / (std::string(name) + ".cfg"));
    CHECK_NOTHROW(c.validate());
    CHECK(c.model.nodes.size() == 3);
  }
  CHECK(load_config(kScenarios / "balance.cfg").objective.has_value());
}

TEST_CASE("target sections parse and are checked") {
  const std::string target = "[target t]\nlink = A-B\nchannels = 1\nfidelity = 0.8\nrate = 50 /s\n";
  const ScenarioConfig c = parse_config(std::string(kMinimal) + target + "[calibration]\nsmoothness = 0.5\n");
  REQUIRE(c.targets.size() == 1);
  CHECK(c.targets[0].name == "t");
  CHECK(c.targets[0].channels == std::set<int>{1});
  CHECK(c.targets[0].coincidence_rate == 50.0);
  CHECK(c.calibration.smoothness == 0.5);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + replace(target, "50 /s", "50")), ValidationError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + replace(target, "= 1\n", "= 3\n")), ValidationError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "[calibration]\nrate_tolerance = -1\n"), ValidationError);
}

TEST_CASE("bundled model is the fit of the calibration scenario") {
  const ScenarioConfig c = load_config(kScenarios / "calibration.cfg");
  CHECK_FALSE(c.allocation.has_value());
  REQUIRE(c.targets.size() == 6);
  const CalibrationResult r = calibrate(c.model, c.targets, c.calibration);
  CHECK(r.converged);
  const NetworkModel bundled = calibrated_model();
  for (std::size_t n = 0; n < bundled.source.channels.size(); ++n) {
    // Bundled rates keep three significant figures, so half a unit in the third is at most 0.5%.
    CHECK(r.model.source.channels[n].pair_rate ==
          doctest::Approx(bundled.source.channels[n].pair_rate).epsilon(0.005));
  }
  for (std::size_t k = 0; k < bundled.nodes.size(); ++k) {
    CHECK(std::abs(r.model.nodes[k].fiber.extra_loss_db - bundled.nodes[k].fiber.extra_loss_db) <= 0.005);
  }
  for (const char* name : {"allocation1", "allocation2", "balance"}) {
    const ScenarioConfig s = load_config(kScenarios / (std::string(name) + ".cfg"));
    for (std::size_t n = 0; n < bundled.source.channels.size(); ++n) {
      CHECK(s.model.source.channels[n].pair_rate == bundled.source.channels[n].pair_rate);
    }
    for (std::size_t k = 0; k < bundled.nodes.size(); ++k) {
      CHECK(s.model.nodes[k].fiber.extra_loss_db == bundled.nodes[k].fiber.extra_loss_db);
    }
  }
}

TEST_CASE("allocation 1 reports three links with the table columns") {
  const RunReport r = run_scenario(short_run("allocation1"));
  REQUIRE(r.rows.size() == 3);
  CHECK(r.row(Link("A", "B")).channels == std::set<int>{1});
  CHECK(r.row(Link("B", "C")).channels == std::set<int>{2, 3, 4, 5, 6, 7});
  CHECK(r.row(Link("C", "A")).channels == std::set<int>{8});
  for (const auto& row : r.rows) {
    CHECK(row.peak_significant);
    CHECK(row.coincidences > 0);
    CHECK(row.signal_epoch == row.scheduled_epoch);
    CHECK(row.idler_epoch == row.scheduled_epoch);
  }
  const std::string text = report_text(r);
  for (const char* col : {"Alloc", "Link", "Ch.", "Fidelity", "E_N", "R_E"}) CHECK(text.find(col) != std::string::npos);
  CHECK(text.find("2-7") != std::string::npos);
  CHECK(text.find("±") != std::string::npos);
}

TEST_CASE("runs are deterministic to the byte") {
  const ScenarioConfig c = short_run("allocation2", 8.0);
  const RunReport a = run_scenario(c);
  const RunReport b = run_scenario(c);
  CHECK(a == b);
  CHECK(report_text(a) == report_text(b));
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  ScenarioConfig other = c;
  other.seed += 1;
  CHECK_FALSE(run_scenario(other) == a);
}

TEST_CASE("ideal hardware approaches unit fidelity and one ebit per pair") {
  ScenarioConfig c = short_run("allocation1", 20.0);
  // About 1e5 pairs/s per link; B-C carries channels 2-7.
  for (int n = 1; n <= 8; ++n) {
    c.model.source.channels[n - 1] = {n == 1 || n == 8 ? 1e5 : 1e5 / 6.0, bell_state(Bell::PsiPlus), 0.0};
  }
  for (auto& n : c.model.nodes) {
    n.fiber = FiberLink{n.fiber.length_m, 0.0, 0.0};
    n.detector = DetectorModel{DetectorKind::SNSPD, 1.0, 0.0, 0.0, 0.0};
    n.clock = ClockModel{n.clock.mean_offset_ns, 0.0, 0.0};
    n.wss_loss_db = 0.0;
  }
  const RunReport r = run_scenario(c);
  // What is left is least-squares shot noise plus multi-pair accidentals,
  // together about 5e-3 here.
  for (const auto& row : r.rows) {
    CAPTURE(row.link.label());
    CHECK(row.coincidences > 400000);
    CHECK(row.metrics.fidelity > 0.99);
    CHECK(row.metrics.log_negativity > 0.985);
    CHECK(std::abs(row.residual_ns) < kBinNs);
  }
}

TEST_CASE("report JSON round trip and file output") {
  const RunReport r = run_scenario(short_run("allocation1", 2.0));
  const RunReport back = report_from_json(report_to_json(r));
  CHECK(back == r);
  CHECK_THROWS_AS(report_from_json(Json{{"schema", "other"}}), ValidationError);

  const auto dir = std::filesystem::temp_directory_path();
  const auto txt = dir / "qlan_report_test.txt";
  const auto js = dir / "qlan_report_test.json";
  emit_report(r, ReportFormat::Text, txt);
  emit_report(r, ReportFormat::Json, js);
  CHECK(read_file(txt) == report_text(r));
  CHECK(report_from_json(Json::parse(read_file(js))) == r);
  std::filesystem::remove(txt);
  std::filesystem::remove(js);
}

TEST_CASE("late arm commands never misalign the epochs") {
  const RunReport baseline = run_scenario(short_run("allocation1", 2.0));
  for (double delay : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    CAPTURE(delay);
    ScenarioConfig c = short_run("allocation1", 2.0);
    c.transport.command_delay_s["B"] = delay;
    const RunReport r = run_scenario(c);
    for (const auto& row : r.rows) {
      const auto& base = baseline.row(row.link);
      CHECK(row.offset_bins == base.offset_bins);
      CHECK(row.peak_significant);
      CHECK(row.metrics.fidelity == doctest::Approx(base.metrics.fidelity).epsilon(0.15));
    }
    if (delay >= 1.0) {
      const auto& ab = r.row(Link("A", "B"));
      CHECK(ab.idler_epoch > ab.signal_epoch);
      CHECK(ab.epoch_correction_bins == (ab.idler_epoch - ab.signal_epoch) * kBinsPerSecond);
    }
  }
}

TEST_CASE("an unreachable node fails the arm stage") {
  ScenarioConfig c = short_run("allocation1", 2.0);
  c.transport.unreachable.insert("C");
  c.transport.timeout_s = 2.0;
  try {
    run_scenario(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "arm");
    CHECK(e.category() == ErrorCategory::Runtime);
    CHECK(std::string(e.what()).find("C") != std::string::npos);
  }
}

TEST_CASE("invalid configs fail before anything runs") {
  ScenarioConfig c = short_run("allocation1", 2.0);
  c.measurement.window_ns = 3.0;
  try {
    run_scenario(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "validate");
    CHECK(e.category() == ErrorCategory::Validation);
  }
}

TEST_CASE("objective scenarios resolve through the optimizer") {
  const ScenarioConfig c = load_config(kScenarios / "balance.cfg");
  const Allocation a = resolve_allocation(c);
  CHECK(a == optimize(*c.objective, c.model));
  ScenarioConfig none = c;
  none.objective.reset();
  none.allocation.reset();
  CHECK_THROWS_AS(resolve_allocation(none), ValidationError);
}
