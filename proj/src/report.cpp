#include <fstream>

#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/harness.hpp"

namespace qlan {

namespace {

constexpr const char* kSchema = "qlan.run-report/1";

Json metrics_to_json(const LinkMetrics& m) {
  return {{"fidelity", m.fidelity},
          {"fidelity_sigma", m.fidelity_sigma},
          {"log_negativity", m.log_negativity},
          {"log_negativity_sigma", m.log_negativity_sigma},
          {"coincidence_rate", m.coincidence_rate},
          {"coincidence_rate_sigma", m.coincidence_rate_sigma},
          {"ebit_rate", m.ebit_rate},
          {"ebit_rate_sigma", m.ebit_rate_sigma}};
}

LinkMetrics metrics_from_json(const Json& j) {
  LinkMetrics m;
  m.fidelity = j.at("fidelity").get<double>();
  m.fidelity_sigma = j.at("fidelity_sigma").get<double>();
  m.log_negativity = j.at("log_negativity").get<double>();
  m.log_negativity_sigma = j.at("log_negativity_sigma").get<double>();
  m.coincidence_rate = j.at("coincidence_rate").get<double>();
  m.coincidence_rate_sigma = j.at("coincidence_rate_sigma").get<double>();
  m.ebit_rate = j.at("ebit_rate").get<double>();
  m.ebit_rate_sigma = j.at("ebit_rate_sigma").get<double>();
  return m;
}

}  // namespace

std::string report_text(const RunReport& r) {
  std::string out = fmt::format("Scenario {} (seed {}), {:g} s per link, {:g} ns window\n\n", r.scenario, r.seed,
                                r.duration_s, r.window_ns);
  out += fmt::format("{:<6} {:<5} {:<6} {:<15} {:<15} {}\n", "Alloc", "Link", "Ch.", "Fidelity", "E_N",
                     "R_E (ebits/s)");
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    out += fmt::format("{:<6} {:<5} {:<6} {:<15} {:<15} {}\n", r.label.empty() ? "-" : r.label, row.link.label(),
                       format_channels(row.channels),
                       fmt::format("{:.3f} ± {:.3f}", m.fidelity, m.fidelity_sigma),
                       fmt::format("{:.3f} ± {:.3f}", m.log_negativity, m.log_negativity_sigma),
                       fmt::format("{:.0f} ± {:.0f}", m.ebit_rate, m.ebit_rate_sigma));
  }
  out += fmt::format("\nMean fidelity {:.3f}\n\n", r.mean_fidelity());

  out += fmt::format("{:<5} {:>9} {:>10} {:>12} {:>10} {:>10} {:>10} {:>8} {:>10} {:>15} {:>13}\n", "Link",
                     "Coinc.", "Acc.", "Rate (1/s)", "F pred.", "F sub.", "R_E sub.", "Offset", "Resid. ns",
                     "Epochs sig/idl", "Mb/s sig/idl");
  for (const auto& row : r.rows) {
    out += fmt::format("{:<5} {:>9} {:>10.1f} {:>12.2f} {:>10.3f} {:>10.3f} {:>10.0f} {:>8} {:>10.1f} {:>15} {:>13}\n",
                       row.link.label(), row.coincidences, row.accidental_estimate, row.metrics.coincidence_rate,
                       row.predicted_fidelity, row.subtracted.fidelity, row.subtracted.ebit_rate,
                       fmt::format("{}{}", row.offset_bins, row.peak_significant ? "" : "?"), row.residual_ns,
                       fmt::format("{}/{}", row.signal_epoch, row.idler_epoch),
                       fmt::format("{:.2f}/{:.2f}", row.signal_demand_bps * 1e-6, row.idler_demand_bps * 1e-6));
  }
  out += fmt::format("\nData plane: peak stream {:.2f} Mb/s, peak total {:.2f} Mb/s of {:.0f} Mb/s, {} deferred\n",
                     r.peak_stream_bps * 1e-6, r.peak_total_bps * 1e-6, r.capacity_bps * 1e-6, r.deferred_transfers);
  return out;
}

Json report_to_json(const RunReport& r) {
  Json links = Json::array();
  for (const auto& row : r.rows) {
    const auto s = row.state.serialize();
    links.push_back({{"link", row.link.label()},
                     {"channels", std::vector<int>(row.channels.begin(), row.channels.end())},
                     {"metrics", metrics_to_json(row.metrics)},
                     {"subtracted", metrics_to_json(row.subtracted)},
                     {"state", std::vector<double>(s.begin(), s.end())},
                     {"coincidences", row.coincidences},
                     {"accidental_estimate", row.accidental_estimate},
                     {"singles_signal", row.singles_signal},
                     {"singles_idler", row.singles_idler},
                     {"predicted_fidelity", row.predicted_fidelity},
                     {"predicted_rate", row.predicted_rate},
                     {"timing",
                      {{"scheduled_epoch", row.scheduled_epoch},
                       {"signal_epoch", row.signal_epoch},
                       {"idler_epoch", row.idler_epoch},
                       {"epoch_correction_bins", row.epoch_correction_bins},
                       {"offset_bins", row.offset_bins},
                       {"residual_ns", row.residual_ns},
                       {"peak_significant", row.peak_significant}}},
                     {"demand_bps", {{"signal", row.signal_demand_bps}, {"idler", row.idler_demand_bps}}}});
  }
  return {{"schema", kSchema},
          {"scenario", r.scenario},
          {"label", r.label},
          {"seed", r.seed},
          {"duration_s", r.duration_s},
          {"window_ns", r.window_ns},
          {"links", links},
          {"budget",
           {{"capacity_bps", r.capacity_bps},
            {"peak_stream_bps", r.peak_stream_bps},
            {"peak_total_bps", r.peak_total_bps},
            {"deferred_transfers", r.deferred_transfers}}}};
}

RunReport report_from_json(const Json& j) {
  try {
    if (j.at("schema").get<std::string>() != kSchema) throw ValidationError("unsupported report schema");
    RunReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.duration_s = j.at("duration_s").get<double>();
    r.window_ns = j.at("window_ns").get<double>();
    for (const auto& l : j.at("links")) {
      LinkRow row;
      row.link = Link::parse(l.at("link").get<std::string>());
      const auto chans = l.at("channels").get<std::vector<int>>();
      row.channels = std::set<int>(chans.begin(), chans.end());
      row.metrics = metrics_from_json(l.at("metrics"));
      row.subtracted = metrics_from_json(l.at("subtracted"));
      const auto s = l.at("state").get<std::vector<double>>();
      if (s.size() != 32) throw ValidationError("state needs 32 numbers");
      row.state = TwoQubitState::deserialize(std::span<const double, 32>(s.data(), 32));
      row.coincidences = l.at("coincidences").get<std::int64_t>();
      row.accidental_estimate = l.at("accidental_estimate").get<double>();
      row.singles_signal = l.at("singles_signal").get<std::int64_t>();
      row.singles_idler = l.at("singles_idler").get<std::int64_t>();
      row.predicted_fidelity = l.at("predicted_fidelity").get<double>();
      row.predicted_rate = l.at("predicted_rate").get<double>();
      const Json& t = l.at("timing");
      row.scheduled_epoch = t.at("scheduled_epoch").get<std::int64_t>();
      row.signal_epoch = t.at("signal_epoch").get<std::int64_t>();
      row.idler_epoch = t.at("idler_epoch").get<std::int64_t>();
      row.epoch_correction_bins = t.at("epoch_correction_bins").get<std::int64_t>();
      row.offset_bins = t.at("offset_bins").get<std::int64_t>();
      row.residual_ns = t.at("residual_ns").get<double>();
      row.peak_significant = t.at("peak_significant").get<bool>();
      row.signal_demand_bps = l.at("demand_bps").at("signal").get<double>();
      row.idler_demand_bps = l.at("demand_bps").at("idler").get<double>();
      r.rows.push_back(std::move(row));
    }
    const Json& b = j.at("budget");
    r.capacity_bps = b.at("capacity_bps").get<double>();
    r.peak_stream_bps = b.at("peak_stream_bps").get<double>();
    r.peak_total_bps = b.at("peak_total_bps").get<double>();
    r.deferred_transfers = b.at("deferred_transfers").get<int>();
    r.validate();
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("malformed report: {}", e.what()));
  }
}

void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path) {
  report.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(fmt::format("cannot write '{}'", path.string()));
  if (format == ReportFormat::Text) {
    out << report_text(report);
  } else {
    out << report_to_json(report).dump(2) << '\n';
  }
  if (!out) throw RuntimeFailure(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace qlan
