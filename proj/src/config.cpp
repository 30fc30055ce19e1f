#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "qlan/error.hpp"
#include "qlan/harness.hpp"

namespace qlan {

namespace {

namespace pt = boost::property_tree;

enum class Dim { None, Time, Frequency, Rate, Length, Loss, Attenuation, Angle, Bitrate, Bins, Drift };

struct Unit {
  std::string_view name;
  double scale;  // to the base unit of the dimension
};

// Base units: s, Hz, 1/s, m, dB, dB/km, rad, b/s, bins, ns/s.
std::span<const Unit> units_of(Dim d) {
  static constexpr Unit time[] = {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}};
  static constexpr Unit freq[] = {{"THz", 1e12}, {"GHz", 1e9}, {"MHz", 1e6}, {"kHz", 1e3}, {"Hz", 1.0}};
  static constexpr Unit rate[] = {{"/s", 1.0}, {"1/s", 1.0}, {"cps", 1.0}, {"k/s", 1e3}, {"M/s", 1e6}};
  static constexpr Unit length[] = {{"m", 1.0}, {"km", 1e3}};
  static constexpr Unit loss[] = {{"dB", 1.0}};
  static constexpr Unit atten[] = {{"dB/km", 1.0}, {"dB/m", 1e3}};
  static constexpr Unit angle[] = {{"rad", 1.0}, {"mrad", 1e-3}, {"deg", M_PI / 180.0}};
  static constexpr Unit bitrate[] = {{"b/s", 1.0}, {"kb/s", 1e3}, {"Mb/s", 1e6}, {"Gb/s", 1e9}};
  static constexpr Unit bins[] = {{"bins", 1.0}, {"bin", 1.0}};
  static constexpr Unit drift[] = {{"ns/s", 1.0}, {"ps/s", 1e-3}};
  switch (d) {
    case Dim::None:
      return {};
    case Dim::Time:
      return time;
    case Dim::Frequency:
      return freq;
    case Dim::Rate:
      return rate;
    case Dim::Length:
      return length;
    case Dim::Loss:
      return loss;
    case Dim::Attenuation:
      return atten;
    case Dim::Angle:
      return angle;
    case Dim::Bitrate:
      return bitrate;
    case Dim::Bins:
      return bins;
    case Dim::Drift:
      return drift;
  }
  return {};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// One INI section with key bookkeeping, so leftovers can be reported.
class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)) {
    for (const auto& [k, v] : tree) {
      if (!v.empty()) throw ValidationError(fmt::format("[{}] {}: nested keys are not allowed", name_, k));
      values_[trim(k)] = trim(v.data());
    }
  }

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string text(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError(fmt::format("[{}] is missing '{}'", name_, key));
    return it->second;
  }
  std::string text(const std::string& key, const std::string& fallback) { return has(key) ? text(key) : fallback; }

  double quantity(const std::string& key, Dim dim) { return parse_quantity(key, text(key), dim); }
  double quantity(const std::string& key, Dim dim, double fallback) {
    return has(key) ? quantity(key, dim) : fallback;
  }

  std::int64_t integer(const std::string& key) {
    const std::string v = text(key);
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw ValidationError(fmt::format("[{}] {}: '{}' is not an integer", name_, key, v));
    }
    return out;
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = text(key);
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ValidationError(fmt::format("[{}] {}: '{}' is not a boolean", name_, key, v));
  }

  void mark_used(const std::string& key) { used_.insert(key); }

  void check_all_used() const {
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) throw ValidationError(fmt::format("[{}] unknown key '{}'", name_, k));
    }
  }

  double parse_quantity(const std::string& key, const std::string& v, Dim dim) const {
    const auto space = v.find_first_of(" \t");
    const std::string number = v.substr(0, space);
    const std::string unit = space == std::string::npos ? "" : trim(v.substr(space));
    double x = 0.0;
    const auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), x);
    if (ec != std::errc() || p != number.data() + number.size() || !std::isfinite(x)) {
      throw ValidationError(fmt::format("[{}] {}: '{}' is not a number", name_, key, number));
    }
    const auto allowed = units_of(dim);
    if (allowed.empty()) {
      if (!unit.empty()) throw ValidationError(fmt::format("[{}] {}: expected a bare number, got unit '{}'", name_, key, unit));
      return x;
    }
    for (const auto& u : allowed) {
      if (u.name == unit) return x * u.scale;
    }
    std::string names;
    for (const auto& u : allowed) names += (names.empty() ? "" : ", ") + std::string(u.name);
    if (unit.empty()) {
      throw ValidationError(fmt::format("[{}] {}: '{}' needs a unit (one of {})", name_, key, v, names));
    }
    throw ValidationError(fmt::format("[{}] {}: unit '{}' is not one of {}", name_, key, unit, names));
  }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

void read_node(Section& s, NodeOptics& n) {
  if (s.has("detector")) {
    n.detector = parse_detector_kind(s.text("detector")) == DetectorKind::APD ? DetectorModel::apd()
                                                                              : DetectorModel::snspd();
  }
  n.detector.efficiency = s.quantity("efficiency", Dim::None, n.detector.efficiency);
  n.detector.dark_count_rate = s.quantity("dark_count", Dim::Rate, n.detector.dark_count_rate);
  n.detector.jitter_sigma_ns = s.quantity("jitter", Dim::Time, n.detector.jitter_sigma_ns * 1e-9) * 1e9;
  n.detector.dead_time_ns = s.quantity("dead_time", Dim::Time, n.detector.dead_time_ns * 1e-9) * 1e9;
  n.fiber.length_m = s.quantity("fiber", Dim::Length, n.fiber.length_m);
  n.fiber.attenuation_db_per_km = s.quantity("attenuation", Dim::Attenuation, n.fiber.attenuation_db_per_km);
  n.fiber.extra_loss_db = s.quantity("extra_loss", Dim::Loss, n.fiber.extra_loss_db);
  n.wss_loss_db = s.quantity("wss_loss", Dim::Loss, n.wss_loss_db);
  n.clock.mean_offset_ns = s.quantity("clock_offset", Dim::Time, n.clock.mean_offset_ns * 1e-9) * 1e9;
  n.clock.jitter_sigma_ns = s.quantity("clock_jitter", Dim::Time, n.clock.jitter_sigma_ns * 1e-9) * 1e9;
  n.clock.drift_ns_per_s = s.quantity("clock_drift", Dim::Drift, n.clock.drift_ns_per_s);
}

double werner_p(double fidelity) {
  if (!(fidelity >= 0.25 && fidelity <= 1.0)) {
    throw ValidationError(fmt::format("Werner fidelity {} outside [0.25, 1]", fidelity));
  }
  return (4.0 * fidelity - 1.0) / 3.0;
}

}  // namespace

void MeasurementConfig::validate() const {
  if (epoch < 0) throw ValidationError("measurement epoch must be non-negative");
  if (!(duration_s > 0.0)) throw ValidationError("measurement duration must be positive");
  window_half_width_bins(window_ns);
  if (search_range_bins < 0) throw ValidationError("offset search range must be non-negative");
  if (bootstrap_resamples < 2) throw ValidationError("bootstrap needs at least two resamples");
}

void TransportConfig::validate() const {
  if (!(capacity_bps > 0.0)) throw ValidationError("data-plane capacity must be positive");
  channel.validate();
  for (const auto& [node, d] : command_delay_s) {
    if (!(d >= 0.0)) throw ValidationError(fmt::format("command delay to {} must be non-negative", node));
  }
  if (!(timeout_s > 0.0)) throw ValidationError("control timeout must be positive");
  if (!(arm_lead_s >= 0.0)) throw ValidationError("arm lead must be non-negative");
}

void ScenarioConfig::validate() const {
  model.validate();
  // Calibration files carry targets instead of an allocation.
  if (allocation && objective) throw ValidationError("a scenario takes [allocation] or [objective], not both");
  if (!allocation && !objective && targets.empty()) {
    throw ValidationError("a scenario needs an [allocation], an [objective] or calibration targets");
  }
  const auto names = model.node_names();
  auto known = [&](const NodeId& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  if (allocation) {
    if (allocation->empty()) throw ValidationError("allocation assigns no links");
    allocation->validate(model.plan);
    for (const auto& [link, chans] : allocation->links()) {
      if (!known(link.first()) || !known(link.second())) {
        throw ValidationError(fmt::format("allocation link {} names an unknown node", link.label()));
      }
      if (chans.empty()) throw ValidationError(fmt::format("allocation link {} has no channels", link.label()));
    }
  }
  if (objective) objective->validate(model);
  for (const auto& t : targets) t.validate(model);
  calibration.validate();
  measurement.validate();
  if (measurement.window_ns != model.window_ns) throw ValidationError("window settings disagree");
  transport.validate();
  for (const auto& [node, d] : transport.command_delay_s) {
    if (!known(node)) throw ValidationError(fmt::format("command delay names unknown node {}", node));
  }
  for (const auto& node : transport.unreachable) {
    if (!known(node)) throw ValidationError(fmt::format("unreachable list names unknown node {}", node));
  }
}

ScenarioConfig parse_config(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(fmt::format("config line {}: {}", e.line(), e.message()));
  }

  std::map<std::string, Section> sections;
  std::vector<std::string> order;
  for (const auto& [name, sub] : tree) {
    const std::string key = trim(name);
    if (sub.empty() && !sub.data().empty()) throw ValidationError(fmt::format("key '{}' outside any section", key));
    sections.emplace(key, Section(key, sub));
    order.push_back(key);
  }
  auto section = [&](const std::string& name) -> Section* {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  };

  ScenarioConfig c;
  std::set<std::string> handled;

  if (Section* s = section("scenario")) {
    c.name = s->text("name", c.name);
    c.label = s->text("label", c.label);
    c.seed = static_cast<std::uint64_t>(s->integer("seed", static_cast<std::int64_t>(c.seed)));
    handled.insert("scenario");
  }
  if (Section* s = section("plan")) {
    c.model.plan.center_thz = s->quantity("center", Dim::Frequency, c.model.plan.center_thz * 1e12) * 1e-12;
    c.model.plan.channel_width_ghz = s->quantity("width", Dim::Frequency, c.model.plan.channel_width_ghz * 1e9) * 1e-9;
    c.model.plan.pair_count = static_cast<int>(s->integer("pairs", c.model.plan.pair_count));
    handled.insert("plan");
  }
  c.model.plan.validate();

  Section* src = section("source");
  if (!src) throw ValidationError("config has no [source] section");
  handled.insert("source");
  const Bell bell = parse_bell(src->text("bell", "psi+"));
  const double base_fidelity = src->quantity("fidelity", Dim::None, 1.0);
  const double step = src->quantity("rotation_step", Dim::Angle, 0.0);
  const bool has_default_rate = src->has("rate");
  const double default_rate = has_default_rate ? src->quantity("rate", Dim::Rate) : 0.0;
  c.model.source.compensate_link_rotation = src->boolean("compensate_rotation", true);
  for (int n = 1; n <= c.model.plan.pair_count; ++n) {
    ChannelSource ch;
    ch.rotation_rad = step * (n - 1);
    double f = base_fidelity;
    Section* cs = section(fmt::format("channel {}", n));
    if (cs) {
      handled.insert(cs->name());
      ch.pair_rate = cs->quantity("rate", Dim::Rate, default_rate);
      ch.rotation_rad = cs->quantity("rotation", Dim::Angle, ch.rotation_rad);
      f = cs->quantity("fidelity", Dim::None, f);
      cs->check_all_used();
    } else if (has_default_rate) {
      ch.pair_rate = default_rate;
    } else {
      throw ValidationError(fmt::format("channel {} has no pair rate", n));
    }
    ch.pair_state = werner_state(werner_p(f), bell);
    c.model.source.channels.push_back(ch);
  }

  std::uint16_t next_id = 0;
  for (const auto& name : order) {
    if (name.rfind("node ", 0) != 0) continue;
    Section& s = sections.at(name);
    NodeOptics n;
    n.name = trim(name.substr(5));
    n.id = static_cast<std::uint16_t>(s.integer("id", next_id));
    read_node(s, n);
    next_id = static_cast<std::uint16_t>(n.id + 1);
    c.model.nodes.push_back(n);
    handled.insert(name);
  }

  if (Section* s = section("allocation")) {
    Allocation a;
    for (const auto& [k, v] : s->values()) {
      s->mark_used(k);
      a.assign(Link::parse(k), parse_channels(v));
    }
    c.allocation = a;
    handled.insert("allocation");
  }
  if (Section* s = section("objective")) {
    Objective o;
    o.kind = parse_objective_kind(s->text("kind"));
    for (const auto& l : split_list(s->text("links"))) o.links.push_back(Link::parse(l));
    if (s->has("reserve")) o.reserve = parse_channels(s->text("reserve"));
    o.min_rate = s->quantity("min_rate", Dim::Rate, o.min_rate);
    o.use_all_channels = s->boolean("use_all_channels", false);
    c.objective = o;
    handled.insert("objective");
  }
  if (Section* s = section("measurement")) {
    auto& m = c.measurement;
    const double epoch = s->quantity("epoch", Dim::Time, static_cast<double>(m.epoch));
    if (epoch != std::floor(epoch)) throw ValidationError("[measurement] epoch must be a whole second");
    m.epoch = static_cast<std::int64_t>(epoch);
    m.duration_s = s->quantity("duration", Dim::Time, m.duration_s);
    m.window_ns = s->quantity("window", Dim::Time, m.window_ns * 1e-9) * 1e9;
    // Round away floating noise from unit scaling (10 ns -> 1e-8 s -> 10 ns).
    m.window_ns = std::round(m.window_ns * 1e6) / 1e6;
    m.search_range_bins = std::llround(s->quantity("search_range", Dim::Bins, static_cast<double>(m.search_range_bins)));
    m.bootstrap_resamples = static_cast<int>(s->integer("bootstrap", m.bootstrap_resamples));
    handled.insert("measurement");
  }
  c.model.window_ns = c.measurement.window_ns;
  if (Section* s = section("transport")) {
    auto& t = c.transport;
    t.capacity_bps = s->quantity("capacity", Dim::Bitrate, t.capacity_bps);
    t.channel.delay_s = s->quantity("delay", Dim::Time, t.channel.delay_s);
    t.channel.jitter_s = s->quantity("jitter", Dim::Time, t.channel.jitter_s);
    t.channel.drop_rate = s->quantity("drop_rate", Dim::None, t.channel.drop_rate);
    t.channel.retransmit_s = s->quantity("retransmit", Dim::Time, t.channel.retransmit_s);
    t.timeout_s = s->quantity("timeout", Dim::Time, t.timeout_s);
    t.arm_lead_s = s->quantity("arm_lead", Dim::Time, t.arm_lead_s);
    if (s->has("unreachable")) {
      for (const auto& n : split_list(s->text("unreachable"))) t.unreachable.insert(n);
    }
    for (const auto& [k, v] : s->values()) {
      const std::string prefix = "command_delay:";
      if (k.rfind(prefix, 0) == 0) {
        s->mark_used(k);
        t.command_delay_s[trim(k.substr(prefix.size()))] = s->parse_quantity(k, v, Dim::Time);
      }
    }
    handled.insert("transport");
  }

  for (const auto& name : order) {
    if (name.rfind("target ", 0) != 0) continue;
    Section& s = sections.at(name);
    CalibrationTarget t;
    t.name = trim(name.substr(7));
    t.link = Link::parse(s.text("link"));
    t.channels = parse_channels(s.text("channels"));
    t.fidelity = s.quantity("fidelity", Dim::None);
    t.coincidence_rate = s.quantity("rate", Dim::Rate);
    c.targets.push_back(t);
    handled.insert(name);
  }
  if (Section* s = section("calibration")) {
    auto& o = c.calibration;
    o.fidelity_tolerance = s->quantity("fidelity_tolerance", Dim::None, o.fidelity_tolerance);
    o.rate_tolerance = s->quantity("rate_tolerance", Dim::None, o.rate_tolerance);
    o.smoothness = s->quantity("smoothness", Dim::None, o.smoothness);
    handled.insert("calibration");
  }

  for (auto& [name, s] : sections) {
    if (!handled.count(name)) throw ValidationError(fmt::format("unknown section [{}]", name));
    s.check_all_used();
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace qlan
