#include "qlan/spectrum.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "qlan/error.hpp"

namespace qlan {

namespace {

constexpr double kFreqEps = 1e-9;  // THz

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError(fmt::format("expected integer, got '{}'", s));
  }
  return v;
}

double parse_double(std::string_view s) {
  s = trim(s);
  std::string tmp(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tmp, &used);
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("expected number, got '{}'", s));
  }
  if (used != tmp.size()) throw ValidationError(fmt::format("expected number, got '{}'", s));
  return v;
}

}  // namespace

void ChannelPlan::validate() const {
  if (pair_count < 1) throw ValidationError("channel plan needs at least one pair");
  if (!(channel_width_ghz > 0.0)) throw ValidationError("channel width must be positive");
  if (!(center_thz > 0.0)) throw ValidationError("center frequency must be positive");
}

double ChannelPlan::low_edge_thz() const { return center_thz - pair_count * width_thz(); }
double ChannelPlan::high_edge_thz() const { return center_thz + pair_count * width_thz(); }

double channel_frequency(const ChannelPlan& plan, int n, Side side) {
  if (n < 1 || n > plan.pair_count) {
    throw ValidationError(fmt::format("channel {} outside 1..{}", n, plan.pair_count));
  }
  const double delta = plan.width_thz() * (n - 0.5);
  return side == Side::Signal ? plan.center_thz + delta : plan.center_thz - delta;
}

bool FrequencySlice::overlaps(const FrequencySlice& other) const {
  return low_thz < other.high_thz - kFreqEps && other.low_thz < high_thz - kFreqEps;
}

bool FrequencySlice::contains(const FrequencySlice& other) const {
  return other.low_thz >= low_thz - kFreqEps && other.high_thz <= high_thz + kFreqEps;
}

FrequencySlice channel_slice(const ChannelPlan& plan, int n, Side side) {
  const double f = channel_frequency(plan, n, side);
  const double half = plan.width_thz() / 2.0;
  return {f - half, f + half};
}

Link::Link(NodeId a, NodeId b) : first_(std::move(a)), second_(std::move(b)) {
  if (first_.empty() || second_.empty()) throw ValidationError("link endpoints must be named");
  if (first_ == second_) throw ValidationError(fmt::format("link {}-{} joins a node to itself", first_, second_));
}

Link Link::parse(std::string_view text) {
  text = trim(text);
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) throw ValidationError(fmt::format("link '{}' is not of the form X-Y", text));
  return Link(std::string(trim(text.substr(0, dash))), std::string(trim(text.substr(dash + 1))));
}

void Allocation::assign(const Link& link, std::set<int> channels) {
  links_[link] = std::move(channels);
}

const std::set<int>* Allocation::channels(const Link& link) const {
  auto it = links_.find(link);
  return it == links_.end() ? nullptr : &it->second;
}

std::set<int> Allocation::used_channels() const {
  std::set<int> out;
  for (const auto& [link, chans] : links_) out.insert(chans.begin(), chans.end());
  return out;
}

void Allocation::validate(const ChannelPlan& plan) const {
  std::map<int, Link> owner;
  for (const auto& [link, chans] : links_) {
    for (int ch : chans) {
      if (ch < 1 || ch > plan.pair_count) {
        throw ValidationError(fmt::format("link {} uses channel {} outside 1..{}", link.label(), ch, plan.pair_count));
      }
      auto [it, inserted] = owner.emplace(ch, link);
      if (!inserted) {
        throw ValidationError(fmt::format("channel {} assigned to both {} and {}", ch,
                                          it->second.label(), link.label()));
      }
    }
  }
}

std::string format_channels(const std::set<int>& channels) {
  if (channels.empty()) return "-";
  std::vector<int> v(channels.begin(), channels.end());
  const bool contiguous = v.back() - v.front() + 1 == static_cast<int>(v.size());
  if (v.size() == 1) return std::to_string(v.front());
  if (contiguous) return fmt::format("{}-{}", v.front(), v.back());
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::set<int> parse_channels(std::string_view text) {
  std::set<int> out;
  text = trim(text);
  while (!text.empty()) {
    auto comma = text.find_first_of(", ");
    std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : trim(text.substr(comma + 1));
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.insert(parse_int(item));
    } else {
      const int lo = parse_int(item.substr(0, dash));
      const int hi = parse_int(item.substr(dash + 1));
      if (hi < lo) throw ValidationError(fmt::format("channel range '{}' is reversed", item));
      for (int c = lo; c <= hi; ++c) out.insert(c);
    }
  }
  return out;
}

WssConfig::WssConfig(std::vector<WssRoute> routes) : routes_(std::move(routes)) {
  std::stable_sort(routes_.begin(), routes_.end(),
                   [](const WssRoute& a, const WssRoute& b) { return a.slice.low_thz < b.slice.low_thz; });
}

std::set<NodeId> WssConfig::ports() const {
  std::set<NodeId> out;
  for (const auto& r : routes_) out.insert(r.port);
  return out;
}

std::optional<NodeId> WssConfig::port_at(double f_thz) const {
  for (const auto& r : routes_) {
    if (r.slice.contains(f_thz)) return r.port;
  }
  return std::nullopt;
}

void WssConfig::validate(const ChannelPlan* plan) const {
  for (std::size_t i = 0; i < routes_.size(); ++i) {
    const auto& r = routes_[i];
    if (!(r.slice.high_thz > r.slice.low_thz)) {
      throw ValidationError(fmt::format("WSS slice [{}, {}] is empty", r.slice.low_thz, r.slice.high_thz));
    }
    if (r.port.empty()) throw ValidationError("WSS slice without output port");
    if (r.attenuation_db < 0.0) throw ValidationError("WSS attenuation must be non-negative");
    if (plan) {
      const FrequencySlice span{plan->low_edge_thz(), plan->high_edge_thz()};
      if (!span.contains(r.slice)) {
        throw ValidationError(fmt::format("WSS slice [{:.6f}, {:.6f}] THz outside source spectrum",
                                          r.slice.low_thz, r.slice.high_thz));
      }
    }
    if (i + 1 < routes_.size() && r.slice.overlaps(routes_[i + 1].slice)) {
      throw ValidationError(fmt::format("WSS slices overlap at {:.6f} THz", routes_[i + 1].slice.low_thz));
    }
  }
}

std::string WssConfig::to_text() const {
  std::string out;
  for (const auto& r : routes_) {
    out += fmt::format("{}, {}, {}", r.slice.low_thz, r.slice.high_thz, r.port);
    if (r.attenuation_db != WssRoute{}.attenuation_db) out += fmt::format(", {}", r.attenuation_db);
    out += '\n';
  }
  return out;
}

WssConfig WssConfig::from_text(std::string_view text) {
  std::vector<WssRoute> routes;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto c1 = l.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : l.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw ValidationError(fmt::format("routing table line {}: expected 'low, high, port'", lineno));
    }
    WssRoute r;
    r.slice.low_thz = parse_double(l.substr(0, c1));
    r.slice.high_thz = parse_double(l.substr(c1 + 1, c2 - c1 - 1));
    const auto c3 = l.find(',', c2 + 1);
    r.port = std::string(trim(l.substr(c2 + 1, c3 == std::string_view::npos ? c3 : c3 - c2 - 1)));
    if (c3 != std::string_view::npos) r.attenuation_db = parse_double(l.substr(c3 + 1));
    routes.push_back(std::move(r));
  }
  WssConfig cfg(std::move(routes));
  cfg.validate();
  return cfg;
}

WssConfig wss_route(const ChannelPlan& plan, const Allocation& alloc, std::span<const NodeId> ports,
                    double attenuation_db) {
  plan.validate();
  alloc.validate(plan);
  std::vector<WssRoute> routes;
  for (const auto& [link, chans] : alloc.links()) {
    for (const NodeId* end : {&link.first(), &link.second()}) {
      if (!ports.empty() && std::find(ports.begin(), ports.end(), *end) == ports.end()) {
        throw ValidationError(fmt::format("link {} names unknown node '{}'", link.label(), *end));
      }
    }
    for (int ch : chans) {
      routes.push_back({channel_slice(plan, ch, Side::Signal), link.low(), attenuation_db});
      routes.push_back({channel_slice(plan, ch, Side::Idler), link.high(), attenuation_db});
    }
  }
  WssConfig cfg(std::move(routes));
  cfg.validate(&plan);
  return cfg;
}

std::vector<NodeId> default_node_names(int node_count) {
  std::vector<NodeId> out;
  for (int i = 0; i < node_count; ++i) {
    out.push_back(i < 26 ? std::string(1, static_cast<char>('A' + i)) : fmt::format("N{}", i + 1));
  }
  return out;
}

std::vector<Link> logical_mesh(std::span<const NodeId> nodes) {
  if (nodes.size() < 2) throw ValidationError("a logical mesh needs at least two nodes");
  std::vector<Link> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j) out.emplace_back(nodes[i], nodes[j]);
  return out;
}

std::vector<Link> logical_mesh(int node_count) {
  if (node_count < 2) throw ValidationError("a logical mesh needs at least two nodes");
  const auto names = default_node_names(node_count);
  return logical_mesh(std::span<const NodeId>(names));
}

WssConfig nest_wss(const WssConfig& parent, const FrequencySlice& handoff, const WssConfig& child) {
  if (!(handoff.high_thz > handoff.low_thz)) throw ValidationError("handoff slice is empty");
  std::vector<WssRoute> routes;
  for (const auto& r : parent.routes()) {
    if (handoff.contains(r.slice)) continue;  // replaced by the child
    if (r.slice.overlaps(handoff)) {
      throw ValidationError(fmt::format("parent slice [{:.6f}, {:.6f}] straddles the handoff range",
                                        r.slice.low_thz, r.slice.high_thz));
    }
    routes.push_back(r);
  }
  for (const auto& r : child.routes()) {
    if (!handoff.contains(r.slice)) {
      throw ValidationError(fmt::format("child slice [{:.6f}, {:.6f}] outside handoff [{:.6f}, {:.6f}]",
                                        r.slice.low_thz, r.slice.high_thz, handoff.low_thz, handoff.high_thz));
    }
    routes.push_back(r);
  }
  WssConfig out(std::move(routes));
  out.validate();
  return out;
}

}  // namespace qlan
