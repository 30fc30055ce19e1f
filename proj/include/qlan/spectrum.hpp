#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qlan {

using NodeId = std::string;

/// Fixed-width grid of frequency-correlated channel pairs placed
/// symmetrically about the source center frequency.
struct ChannelPlan {
  double center_thz = 192.3125;
  double channel_width_ghz = 25.0;
  int pair_count = 8;

  void validate() const;
  double width_thz() const { return channel_width_ghz * 1e-3; }
  /// Lowest and highest edge of the occupied spectrum.
  double low_edge_thz() const;
  double high_edge_thz() const;

  bool operator==(const ChannelPlan&) const = default;
};

enum class Side { Signal, Idler };

/// Signal channel n sits at center + width * (n - 1/2), idler at center - ...
double channel_frequency(const ChannelPlan& plan, int n, Side side);

struct FrequencySlice {
  double low_thz = 0.0;
  double high_thz = 0.0;

  bool overlaps(const FrequencySlice& other) const;
  bool contains(const FrequencySlice& other) const;
  bool contains(double f_thz) const { return f_thz >= low_thz && f_thz < high_thz; }

  bool operator==(const FrequencySlice&) const = default;
};

FrequencySlice channel_slice(const ChannelPlan& plan, int n, Side side);

/// Unordered pair of nodes. The label keeps the order it was written in
/// ("C-A"), while comparison and hashing use the sorted pair.
class Link {
 public:
  Link() = default;
  Link(NodeId a, NodeId b);

  const NodeId& first() const { return first_; }
  const NodeId& second() const { return second_; }
  /// Lexicographically smaller / larger endpoint.
  const NodeId& low() const { return first_ < second_ ? first_ : second_; }
  const NodeId& high() const { return first_ < second_ ? second_ : first_; }
  bool touches(const NodeId& node) const { return first_ == node || second_ == node; }
  std::string label() const { return first_ + "-" + second_; }

  static Link parse(std::string_view text);

  bool operator==(const Link& other) const { return key() == other.key(); }
  std::strong_ordering operator<=>(const Link& other) const { return key() <=> other.key(); }

 private:
  std::pair<NodeId, NodeId> key() const { return {low(), high()}; }

  NodeId first_;
  NodeId second_;
};

/// Channel-pair indices assigned to each logical link.
class Allocation {
 public:
  void assign(const Link& link, std::set<int> channels);
  const std::map<Link, std::set<int>>& links() const { return links_; }
  const std::set<int>* channels(const Link& link) const;
  std::set<int> used_channels() const;
  bool empty() const { return links_.empty(); }

  /// Indices in [1, pair_count] and pairwise disjoint across links.
  void validate(const ChannelPlan& plan) const;

  bool operator==(const Allocation&) const = default;

 private:
  std::map<Link, std::set<int>> links_;
};

/// "2-7" for contiguous runs, "1,3" otherwise.
std::string format_channels(const std::set<int>& channels);
std::set<int> parse_channels(std::string_view text);

struct WssRoute {
  FrequencySlice slice;
  NodeId port;
  double attenuation_db = 5.0;

  bool operator==(const WssRoute&) const = default;
};

/// Slices routed to WSS output ports, kept sorted by frequency.
class WssConfig {
 public:
  WssConfig() = default;
  explicit WssConfig(std::vector<WssRoute> routes);

  const std::vector<WssRoute>& routes() const { return routes_; }
  bool empty() const { return routes_.empty(); }
  std::set<NodeId> ports() const;
  /// Port serving frequency f, if any.
  std::optional<NodeId> port_at(double f_thz) const;

  /// Non-overlapping; when a plan is given, every slice inside its spectrum.
  void validate(const ChannelPlan* plan = nullptr) const;

  /// One slice per line: "low_THz, high_THz, port", plus the attenuation in dB
  /// when it differs from the default. Frequencies round-trip exactly.
  std::string to_text() const;
  static WssConfig from_text(std::string_view text);

  bool operator==(const WssConfig&) const = default;

 private:
  std::vector<WssRoute> routes_;
};

/// Signal slice of each allocated channel goes to the lexicographically
/// smaller endpoint, idler slice to the larger. Every endpoint must be one of
/// `ports` when that list is non-empty.
WssConfig wss_route(const ChannelPlan& plan, const Allocation& alloc,
                    std::span<const NodeId> ports = {}, double attenuation_db = 5.0);

/// Default node names: A, B, C, ... then N27, N28, ...
std::vector<NodeId> default_node_names(int node_count);

/// All N(N-1)/2 unordered pairs.
std::vector<Link> logical_mesh(int node_count);
std::vector<Link> logical_mesh(std::span<const NodeId> nodes);

/// Replaces whatever the parent routes inside `handoff` with the child's
/// routes. An empty child leaves the handoff range dark.
WssConfig nest_wss(const WssConfig& parent, const FrequencySlice& handoff, const WssConfig& child);

}  // namespace qlan
