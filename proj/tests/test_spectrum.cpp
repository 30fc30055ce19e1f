#include <algorithm>

#include <doctest.h>

#include "qlan/error.hpp"
#include "qlan/spectrum.hpp"

using namespace qlan;

namespace {

Allocation allocation_one() {
  Allocation a;
  a.assign(Link("A", "B"), {1});
  a.assign(Link("B", "C"), {2, 3, 4, 5, 6, 7});
  a.assign(Link("C", "A"), {8});
  return a;
}

}  // namespace

TEST_CASE("channel frequencies sit half a width from the center") {
  const ChannelPlan plan;
  CHECK(channel_frequency(plan, 1, Side::Signal) == doctest::Approx(192.325).epsilon(1e-12));
  CHECK(channel_frequency(plan, 1, Side::Idler) == doctest::Approx(192.300).epsilon(1e-12));
  CHECK(channel_frequency(plan, 8, Side::Signal) == doctest::Approx(192.5).epsilon(1e-12));
  CHECK_THROWS_AS(channel_frequency(plan, 0, Side::Signal), ValidationError);
  CHECK_THROWS_AS(channel_frequency(plan, 9, Side::Idler), ValidationError);
  // Signal and idler of a pair are symmetric about the center.
  for (int n = 1; n <= 8; ++n) {
    CHECK(channel_frequency(plan, n, Side::Signal) + channel_frequency(plan, n, Side::Idler) ==
          doctest::Approx(2 * plan.center_thz));
  }
}

TEST_CASE("channel slices tile the spectrum") {
  const ChannelPlan plan;
  for (int n = 1; n < 8; ++n) {
    const auto s = channel_slice(plan, n, Side::Signal);
    const auto next = channel_slice(plan, n + 1, Side::Signal);
    CHECK(s.high_thz == doctest::Approx(next.low_thz));
    CHECK_FALSE(s.overlaps(next));
    CHECK(s.contains(channel_frequency(plan, n, Side::Signal)));
  }
  CHECK(channel_slice(plan, 8, Side::Signal).high_thz == doctest::Approx(plan.high_edge_thz()));
  CHECK(channel_slice(plan, 8, Side::Idler).low_thz == doctest::Approx(plan.low_edge_thz()));
}

TEST_CASE("links are unordered but keep their label") {
  const Link ca("C", "A");
  CHECK(ca == Link("A", "C"));
  CHECK(ca.label() == "C-A");
  CHECK(ca.low() == "A");
  CHECK(Link::parse("B-C") == Link("C", "B"));
  CHECK_THROWS_AS(Link("A", "A"), ValidationError);
  CHECK_THROWS_AS(Link::parse("AB"), ValidationError);
}

TEST_CASE("channel sets print as ranges") {
  CHECK(format_channels({2, 3, 4, 5, 6, 7}) == "2-7");
  CHECK(format_channels({1}) == "1");
  CHECK(format_channels({1, 3}) == "1,3");
  CHECK(parse_channels("2-7") == std::set<int>{2, 3, 4, 5, 6, 7});
  CHECK(parse_channels("1,3-4") == std::set<int>{1, 3, 4});
  CHECK_THROWS_AS(parse_channels("7-2"), ValidationError);
}

TEST_CASE("allocation validation") {
  const ChannelPlan plan;
  CHECK_NOTHROW(allocation_one().validate(plan));
  Allocation clash;
  clash.assign(Link("A", "B"), {3});
  clash.assign(Link("B", "C"), {3});
  CHECK_THROWS_AS(clash.validate(plan), ValidationError);
  Allocation outside;
  outside.assign(Link("A", "B"), {9});
  CHECK_THROWS_AS(outside.validate(plan), ValidationError);
}

TEST_CASE("wss_route sends signal to the smaller endpoint") {
  const ChannelPlan plan;
  const WssConfig cfg = wss_route(plan, allocation_one());
  CHECK_NOTHROW(cfg.validate(&plan));
  CHECK(cfg.routes().size() == 16);
  CHECK(cfg.port_at(channel_frequency(plan, 1, Side::Signal)) == "A");
  CHECK(cfg.port_at(channel_frequency(plan, 1, Side::Idler)) == "B");
  CHECK(cfg.port_at(channel_frequency(plan, 8, Side::Signal)) == "A");
  CHECK(cfg.port_at(channel_frequency(plan, 8, Side::Idler)) == "C");
  for (int n = 2; n <= 7; ++n) {
    CHECK(cfg.port_at(channel_frequency(plan, n, Side::Signal)) == "B");
    CHECK(cfg.port_at(channel_frequency(plan, n, Side::Idler)) == "C");
  }
  CHECK(cfg.ports() == std::set<NodeId>{"A", "B", "C"});
}

TEST_CASE("wss_route edge cases") {
  const ChannelPlan plan;
  CHECK(wss_route(plan, Allocation{}).empty());
  Allocation clash;
  clash.assign(Link("A", "B"), {3});
  clash.assign(Link("A", "C"), {3});
  CHECK_THROWS_AS(wss_route(plan, clash), ValidationError);
  const std::vector<NodeId> ports = {"A", "B"};
  CHECK_THROWS_AS(wss_route(plan, allocation_one(), ports), ValidationError);
}

TEST_CASE("routing table text round trip") {
  const WssConfig cfg = wss_route(ChannelPlan{}, allocation_one());
  CHECK(WssConfig::from_text(cfg.to_text()) == cfg);
  CHECK_THROWS_AS(WssConfig::from_text("192.3, 192.4\n"), ValidationError);
}

TEST_CASE("logical mesh sizes") {
  CHECK(logical_mesh(2).size() == 1);
  const auto three = logical_mesh(3);
  CHECK(three.size() == 3);
  for (const auto& l : {Link("A", "B"), Link("B", "C"), Link("C", "A")})
    CHECK(std::find(three.begin(), three.end(), l) != three.end());
  CHECK(logical_mesh(6).size() == 15);
  CHECK_THROWS_AS(logical_mesh(1), ValidationError);
  CHECK(default_node_names(3) == std::vector<NodeId>{"A", "B", "C"});
}

TEST_CASE("nested WSS replaces the handoff range") {
  const FrequencySlice handoff{192.40, 192.52};
  const WssConfig parent({{{192.30, 192.40}, "A", 5.0}, {{192.40, 192.52}, "D", 5.0}});
  const WssConfig child({{{192.40, 192.46}, "D1", 5.0}, {{192.46, 192.52}, "D2", 5.0}});
  const WssConfig nested = nest_wss(parent, handoff, child);
  // Parent served A and D; the composite serves A, D1 and D2.
  CHECK(nested.ports() == std::set<NodeId>{"A", "D1", "D2"});
  CHECK(nested.ports().size() == parent.ports().size() - 1 + 2);
  CHECK(nested.port_at(192.45) == "D1");

  const WssConfig dark = nest_wss(parent, handoff, WssConfig{});
  CHECK_FALSE(dark.port_at(192.45).has_value());
  CHECK(dark.port_at(192.35) == "A");

  const WssConfig stray({{{192.30, 192.31}, "X", 5.0}});
  CHECK_THROWS_AS(nest_wss(parent, handoff, stray), ValidationError);
}
