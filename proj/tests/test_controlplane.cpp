#include <doctest.h>

#include "qlan/controlplane.hpp"
#include "qlan/error.hpp"

using namespace qlan;

namespace {

Allocation allocation_one() {
  Allocation a;
  a.assign(Link("A", "B"), {1});
  a.assign(Link("B", "C"), {2, 3, 4, 5, 6, 7});
  a.assign(Link("C", "A"), {8});
  return a;
}

// Controller, WSS agent and three node agents on one simulated network.
struct Rig {
  SimNetwork net{42};
  BlobStore blobs;
  Controller ctl{net, "ctl", "t-ctl", blobs};
  WssAgent wss{net, "wss", "t-wss", ChannelPlan{}, {"A", "B", "C"}};
  NodeAgent a{net, "A", "t-a", 0, blobs};
  NodeAgent b{net, "B", "t-b", 1, blobs};
  NodeAgent c{net, "C", "t-c", 2, blobs};

  Rig() {
    for (const char* peer : {"wss", "A", "B", "C"}) net.connect("ctl", peer, ctl.token());
    ctl.set_timeout(5.0);
  }
};

}  // namespace

TEST_CASE("frames round trip and detect tampering") {
  const SessionKey key = derive_session_key("x", "y");
  CHECK(key == derive_session_key("y", "x"));
  CHECK_FALSE(key == derive_session_key("x", "z"));
  const ControlMessage m{MessageKind::Arm, 9, "ctl", "A", "tok", {{"epoch", 10}}};
  const std::string line = encode_frame(m, key);
  CHECK(line.find('\n') == std::string::npos);
  const ControlMessage back = decode_frame(line, key);
  CHECK(back.kind == MessageKind::Arm);
  CHECK(back.correlation_id == 9);
  CHECK(back.payload == m.payload);

  std::string bad = line;
  bad.replace(bad.find("10"), 2, "11");
  CHECK_THROWS_AS(decode_frame(bad, key), IntegrityError);
  CHECK_THROWS_AS(decode_frame(line, derive_session_key("x", "z")), IntegrityError);
  CHECK_THROWS_AS(decode_frame("not json", key), IntegrityError);
}

TEST_CASE("message kinds") {
  for (auto k : {MessageKind::ApplyAllocation, MessageKind::Arm, MessageKind::Disarm, MessageKind::FetchData,
                 MessageKind::Status, MessageKind::Ack, MessageKind::Error})
    CHECK(parse_message_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_message_kind("reboot"), ValidationError);
}

TEST_CASE("status round trip keeps the correlation id") {
  Rig r;
  const auto id = r.ctl.submit("A", MessageKind::Status, Json::object());
  const ControlMessage resp = r.ctl.await(id);
  CHECK(resp.kind == MessageKind::Ack);
  CHECK(resp.correlation_id == id);
  CHECK(resp.payload.at("node") == "A");
}

TEST_CASE("sessions need registered peers and the right token") {
  Rig r;
  CHECK_THROWS_AS(r.net.connect("ctl", "ghost", r.ctl.token()), AuthError);
  CHECK_THROWS_AS(r.net.connect("ctl", "A", "forged"), AuthError);
  CHECK_THROWS_AS(r.net.send(ControlMessage{MessageKind::Status, 1, "A", "B", "t-a", {}}), AuthError);
  CHECK(r.net.stats().auth_failures == 2);
}

TEST_CASE("apply_allocation installs exactly the routed table") {
  Rig r;
  const WssConfig got = r.ctl.apply_allocation("wss", allocation_one());
  const std::vector<NodeId> ports = {"A", "B", "C"};
  CHECK(got == wss_route(ChannelPlan{}, allocation_one(), ports));
  CHECK(r.wss.config() == got);
  CHECK(WssConfig::from_text(r.ctl.status("wss").at("routes").get<std::string>()) == got);
  CHECK(allocation_from_routes(got, ChannelPlan{}) == allocation_one());
}

TEST_CASE("re-applying is idempotent") {
  Rig r;
  r.ctl.apply_allocation("wss", allocation_one());
  const auto id = r.ctl.submit("wss", MessageKind::ApplyAllocation, allocation_to_json(allocation_one()));
  const auto resp = r.ctl.await(id);
  CHECK(resp.kind == MessageKind::Ack);
  CHECK(resp.payload.at("changed") == false);
  CHECK(r.wss.config() == wss_route(ChannelPlan{}, allocation_one()));
}

TEST_CASE("an invalid allocation leaves the previous table in place") {
  Rig r;
  r.ctl.apply_allocation("wss", allocation_one());
  const WssConfig before = r.wss.config();
  Json clash = allocation_to_json(allocation_one());
  clash["links"].push_back({{"link", "A-C"}, {"channels", {9}}});
  const auto resp = r.ctl.await(r.ctl.submit("wss", MessageKind::ApplyAllocation, clash));
  CHECK(resp.kind == MessageKind::Error);
  CHECK(r.wss.config() == before);
  Json reused = allocation_to_json(allocation_one());
  reused["links"][2]["channels"] = {1};  // channel 1 already serves A-B
  CHECK(r.ctl.await(r.ctl.submit("wss", MessageKind::ApplyAllocation, reused)).kind == MessageKind::Error);
  CHECK(r.wss.config() == before);
}

TEST_CASE("a crash mid-apply never exposes a partial table") {
  for (auto point : {WssAgent::CrashPoint::AfterValidate, WssAgent::CrashPoint::MidRoute}) {
    Rig r;
    r.ctl.apply_allocation("wss", allocation_one());
    const WssConfig before = r.wss.config();
    Allocation two;
    two.assign(Link("A", "B"), {3});
    two.assign(Link("B", "C"), {1, 2});
    two.assign(Link("C", "A"), {4});
    r.wss.crash_on_next_apply(point);
    const auto resp = r.ctl.await(r.ctl.submit("wss", MessageKind::ApplyAllocation, allocation_to_json(two)));
    CHECK(resp.kind == MessageKind::Error);
    CHECK(resp.payload.value("timeout", false));
    r.wss.restart();
    CHECK(WssConfig::from_text(r.ctl.status("wss").at("routes").get<std::string>()) == before);
    CHECK(r.ctl.apply_allocation("wss", two) == wss_route(ChannelPlan{}, two));
  }
}

TEST_CASE("a corrupted frame is rejected and the session survives") {
  Rig r;
  r.net.corrupt_next("ctl", "A");
  const auto resp = r.ctl.await(r.ctl.submit("A", MessageKind::Status, Json::object()));
  CHECK(resp.kind == MessageKind::Ack);
  CHECK(r.net.stats().integrity_failures == 1);
  REQUIRE(r.net.error_log().size() == 1);
  CHECK(r.net.error_log()[0].find("integrity") != std::string::npos);

  r.net.inject_raw("A", "ctl", "{\"kind\":\"ack\"}");
  r.net.run_until_idle();
  CHECK(r.net.stats().integrity_failures == 2);
  CHECK(r.ctl.status("A").at("node") == "A");
}

TEST_CASE("a frame with a stolen session but wrong token is dropped") {
  Rig r;
  const SessionKey key = derive_session_key(r.ctl.token(), r.a.token());
  r.net.inject_raw("ctl", "A", encode_frame({MessageKind::Status, 99, "ctl", "A", "guess", {}}, key));
  r.net.run_until_idle();
  CHECK(r.net.stats().auth_failures == 1);
  CHECK(r.ctl.late_responses() == 0);
}

TEST_CASE("every concurrent request gets exactly one terminal response") {
  Rig r;
  ChannelParams lossy;
  lossy.delay_s = 0.01;
  lossy.jitter_s = 0.05;
  lossy.drop_rate = 0.3;
  r.net.set_default_params(lossy);
  r.ctl.set_timeout(1e6);
  std::vector<std::uint64_t> ids;
  const char* peers[] = {"A", "B", "C", "wss"};
  for (int i = 0; i < 100; ++i) ids.push_back(r.ctl.submit(peers[i % 4], MessageKind::Status, Json::object()));
  r.net.run_until_idle();
  for (auto id : ids) {
    const auto& resp = r.ctl.responses(id);
    REQUIRE(resp.size() == 1);
    CHECK(resp[0].correlation_id == id);
    CHECK(is_terminal(resp[0].kind));
  }
  CHECK(r.net.stats().retransmissions > 0);
  CHECK(r.ctl.late_responses() == 0);
}

TEST_CASE("frames on one direction stay in order under jitter") {
  Rig r;
  ChannelParams jittery;
  jittery.jitter_s = 0.5;
  r.net.set_default_params(jittery);
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(r.ctl.submit("A", MessageKind::Arm, {{"epoch", 100 + i},
                                                                                {"duration_s", 1.0},
                                                                                {"schedule", schedule_to_json(TomographySchedule::full(1.0))}}));
  r.net.run_until_idle();
  // Arm records appear in the order the commands were sent.
  std::int64_t expect = 100;
  for (const auto& [epoch, rec] : r.a.captures()) CHECK(epoch == expect++);
  CHECK(expect == 120);
}

TEST_CASE("arm start epochs") {
  CHECK(arm_start_epoch(10, 9.0) == 10);
  CHECK(arm_start_epoch(10, 9.999) == 10);
  CHECK(arm_start_epoch(10, 10.0) == 11);
  CHECK(arm_start_epoch(10, 11.002) == 12);
}

TEST_CASE("arm on time and late") {
  Rig r;
  const auto sched = TomographySchedule::full(2.0);
  auto on_time = r.ctl.arm_measurement({"A", "B"}, 10, 2.0, sched);
  CHECK(on_time.at("A") == 10);
  CHECK(on_time.at("B") == 10);

  ChannelParams slow;
  slow.delay_s = 2.0;
  r.net.set_params("ctl", "B", slow);
  auto late = r.ctl.arm_measurement({"A", "B"}, 20, 2.0, sched);
  CHECK(late.at("A") == 20);
  CHECK(late.at("B") == 22);
  const auto [x, y] = align_epochs(EventStream{0, late.at("A"), {{5, 0, 0}}}, EventStream{1, late.at("B"), {{5, 0, 0}}});
  CHECK(y.events[0].bin - x.events[0].bin == 2 * kBinsPerSecond);
}

TEST_CASE("arm in the past is refused") {
  Rig r;
  r.net.run_until_time(50.0);
  CHECK_THROWS_AS(r.ctl.arm_measurement({"A"}, 50, 1.0, TomographySchedule::full(1.0)), ValidationError);
}

TEST_CASE("an unreachable agent aborts the arm on every node") {
  Rig r;
  r.c.set_up(false);
  try {
    r.ctl.arm_measurement({"A", "B", "C"}, 10, 1.0, TomographySchedule::full(1.0));
    FAIL("expected a partial-arm error");
  } catch (const PartialArmError& e) {
    CHECK(e.missing_nodes() == std::vector<std::string>{"C"});
  }
  CHECK(r.a.captures().empty());
  CHECK(r.b.captures().empty());
}

TEST_CASE("fetch returns the recorded stream bit for bit") {
  Rig r;
  r.ctl.arm_measurement({"A"}, 10, 2.0, TomographySchedule::full(2.0));
  EventStream s{0, 10, {}};
  for (std::int64_t i = 0; i < 500; ++i) s.events.push_back({i * 997, static_cast<std::uint8_t>(i % 6), 0});
  std::sort(s.events.begin(), s.events.end(), [](auto& p, auto& q) { return p.bin < q.bin; });
  r.a.record(10, s);
  DataPlaneBudget budget(1e9);
  const auto got = r.ctl.fetch_data({{"A", 10}}, budget);
  REQUIRE(got.size() == 1);
  CHECK(got[0].stream == s);
  CHECK(got[0].demand_bps == doctest::Approx(500 * 32 / 2.0));
  CHECK_FALSE(got[0].deferred);
  CHECK(budget.in_use() == 0.0);
  CHECK_THROWS_AS(r.ctl.fetch_data({{"A", 99}}, budget), ValidationError);
}

TEST_CASE("recording checks the arm") {
  Rig r;
  CHECK_THROWS_AS(r.a.record(10, EventStream{0, 10, {}}), ValidationError);
  r.ctl.arm_measurement({"A"}, 10, 1.0, TomographySchedule::full(1.0));
  CHECK_THROWS_AS(r.a.record(10, EventStream{0, 11, {}}), ValidationError);
  CHECK_THROWS_AS(r.a.record(10, EventStream{5, 10, {}}), ValidationError);
}

TEST_CASE("an empty capture transfers as a bare header") {
  Rig r;
  r.ctl.arm_measurement({"A"}, 10, 1.0, TomographySchedule::full(1.0));
  r.a.record(10, EventStream{0, 10, {}});
  DataPlaneBudget budget;
  const auto got = r.ctl.fetch_data({{"A", 10}}, budget);
  CHECK(got[0].bytes == kTimetagHeaderBytes);
  CHECK(got[0].stream.empty());
  CHECK(got[0].stream.epoch_start == 10);
}

TEST_CASE("data-plane admission") {
  DataPlaneBudget b(10e6);
  const auto t1 = b.admit(6e6);
  CHECK_THROWS_AS(b.admit(5e6), AdmissionError);
  const auto t2 = b.admit(4e6);
  CHECK(b.in_use() == doctest::Approx(10e6));
  b.release(t1);
  b.release(t2);
  CHECK(b.in_use() == 0.0);
  CHECK(b.peak_in_use() == doctest::Approx(10e6));
  CHECK(b.peak_stream_demand() == doctest::Approx(6e6));
  CHECK_THROWS_AS(b.release(t1), ValidationError);
  CHECK_THROWS_AS(DataPlaneBudget(0.0), ValidationError);
}

TEST_CASE("stream demand is 32 bits per event") {
  CHECK(stream_demand_bps(23400 * 60, 60.0) == doctest::Approx(748800.0));
  CHECK_THROWS_AS(stream_demand_bps(10, 0.0), ValidationError);
}

TEST_CASE("fetch defers what does not fit and refuses what never fits") {
  Rig r;
  r.ctl.arm_measurement({"A", "B"}, 10, 1.0, TomographySchedule::full(1.0));
  EventStream sa{0, 10, {}}, sb{1, 10, {}};
  for (std::int64_t i = 0; i < 1000; ++i) {
    sa.events.push_back({i, 0, 0});
    sb.events.push_back({i, 0, 0});
  }
  r.a.record(10, sa);
  r.b.record(10, sb);
  DataPlaneBudget tight(40000.0);  // each stream needs 32 kb/s
  const auto got = r.ctl.fetch_data({{"A", 10}, {"B", 10}}, tight);
  CHECK_FALSE(got[0].deferred);
  CHECK(got[1].deferred);
  CHECK(got[1].stream == sb);
  CHECK(tight.peak_in_use() <= tight.capacity());

  DataPlaneBudget tiny(1000.0);
  CHECK_THROWS_AS(r.ctl.fetch_data({{"A", 10}}, tiny), AdmissionError);
}

TEST_CASE("payload JSON helpers") {
  CHECK(allocation_from_json(allocation_to_json(allocation_one())) == allocation_one());
  const auto s = TomographySchedule::full(60.0);
  const auto back = schedule_from_json(schedule_to_json(s));
  CHECK(back.settings == s.settings);
  CHECK(back.cycles == s.cycles);
  CHECK(back.dwell_s == s.dwell_s);
  CHECK_THROWS_AS(schedule_from_json(Json{{"dwell_s", 1.0}, {"cycles", 1}, {"settings", {"HQ"}}}), ValidationError);
}
