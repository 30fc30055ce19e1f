#include "qlan/controlplane.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qlan/error.hpp"

namespace qlan {

std::int64_t arm_start_epoch(std::int64_t scheduled_epoch, double arrival_s) {
  if (arrival_s < static_cast<double>(scheduled_epoch)) return scheduled_epoch;
  return static_cast<std::int64_t>(std::floor(arrival_s)) + 1;
}

Json allocation_to_json(const Allocation& alloc) {
  Json links = Json::array();
  for (const auto& [link, channels] : alloc.links()) {
    links.push_back({{"link", link.label()}, {"channels", std::vector<int>(channels.begin(), channels.end())}});
  }
  return {{"links", links}};
}

Allocation allocation_from_json(const Json& j) {
  try {
    Allocation a;
    for (const auto& entry : j.at("links")) {
      const auto chans = entry.at("channels").get<std::vector<int>>();
      const Link link = Link::parse(entry.at("link").get<std::string>());
      if (a.channels(link)) throw ValidationError(fmt::format("link {} listed twice", link.label()));
      a.assign(link, std::set<int>(chans.begin(), chans.end()));
    }
    return a;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("malformed allocation: {}", e.what()));
  }
}

Json schedule_to_json(const TomographySchedule& s) {
  Json settings = Json::array();
  for (const auto& [a, b] : s.settings) settings.push_back(fmt::format("{}{}", to_string(a), to_string(b)));
  return {{"dwell_s", s.dwell_s}, {"cycles", s.cycles}, {"settings", settings}};
}

TomographySchedule schedule_from_json(const Json& j) {
  try {
    TomographySchedule s;
    s.dwell_s = j.at("dwell_s").get<double>();
    s.cycles = j.at("cycles").get<int>();
    for (const auto& item : j.at("settings")) {
      const auto text = item.get<std::string>();
      const auto a = text.size() == 2 ? parse_eigenstate(text.substr(0, 1)) : std::nullopt;
      const auto b = text.size() == 2 ? parse_eigenstate(text.substr(1, 1)) : std::nullopt;
      if (!a || !b) throw ValidationError(fmt::format("bad analyzer setting '{}'", text));
      s.settings.emplace_back(*a, *b);
    }
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("malformed schedule: {}", e.what()));
  }
}

Allocation allocation_from_routes(const WssConfig& config, const ChannelPlan& plan) {
  std::map<Link, std::set<int>> found;
  for (int n = 1; n <= plan.pair_count; ++n) {
    const auto sig = config.port_at(channel_frequency(plan, n, Side::Signal));
    const auto idl = config.port_at(channel_frequency(plan, n, Side::Idler));
    if (sig && idl && *sig != *idl) found[Link(*sig, *idl)].insert(n);
  }
  Allocation out;
  for (auto& [link, chans] : found) out.assign(link, std::move(chans));
  return out;
}

// ---------------------------------------------------------------------------

WssAgent::WssAgent(SimNetwork& net, std::string name, std::string token, ChannelPlan plan,
                   std::vector<NodeId> ports, double attenuation_db)
    : Endpoint(net, std::move(name), std::move(token)),
      plan_(plan),
      ports_(std::move(ports)),
      attenuation_db_(attenuation_db) {
  plan_.validate();
}

void WssAgent::on_message(const ControlMessage& msg) {
  try {
    switch (msg.kind) {
      case MessageKind::ApplyAllocation: {
        const Allocation alloc = allocation_from_json(msg.payload);
        alloc.validate(plan_);
        if (crash_ == CrashPoint::AfterValidate) {
          crash_ = CrashPoint::None;
          set_up(false);
          return;
        }
        const WssConfig next = wss_route(plan_, alloc, ports_, attenuation_db_);
        next.validate(&plan_);
        if (crash_ == CrashPoint::MidRoute) {
          crash_ = CrashPoint::None;
          set_up(false);
          return;
        }
        const bool changed = !(next == config_);
        config_ = next;
        ++applies_;
        reply(msg, MessageKind::Ack, {{"changed", changed}, {"routes", config_.to_text()}});
        return;
      }
      case MessageKind::Status:
        reply(msg, MessageKind::Ack, {{"routes", config_.to_text()}, {"applies", applies_}});
        return;
      default:
        throw ValidationError(fmt::format("WSS agent does not handle '{}'", to_string(msg.kind)));
    }
  } catch (const std::exception& e) {
    reply_error(msg, e);
  }
}

// ---------------------------------------------------------------------------

NodeAgent::NodeAgent(SimNetwork& net, std::string name, std::string token, std::uint16_t node_id, BlobStore& blobs)
    : Endpoint(net, std::move(name), std::move(token)), node_id_(node_id), blobs_(blobs) {}

void NodeAgent::record(std::int64_t scheduled_epoch, EventStream stream) {
  auto it = captures_.find(scheduled_epoch);
  if (it == captures_.end()) {
    throw ValidationError(fmt::format("node {} was not armed for epoch {}", name(), scheduled_epoch));
  }
  if (stream.epoch_start != it->second.actual_epoch) {
    throw ValidationError(fmt::format("capture epoch {} differs from the reported start {}", stream.epoch_start,
                                      it->second.actual_epoch));
  }
  if (stream.node != node_id_) throw ValidationError("capture belongs to a different node");
  stream.validate();
  it->second.stream = std::move(stream);
}

void NodeAgent::on_message(const ControlMessage& msg) {
  try {
    switch (msg.kind) {
      case MessageKind::Arm: {
        const auto epoch = msg.payload.at("epoch").get<std::int64_t>();
        const auto duration = msg.payload.at("duration_s").get<double>();
        schedule_from_json(msg.payload.at("schedule"));
        if (epoch < 0) throw ValidationError("epoch must be non-negative");
        if (!(duration > 0.0)) throw ValidationError("capture duration must be positive");
        auto it = captures_.find(epoch);
        if (it == captures_.end()) {
          it = captures_.emplace(epoch, CaptureRecord{epoch, arm_start_epoch(epoch, net_.now()), duration, {}}).first;
        }
        reply(msg, MessageKind::Ack,
              {{"node", name()}, {"node_id", node_id_}, {"scheduled_epoch", epoch}, {"epoch", it->second.actual_epoch}});
        return;
      }
      case MessageKind::Disarm: {
        const auto epoch = msg.payload.at("epoch").get<std::int64_t>();
        const bool removed = captures_.erase(epoch) != 0;
        reply(msg, MessageKind::Ack, {{"node", name()}, {"removed", removed}});
        return;
      }
      case MessageKind::FetchData: {
        const auto epoch = msg.payload.at("epoch").get<std::int64_t>();
        auto it = captures_.find(epoch);
        if (it == captures_.end()) throw ValidationError(fmt::format("node {} has no capture for epoch {}", name(), epoch));
        if (!it->second.stream) throw RuntimeFailure(fmt::format("capture for epoch {} is not complete", epoch));
        const EventStream& s = *it->second.stream;
        Json refs = Json::array();
        std::size_t bytes = 0;
        const auto segments = encode_segments(s);
        for (std::size_t i = 0; i < segments.size(); ++i) {
          bytes += segments[i].size();
          refs.push_back(blobs_.put(fmt::format("{}/{}/{}", name(), epoch, i), segments[i]));
        }
        reply(msg, MessageKind::Ack,
              {{"node", name()},
               {"scheduled_epoch", epoch},
               {"epoch", it->second.actual_epoch},
               {"events", s.size()},
               {"duration_s", it->second.duration_s},
               {"bytes", bytes},
               {"blobs", refs}});
        return;
      }
      case MessageKind::Status: {
        Json armed = Json::array(), complete = Json::array();
        for (const auto& [epoch, rec] : captures_) {
          armed.push_back(epoch);
          if (rec.stream) complete.push_back(epoch);
        }
        reply(msg, MessageKind::Ack, {{"node", name()}, {"armed", armed}, {"complete", complete}});
        return;
      }
      default:
        throw ValidationError(fmt::format("node agent does not handle '{}'", to_string(msg.kind)));
    }
  } catch (const Json::exception& e) {
    reply_error(msg, ValidationError(fmt::format("malformed payload: {}", e.what())));
  } catch (const std::exception& e) {
    reply_error(msg, e);
  }
}

// ---------------------------------------------------------------------------

Controller::Controller(SimNetwork& net, std::string name, std::string token, BlobStore& blobs)
    : Endpoint(net, std::move(name), std::move(token)), blobs_(blobs) {}

std::uint64_t Controller::submit(const std::string& to, MessageKind kind, Json payload) {
  const std::uint64_t id = next_id_++;
  pending_[id] = Pending{net_.now() + timeout_s_, false, {}};
  send(to, kind, id, std::move(payload));
  return id;
}

void Controller::on_message(const ControlMessage& msg) {
  auto it = pending_.find(msg.correlation_id);
  if (it == pending_.end() || !is_terminal(msg.kind)) {
    ++late_;
    return;
  }
  it->second.responses.push_back(msg);
  if (it->second.done) {
    ++late_;
  } else {
    it->second.done = true;
  }
}

ControlMessage Controller::await(std::uint64_t id) {
  auto it = pending_.find(id);
  if (it == pending_.end()) throw ValidationError(fmt::format("unknown correlation id {}", id));
  Pending& p = it->second;
  if (!p.done) {
    net_.run_until([&p] { return p.done; }, p.deadline);
  }
  if (!p.done) {
    p.done = true;
    p.responses.push_back(ControlMessage{MessageKind::Error, id, "", name(), "",
                                         {{"message", "request timed out"}, {"category", "runtime"}, {"timeout", true}}});
  }
  for (const auto& r : p.responses) {
    if (is_terminal(r.kind)) return r;
  }
  return p.responses.front();
}

const std::vector<ControlMessage>& Controller::responses(std::uint64_t id) const {
  auto it = pending_.find(id);
  if (it == pending_.end()) throw ValidationError(fmt::format("unknown correlation id {}", id));
  return it->second.responses;
}

ControlMessage Controller::checked(const ControlMessage& response) const {
  if (response.kind != MessageKind::Error) return response;
  const std::string message = response.payload.value("message", std::string("unspecified error"));
  if (response.payload.value("category", std::string("runtime")) == "validation") throw ValidationError(message);
  throw RuntimeFailure(message);
}

WssConfig Controller::apply_allocation(const std::string& wss, const Allocation& alloc) {
  const auto r = checked(await(submit(wss, MessageKind::ApplyAllocation, allocation_to_json(alloc))));
  return WssConfig::from_text(r.payload.at("routes").get<std::string>());
}

Json Controller::status(const std::string& peer) {
  return checked(await(submit(peer, MessageKind::Status, Json::object()))).payload;
}

std::map<NodeId, std::int64_t> Controller::arm_measurement(const std::vector<NodeId>& nodes, std::int64_t epoch,
                                                            double duration_s, const TomographySchedule& schedule) {
  if (nodes.empty()) throw ValidationError("arm_measurement needs at least one node");
  const double send_at = static_cast<double>(epoch) - arm_lead_s_;
  if (send_at < net_.now()) {
    throw ValidationError(fmt::format("epoch {} is not far enough in the future (now {:.3f} s)", epoch, net_.now()));
  }
  net_.run_until_time(send_at);
  const Json payload = {{"epoch", epoch}, {"duration_s", duration_s}, {"schedule", schedule_to_json(schedule)}};
  std::vector<std::uint64_t> ids;
  for (const auto& n : nodes) ids.push_back(submit(n, MessageKind::Arm, payload));

  std::map<NodeId, std::int64_t> started;
  std::vector<std::string> missing;
  std::string reason;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const ControlMessage r = await(ids[i]);
    if (r.kind == MessageKind::Ack) {
      started[nodes[i]] = r.payload.at("epoch").get<std::int64_t>();
    } else {
      missing.push_back(nodes[i]);
      if (reason.empty()) reason = r.payload.value("message", std::string());
    }
  }
  if (!missing.empty()) {
    std::vector<std::uint64_t> disarms;
    for (const auto& n : nodes) disarms.push_back(submit(n, MessageKind::Disarm, {{"epoch", epoch}}));
    for (auto id : disarms) await(id);
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw PartialArmError(fmt::format("arm for epoch {} failed on {} ({}); measurement aborted", epoch, list, reason),
                          missing);
  }
  return started;
}

std::vector<FetchedStream> Controller::fetch_data(const std::vector<std::pair<NodeId, std::int64_t>>& requests,
                                                  DataPlaneBudget& budget) {
  std::vector<std::uint64_t> ids;
  for (const auto& [node, epoch] : requests) ids.push_back(submit(node, MessageKind::FetchData, {{"epoch", epoch}}));
  std::vector<ControlMessage> replies;
  for (auto id : ids) replies.push_back(checked(await(id)));

  std::vector<FetchedStream> out(requests.size());
  std::vector<std::size_t> waiting;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    const Json& p = replies[i].payload;
    out[i].node = requests[i].first;
    out[i].scheduled_epoch = requests[i].second;
    out[i].bytes = p.at("bytes").get<std::size_t>();
    out[i].demand_bps = stream_demand_bps(p.at("events").get<std::size_t>(), p.at("duration_s").get<double>());
    if (out[i].demand_bps > budget.capacity()) {
      throw AdmissionError(fmt::format("stream from {} needs {:.3f} Mb/s, above the {:.3f} Mb/s data plane",
                                       out[i].node, out[i].demand_bps * 1e-6, budget.capacity() * 1e-6));
    }
    waiting.push_back(i);
  }

  // Admit what fits, finish those transfers, then retry the deferred ones.
  while (!waiting.empty()) {
    std::vector<std::pair<std::size_t, std::uint64_t>> active;
    std::vector<std::size_t> next;
    for (std::size_t i : waiting) {
      if (budget.fits(out[i].demand_bps)) {
        active.emplace_back(i, budget.admit(out[i].demand_bps));
      } else {
        out[i].deferred = true;
        next.push_back(i);
      }
    }
    for (const auto& [i, ticket] : active) {
      std::vector<std::vector<std::byte>> segments;
      for (const auto& ref : replies[i].payload.at("blobs")) segments.push_back(blobs_.get(ref.get<std::string>()));
      out[i].stream = decode_segments(segments);
      budget.release(ticket);
    }
    waiting.swap(next);
  }
  return out;
}

}  // namespace qlan
