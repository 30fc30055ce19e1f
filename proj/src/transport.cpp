#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <sodium.h>

#include "qlan/controlplane.hpp"
#include "qlan/error.hpp"

namespace qlan {

namespace {

constexpr int kMaxAttempts = 1000;

void ensure_sodium() {
  if (sodium_init() < 0) throw RuntimeFailure("libsodium failed to initialize");
}

std::string hex(const unsigned char* data, std::size_t n) {
  std::string out(2 * n + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), data, n);
  out.pop_back();
  return out;
}

std::string tag_of(const std::string& body, const SessionKey& key) {
  unsigned char mac[crypto_auth_hmacsha256_BYTES];
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, reinterpret_cast<const unsigned char*>(body.data()), body.size());
  crypto_auth_hmacsha256_final(&st, mac);
  return hex(mac, sizeof mac);
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::ApplyAllocation:
      return "apply_allocation";
    case MessageKind::Arm:
      return "arm";
    case MessageKind::Disarm:
      return "disarm";
    case MessageKind::FetchData:
      return "fetch_data";
    case MessageKind::Status:
      return "status";
    case MessageKind::Ack:
      return "ack";
    case MessageKind::Error:
      return "error";
  }
  return "?";
}

MessageKind parse_message_kind(std::string_view text) {
  for (auto k : {MessageKind::ApplyAllocation, MessageKind::Arm, MessageKind::Disarm, MessageKind::FetchData,
                 MessageKind::Status, MessageKind::Ack, MessageKind::Error}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError(fmt::format("unknown message kind '{}'", text));
}

SessionKey derive_session_key(std::string_view token_a, std::string_view token_b) {
  ensure_sodium();
  const std::string_view lo = std::min(token_a, token_b);
  const std::string_view hi = std::max(token_a, token_b);
  const std::string material = fmt::format("{}:{}\n{}:{}", lo.size(), lo, hi.size(), hi);
  SessionKey key{};
  crypto_generichash(key.data(), key.size(), reinterpret_cast<const unsigned char*>(material.data()),
                     material.size(), nullptr, 0);
  return key;
}

std::string encode_frame(const ControlMessage& msg, const SessionKey& key) {
  ensure_sodium();
  Json j = {{"kind", std::string(to_string(msg.kind))},
            {"correlation_id", msg.correlation_id},
            {"from", msg.from},
            {"to", msg.to},
            {"auth_token", msg.auth_token},
            {"payload", msg.payload}};
  const std::string body = j.dump();
  j["integrity_tag"] = tag_of(body, key);
  return j.dump();
}

ControlMessage decode_frame(std::string_view line, const SessionKey& key) {
  ensure_sodium();
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception& e) {
    throw IntegrityError(fmt::format("malformed frame: {}", e.what()));
  }
  try {
    const std::string tag = j.at("integrity_tag").get<std::string>();
    j.erase("integrity_tag");
    const std::string expected = tag_of(j.dump(), key);
    if (tag.size() != expected.size() || sodium_memcmp(tag.data(), expected.data(), tag.size()) != 0) {
      throw IntegrityError("frame integrity tag mismatch");
    }
    ControlMessage m;
    m.kind = parse_message_kind(j.at("kind").get<std::string>());
    m.correlation_id = j.at("correlation_id").get<std::uint64_t>();
    m.from = j.at("from").get<std::string>();
    m.to = j.at("to").get<std::string>();
    m.auth_token = j.at("auth_token").get<std::string>();
    m.payload = j.at("payload");
    return m;
  } catch (const Json::exception& e) {
    throw IntegrityError(fmt::format("malformed frame: {}", e.what()));
  } catch (const ValidationError& e) {
    throw IntegrityError(fmt::format("malformed frame: {}", e.what()));
  }
}

std::string BlobStore::put(std::string ref, std::vector<std::byte> data) {
  blobs_[ref] = std::move(data);
  return ref;
}

const std::vector<std::byte>& BlobStore::get(const std::string& ref) const {
  auto it = blobs_.find(ref);
  if (it == blobs_.end()) throw RuntimeFailure(fmt::format("no transfer named '{}'", ref));
  return it->second;
}

DataPlaneBudget::DataPlaneBudget(double capacity_bps) : capacity_(capacity_bps) {
  if (!(capacity_bps > 0.0)) throw ValidationError("data-plane capacity must be positive");
}

std::uint64_t DataPlaneBudget::admit(double demand_bps) {
  if (!(demand_bps >= 0.0)) throw ValidationError("stream demand must be non-negative");
  if (!fits(demand_bps)) {
    throw AdmissionError(fmt::format("stream of {:.3f} Mb/s does not fit: {:.3f} of {:.3f} Mb/s in use",
                                     demand_bps * 1e-6, in_use_ * 1e-6, capacity_ * 1e-6));
  }
  in_use_ += demand_bps;
  peak_in_use_ = std::max(peak_in_use_, in_use_);
  peak_stream_ = std::max(peak_stream_, demand_bps);
  admitted_[next_] = demand_bps;
  return next_++;
}

void DataPlaneBudget::release(std::uint64_t ticket) {
  auto it = admitted_.find(ticket);
  if (it == admitted_.end()) throw ValidationError("unknown admission ticket");
  in_use_ = std::max(0.0, in_use_ - it->second);
  admitted_.erase(it);
  if (admitted_.empty()) in_use_ = 0.0;
}

double stream_demand_bps(std::size_t events, double duration_s) {
  if (!(duration_s > 0.0)) throw ValidationError("capture duration must be positive");
  return static_cast<double>(events) * 32.0 / duration_s;
}

void ChannelParams::validate() const {
  if (!(delay_s >= 0.0) || !(jitter_s >= 0.0)) throw ValidationError("channel delay must be non-negative");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ValidationError("drop rate must lie in [0, 1)");
  if (!(retransmit_s > 0.0)) throw ValidationError("retransmit timeout must be positive");
}

Endpoint::Endpoint(SimNetwork& net, std::string name, std::string token)
    : net_(net), name_(std::move(name)), token_(std::move(token)) {
  net_.register_endpoint(*this);
}

void Endpoint::send(const std::string& to, MessageKind kind, std::uint64_t correlation_id, Json payload) {
  net_.send(ControlMessage{kind, correlation_id, name_, to, token_, std::move(payload)});
}

void Endpoint::reply(const ControlMessage& request, MessageKind kind, Json payload) {
  send(request.from, kind, request.correlation_id, std::move(payload));
}

void Endpoint::reply_error(const ControlMessage& request, const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  const bool validation = err == nullptr || err->category() == ErrorCategory::Validation;
  reply(request, MessageKind::Error, {{"message", e.what()}, {"category", validation ? "validation" : "runtime"}});
}

SimNetwork::SimNetwork(std::uint64_t seed) : rng_(derive_seed(seed, {0x7e7ULL})) {}

void SimNetwork::register_endpoint(Endpoint& ep) {
  if (ep.name().empty()) throw ValidationError("endpoint name must not be empty");
  if (!endpoints_.emplace(ep.name(), &ep).second) {
    throw ValidationError(fmt::format("endpoint '{}' is already registered", ep.name()));
  }
}

std::pair<std::string, std::string> SimNetwork::key_of(const std::string& a, const std::string& b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

void SimNetwork::connect(const std::string& a, const std::string& b, const std::string& presented_token) {
  auto ia = endpoints_.find(a);
  auto ib = endpoints_.find(b);
  if (ia == endpoints_.end() || ib == endpoints_.end()) {
    ++stats_.auth_failures;
    throw AuthError(fmt::format("connection refused: '{}' is not registered",
                                ia == endpoints_.end() ? a : b));
  }
  if (a == b) throw ValidationError("an endpoint cannot open a session to itself");
  if (presented_token != ia->second->token()) {
    ++stats_.auth_failures;
    throw AuthError(fmt::format("connection refused: bad token for '{}'", a));
  }
  sessions_[key_of(a, b)] = Session{derive_session_key(ia->second->token(), ib->second->token())};
}

bool SimNetwork::connected(const std::string& a, const std::string& b) const {
  return sessions_.count(key_of(a, b)) != 0;
}

void SimNetwork::set_params(const std::string& from, const std::string& to, const ChannelParams& p) {
  p.validate();
  params_[{from, to}] = p;
}

void SimNetwork::set_default_params(const ChannelParams& p) {
  p.validate();
  default_params_ = p;
}

const ChannelParams& SimNetwork::params(const std::string& from, const std::string& to) const {
  auto it = params_.find({from, to});
  return it == params_.end() ? default_params_ : it->second;
}

void SimNetwork::send(const ControlMessage& msg) {
  auto s = sessions_.find(key_of(msg.from, msg.to));
  if (s == sessions_.end()) throw AuthError(fmt::format("no session between '{}' and '{}'", msg.from, msg.to));
  const std::string line = encode_frame(msg, s->second.key);
  const ChannelParams& p = params(msg.from, msg.to);
  Direction& dir = directions_[{msg.from, msg.to}];
  ++stats_.frames_sent;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  double t = now_;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double arrival = t + p.delay_s + p.jitter_s * u(rng_);
    if (p.drop_rate > 0.0 && u(rng_) < p.drop_rate) {
      ++stats_.retransmissions;
      t += p.retransmit_s;
      continue;
    }
    if (dir.corrupt_pending > 0) {
      --dir.corrupt_pending;
      std::string bad = line;
      // Flip one bit inside the payload region.
      bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x01);
      queue_.push(Event{arrival, order_++, msg.from, msg.to, std::move(bad)});
      ++stats_.retransmissions;
      t += p.retransmit_s;
      continue;
    }
    const double when = std::max(arrival, dir.last_delivery);
    dir.last_delivery = when;
    queue_.push(Event{when, order_++, msg.from, msg.to, line});
    return;
  }
  throw RuntimeFailure(fmt::format("frame from '{}' to '{}' lost after {} attempts", msg.from, msg.to,
                                   kMaxAttempts));
}

void SimNetwork::corrupt_next(const std::string& from, const std::string& to) {
  ++directions_[{from, to}].corrupt_pending;
}

void SimNetwork::inject_raw(const std::string& from, const std::string& to, std::string line) {
  if (!connected(from, to)) throw AuthError(fmt::format("no session between '{}' and '{}'", from, to));
  const double when = now_ + params(from, to).delay_s;
  queue_.push(Event{when, order_++, from, to, std::move(line)});
}

void SimNetwork::deliver(const Event& ev) {
  auto ep = endpoints_.find(ev.to);
  if (ep == endpoints_.end() || !ep->second->up()) return;
  ControlMessage msg;
  try {
    msg = decode_frame(ev.line, sessions_.at(key_of(ev.from, ev.to)).key);
  } catch (const IntegrityError& e) {
    ++stats_.integrity_failures;
    errors_.push_back(fmt::format("{} -> {}: {}", ev.from, ev.to, e.what()));
    return;
  }
  auto sender = endpoints_.find(ev.from);
  if (msg.from != ev.from || msg.to != ev.to || sender == endpoints_.end() ||
      msg.auth_token != sender->second->token()) {
    ++stats_.auth_failures;
    errors_.push_back(fmt::format("{} -> {}: authentication token mismatch", ev.from, ev.to));
    return;
  }
  ep->second->on_message(msg);
}

bool SimNetwork::run_until(const std::function<bool()>& done, double deadline) {
  while (!done()) {
    if (queue_.empty() || queue_.top().time > deadline) {
      if (std::isfinite(deadline)) now_ = std::max(now_, deadline);
      return done();
    }
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.time);
    deliver(ev);
  }
  return true;
}

void SimNetwork::run_until_time(double t) {
  run_until([] { return false; }, t);
}

void SimNetwork::run_until_idle() {
  run_until([] { return false; }, std::numeric_limits<double>::infinity());
}

}  // namespace qlan
