#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qlan/photonics.hpp"
#include "qlan/random.hpp"
#include "qlan/spectrum.hpp"
#include "qlan/timing.hpp"

namespace qlan {

using Json = nlohmann::json;

enum class MessageKind { ApplyAllocation, Arm, Disarm, FetchData, Status, Ack, Error };

std::string_view to_string(MessageKind kind);
MessageKind parse_message_kind(std::string_view text);
inline bool is_terminal(MessageKind k) { return k == MessageKind::Ack || k == MessageKind::Error; }

struct ControlMessage {
  MessageKind kind = MessageKind::Status;
  std::uint64_t correlation_id = 0;
  std::string from;
  std::string to;
  std::string auth_token;
  Json payload = Json::object();
};

// ---------------------------------------------------------------------------
// Wire format: one JSON object per line with fields kind, correlation_id,
// from, to, auth_token, payload and integrity_tag. The tag is HMAC-SHA-256
// (hex) over the compact serialization of the other fields, keyed by the
// session key. This stands in for the encrypted tunnels of a real deployment;
// a cipher layer can wrap encode_frame/decode_frame without other changes.

using SessionKey = std::array<unsigned char, 32>;

SessionKey derive_session_key(std::string_view token_a, std::string_view token_b);
std::string encode_frame(const ControlMessage& msg, const SessionKey& key);
/// Throws IntegrityError on malformed text or a tag mismatch.
ControlMessage decode_frame(std::string_view line, const SessionKey& key);

// ---------------------------------------------------------------------------
// Out-of-band binary transfers referenced by fetch_data responses.

class BlobStore {
 public:
  std::string put(std::string ref, std::vector<std::byte> data);
  const std::vector<std::byte>& get(const std::string& ref) const;
  bool contains(const std::string& ref) const { return blobs_.count(ref) != 0; }

 private:
  std::map<std::string, std::vector<std::byte>> blobs_;
};

/// Concurrent timestamp transfers on the conventional data plane.
class DataPlaneBudget {
 public:
  explicit DataPlaneBudget(double capacity_bps = 1e9);

  double capacity() const { return capacity_; }
  double in_use() const { return in_use_; }
  double peak_in_use() const { return peak_in_use_; }
  double peak_stream_demand() const { return peak_stream_; }

  /// Throws AdmissionError when the stream would push admitted demand above
  /// capacity. Returns a ticket for release().
  std::uint64_t admit(double demand_bps);
  void release(std::uint64_t ticket);
  bool fits(double demand_bps) const { return in_use_ + demand_bps <= capacity_; }

 private:
  double capacity_;
  double in_use_ = 0.0;
  double peak_in_use_ = 0.0;
  double peak_stream_ = 0.0;
  std::uint64_t next_ = 1;
  std::map<std::uint64_t, double> admitted_;
};

/// 32-bit timestamps per second of capture.
double stream_demand_bps(std::size_t events, double duration_s);

// ---------------------------------------------------------------------------
// Simulated transport: deterministic discrete-event network with virtual
// time. Sessions are ordered and reliable; dropped or corrupted frames are
// retransmitted after a timeout.

struct ChannelParams {
  double delay_s = 0.002;
  double jitter_s = 0.0;   // uniform extra delay in [0, jitter_s)
  double drop_rate = 0.0;  // per transmission attempt
  double retransmit_s = 0.2;

  void validate() const;
};

class SimNetwork;

/// Sequential message processor. Handlers run one at a time on the network's
/// event loop and talk to the outside world only by sending messages.
class Endpoint {
 public:
  Endpoint(SimNetwork& net, std::string name, std::string token);
  virtual ~Endpoint() = default;
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  const std::string& name() const { return name_; }
  const std::string& token() const { return token_; }
  bool up() const { return up_; }
  void set_up(bool up) { up_ = up; }

  virtual void on_message(const ControlMessage& msg) = 0;

 protected:
  void send(const std::string& to, MessageKind kind, std::uint64_t correlation_id, Json payload);
  void reply(const ControlMessage& request, MessageKind kind, Json payload);
  void reply_error(const ControlMessage& request, const std::exception& e);

  SimNetwork& net_;

 private:
  std::string name_;
  std::string token_;
  bool up_ = true;
};

struct NetworkStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t integrity_failures = 0;
  std::uint64_t auth_failures = 0;
};

class SimNetwork {
 public:
  explicit SimNetwork(std::uint64_t seed = 0);

  double now() const { return now_; }

  /// Endpoints register themselves on construction.
  void register_endpoint(Endpoint& ep);
  bool is_registered(const std::string& name) const { return endpoints_.count(name) != 0; }

  /// Opens the bidirectional session. Throws AuthError for an unregistered
  /// peer or when `presented_token` is not `a`'s registered token.
  void connect(const std::string& a, const std::string& b, const std::string& presented_token);
  bool connected(const std::string& a, const std::string& b) const;

  /// Parameters for frames travelling from `from` to `to`.
  void set_params(const std::string& from, const std::string& to, const ChannelParams& params);
  void set_default_params(const ChannelParams& params);

  /// Frames the message and schedules delivery. Throws AuthError when no
  /// session exists.
  void send(const ControlMessage& msg);

  /// Corrupts the next transmission from `from` to `to` in flight.
  void corrupt_next(const std::string& from, const std::string& to);
  /// Delivers an arbitrary line as if it arrived on the session.
  void inject_raw(const std::string& from, const std::string& to, std::string line);

  /// Processes events in time order until the predicate holds, the queue
  /// drains, or virtual time would pass `deadline`. Returns the predicate.
  bool run_until(const std::function<bool()>& done, double deadline);
  void run_until_time(double t);
  void run_until_idle();

  const NetworkStats& stats() const { return stats_; }
  std::vector<std::string> error_log() const { return errors_; }

 private:
  struct Session {
    SessionKey key{};
  };
  struct Direction {
    double last_delivery = 0.0;
    int corrupt_pending = 0;
  };
  struct Event {
    double time;
    std::uint64_t order;
    std::string from, to;
    std::string line;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : order > o.order; }
  };

  static std::pair<std::string, std::string> key_of(const std::string& a, const std::string& b);
  const ChannelParams& params(const std::string& from, const std::string& to) const;
  void deliver(const Event& ev);

  double now_ = 0.0;
  Rng rng_;
  std::uint64_t order_ = 0;
  std::map<std::string, Endpoint*> endpoints_;
  std::map<std::pair<std::string, std::string>, Session> sessions_;
  std::map<std::pair<std::string, std::string>, Direction> directions_;
  std::map<std::pair<std::string, std::string>, ChannelParams> params_;
  ChannelParams default_params_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  NetworkStats stats_;
  std::vector<std::string> errors_;
};

// ---------------------------------------------------------------------------
// Agents

/// Controls the wavelength-selective switch. The routing-table command set is
/// this simulator's own; real WSS hardware speaks a vendor protocol.
class WssAgent : public Endpoint {
 public:
  enum class CrashPoint { None, AfterValidate, MidRoute };

  WssAgent(SimNetwork& net, std::string name, std::string token, ChannelPlan plan, std::vector<NodeId> ports,
           double attenuation_db = 5.0);

  const WssConfig& config() const { return config_; }
  std::uint64_t applies() const { return applies_; }

  /// The next apply dies at the given point; the agent goes down without
  /// replying and keeps its previous table.
  void crash_on_next_apply(CrashPoint point) { crash_ = point; }
  void restart() { set_up(true); }

  void on_message(const ControlMessage& msg) override;

 private:
  ChannelPlan plan_;
  std::vector<NodeId> ports_;
  double attenuation_db_;
  WssConfig config_;
  std::uint64_t applies_ = 0;
  CrashPoint crash_ = CrashPoint::None;
};

struct CaptureRecord {
  std::int64_t scheduled_epoch = 0;
  std::int64_t actual_epoch = 0;
  double duration_s = 0.0;
  std::optional<EventStream> stream;
};

/// Time tagger at one end node. Captures start on a PPS edge.
class NodeAgent : public Endpoint {
 public:
  NodeAgent(SimNetwork& net, std::string name, std::string token, std::uint16_t node_id, BlobStore& blobs);

  std::uint16_t node_id() const { return node_id_; }
  const std::map<std::int64_t, CaptureRecord>& captures() const { return captures_; }

  /// Hands the finished capture for `scheduled_epoch` to the agent, as the
  /// TDC would. Its epoch_start must equal the epoch the agent reported.
  void record(std::int64_t scheduled_epoch, EventStream stream);

  void on_message(const ControlMessage& msg) override;

 private:
  std::uint16_t node_id_;
  BlobStore& blobs_;
  std::map<std::int64_t, CaptureRecord> captures_;
};

/// Epoch at which a capture starts when the arm command arrives at
/// `arrival_s`: the scheduled epoch if still ahead, else the next PPS edge.
std::int64_t arm_start_epoch(std::int64_t scheduled_epoch, double arrival_s);

// ---------------------------------------------------------------------------
// Controller

struct FetchedStream {
  NodeId node;
  std::int64_t scheduled_epoch = 0;
  EventStream stream;
  double demand_bps = 0.0;
  std::size_t bytes = 0;
  bool deferred = false;
};

class Controller : public Endpoint {
 public:
  Controller(SimNetwork& net, std::string name, std::string token, BlobStore& blobs);

  /// Virtual seconds to wait for a terminal response.
  void set_timeout(double seconds) { timeout_s_ = seconds; }
  /// Arm commands leave this long before the epoch.
  void set_arm_lead(double seconds) { arm_lead_s_ = seconds; }

  /// Asynchronous request; returns its correlation id.
  std::uint64_t submit(const std::string& to, MessageKind kind, Json payload);
  /// Runs the network until `id` is answered or times out. Returns the
  /// terminal response; a timeout yields a synthesized error.
  ControlMessage await(std::uint64_t id);
  /// Every response received for `id`, terminal or not.
  const std::vector<ControlMessage>& responses(std::uint64_t id) const;
  std::uint64_t late_responses() const { return late_; }

  WssConfig apply_allocation(const std::string& wss, const Allocation& alloc);
  Json status(const std::string& peer);

  /// Arms every node for the epoch. Returns the epoch each one reported.
  /// A missing ack disarms all of them and throws PartialArmError.
  std::map<NodeId, std::int64_t> arm_measurement(const std::vector<NodeId>& nodes, std::int64_t epoch,
                                                 double duration_s, const TomographySchedule& schedule);

  /// Fetches the listed captures, admitting each transfer against `budget`.
  /// Transfers that do not fit wait until earlier ones finish; a stream that
  /// alone exceeds capacity throws AdmissionError.
  std::vector<FetchedStream> fetch_data(const std::vector<std::pair<NodeId, std::int64_t>>& requests,
                                        DataPlaneBudget& budget);

  void on_message(const ControlMessage& msg) override;

 private:
  struct Pending {
    double deadline = 0.0;
    bool done = false;
    std::vector<ControlMessage> responses;
  };

  ControlMessage checked(const ControlMessage& response) const;

  BlobStore& blobs_;
  double timeout_s_ = 30.0;
  double arm_lead_s_ = 1.0;
  std::uint64_t next_id_ = 1;
  std::uint64_t late_ = 0;
  std::map<std::uint64_t, Pending> pending_;
};

/// Channel sets implied by a routing table: a channel belongs to a link when
/// its signal and idler slices reach that link's two endpoints.
Allocation allocation_from_routes(const WssConfig& config, const ChannelPlan& plan);

Json allocation_to_json(const Allocation& alloc);
Allocation allocation_from_json(const Json& j);
Json schedule_to_json(const TomographySchedule& s);
TomographySchedule schedule_from_json(const Json& j);

}  // namespace qlan
