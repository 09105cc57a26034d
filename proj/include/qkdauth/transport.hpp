#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qkdauth/bytes.hpp"
#include "qkdauth/primitives.hpp"

namespace qkdauth::transport {

// protocol_id (1) || msg_type (1) || length (4, big-endian) || payload
struct WireMessage {
  static constexpr std::size_t kHeaderLen = 6;
  static constexpr std::size_t kMaxPayload = std::size_t{1} << 24;

  std::uint8_t protocol_id = 0;
  std::uint8_t msg_type = 0;
  Bytes payload;
  // Sender-side copy of the payload before encryption; never encoded.
  Bytes plaintext_payload;

  Bytes encode() const;
  // Throws FramingError unless `frame` is exactly one well-formed frame.
  static WireMessage decode(ByteView frame);
  // protocol_id || msg_type, bound as AEAD associated data.
  Bytes header_ad() const { return {protocol_id, msg_type}; }
};

enum class Direction { ToResponder, ToInitiator };
std::string_view to_string(Direction d);

enum class ActionKind { Observe, Drop, Delay, FlipBit, Replace, Inject, Replay };
std::string_view to_string(ActionKind k);

struct Match {
  std::optional<std::uint64_t> ordinal;  // 1-based, counted at dequeue across both directions
  std::optional<std::uint8_t> msg_type;
  std::optional<std::uint32_t> stage;
  std::optional<Direction> direction;
  std::optional<std::uint8_t> protocol_id;
};

struct Action {
  ActionKind kind = ActionKind::Observe;
  std::uint64_t n = 0;        // delay ticks, bit position, or log index
  bool random_bit = false;    // flip_bit:rand
  Bytes payload;              // replace: payload; inject: a full frame
};

struct Rule {
  Match match;
  Action action;
};

struct QueryLine {
  std::string name;
  std::vector<std::pair<std::string, std::string>> args;
  int line = 0;
};

struct AdversaryScript {
  std::vector<Rule> rules;
  std::vector<QueryLine> queries;
  std::uint64_t seed = 0;

  bool observe_only() const;
};

// Line format:
//   seed <u64>
//   on [msg:<n>|any] [type:<t>] [stage:<s>] [dir:to_responder|to_initiator] [proto:<id>] do <action>
//   query <Name> key=value ...
// Actions: observe, drop, delay:<n>, flip_bit:<pos>|rand, replace:<hex>, inject:<hex frame>, replay:<log index>.
// Throws ScriptError with the offending line number.
AdversaryScript parse_script(std::string_view text);

struct AuditEntry {
  std::uint64_t ordinal;
  std::uint32_t stage;
  Direction direction;
  std::uint8_t msg_type;
  ActionKind action;
  std::string detail;
};

// Applies an adversary script at dequeue time. Shared by both endpoints of a
// link; internally synchronized.
class Middlebox {
 public:
  explicit Middlebox(AdversaryScript script = {});

  struct Decision {
    std::vector<WireMessage> deliver;
    std::optional<std::pair<std::uint64_t, WireMessage>> hold;  // (ticks, message)
  };

  Decision on_dequeue(Direction d, WireMessage m);
  void record_sent(const WireMessage& m);
  void set_stage(std::uint32_t stage);

  std::vector<Bytes> passive_log() const;
  std::vector<AuditEntry> audit() const;
  std::uint64_t dequeued() const;

 private:
  mutable std::mutex mu_;
  AdversaryScript script_;
  primitives::Drbg rng_;
  std::vector<Bytes> log_;
  std::vector<AuditEntry> audit_;
  std::uint64_t ordinal_ = 0;
  std::uint32_t stage_ = 1;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const WireMessage& m) = 0;
  // Blocks until a message arrives; throws ChannelClosed once the peer has
  // closed and nothing is pending.
  virtual WireMessage recv() = 0;
  virtual std::optional<WireMessage> try_recv() = 0;
  virtual void close() = 0;
  virtual bool peer_closed() const = 0;
};

// Receive-side queue with logical-tick delays. Each receive attempt is a tick.
class Inbox {
 public:
  Inbox(std::shared_ptr<Middlebox> mb, Direction d) : mb_(std::move(mb)), dir_(d) {}
  void push(WireMessage m);
  std::optional<WireMessage> try_pop();
  bool idle() const;  // nothing queued and nothing held
  bool has_held() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<Middlebox> mb_;
  Direction dir_;
  std::deque<WireMessage> queue_;
  std::deque<WireMessage> ready_;
  std::vector<std::pair<std::uint64_t, WireMessage>> held_;
};

// In-memory duplex pipe between an initiator and a responder endpoint.
class MemoryChannel {
 public:
  explicit MemoryChannel(std::shared_ptr<Middlebox> mb = nullptr);
  ~MemoryChannel();
  MemoryChannel(const MemoryChannel&) = delete;
  MemoryChannel& operator=(const MemoryChannel&) = delete;

  Endpoint& initiator();
  Endpoint& responder();
  Middlebox& middlebox() { return *mb_; }
  std::shared_ptr<Middlebox> shared_middlebox() const { return mb_; }
  std::vector<Bytes> passive_log() const { return mb_->passive_log(); }
  void set_stage(std::uint32_t stage) { mb_->set_stage(stage); }
  // Re-opens both directions for the next stage.
  void reset();
  bool has_held() const;

 private:
  struct Shared;
  class End;
  std::shared_ptr<Middlebox> mb_;
  std::shared_ptr<Shared> shared_;
  std::unique_ptr<End> init_, resp_;
};

// Blocking TCP endpoint with the same framing.
class TcpEndpoint final : public Endpoint {
 public:
  TcpEndpoint(int fd, std::shared_ptr<Middlebox> mb, Direction inbound);
  ~TcpEndpoint() override;
  TcpEndpoint(const TcpEndpoint&) = delete;
  TcpEndpoint& operator=(const TcpEndpoint&) = delete;

  void send(const WireMessage& m) override;
  WireMessage recv() override;
  std::optional<WireMessage> try_recv() override;
  void close() override;
  bool peer_closed() const override;

 private:
  void pump(int timeout_ms);

  int fd_;
  std::shared_ptr<Middlebox> mb_;
  Inbox inbox_;
  Bytes buffer_;
  bool eof_ = false;
  bool closed_ = false;
};

class TcpListener {
 public:
  // `port` 0 picks an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  std::uint16_t port() const { return port_; }
  std::unique_ptr<TcpEndpoint> accept(std::shared_ptr<Middlebox> mb);

 private:
  int fd_;
  std::uint16_t port_;
};

std::unique_ptr<TcpEndpoint> tcp_connect(const std::string& host, std::uint16_t port, std::shared_ptr<Middlebox> mb);

// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_address(std::string_view addr);

}  // namespace qkdauth::transport
