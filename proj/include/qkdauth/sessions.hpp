#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qkdauth/bytes.hpp"
#include "qkdauth/keyschedule.hpp"
#include "qkdauth/primitives.hpp"
#include "qkdauth/qkd_source.hpp"
#include "qkdauth/transport.hpp"

namespace qkdauth::sessions {

using keyschedule::ProtocolId;
using primitives::Duration;
using primitives::Instant;
using primitives::PrimitiveSuite;
using transport::WireMessage;

enum class Role { Initiator, Responder };
enum class Status { Bottom, Active, Accept, Reject };

std::string_view to_string(Role r);
std::string_view to_string(Status s);

// "sigma" | "kem" | "mac"
ProtocolId parse_protocol(std::string_view s);
// Comma-separated protocol list. Throws PlanError when empty or when the
// first stage is not a PQC protocol (the pool is empty at stage 1).
std::vector<ProtocolId> parse_plan(std::string_view s);
void validate_plan(const std::vector<ProtocolId>& plan);

// Verification-step categories.
enum class RejectReason {
  None,
  SigVerifyFailed,
  MacVerifyFailed,
  DecapFailed,
  QkdAborted,
  PoolExhausted,
  KeyExpired,
  ChannelClosed,
  ProtocolViolation,
};

// Concrete cause underneath the category.
enum class RejectDetail {
  None,
  AeadOpenFailed,
  TagMismatch,
  SignatureInvalid,
  CertInvalid,
  CertExpired,
  DecapsulationFailed,
  NonceReplay,
  MalformedPayload,
  UnexpectedMessage,
};

std::string_view to_string(RejectReason r);
std::string_view to_string(RejectDetail d);

// Step number of the verification that authenticates message `msg_index`
// at `receiver`:
//   sigma  initiator m2..m4 -> 13, m5 -> 16; responder m1, m6, m7 -> 20, m8 -> 23
//   kem    initiator m2, m3, m7 -> 24, m6 -> 18; responder m4 -> 11, m1, m5, m8 -> 27
//   mac    responder m1 -> 10; initiator m2 -> 13
// Returns 0 for messages the receiver never gets.
int verification_step(ProtocolId p, Role receiver, int msg_index);
RejectReason reason_for_step(ProtocolId p, int step);

struct Certificate {
  Bytes entity_id;
  std::string algorithm;  // algorithm of `public_key`
  Bytes public_key;
  Bytes issuer_id;
  Instant not_after{0};
  primitives::SigTag issuer_signature;

  // Canonical u32-length-prefixed encoding; not_after as u64 nanoseconds.
  Bytes encode() const;
  Bytes to_be_signed() const;
  // Throws FramingError.
  static Certificate decode(ByteView b);
};

enum class CertCheck { Ok, Invalid, Expired };

class TestCa {
 public:
  TestCa(const PrimitiveSuite& suite, Bytes issuer_id, primitives::Drbg& rng);
  Certificate issue(Bytes entity_id, std::string algorithm, Bytes public_key, Instant not_after,
                    primitives::Drbg& rng) const;
  const Bytes& issuer_id() const { return issuer_id_; }
  const Bytes& public_key() const { return keys_.pk; }
  const std::string& algorithm() const { return keys_.algorithm; }

 private:
  const PrimitiveSuite* suite_;
  Bytes issuer_id_;
  primitives::SignatureKeyPair keys_;
};

struct PeerTrust {
  Bytes ca_id;
  std::string ca_algorithm;
  Bytes ca_public_key;
  std::optional<Bytes> expected_peer;  // pid; any CA-issued identity when unset

  CertCheck check(const Certificate& c, Instant now) const;
  static PeerTrust from(const TestCa& ca, std::optional<Bytes> expected_peer = std::nullopt);
};

struct Credential {
  Certificate cert;
  primitives::SignatureKeyPair keys;  // signature or KEM pair, per cert.algorithm
};

struct Identity {
  Bytes entity_id;
  std::optional<Credential> sig;
  std::optional<Credential> kem;
};

// Issues signature and KEM credentials for `entity_id` valid for the suite's T_HPT.
Identity make_identity(const PrimitiveSuite& suite, const TestCa& ca, Bytes entity_id, primitives::Drbg& rng);

class ReplayCache {
 public:
  // True when `nonce` was already seen; records it otherwise.
  bool check_and_insert(ByteView nonce);
  bool contains(ByteView nonce) const { return seen_.count(Bytes(nonce.begin(), nonce.end())) != 0; }
  std::size_t size() const { return seen_.size(); }

 private:
  std::set<Bytes> seen_;
};

struct KeyId {
  std::uint32_t stage = 0;
  std::uint64_t offset = 0;
  auto operator<=>(const KeyId&) const = default;
};

std::string to_string(const KeyId& id);

// Authenticated leftover QKD octets. Both parties hold identical pools and
// apply the same selection rule, so drawing needs no key-id exchange.
class KeyPool {
 public:
  struct Entry {
    KeyId id;  // stage of origin and offset of the first remaining octet
    Secret key;
    double epsilon = 0;
  };

  void add(std::uint32_t stage, const Secret& key, double epsilon);
  // Selection: lowest epsilon, then earliest stage, among entries holding at
  // least `len` octets.
  std::optional<KeyId> select(std::size_t len) const;
  Secret peek(const KeyId& id, std::size_t len) const;
  // Removes the leading `len` octets of the selected entry. Throws PoolExhausted.
  std::pair<KeyId, Secret> draw(std::size_t len);

  std::size_t total_octets() const;
  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<KeyId>& draw_history() const { return history_; }
  // Fingerprint over ids, epsilons and contents. Safe to print.
  std::string fingerprint() const;
  bool operator==(const KeyPool& other) const;
  void wipe();

 private:
  std::vector<Entry> entries_;
  std::vector<KeyId> history_;
};

inline constexpr std::size_t kNonceLen = 32;
inline constexpr std::size_t kSsQkdLen = 64;
inline constexpr std::size_t kK0Len = 64;
inline constexpr std::size_t kSecStateLen = 64;

// Long-lived per-party state carried across stages.
class Party {
 public:
  Party(std::string name, Role role, Identity identity, PeerTrust trust, std::uint64_t seed);

  std::string name;
  Role role;
  Identity identity;
  PeerTrust trust;
  Secret sec_state{Bytes(kSecStateLen, 0)};
  std::uint64_t ctr = 0;
  KeyPool pool;
  ReplayCache seen_nonces;
  primitives::Drbg rng;

  // Clears long-term secret keys and SecState. Pooled keys stay.
  void wipe_live_secrets();
};

struct StageOptions {
  bool entity_protection = true;
  // Misuse mode: the stage skips authentication and accepts K_QKD as is.
  bool authentication_disabled = false;
  double pool_epsilon = 0;  // attached to ss_rest when pooled
};

// The per-stage slice of a session record.
struct StageOutcome {
  std::uint32_t stage = 0;
  ProtocolId protocol = ProtocolId::Sigma;
  Role role = Role::Initiator;
  Status status = Status::Bottom;
  RejectReason reason = RejectReason::None;
  RejectDetail detail = RejectDetail::None;
  int step = 0;            // verification step that rejected
  int failed_message = 0;  // message index that failed at this party

  std::vector<Bytes> sent;      // encoded frames, in order
  std::vector<Bytes> received;  // encoded frames, in order
  Bytes m_s() const;
  Bytes m_r() const;

  Secret k;     // ss_rest, pooled on accept
  Secret qk;    // T_HPT-term PQC secret used in this stage
  Secret esk;   // ephemeral QKD key ss_QKD
  Secret eqk;   // ephemeral KEM secrets k_A || k_B
  Secret pss_in;
  Secret pss_out;
  std::optional<KeyId> k0_id;
  Secret sskp;  // K0 retired from the pool (MAC stages)
  Bytes transcript_all;

  // This party accepted after sending the last message, so it never learns
  // whether the peer verified it.
  bool liveness_gap = false;
  double compute_seconds = 0;  // time spent inside this party's state machine
  keyschedule::ScheduleState schedule;  // live schedule as of accept; empty otherwise
};

// One party's state machine for one stage. Externally driven: feed it
// messages, send what it returns.
class StageEngine {
 public:
  StageEngine(const PrimitiveSuite& suite, Party& party, ProtocolId protocol, std::uint32_t stage,
              const qkd::QkdOutcome& qkd, StageOptions opts = {});
  ~StageEngine();
  StageEngine(const StageEngine&) = delete;
  StageEngine& operator=(const StageEngine&) = delete;

  // Initiator returns m1; responder returns nothing. A MAC stage throws
  // PoolExhausted here when the pool cannot supply K0.
  std::vector<WireMessage> start();
  std::vector<WireMessage> on_message(const WireMessage& m);
  // Rejects an active stage from outside, e.g. when the channel closes.
  void abort(RejectReason r, RejectDetail d = RejectDetail::None);

  Status status() const { return out_.status; }
  const StageOutcome& outcome() const { return out_; }
  const keyschedule::ScheduleState& schedule() const { return sched_; }
  // Messages this party still expects before it can finish.
  int expected_message() const { return expect_; }

 private:
  struct StepFailure;

  std::vector<WireMessage> sigma_on(const WireMessage& m);
  std::vector<WireMessage> kem_on(const WireMessage& m);
  std::vector<WireMessage> mac_on(const WireMessage& m);

  WireMessage emit(int idx, const Bytes& plaintext, std::optional<keyschedule::LabelName> key);
  // Opens (or passes through) the payload, then appends it to the transcript.
  Bytes receive(const WireMessage& m, std::optional<keyschedule::LabelName> key);
  void install_keys(const std::map<keyschedule::LabelName, Secret>& keys);
  void fail(int idx, RejectDetail d, RejectReason forced = RejectReason::None);
  void accept();
  void derive_k0_k1();
  const Credential& own_credential(bool kem) const;
  Certificate check_peer_cert(int idx, const Bytes& pt, bool kem);
  Bytes fresh_nonce();
  void check_nonce(int idx, const Bytes& n);

  const PrimitiveSuite& suite_;
  Party& party_;
  ProtocolId p_;
  StageOptions opts_;
  qkd::QkdOutcome qkd_;
  keyschedule::TranscriptLog log_;
  keyschedule::ScheduleState sched_;
  std::map<keyschedule::LabelName, std::unique_ptr<primitives::AeadKey>> aead_;
  Secret ss_qkd_, ss_rest_, k_a_, k_b_;
  Bytes n_a_, n_b_;
  std::optional<Certificate> peer_cert_;
  int expect_ = 0;
  StageOutcome out_;
};

// Blocking single-party drivers over any endpoint. The endpoint is closed on
// return.
StageOutcome run_party(ProtocolId p, Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                       transport::Endpoint& channel, std::uint32_t stage = 1, StageOptions opts = {});
StageOutcome run_sigma(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                       transport::Endpoint& channel, std::uint32_t stage = 1, StageOptions opts = {});
StageOutcome run_kem(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                     transport::Endpoint& channel, std::uint32_t stage = 1, StageOptions opts = {});
// Throws PoolExhausted before sending anything when the pool is short.
StageOutcome run_mac(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                     transport::Endpoint& channel, std::uint32_t stage = 1, StageOptions opts = {});

struct PairOutcome {
  StageOutcome initiator;
  StageOutcome responder;
  double t_a = 0, t_b = 0, t_t = 0;  // seconds: compute at A, compute at B, the rest
};

// Deterministic single-thread pump over an in-memory channel. When nothing
// can move, the channel is closed and still-active parties reject with
// channel_closed.
PairOutcome run_pair_memory(ProtocolId p, Party& a, Party& b, const PrimitiveSuite& suite, const qkd::QkdPair& qkd,
                            transport::MemoryChannel& channel, std::uint32_t stage = 1, StageOptions opts = {});

// Per-stage lines of a multistage report.
struct StageSummary {
  std::uint32_t stage = 0;
  ProtocolId protocol = ProtocolId::Sigma;
  Status alpha_a = Status::Bottom;
  Status alpha_b = Status::Bottom;
  RejectReason reason = RejectReason::None;
  RejectDetail detail = RejectDetail::None;
  int step = 0;
  std::string rejecting;  // "initiator", "responder", "both" or empty
  std::size_t pool_a = 0, pool_b = 0;
  std::string pool_fp_a, pool_fp_b;
  std::string sec_state_fp_a, sec_state_fp_b;
  std::string ss_rest_fp;
  std::optional<KeyId> k0_id;
  double pool_epsilon = 0;
  // The last sender accepted while its peer did not.
  bool liveness_gap = false;
  bool agree = false;  // both accepted with identical ss_rest, SecState, ctr and pool
  double t_a = 0, t_b = 0, t_t = 0;
  bool runtime_feasible = false;
};

struct StageReport {
  std::vector<StageSummary> stages;
  std::uint64_t n_t_sigma = 0, n_t_kem = 0, n_t_mac = 0;
  bool all_accept = false;
  std::vector<transport::AuditEntry> audit;
  std::vector<Bytes> passive_log;
};

struct MultistageConfig {
  std::vector<ProtocolId> plan;
  primitives::SuiteConfig suite;
  qkd::QkdConfig qkd;
  transport::AdversaryScript adversary;
  bool entity_protection = true;
  bool authentication_disabled = false;
  std::string transport = "memory";  // or "tcp:<host>:<port>"
  std::uint64_t seed = 0;
  std::shared_ptr<const primitives::Clock> clock;
  // Optional hook replacing the QKD adversary (tampered and eavesdropped modes).
  std::shared_ptr<qkd::QuantumAdversaryHook> qkd_adversary;
};

// Two parties, one CA and one channel, run stage by stage. State threads
// through stages: SecState, ctr, pool and nonce caches.
class Multistage {
 public:
  explicit Multistage(MultistageConfig cfg);
  ~Multistage();

  // Runs the next stage. Returns its summary; the stage's outcomes stay
  // available through last().
  const StageSummary& run_stage(ProtocolId p);
  StageReport report() const;

  Party& initiator() { return *a_; }
  Party& responder() { return *b_; }
  const PrimitiveSuite& suite() const { return *suite_; }
  const PairOutcome& last() const { return last_; }
  const std::vector<PairOutcome>& history() const { return history_; }
  const qkd::QkdPair& last_qkd() const { return last_qkd_; }
  const std::vector<qkd::QkdPair>& qkd_history() const { return qkd_history_; }
  transport::MemoryChannel& channel() { return *channel_; }
  std::shared_ptr<transport::Middlebox> middlebox() const { return mb_; }
  std::uint32_t stages_run() const { return static_cast<std::uint32_t>(summaries_.size()); }
  bool halted() const { return halted_; }

 private:
  PairOutcome run_tcp(ProtocolId p, const qkd::QkdPair& q, std::uint32_t stage, StageOptions opts);
  double stage_epsilon(ProtocolId p, std::uint32_t stage) const;

  MultistageConfig cfg_;
  std::unique_ptr<PrimitiveSuite> suite_;
  std::unique_ptr<TestCa> ca_;
  std::unique_ptr<Party> a_, b_;
  std::shared_ptr<transport::Middlebox> mb_;
  std::unique_ptr<transport::MemoryChannel> channel_;
  std::vector<StageSummary> summaries_;
  std::vector<PairOutcome> history_;
  PairOutcome last_;
  qkd::QkdPair last_qkd_;
  std::vector<qkd::QkdPair> qkd_history_;
  std::uint64_t counts_[3] = {0, 0, 0};
  bool halted_ = false;
};

// Validates the plan, then runs it until the first stage that does not end in
// accept/accept.
StageReport run_multistage(const MultistageConfig& cfg);

}  // namespace qkdauth::sessions
