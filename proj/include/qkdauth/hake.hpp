#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qkdauth/bytes.hpp"
#include "qkdauth/primitives.hpp"
#include "qkdauth/qkd_source.hpp"
#include "qkdauth/sessions.hpp"
#include "qkdauth/transport.hpp"

// Execution environment for the key-indistinguishability game: parties,
// sessions and stages, the adversary's queries, partnering and cleanness.
//
// Reconstruction of the experiment loop:
//   1. The challenger builds long-term credentials for n_p parties (World) and
//      samples b.
//   2. Queries are answered in script order. Every query and every stage
//      accept advances one logical clock; registers keep the clock value of
//      the first issuance, which is how "issued before accept" is decided.
//   3. Stages run only through Execute, which drives two sessions over the
//      scripted network; Send feeds a frame to a session a stalled Execute
//      left active.
//   4. The first Test fixes the target. The adversary outputs d; the game
//      counts a win only when d == b and the target is clean.
namespace qkdauth::hake {

using sessions::ProtocolId;
using sessions::Role;
using sessions::Status;

enum class QueryKind {
  Create,
  Send,
  Execute,
  Reveal,
  Test,
  CorruptQK,
  CorruptSK,
  CorruptCK,
  CompromiseQK,
  CompromiseCK,
  CompromiseSK,
  CompromiseSS,
  CompromiseKP,
  RevealITS,
  Guess,
};

std::string_view to_string(QueryKind k);
// Throws QueryError.
QueryKind parse_query_kind(std::string_view name);

struct Query {
  QueryKind kind = QueryKind::Reveal;
  int i = -1, s = -1, j = -1, r = -1;
  std::uint32_t t = 0;
  std::optional<Role> role;
  std::optional<ProtocolId> protocol;
  Bytes message;  // Send: one encoded frame
  int d = -1;     // Guess
};

// `query Reveal i=0 s=0 t=1`, `query Create i=0 j=1 role=init`,
// `query Execute i=0 s=0 j=1 r=0 proto=kem`, `query Send i=1 s=0 m=<hex>`,
// `query Guess d=1`. Throws QueryError naming the line.
Query parse_query(const transport::QueryLine& line);

struct QueryOutcome {
  bool bottom = true;
  Bytes value;

  static QueryOutcome none() { return {}; }
  static QueryOutcome of(Bytes v) { return {false, std::move(v)}; }
};

// Long-term credentials shared by every trial that uses the same World.
class World {
 public:
  World(const primitives::SuiteConfig& suite, int n_p, std::uint64_t seed,
        std::shared_ptr<const primitives::Clock> clock = nullptr);

  const primitives::PrimitiveSuite& suite() const { return *suite_; }
  int n_p() const { return static_cast<int>(identities_.size()); }
  const sessions::Identity& identity(int i) const { return identities_.at(static_cast<std::size_t>(i)); }
  sessions::PeerTrust trust_for(int peer) const;
  static Bytes entity_id(int i);

 private:
  std::unique_ptr<primitives::PrimitiveSuite> suite_;
  std::unique_ptr<sessions::TestCa> ca_;
  std::vector<sessions::Identity> identities_;
};

struct EnvConfig {
  int n_p = 2;
  int n_s = 1;
  std::uint32_t n_t = 8;
  primitives::SuiteConfig suite;
  qkd::QkdConfig qkd;
  bool entity_protection = true;
  bool authentication_disabled = false;
  std::uint64_t seed = 0;
  transport::AdversaryScript network;  // rules applied during Execute
  std::shared_ptr<qkd::QuantumAdversaryHook> qkd_adversary;
  std::optional<int> b;  // challenger bit; sampled from the seed when unset
  // Stages run for sessions (0,0) and (1,0) when a script creates no session.
  std::vector<ProtocolId> plan{ProtocolId::Kem};
};

struct StageRecord {
  std::uint32_t t = 0;
  ProtocolId protocol = ProtocolId::Sigma;
  sessions::StageOutcome outcome;
  qkd::QkdOutcome qkd;
  std::uint64_t finished_at = 0;  // clock at accept or reject; 0 while active
};

struct SessionState {
  int owner = -1;
  int index = -1;
  int pid = -1;
  Role role = Role::Initiator;
  std::vector<StageRecord> stages;  // stages[t-1]
  std::unique_ptr<sessions::Party> party;
  std::unique_ptr<sessions::StageEngine> live;

  std::uint32_t stid() const { return static_cast<std::uint32_t>(stages.size()); }
  const StageRecord* stage(std::uint32_t t) const;
  Status alpha(std::uint32_t t) const;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg, std::shared_ptr<const World> world = nullptr);
  ~Environment();
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  QueryOutcome query(const Query& q);

  // Returns the new session index, or nullopt (bottom) when the slot exists
  // or the party has no free slot.
  std::optional<int> create(int i, int j, Role role, std::optional<int> s = std::nullopt);
  // Delivers one frame to an active session; returns its replies, concatenated.
  QueryOutcome send(int i, int s, ByteView frame);
  // Runs the next stage of two partnered sessions over the scripted network.
  // Sessions the network leaves waiting stay active.
  void execute(int i, int s, int j, int r, ProtocolId p);

  QueryOutcome reveal(int i, int s, std::uint32_t t);
  QueryOutcome test(int i, int s, std::uint32_t t);
  QueryOutcome corrupt_qk(int i, int s, std::uint32_t t);
  QueryOutcome corrupt_sk(int i);
  QueryOutcome corrupt_ck(int i);
  QueryOutcome compromise(QueryKind kind, int i, int s, std::uint32_t t);
  // Throws QueryError while the stage is active or absent.
  QueryOutcome reveal_its(int i, int s, std::uint32_t t);

  bool matches(int i, int s, int j, int r, std::uint32_t t) const;
  bool prefix_matches(int i, int s, int j, int r, std::uint32_t t) const;
  std::optional<std::pair<int, int>> has_origin(int i, int s, std::uint32_t t) const;
  // False unless stage t of (i,s) accepted.
  bool clean_hpt(int i, int s, std::uint32_t t) const;

  int challenger_bit() const { return b_; }
  std::uint64_t now() const { return clock_; }
  const SessionState& session(int i, int s) const;
  bool has_session(int i, int s) const;
  std::optional<std::tuple<int, int, std::uint32_t>> tested() const { return tested_; }
  const std::optional<Bytes>& test_value() const { return test_value_; }
  // Real key the adversary holds for (i,s,t) through Reveal or RevealITS on it
  // or on a matching session.
  std::optional<Bytes> known_key(int i, int s, std::uint32_t t) const;
  std::optional<int> guess() const { return guess_; }
  const World& world() const { return *world_; }
  std::shared_ptr<transport::Middlebox> network() const { return mb_; }

 private:
  using RegKey = std::tuple<QueryKind, int, int, std::uint32_t>;

  SessionState& at(int i, int s);
  void check_party(int i) const;
  bool issued_before(QueryKind k, int i, int s, std::uint32_t t, std::uint64_t deadline) const;
  // First issuance records the clock; returns false on repeats.
  bool mark(QueryKind k, int i, int s, std::uint32_t t);
  void finish_if_done(SessionState& st);
  // r < 0 checks only the party-level set.
  bool forbidden_set_issued(int i, int s, int j, int r, std::uint32_t t, std::uint64_t deadline) const;
  const sessions::StageOutcome* view(int i, int s, std::uint32_t t) const;

  EnvConfig cfg_;
  std::shared_ptr<const World> world_;
  primitives::Drbg rng_;
  int b_ = 0;
  std::uint64_t clock_ = 0;
  std::map<std::pair<int, int>, SessionState> sessions_;
  std::map<RegKey, std::uint64_t> registers_;
  std::map<std::tuple<int, int, std::uint32_t>, Bytes> learned_;
  std::optional<std::tuple<int, int, std::uint32_t>> tested_;
  std::set<std::tuple<int, int, std::uint32_t>> tests_answered_;
  std::optional<Bytes> test_value_;
  std::optional<int> guess_;
  std::shared_ptr<transport::Middlebox> mb_;
  std::uint64_t qkd_seed_ = 0;
  std::uint64_t executions_ = 0;
};

struct ExperimentResult {
  int b = 0;
  int d = 0;
  bool test_bottom = true;  // Test was answered with bottom, or never issued
  bool trivial_win = false;  // d came from a revealed key
  bool clean = false;
  bool win = false;  // d == b and the target is clean
};

// Runs the script's queries in order. Without Create queries, sessions (0,0)
// and (1,0) are created and cfg.plan is executed first. Without a Test query,
// the last stage of (0,0) is tested. Without a Guess query, the adversary
// compares the Test answer with any key it revealed, and otherwise flips a
// coin from the script seed.
ExperimentResult run_experiment(const EnvConfig& cfg, const transport::AdversaryScript& script,
                                std::shared_ptr<const World> world = nullptr);

struct ForwardSecrecyResult {
  std::size_t frames_examined = 0;
  std::size_t candidate_keys = 0;
  std::size_t decryptions = 0;     // AEAD openings that succeeded
  std::size_t recovered_octets = 0;  // octets of stage-<t pooled keys found
  std::size_t target_octets = 0;
  bool pool_intact = false;  // wiping live secrets left both pools unchanged
};

// Runs cfg.plan, then hands the harness every live secret after the last
// stage (long-term keys, SecState, the final schedule) plus the passive log
// and QKD transcripts. The harness re-derives what it can, tries every
// candidate on every recorded frame, and scans all material it recovered for
// 16-octet windows of keys pooled before the last stage.
ForwardSecrecyResult forward_secrecy_trial(const sessions::MultistageConfig& cfg);

}  // namespace qkdauth::hake
