#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qkdauth/budget.hpp"
#include "qkdauth/hake.hpp"
#include "qkdauth/sessions.hpp"

// Scenario drivers shared by the unit tests and the acceptance binary.
namespace harness {

using qkdauth::sessions::ProtocolId;
using qkdauth::sessions::Role;

qkdauth::sessions::MultistageConfig config(const std::vector<ProtocolId>& plan, std::uint64_t seed);

// Plan that puts `p` at its last stage: [p] for the PQC protocols, [KEM, MAC] for MAC.
std::vector<ProtocolId> plan_ending_in(ProtocolId p);

Role sender(ProtocolId p, int msg_index);
int message_count(ProtocolId p);

// Party and step expected to reject first when message `msg_index` is altered
// in transit. Altering a nonce is caught where the diverging keys are first
// used, which is the initiator opening m3.
std::pair<Role, int> expected_reject(ProtocolId p, int msg_index);

struct FlipCase {
  ProtocolId protocol;
  int msg_index;
  std::uint64_t bit;
};

struct FlipResult {
  qkdauth::sessions::StageSummary summary;
  bool pooled_a = false;  // pool grew at A during the tampered stage
  bool pooled_b = false;
};

// Payload length in octets of every message of an honest run, by index.
std::vector<std::size_t> payload_lengths(ProtocolId p, std::uint64_t seed);

FlipResult run_flip(const FlipCase& c, std::uint64_t seed);

// Runs p honestly once, then runs p again with every message the attacked
// party receives replaced by the matching frame of the first run.
qkdauth::sessions::StageSummary run_replay(ProtocolId p, std::uint64_t seed);

struct CorpusCase {
  std::string name;
  std::string text;
  bool clean = false;  // hand label from the `# expect:` line
};

// Labelled query scripts from tests/fixtures/clean, sorted by name.
std::vector<CorpusCase> cleanness_corpus();

// Runs the script as an experiment and reports the cleanness verdict.
bool classify(const CorpusCase& c, std::uint64_t seed,
              std::shared_ptr<const qkdauth::hake::World> world = nullptr);

struct Impersonation {
  bool accepted = false;   // the initiator accepted the forged flow
  bool has_origin = true;
  bool clean = false;
};

// Runs one Pi_Sigma stage in which a person-in-the-middle splits the QKD key
// and answers the initiator with the responder's long-term signing key. The
// genuine responder's replies never arrive. `corrupt_initiator` adds a
// CorruptQK on the initiator before the stage.
Impersonation impersonate_responder(bool corrupt_initiator, std::uint64_t seed);

// Share of 'trials' KEM stages for which RevealITS returned the session key.
double reveal_its_rate(double epsilon, int trials, bool mitm_without_auth, std::uint64_t seed);

// Expected coefficients for the plan KEM at stage 1 and MAC at stages 2..t
// (n_P = 2, n_S = 1), written out block by block.
qkdauth::budget::Coefficients expected_kem_then_mac(int t);

// The same plan through theorem1_total, with R replaced by the stage-1 bound.
qkdauth::budget::Coefficients computed_kem_then_mac(int t);

}  // namespace harness
