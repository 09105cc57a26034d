#include <algorithm>
#include <set>

#include "doctest.h"
#include "harness.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"

using namespace qkdauth;
using namespace qkdauth::sessions;

namespace {

bool contains(const Bytes& hay, const Bytes& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

void check_agreement(const StageSummary& s, const Multistage& ms) {
  CHECK(s.alpha_a == Status::Accept);
  CHECK(s.alpha_b == Status::Accept);
  CHECK(s.agree);
  CHECK(s.reason == RejectReason::None);
  CHECK(ms.last().initiator.k == ms.last().responder.k);
}

}  // namespace

TEST_SUITE("sessions") {

TEST_CASE("honest single stages agree") {
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    CAPTURE(to_string(p));
    auto plan = harness::plan_ending_in(p);
    Multistage ms(harness::config(plan, 3));
    for (ProtocolId q : plan) check_agreement(ms.run_stage(q), ms);
    CHECK(ms.initiator().sec_state == ms.responder().sec_state);
    CHECK(ms.initiator().pool == ms.responder().pool);
    CHECK(ms.initiator().ctr == ms.responder().ctr);
  }
}

TEST_CASE("every frame is recorded on both sides in order") {
  Multistage ms(harness::config({ProtocolId::Sigma}, 4));
  ms.run_stage(ProtocolId::Sigma);
  const auto& a = ms.last().initiator;
  const auto& b = ms.last().responder;
  CHECK(a.sent.size() == 4);
  CHECK(b.sent.size() == 4);
  CHECK(a.m_s() == b.m_r());
  CHECK(a.m_r() == b.m_s());
  CHECK(ms.middlebox()->passive_log().size() == 8);
}

TEST_CASE("kem, mac, mac threads state through the stages") {
  auto cfg = harness::config({ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac}, 5);
  Multistage ms(cfg);
  auto s1 = ms.run_stage(ProtocolId::Kem);
  std::size_t pool1 = s1.pool_a;
  CHECK(pool1 == ms.last().initiator.k.size());
  auto s2 = ms.run_stage(ProtocolId::Mac);
  check_agreement(s2, ms);
  REQUIRE(s2.k0_id);
  CHECK(s2.k0_id->stage == 1);
  CHECK(s2.pool_a == pool1 - kK0Len + ms.last().initiator.k.size());
  CHECK(ms.last().initiator.sskp.size() == kK0Len);
  CHECK(ms.initiator().ctr == 1);
  check_agreement(ms.run_stage(ProtocolId::Mac), ms);
  CHECK(ms.initiator().ctr == 2);
  auto r = ms.report();
  CHECK(r.all_accept);
  CHECK(r.n_t_kem == 1);
  CHECK(r.n_t_mac == 2);
  CHECK(r.n_t_sigma == 0);
}

TEST_CASE("sigma then kem gives a fresh secret state per stage") {
  auto r = run_multistage(harness::config({ProtocolId::Sigma, ProtocolId::Kem}, 6));
  REQUIRE(r.stages.size() == 2);
  CHECK(r.all_accept);
  CHECK(r.stages[0].sec_state_fp_a != r.stages[1].sec_state_fp_a);
  CHECK(r.stages[0].sec_state_fp_a == r.stages[0].sec_state_fp_b);
  CHECK(r.stages[1].sec_state_fp_a == r.stages[1].sec_state_fp_b);
}

TEST_CASE("planning rules") {
  CHECK_THROWS_AS(parse_plan("mac,kem"), PlanError);
  CHECK_THROWS_AS(parse_plan(""), PlanError);
  CHECK_THROWS_AS(validate_plan({ProtocolId::Mac}), PlanError);
  CHECK(parse_plan("sigma,kem,mac").size() == 3);
}

TEST_CASE("mac with an empty pool fails before sending") {
  PrimitiveSuite suite;
  primitives::Drbg rng(7, "ca");
  TestCa ca(suite, to_bytes("ca"), rng);
  Party a("A", Role::Initiator, make_identity(suite, ca, to_bytes("A"), rng), PeerTrust::from(ca, to_bytes("B")), 1);
  qkd::QkdConfig qc;
  auto q = qkd::run_unauthenticated_qkd(qc);
  StageEngine e(suite, a, ProtocolId::Mac, 2, q.initiator);
  CHECK_THROWS_AS(e.start(), PoolExhausted);
  CHECK(e.outcome().sent.empty());
}

TEST_CASE("mac stage after an exhausted pool rejects with pool_exhausted") {
  auto cfg = harness::config({ProtocolId::Kem}, 8);
  cfg.qkd.key_len = 64;  // nothing left over after ss_QKD
  Multistage ms(cfg);
  check_agreement(ms.run_stage(ProtocolId::Kem), ms);
  CHECK(ms.initiator().pool.total_octets() == 0);
  auto s = ms.run_stage(ProtocolId::Mac);
  CHECK(s.alpha_a == Status::Reject);
  CHECK(s.reason == RejectReason::PoolExhausted);
}

TEST_CASE("single bit flips reject at the matching step") {
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    auto lens = harness::payload_lengths(p, 9);
    for (int i = 1; i <= harness::message_count(p); ++i) {
      for (std::uint64_t bit : {std::uint64_t{0}, lens[i] * 4 + 1, lens[i] * 8 - 1}) {
        CAPTURE(to_string(p));
        CAPTURE(i);
        CAPTURE(bit);
        auto r = harness::run_flip({p, i, bit}, 9);
        auto [role, step] = harness::expected_reject(p, i);
        CHECK(r.summary.step == step);
        CHECK(r.summary.reason == reason_for_step(p, step));
        CHECK(r.summary.rejecting != "");
        Status at = role == Role::Initiator ? r.summary.alpha_a : r.summary.alpha_b;
        CHECK(at == Status::Reject);
        // Only a party that sent the last message may have accepted.
        CHECK((r.pooled_a == (r.summary.alpha_a == Status::Accept)));
        CHECK((r.pooled_b == (r.summary.alpha_b == Status::Accept)));
        if (r.summary.alpha_a == Status::Accept || r.summary.alpha_b == Status::Accept)
          CHECK(r.summary.liveness_gap);
      }
    }
  }
}

TEST_CASE("sigma m4 flip is a signature failure at the initiator") {
  auto r = harness::run_flip({ProtocolId::Sigma, 4, 200}, 10);
  CHECK(r.summary.step == 13);
  CHECK(r.summary.reason == RejectReason::SigVerifyFailed);
  CHECK(r.summary.alpha_a == Status::Reject);
}

TEST_CASE("random ciphertext in place of c_B fails decapsulation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = harness::config({ProtocolId::Kem}, 20 + seed);
    cfg.entity_protection = false;
    primitives::Drbg rng(seed, "substitute");
    PrimitiveSuite suite;
    transport::Rule r;
    r.match.msg_type = 4;
    r.action.kind = transport::ActionKind::Replace;
    r.action.payload = rng.bytes(suite.kem().ciphertext_len());
    cfg.adversary.rules.push_back(r);
    auto s = Multistage(cfg).run_stage(ProtocolId::Kem);
    CHECK(s.alpha_b == Status::Reject);
    CHECK(s.step == 11);
    CHECK(s.reason == RejectReason::DecapFailed);
    CHECK(s.detail == RejectDetail::DecapsulationFailed);
  }
}

TEST_CASE("forging m4 onward without the responder's key fails at tau_B") {
  // The forger encapsulates its own k_B to B, so B continues with a key A lacks.
  auto cfg = harness::config({ProtocolId::Kem}, 30);
  cfg.entity_protection = false;
  Bytes pk_b;
  {
    Multistage probe(cfg);
    pk_b = probe.responder().identity.kem->keys.pk;
  }
  PrimitiveSuite suite;
  primitives::Drbg rng(31, "forger");
  auto enc = suite.kem().encapsulate(pk_b, &rng);
  transport::Rule r;
  r.match.msg_type = 4;
  r.action.kind = transport::ActionKind::Replace;
  r.action.payload = enc.ciphertext;
  cfg.adversary.rules.push_back(r);
  auto s = Multistage(cfg).run_stage(ProtocolId::Kem);
  CHECK(s.alpha_a == Status::Reject);
  CHECK(s.step == 24);
  CHECK(s.reason == RejectReason::MacVerifyFailed);
}

TEST_CASE("replayed prior-stage flows are rejected") {
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    CAPTURE(to_string(p));
    auto s = harness::run_replay(p, 40);
    CHECK(s.protocol == p);
    CHECK(s.rejecting != "");
    if (p == ProtocolId::Mac) {
      CHECK(s.alpha_b == Status::Reject);
      CHECK(s.step == 10);
    } else {
      CHECK(s.alpha_a == Status::Reject);
    }
  }
}

TEST_CASE("k0 is never drawn twice") {
  auto cfg = harness::config({}, 11);
  Multistage ms(cfg);
  ms.run_stage(ProtocolId::Kem);
  for (int i = 0; i < 4; ++i) check_agreement(ms.run_stage(ProtocolId::Mac), ms);
  const auto& h = ms.initiator().pool.draw_history();
  CHECK(h.size() == 4);
  CHECK(std::set<KeyId>(h.begin(), h.end()).size() == h.size());
  CHECK(h == ms.responder().pool.draw_history());
}

TEST_CASE("key pool selection prefers lower epsilon, then earlier stage") {
  KeyPool pool;
  pool.add(1, Secret(Bytes(100, 1)), 0.2);
  pool.add(2, Secret(Bytes(100, 2)), 0.1);
  pool.add(3, Secret(Bytes(100, 3)), 0.1);
  auto [id, k] = pool.draw(64);
  CHECK(id.stage == 2);
  CHECK(id.offset == 0);
  CHECK(k.expose() == Bytes(64, 2));
  // Stage 2 now holds 36 octets, too few for another draw.
  auto next = pool.select(64);
  REQUIRE(next);
  CHECK(next->stage == 3);
  CHECK(pool.total_octets() == 236);
  auto small = pool.select(30);
  REQUIRE(small);
  CHECK(small->stage == 2);
  CHECK(small->offset == 64);
  KeyPool empty;
  CHECK_THROWS_AS(empty.draw(64), PoolExhausted);
}

TEST_CASE("identity octets stay off the wire under entity protection") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = harness::config({ProtocolId::Sigma}, 100 + seed);
    auto r = run_multistage(cfg);
    REQUIRE(r.all_accept);
    Multistage probe(cfg);
    Bytes cert_a = probe.initiator().identity.sig->cert.encode();
    Bytes pk_a = probe.initiator().identity.sig->keys.pk;
    Bytes pk_b = probe.responder().identity.sig->keys.pk;
    Bytes wire;
    for (const auto& f : r.passive_log) append(wire, f);
    CHECK_FALSE(contains(wire, cert_a));
    CHECK_FALSE(contains(wire, Bytes(pk_a.begin(), pk_a.begin() + 32)));
    CHECK_FALSE(contains(wire, Bytes(pk_b.begin(), pk_b.begin() + 32)));
  }
  auto cfg = harness::config({ProtocolId::Sigma}, 100);
  cfg.entity_protection = false;
  auto r = run_multistage(cfg);
  CHECK(r.all_accept);
  Multistage probe(cfg);
  Bytes wire;
  for (const auto& f : r.passive_log) append(wire, f);
  CHECK(contains(wire, probe.initiator().identity.sig->cert.encode()));
}

TEST_CASE("entity protection does not change the transcript") {
  auto on = harness::config({ProtocolId::Kem}, 12);
  auto off = on;
  off.entity_protection = false;
  Multistage a(on), b(off);
  a.run_stage(ProtocolId::Kem);
  b.run_stage(ProtocolId::Kem);
  CHECK(a.last().initiator.transcript_all == b.last().initiator.transcript_all);
  CHECK(a.last().initiator.k == b.last().initiator.k);
}

TEST_CASE("certificates") {
  PrimitiveSuite suite;
  primitives::Drbg rng(13, "cert");
  TestCa ca(suite, to_bytes("ca"), rng);
  auto id = make_identity(suite, ca, to_bytes("A"), rng);
  auto trust = PeerTrust::from(ca, to_bytes("A"));
  const Certificate& c = id.sig->cert;
  CHECK(trust.check(c, suite.now()) == CertCheck::Ok);
  CHECK(trust.check(c, c.not_after) == CertCheck::Expired);
  CHECK(Certificate::decode(c.encode()).encode() == c.encode());
  Certificate forged = c;
  forged.entity_id = to_bytes("M");
  CHECK(trust.check(forged, suite.now()) == CertCheck::Invalid);
  CHECK(PeerTrust::from(ca, to_bytes("B")).check(c, suite.now()) == CertCheck::Invalid);
}

TEST_CASE("replay cache") {
  ReplayCache cache;
  Bytes n(32, 1);
  CHECK_FALSE(cache.check_and_insert(n));
  CHECK(cache.check_and_insert(n));
  CHECK(cache.size() == 1);
}

TEST_CASE("reject leaves state untouched") {
  auto r = harness::run_flip({ProtocolId::Kem, 6, 40}, 14);
  CHECK(r.summary.alpha_a == Status::Reject);
  CHECK_FALSE(r.pooled_a);
  CHECK_FALSE(r.pooled_b);
  Multistage ms(harness::config({ProtocolId::Kem}, 14));
  CHECK(r.summary.sec_state_fp_a == ms.initiator().sec_state.fingerprint());
}

TEST_CASE("runtime stays inside T_HPT") {
  auto r = run_multistage(harness::config({ProtocolId::Kem, ProtocolId::Mac}, 15));
  for (const auto& s : r.stages) CHECK(s.runtime_feasible);
}

TEST_CASE("verification step table") {
  CHECK(verification_step(ProtocolId::Sigma, Role::Initiator, 4) == 13);
  CHECK(verification_step(ProtocolId::Sigma, Role::Initiator, 5) == 16);
  CHECK(verification_step(ProtocolId::Sigma, Role::Responder, 7) == 20);
  CHECK(verification_step(ProtocolId::Sigma, Role::Responder, 8) == 23);
  CHECK(verification_step(ProtocolId::Kem, Role::Responder, 4) == 11);
  CHECK(verification_step(ProtocolId::Kem, Role::Initiator, 6) == 18);
  CHECK(verification_step(ProtocolId::Kem, Role::Initiator, 7) == 24);
  CHECK(verification_step(ProtocolId::Kem, Role::Responder, 8) == 27);
  CHECK(verification_step(ProtocolId::Mac, Role::Responder, 1) == 10);
  CHECK(verification_step(ProtocolId::Mac, Role::Initiator, 2) == 13);
  CHECK(verification_step(ProtocolId::Mac, Role::Initiator, 1) == 0);
  CHECK(reason_for_step(ProtocolId::Sigma, 13) == RejectReason::SigVerifyFailed);
  CHECK(reason_for_step(ProtocolId::Sigma, 23) == RejectReason::MacVerifyFailed);
  CHECK(reason_for_step(ProtocolId::Kem, 18) == RejectReason::DecapFailed);
}

}  // TEST_SUITE
