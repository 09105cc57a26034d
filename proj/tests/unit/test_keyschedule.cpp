#include <set>

#include "doctest.h"
#include "qkdauth/errors.hpp"
#include "qkdauth/keyschedule.hpp"
#include "support.hpp"

using namespace qkdauth;
using namespace qkdauth::keyschedule;
using testing::golden;

namespace {

struct Inputs {
  Bytes ss = Bytes(64, 0x11);
  Bytes m_qkd = to_bytes("m_qkd transcript");
  Bytes na = Bytes(32, 0xAA);
  Bytes nb = Bytes(32, 0xBB);
  Bytes sec0 = Bytes(64, 0);
  Bytes kb = Bytes(32, 0x22);
  Bytes ka = Bytes(32, 0x33);
  Bytes prefix2() const { return concat({m_qkd, na, nb}); }
};

}  // namespace

TEST_SUITE("keyschedule") {

TEST_CASE("labels carry the protocol octet") {
  CHECK(label(ProtocolId::Kem, LabelName::TSA1).bytes == golden("label_kem_tsa1"));
  CHECK_THROWS_AS(label(ProtocolId::Sigma, LabelName::TSA1), LabelError);
  CHECK_THROWS_AS(label(ProtocolId::Mac, LabelName::L0), LabelError);
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    std::set<Bytes> seen;
    for (LabelName n : label_set(p)) CHECK(seen.insert(label(p, n).bytes).second);
  }
}

TEST_CASE("signature variant golden values") {
  PrimitiveSuite suite;
  Inputs in;
  Secret k0 = derive_k0_sig(suite, ProtocolId::Sigma, in.ss, in.m_qkd, in.na, in.nb);
  CHECK(k0.expose() == golden("sigma_k0"));
  Secret k1 = derive_k1(suite, ProtocolId::Sigma, in.sec0, k0.view());
  CHECK(k1.expose() == golden("sigma_k1"));
  auto keys = derive_traffic_and_mac_keys(suite, ProtocolId::Sigma, k1.view(), {LabelName::TSA, LabelName::MACB1},
                                          in.prefix2());
  CHECK(keys.at(LabelName::TSA).expose() == golden("sigma_tsa"));
  CHECK(keys.at(LabelName::MACB1).expose() == golden("sigma_macb1"));
  CHECK(tagged_digest(suite, ProtocolId::Sigma, LabelName::SB, concat({in.prefix2(), to_bytes("cert")})) ==
        golden("sigma_tagged_sb"));
}

TEST_CASE("kem variant golden values") {
  PrimitiveSuite suite;
  Inputs in;
  Secret k0 = derive_k0_sig(suite, ProtocolId::Kem, in.ss, in.m_qkd, in.na, in.nb);
  Secret k1 = derive_k1(suite, ProtocolId::Kem, in.sec0, k0.view());
  CHECK(k1.expose() == golden("kem_k1"));
  Secret k2 = derive_k2_kem(suite, k1.view(), in.kb);
  CHECK(k2.expose() == golden("kem_k2"));
  Secret k3 = derive_k3_kem(suite, k2.view(), in.ka);
  CHECK(k3.expose() == golden("kem_k3"));

  ScheduleState st;
  st.k1 = k1;
  st.k2 = k2;
  st.k3 = k3;
  st.verified = true;
  Bytes all = to_bytes("all of it");
  CHECK(update_sec_state(suite, ProtocolId::Kem, st, all).expose() == golden("kem_secstate"));
  CHECK(sec_state_from(suite, ProtocolId::Kem, k3.view(), all).expose() == golden("kem_secstate"));
  CHECK(sec_state_from(suite, ProtocolId::Kem, k1.view(), all).expose() != golden("kem_secstate"));

  Secret k2_other = derive_k2_kem(suite, k1.view(), Bytes(32, 0x23));
  CHECK_FALSE(k2_other == k2);
}

TEST_CASE("mac variant golden values") {
  PrimitiveSuite suite;
  Inputs in;
  Bytes k0 = testing::range_bytes(64);
  Secret k1 = derive_k1(suite, ProtocolId::Mac, in.sec0, k0, 7);
  CHECK(k1.expose() == golden("mac_k1_ctr7"));
  auto keys = derive_traffic_and_mac_keys(suite, ProtocolId::Mac, k1.view(), {LabelName::TSA}, in.m_qkd, 7);
  CHECK(keys.at(LabelName::TSA).expose() == golden("mac_tsa_ctr7"));
  ScheduleState st;
  st.k1 = k1;
  st.ctr = 7;
  st.verified = true;
  CHECK(update_sec_state(suite, ProtocolId::Mac, st, to_bytes("all of it")).expose() == golden("mac_secstate_ctr7"));
}

TEST_CASE("sec state update needs a verified schedule") {
  PrimitiveSuite suite;
  ScheduleState st;
  st.k1 = Secret(Bytes(64, 1));
  CHECK_THROWS_AS(update_sec_state(suite, ProtocolId::Sigma, st, {}), StateError);
  st.verified = true;
  Secret next = update_sec_state(suite, ProtocolId::Sigma, st, to_bytes("t"));
  CHECK_FALSE(next == Secret(Bytes(64, 0)));
}

TEST_CASE("nonce and state sensitivity") {
  PrimitiveSuite suite;
  Inputs in;
  Secret base = derive_k0_sig(suite, ProtocolId::Sigma, in.ss, in.m_qkd, in.na, in.nb);
  CHECK(base == derive_k0_sig(suite, ProtocolId::Sigma, in.ss, in.m_qkd, in.na, in.nb));
  for (std::size_t bit = 0; bit < in.na.size() * 8; ++bit) {
    Bytes na = in.na;
    na[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK_FALSE(base == derive_k0_sig(suite, ProtocolId::Sigma, in.ss, in.m_qkd, na, in.nb));
  }
  Bytes sec = in.sec0;
  sec[10] ^= 4;
  CHECK_FALSE(derive_k1(suite, ProtocolId::Sigma, in.sec0, base.view()) ==
              derive_k1(suite, ProtocolId::Sigma, sec, base.view()));
  CHECK_THROWS_AS(derive_k0_sig(suite, ProtocolId::Sigma, Bytes(32, 1), in.m_qkd, in.na, in.nb), KeyTooShort);
}

TEST_CASE("domain separation across labels and counters") {
  PrimitiveSuite suite;
  primitives::Drbg rng(21, "domain");
  for (int trial = 0; trial < 5; ++trial) {
    Bytes k = rng.bytes(64);
    Bytes prefix = rng.bytes(40);
    std::set<Bytes> seen;
    std::size_t n = 0;
    for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem}) {
      auto keys = derive_traffic_and_mac_keys(suite, p, k, label_set(p), prefix);
      for (const auto& [_, v] : keys) seen.insert(v.expose()), ++n;
    }
    for (std::uint64_t ctr = 0; ctr <= 10; ++ctr) {
      auto keys = derive_traffic_and_mac_keys(suite, ProtocolId::Mac, k, label_set(ProtocolId::Mac), prefix, ctr);
      for (const auto& [_, v] : keys) seen.insert(v.expose()), ++n;
    }
    CHECK(seen.size() == n);
  }
}

TEST_CASE("transcript sensitivity") {
  PrimitiveSuite suite;
  TranscriptLog log;
  log.append(0, to_bytes("qkd"));
  log.append(1, Bytes(32, 1));
  log.append(2, Bytes(32, 2));
  Bytes k(64, 9);
  auto base = derive_traffic_and_mac_keys(suite, ProtocolId::Sigma, k, {LabelName::TSA, LabelName::TSB},
                                          log.through(2));
  Bytes t = log.through(2);
  for (std::size_t bit = 0; bit < t.size() * 8; bit += 3) {
    Bytes changed = t;
    changed[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    auto keys = derive_traffic_and_mac_keys(suite, ProtocolId::Sigma, k, {LabelName::TSA, LabelName::TSB}, changed);
    CHECK_FALSE(keys.at(LabelName::TSA) == base.at(LabelName::TSA));
    CHECK_FALSE(keys.at(LabelName::TSB) == base.at(LabelName::TSB));
  }
  CHECK(log.through(1) == concat({to_bytes("qkd"), Bytes(32, 1)}));
  CHECK_THROWS_AS(log.append(2, Bytes{}), StateError);
}

TEST_CASE("prefix table") {
  CHECK(prefix_table(ProtocolId::Sigma).k0 == 2);
  CHECK(prefix_table(ProtocolId::Kem).traffic2 == 4);
  CHECK(prefix_table(ProtocolId::Kem).mac_keys == 6);
  CHECK(prefix_table(ProtocolId::Mac).traffic1 == 0);
}

}  // TEST_SUITE
