#include "qkdauth/keyschedule.hpp"

#include <algorithm>

#include "qkdauth/errors.hpp"

namespace qkdauth::keyschedule {

std::string_view to_string(ProtocolId p) {
  switch (p) {
    case ProtocolId::Sigma: return "sigma";
    case ProtocolId::Kem: return "kem";
    case ProtocolId::Mac: return "mac";
  }
  return "?";
}

std::string_view ascii(LabelName n) {
  switch (n) {
    case LabelName::L0: return "l0";
    case LabelName::L1: return "l1";
    case LabelName::L2: return "l2";
    case LabelName::L3: return "l3";
    case LabelName::TSA: return "lTSA";
    case LabelName::TSB: return "lTSB";
    case LabelName::TSA1: return "lTSA1";
    case LabelName::TSB1: return "lTSB1";
    case LabelName::TSA2: return "lTSA2";
    case LabelName::TSB2: return "lTSB2";
    case LabelName::MACA1: return "lMACA1";
    case LabelName::MACB1: return "lMACB1";
    case LabelName::MACA2: return "lMACA2";
    case LabelName::MACB2: return "lMACB2";
    case LabelName::SA: return "lSA";
    case LabelName::SB: return "lSB";
    case LabelName::SecState: return "lSecState";
  }
  return "?";
}

const std::vector<LabelName>& label_set(ProtocolId p) {
  using L = LabelName;
  static const std::vector<L> sigma{L::L0,    L::L1,    L::TSA,   L::TSB, L::MACA1, L::MACB1,
                                    L::MACA2, L::MACB2, L::SA,    L::SB,  L::SecState};
  static const std::vector<L> kem{L::L0,    L::L1,    L::L2,    L::L3,    L::TSA1,  L::TSB1,   L::TSA2,
                                  L::TSB2,  L::MACA1, L::MACB1, L::MACA2, L::MACB2, L::SecState};
  static const std::vector<L> mac{L::L1,    L::TSA,   L::TSB,   L::MACA1,
                                  L::MACB1, L::MACA2, L::MACB2, L::SecState};
  switch (p) {
    case ProtocolId::Sigma: return sigma;
    case ProtocolId::Kem: return kem;
    case ProtocolId::Mac: return mac;
  }
  throw LabelError("unknown protocol");
}

Label label(ProtocolId p, LabelName n) {
  const auto& set = label_set(p);
  if (std::find(set.begin(), set.end(), n) == set.end())
    throw LabelError(std::string(ascii(n)) + " is not a " + std::string(to_string(p)) + " label");
  Bytes b{static_cast<std::uint8_t>(p)};
  append(b, to_bytes(ascii(n)));
  return {n, std::move(b)};
}

void TranscriptLog::append(int index, ByteView plaintext) {
  if (!entries_.empty() && index <= entries_.back().index) throw StateError("transcript entries must be appended in order");
  entries_.push_back({index, Bytes(plaintext.begin(), plaintext.end())});
}

Bytes TranscriptLog::through(int last) const {
  Bytes out;
  for (const auto& e : entries_) {
    if (e.index > last) break;
    qkdauth::append(out, e.plaintext);
  }
  return out;
}

Bytes TranscriptLog::all() const { return through(last_index()); }

void TranscriptLog::clear() {
  for (auto& e : entries_) secure_wipe(e.plaintext);
  entries_.clear();
}

void ScheduleState::wipe() {
  for (auto* k : {&k0, &k1, &k2, &k3})
    if (*k) k->reset();
  kts.clear();
  kmac.clear();
  verified = false;
}

namespace {

Bytes with_ctr(ByteView head, std::optional<std::uint64_t> ctr) {
  Bytes b(head.begin(), head.end());
  if (ctr) put_u64be(b, *ctr);
  return b;
}

Secret prf(const PrimitiveSuite& suite, ByteView key, ByteView msg) {
  return suite.prf().eval(primitives::PrfKey(Bytes(key.begin(), key.end())), msg);
}

}  // namespace

Bytes tagged_digest(const PrimitiveSuite& suite, ProtocolId p, LabelName n, ByteView prefix,
                    std::optional<std::uint64_t> ctr) {
  Bytes msg = with_ctr(label(p, n).bytes, ctr);
  append(msg, suite.hash().digest(prefix));
  return msg;
}

Secret derive_k0_sig(const PrimitiveSuite& suite, ProtocolId p, ByteView ss_qkd, ByteView m_qkd, ByteView n_a,
                     ByteView n_b) {
  if (ss_qkd.size() < primitives::kMinSymmetricKeyLen)
    throw KeyTooShort("ss_qkd of " + std::to_string(ss_qkd.size()) + " octets");
  Bytes t = concat({m_qkd, n_a, n_b});
  return prf(suite, ss_qkd, tagged_digest(suite, p, LabelName::L0, t));
}

Secret derive_k1(const PrimitiveSuite& suite, ProtocolId p, ByteView sec_state, ByteView k0,
                 std::optional<std::uint64_t> ctr) {
  Bytes msg = with_ctr(label(p, LabelName::L1).bytes, ctr);
  append(msg, k0);
  Secret out = prf(suite, sec_state, msg);
  secure_wipe(msg);
  return out;
}

std::map<LabelName, Secret> derive_traffic_and_mac_keys(const PrimitiveSuite& suite, ProtocolId p, ByteView k,
                                                        const std::vector<LabelName>& labels,
                                                        ByteView transcript_prefix,
                                                        std::optional<std::uint64_t> ctr) {
  primitives::Digest h = suite.hash().digest(transcript_prefix);
  std::map<LabelName, Secret> out;
  for (LabelName n : labels) {
    Bytes msg = with_ctr(label(p, n).bytes, ctr);
    append(msg, h);
    out.emplace(n, prf(suite, k, msg));
  }
  return out;
}

Secret derive_k2_kem(const PrimitiveSuite& suite, ByteView k1, ByteView k_b) {
  Bytes msg = label(ProtocolId::Kem, LabelName::L2).bytes;
  append(msg, k_b);
  Secret out = prf(suite, k1, msg);
  secure_wipe(msg);
  return out;
}

Secret derive_k3_kem(const PrimitiveSuite& suite, ByteView k2, ByteView k_a) {
  Bytes msg = label(ProtocolId::Kem, LabelName::L3).bytes;
  append(msg, k_a);
  Secret out = prf(suite, k2, msg);
  secure_wipe(msg);
  return out;
}

Secret sec_state_from(const PrimitiveSuite& suite, ProtocolId p, ByteView k_final, ByteView transcript_all,
                      std::optional<std::uint64_t> ctr) {
  return prf(suite, k_final, tagged_digest(suite, p, LabelName::SecState, transcript_all, ctr));
}

Secret update_sec_state(const PrimitiveSuite& suite, ProtocolId p, const ScheduleState& st, ByteView transcript_all) {
  if (!st.verified) throw StateError("secret state update before accept");
  const auto& k_final = p == ProtocolId::Kem ? st.k3 : st.k1;
  if (!k_final) throw StateError("final intermediate key missing");
  std::optional<std::uint64_t> ctr;
  if (p == ProtocolId::Mac) ctr = st.ctr;
  return sec_state_from(suite, p, k_final->view(), transcript_all, ctr);
}

PrefixTable prefix_table(ProtocolId p) {
  switch (p) {
    case ProtocolId::Sigma: return {2, 2, -1, 2};
    case ProtocolId::Kem: return {2, 2, 4, 6};
    case ProtocolId::Mac: return {-1, 0, -1, 0};
  }
  throw LabelError("unknown protocol");
}

}  // namespace qkdauth::keyschedule
