#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "qkdauth/bytes.hpp"
#include "qkdauth/primitives.hpp"

namespace qkdauth::keyschedule {

enum class ProtocolId : std::uint8_t { Sigma = 0x01, Kem = 0x02, Mac = 0x03 };

std::string_view to_string(ProtocolId p);

enum class LabelName {
  L0, L1, L2, L3,
  TSA, TSB, TSA1, TSB1, TSA2, TSB2,
  MACA1, MACB1, MACA2, MACB2,
  SA, SB,
  SecState,
};

std::string_view ascii(LabelName n);
const std::vector<LabelName>& label_set(ProtocolId p);

struct Label {
  LabelName name;
  Bytes bytes;  // protocol-id octet followed by the ASCII name
};

// Throws LabelError when `n` is not part of the protocol's label set.
Label label(ProtocolId p, LabelName n);

// Entry 0 is m_QKD; entries 1..8 are plaintext payloads m1..m8.
class TranscriptLog {
 public:
  struct Entry {
    int index;
    Bytes plaintext;
  };

  void append(int index, ByteView plaintext);
  // m_QKD || m1 || ... || m_last
  Bytes through(int last) const;
  Bytes all() const;
  const std::vector<Entry>& entries() const { return entries_; }
  int last_index() const { return entries_.empty() ? -1 : entries_.back().index; }
  void clear();

 private:
  std::vector<Entry> entries_;
};

struct ScheduleState {
  std::optional<Secret> k0, k1, k2, k3;
  std::map<LabelName, Secret> kts;
  std::map<LabelName, Secret> kmac;
  Secret sec_state;
  std::uint64_t ctr = 0;
  bool verified = false;  // both verification points passed

  void wipe();
};

using primitives::PrimitiveSuite;

// K0 = PRF(ss_qkd, l0 || H(m_qkd || n_a || n_b)). Shared by the signature and
// KEM variants.
Secret derive_k0_sig(const PrimitiveSuite& suite, ProtocolId p, ByteView ss_qkd, ByteView m_qkd, ByteView n_a,
                     ByteView n_b);

// K1 = PRF(SecState, l1 || [ctr ||] K0); K0 sits in the message position,
// which is where the dual-PRF assumption is needed.
Secret derive_k1(const PrimitiveSuite& suite, ProtocolId p, ByteView sec_state, ByteView k0,
                 std::optional<std::uint64_t> ctr = std::nullopt);

// Each key = PRF(k, label || [ctr ||] H(transcript_prefix)).
std::map<LabelName, Secret> derive_traffic_and_mac_keys(const PrimitiveSuite& suite, ProtocolId p, ByteView k,
                                                        const std::vector<LabelName>& labels,
                                                        ByteView transcript_prefix,
                                                        std::optional<std::uint64_t> ctr = std::nullopt);

// K2 = PRF(K1, l2 || k_B)
Secret derive_k2_kem(const PrimitiveSuite& suite, ByteView k1, ByteView k_b);
// K3 = PRF(K2, l3 || k_A)
Secret derive_k3_kem(const PrimitiveSuite& suite, ByteView k2, ByteView k_a);

// SecState' = PRF(k_final, l_SecState || [ctr ||] H(transcript_all)).
Secret sec_state_from(const PrimitiveSuite& suite, ProtocolId p, ByteView k_final, ByteView transcript_all,
                      std::optional<std::uint64_t> ctr = std::nullopt);

// Picks K1 (signature, MAC) or K3 (KEM) from `st`. Throws StateError unless
// st.verified.
Secret update_sec_state(const PrimitiveSuite& suite, ProtocolId p, const ScheduleState& st, ByteView transcript_all);

// label || [ctr ||] H(prefix): the public input to a MAC tag or signature.
Bytes tagged_digest(const PrimitiveSuite& suite, ProtocolId p, LabelName n, ByteView prefix,
                    std::optional<std::uint64_t> ctr = std::nullopt);

// Messages each derivation hashes, by protocol. -1 marks "not applicable".
struct PrefixTable {
  int k0;
  int traffic1;  // first traffic-key set
  int traffic2;  // second traffic-key set (KEM only)
  int mac_keys;
};
PrefixTable prefix_table(ProtocolId p);

}  // namespace qkdauth::keyschedule
