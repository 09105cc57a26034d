#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_set>

#include "qkdauth/errors.hpp"
#include "qkdauth/hake.hpp"
#include "qkdauth/keyschedule.hpp"

namespace qkdauth::hake {

namespace {

namespace ks = keyschedule;
using keyschedule::LabelName;
using sessions::StageOutcome;
using transport::WireMessage;

constexpr std::size_t kWindow = 16;
constexpr int kRounds = 3;

struct FrameView {
  int index;
  WireMessage m;
  bool opened = false;
};

struct StageView {
  ProtocolId p;
  Bytes m_qkd;
  std::uint64_t mac_ctr = 0;
  std::vector<FrameView> frames;
  std::map<int, Bytes> plaintext;
};

Bytes first64(const Bytes& b) { return Bytes(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(sessions::kSsQkdLen)); }

// m_QKD || m1 || ... || m_last, when every plaintext up to `last` is known.
std::optional<Bytes> prefix(const StageView& v, int last) {
  ks::TranscriptLog log;
  log.append(0, v.m_qkd);
  for (int i = 1; i <= last; ++i) {
    auto it = v.plaintext.find(i);
    if (it == v.plaintext.end()) return std::nullopt;
    log.append(i, it->second);
  }
  return log.through(last);
}

class Harness {
 public:
  Harness(const primitives::PrimitiveSuite& suite, std::vector<primitives::KemKeyPair> kem_keys)
      : suite_(suite), kem_keys_(std::move(kem_keys)) {}

  void add_candidate(const Secret& s) { add_candidate(s.expose()); }
  void add_candidate(const Bytes& b) {
    if (b.empty()) return;
    material_.push_back(b);
    if (b.size() >= sessions::kSsQkdLen) candidates_.insert(first64(b));
  }
  void add_sec_state(const Secret& s) {
    if (!s.empty()) sec_states_.insert(s.expose());
  }

  void add_stage(StageView v) { stages_.push_back(std::move(v)); }

  ForwardSecrecyResult run() {
    ForwardSecrecyResult r;
    sec_states_.insert(Bytes(sessions::kSecStateLen, 0));
    for (auto& v : stages_) {
      r.frames_examined += v.frames.size();
      for (auto& f : v.frames) append_material(f.m.encode());
    }
    for (int round = 0; round < kRounds; ++round) {
      bool progress = false;
      for (auto& v : stages_) {
        auto keys = derive(v);
        for (const auto& c : candidates_) keys.insert(c);
        r.candidate_keys = std::max(r.candidate_keys, keys.size());
        for (auto& f : v.frames) {
          if (f.opened || f.m.payload.size() <= primitives::kAeadNonceLen) continue;
          for (const auto& k : keys) {
            if (auto pt = try_open(k, f.m)) {
              f.opened = true;
              v.plaintext[f.index] = *pt;
              append_material(*pt);
              try_decapsulate(*pt);
              ++r.decryptions;
              progress = true;
              break;
            }
          }
        }
      }
      if (!progress) break;
    }
    return r;
  }

  // Octets of `target` covered by some 16-octet window found in the material.
  std::size_t covered(const Bytes& target) {
    if (windows_.empty())
      for (const auto& m : material_)
        for (std::size_t o = 0; o + kWindow <= m.size(); ++o)
          windows_.emplace(reinterpret_cast<const char*>(m.data() + o), kWindow);
    std::vector<bool> hit(target.size(), false);
    for (std::size_t o = 0; o + kWindow <= target.size(); ++o)
      if (windows_.count(std::string(reinterpret_cast<const char*>(target.data() + o), kWindow)))
        std::fill(hit.begin() + o, hit.begin() + o + kWindow, true);
    return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  }

 private:
  void append_material(const Bytes& b) {
    if (!b.empty()) material_.push_back(b);
  }

  void keep(std::set<Bytes>& out, const std::map<LabelName, Secret>& keys) {
    for (const auto& [name, k] : keys) {
      out.insert(k.expose());
      append_material(k.expose());
    }
  }

  std::set<Bytes> derive(const StageView& v) {
    std::set<Bytes> out;
    if (v.p == ProtocolId::Mac) {
      for (const auto& k0 : candidates_)
        for (const auto& ss : sec_states_) {
          Secret k1 = ks::derive_k1(suite_, v.p, ss, k0, v.mac_ctr);
          append_material(k1.expose());
          keep(out, ks::derive_traffic_and_mac_keys(suite_, v.p, k1.view(), {LabelName::TSA, LabelName::TSB},
                                                    v.m_qkd, v.mac_ctr));
        }
      return out;
    }
    auto n_a = v.plaintext.find(1);
    auto n_b = v.plaintext.find(2);
    auto through2 = prefix(v, 2);
    if (n_a == v.plaintext.end() || n_b == v.plaintext.end() || !through2) return out;
    auto through4 = prefix(v, 4);
    std::vector<LabelName> first = v.p == ProtocolId::Sigma ? std::vector{LabelName::TSA, LabelName::TSB}
                                                            : std::vector{LabelName::TSA1, LabelName::TSB1};
    for (const auto& c : candidates_) {
      Secret k0 = ks::derive_k0_sig(suite_, v.p, c, v.m_qkd, n_a->second, n_b->second);
      append_material(k0.expose());
      for (const auto& ss : sec_states_) {
        Secret k1 = ks::derive_k1(suite_, v.p, ss, k0.view());
        append_material(k1.expose());
        keep(out, ks::derive_traffic_and_mac_keys(suite_, v.p, k1.view(), first, *through2));
        if (v.p != ProtocolId::Kem || !through4) continue;
        for (const auto& kb : decapsulated_) {
          Secret k2 = ks::derive_k2_kem(suite_, k1.view(), kb);
          append_material(k2.expose());
          keep(out, ks::derive_traffic_and_mac_keys(suite_, v.p, k2.view(), {LabelName::TSA2, LabelName::TSB2},
                                                    *through4));
        }
      }
    }
    return out;
  }

  std::optional<Bytes> try_open(const Bytes& key, const WireMessage& m) const {
    ByteView all(m.payload);
    primitives::AeadKey k(suite_.aead(), Secret(key));
    return k.decrypt(all.first(primitives::kAeadNonceLen), m.header_ad(), all.subspan(primitives::kAeadNonceLen));
  }

  void try_decapsulate(const Bytes& pt) {
    if (pt.size() != suite_.kem().ciphertext_len()) return;
    for (const auto& kp : kem_keys_) {
      if (kp.sk.empty()) continue;
      try {
        if (auto s = suite_.kem().decapsulate(kp, pt, suite_.now())) {
          decapsulated_.insert(s->expose());
          append_material(s->expose());
        }
      } catch (const Error&) {
      }
    }
  }

  const primitives::PrimitiveSuite& suite_;
  std::vector<primitives::KemKeyPair> kem_keys_;
  std::set<Bytes> candidates_;
  std::set<Bytes> sec_states_;
  std::set<Bytes> decapsulated_;
  std::vector<Bytes> material_;
  std::vector<StageView> stages_;
  std::unordered_set<std::string> windows_;
};

void add_schedule(Harness& h, const ks::ScheduleState& s) {
  for (const auto* k : {&s.k0, &s.k1, &s.k2, &s.k3})
    if (*k) h.add_candidate(**k);
  for (const auto& [_, k] : s.kts) h.add_candidate(k);
  for (const auto& [_, k] : s.kmac) h.add_candidate(k);
  h.add_candidate(s.sec_state);
  h.add_sec_state(s.sec_state);
}

}  // namespace

ForwardSecrecyResult forward_secrecy_trial(const sessions::MultistageConfig& cfg) {
  sessions::validate_plan(cfg.plan);
  sessions::Multistage ms(cfg);
  for (ProtocolId p : cfg.plan) {
    ms.run_stage(p);
    if (ms.halted()) throw StateError("forward secrecy trial needs every stage to accept");
  }
  auto& a = ms.initiator();
  auto& b = ms.responder();
  const auto& history = ms.history();
  const auto& last = ms.last();

  std::vector<primitives::KemKeyPair> kem_keys;
  for (auto* party : {&a, &b})
    if (party->identity.kem) kem_keys.push_back(party->identity.kem->keys);
  Harness h(ms.suite(), kem_keys);
  for (auto* party : {&a, &b}) {
    if (party->identity.sig) h.add_candidate(party->identity.sig->keys.sk);
    if (party->identity.kem) h.add_candidate(party->identity.kem->keys.sk);
    h.add_candidate(party->sec_state);
    h.add_sec_state(party->sec_state);
  }
  for (const StageOutcome* o : {&last.initiator, &last.responder}) {
    add_schedule(h, o->schedule);
    for (const auto* s : {&o->esk, &o->eqk, &o->sskp, &o->pss_out}) h.add_candidate(*s);
  }

  std::uint64_t mac_ctr = 0;
  for (std::size_t s = 0; s < history.size(); ++s) {
    StageView v;
    v.p = history[s].initiator.protocol;
    v.m_qkd = ms.qkd_history()[s].initiator.m_qkd;
    v.mac_ctr = mac_ctr;
    if (v.p == ProtocolId::Mac) ++mac_ctr;
    for (const auto* side : {&history[s].initiator.sent, &history[s].responder.sent})
      for (const auto& frame : *side) {
        WireMessage m = WireMessage::decode(frame);
        v.frames.push_back({m.msg_type, m});
      }
    std::sort(v.frames.begin(), v.frames.end(), [](const FrameView& x, const FrameView& y) { return x.index < y.index; });
    if (v.p != ProtocolId::Mac)
      for (const auto& f : v.frames)
        if (f.index == 1 || f.index == 2) v.plaintext[f.index] = f.m.payload;
    h.add_stage(std::move(v));
  }

  auto pool_a = a.pool.fingerprint();
  auto pool_b = b.pool.fingerprint();
  auto octets = a.pool.total_octets() + b.pool.total_octets();
  a.wipe_live_secrets();
  b.wipe_live_secrets();
  bool intact = a.pool.fingerprint() == pool_a && b.pool.fingerprint() == pool_b &&
                a.pool.total_octets() + b.pool.total_octets() == octets;

  ForwardSecrecyResult r = h.run();
  r.pool_intact = intact;

  // K0 of a final MAC stage belongs to that stage, not to the earlier one.
  std::optional<sessions::KeyId> consumed = last.initiator.k0_id;
  for (std::size_t s = 0; s + 1 < history.size(); ++s) {
    Bytes target = history[s].initiator.k.expose();
    if (consumed && consumed->stage == s + 1) {
      auto from = static_cast<std::ptrdiff_t>(std::min<std::uint64_t>(consumed->offset, target.size()));
      auto to = static_cast<std::ptrdiff_t>(std::min<std::uint64_t>(consumed->offset + sessions::kK0Len, target.size()));
      Bytes head(target.begin(), target.begin() + from);
      Bytes tail(target.begin() + to, target.end());
      for (const Bytes* part : {&head, &tail}) {
        r.target_octets += part->size();
        r.recovered_octets += h.covered(*part);
      }
      continue;
    }
    r.target_octets += target.size();
    r.recovered_octets += h.covered(target);
  }
  return r;
}

}  // namespace qkdauth::hake
