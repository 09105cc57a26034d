#include <algorithm>
#include <cstring>
#include <sstream>

#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"

namespace qkdauth::sessions {

std::string_view to_string(Role r) { return r == Role::Initiator ? "initiator" : "responder"; }

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Bottom: return "bottom";
    case Status::Active: return "active";
    case Status::Accept: return "accept";
    case Status::Reject: return "reject";
  }
  return "?";
}

ProtocolId parse_protocol(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "sigma" || v == "sig") return ProtocolId::Sigma;
  if (v == "kem") return ProtocolId::Kem;
  if (v == "mac") return ProtocolId::Mac;
  throw PlanError("unknown protocol '" + std::string(s) + "'");
}

std::vector<ProtocolId> parse_plan(std::string_view s) {
  std::vector<ProtocolId> plan;
  std::string item;
  std::istringstream in{std::string(s)};
  while (std::getline(in, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw PlanError("empty entry in plan '" + std::string(s) + "'");
    plan.push_back(parse_protocol(item.substr(b, e - b + 1)));
  }
  validate_plan(plan);
  return plan;
}

void validate_plan(const std::vector<ProtocolId>& plan) {
  if (plan.empty()) throw PlanError("plan is empty");
  if (plan.front() == ProtocolId::Mac) throw PlanError("stage 1 cannot be mac: the key pool is empty");
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::SigVerifyFailed: return "sig_verify_failed";
    case RejectReason::MacVerifyFailed: return "mac_verify_failed";
    case RejectReason::DecapFailed: return "decap_failed";
    case RejectReason::QkdAborted: return "qkd_aborted";
    case RejectReason::PoolExhausted: return "pool_exhausted";
    case RejectReason::KeyExpired: return "key_expired";
    case RejectReason::ChannelClosed: return "channel_closed";
    case RejectReason::ProtocolViolation: return "protocol_violation";
  }
  return "?";
}

std::string_view to_string(RejectDetail d) {
  switch (d) {
    case RejectDetail::None: return "none";
    case RejectDetail::AeadOpenFailed: return "aead_open_failed";
    case RejectDetail::TagMismatch: return "tag_mismatch";
    case RejectDetail::SignatureInvalid: return "signature_invalid";
    case RejectDetail::CertInvalid: return "cert_invalid";
    case RejectDetail::CertExpired: return "cert_expired";
    case RejectDetail::DecapsulationFailed: return "decapsulation_failed";
    case RejectDetail::NonceReplay: return "nonce_replay";
    case RejectDetail::MalformedPayload: return "malformed_payload";
    case RejectDetail::UnexpectedMessage: return "unexpected_message";
  }
  return "?";
}

int verification_step(ProtocolId p, Role receiver, int i) {
  bool a = receiver == Role::Initiator;
  switch (p) {
    case ProtocolId::Sigma:
      if (a) return (i >= 2 && i <= 4) ? 13 : i == 5 ? 16 : 0;
      return (i == 1 || i == 6 || i == 7) ? 20 : i == 8 ? 23 : 0;
    case ProtocolId::Kem:
      if (a) return (i == 2 || i == 3 || i == 7) ? 24 : i == 6 ? 18 : 0;
      return i == 4 ? 11 : (i == 1 || i == 5 || i == 8) ? 27 : 0;
    case ProtocolId::Mac:
      if (a) return i == 2 ? 13 : 0;
      return i == 1 ? 10 : 0;
  }
  return 0;
}

RejectReason reason_for_step(ProtocolId p, int step) {
  switch (p) {
    case ProtocolId::Sigma:
      if (step == 13 || step == 20) return RejectReason::SigVerifyFailed;
      if (step == 16 || step == 23) return RejectReason::MacVerifyFailed;
      break;
    case ProtocolId::Kem:
      if (step == 11 || step == 18) return RejectReason::DecapFailed;
      if (step == 24 || step == 27) return RejectReason::MacVerifyFailed;
      break;
    case ProtocolId::Mac:
      if (step == 10 || step == 13) return RejectReason::MacVerifyFailed;
      break;
  }
  return RejectReason::ProtocolViolation;
}

namespace {

void put_field(Bytes& out, ByteView f) {
  put_u32be(out, static_cast<std::uint32_t>(f.size()));
  append(out, f);
}

struct Reader {
  ByteView b;
  std::size_t off = 0;

  Bytes field() {
    if (b.size() - off < 4) throw FramingError("certificate truncated");
    std::uint32_t n = get_u32be(b, off);
    off += 4;
    if (b.size() - off < n) throw FramingError("certificate field overruns buffer");
    Bytes out(b.begin() + off, b.begin() + off + n);
    off += n;
    return out;
  }
  std::uint64_t u64() {
    if (b.size() - off < 8) throw FramingError("certificate truncated");
    std::uint64_t v = get_u64be(b, off);
    off += 8;
    return v;
  }
};

}  // namespace

Bytes Certificate::to_be_signed() const {
  Bytes out = to_bytes("qkdauth/cert/v1");
  put_field(out, entity_id);
  put_field(out, to_bytes(algorithm));
  put_field(out, public_key);
  put_field(out, issuer_id);
  put_u64be(out, static_cast<std::uint64_t>(not_after.count()));
  return out;
}

Bytes Certificate::encode() const {
  Bytes out;
  put_field(out, entity_id);
  put_field(out, to_bytes(algorithm));
  put_field(out, public_key);
  put_field(out, issuer_id);
  put_u64be(out, static_cast<std::uint64_t>(not_after.count()));
  put_field(out, issuer_signature);
  return out;
}

Certificate Certificate::decode(ByteView b) {
  Reader r{b};
  Certificate c;
  c.entity_id = r.field();
  Bytes alg = r.field();
  c.algorithm.assign(alg.begin(), alg.end());
  c.public_key = r.field();
  c.issuer_id = r.field();
  c.not_after = Instant(static_cast<std::int64_t>(r.u64()));
  c.issuer_signature = r.field();
  if (r.off != b.size()) throw FramingError("trailing octets after certificate");
  return c;
}

TestCa::TestCa(const PrimitiveSuite& suite, Bytes issuer_id, primitives::Drbg& rng)
    : suite_(&suite), issuer_id_(std::move(issuer_id)), keys_(suite.sig().keygen(suite.now(), suite.t_hpt() * 1000, &rng)) {}

Certificate TestCa::issue(Bytes entity_id, std::string algorithm, Bytes public_key, Instant not_after,
                          primitives::Drbg& rng) const {
  Certificate c;
  c.entity_id = std::move(entity_id);
  c.algorithm = std::move(algorithm);
  c.public_key = std::move(public_key);
  c.issuer_id = issuer_id_;
  c.not_after = not_after;
  c.issuer_signature = suite_->sig().sign(keys_, c.to_be_signed(), suite_->now(), &rng);
  return c;
}

CertCheck PeerTrust::check(const Certificate& c, Instant now) const {
  if (c.issuer_id != ca_id) return CertCheck::Invalid;
  if (expected_peer && c.entity_id != *expected_peer) return CertCheck::Invalid;
  bool ok = false;
  try {
    ok = primitives::Registry::builtin().signature(ca_algorithm).verify(ca_public_key, c.to_be_signed(),
                                                                         c.issuer_signature);
  } catch (const Error&) {
    ok = false;
  }
  if (!ok) return CertCheck::Invalid;
  if (now >= c.not_after) return CertCheck::Expired;
  return CertCheck::Ok;
}

PeerTrust PeerTrust::from(const TestCa& ca, std::optional<Bytes> expected_peer) {
  return {ca.issuer_id(), ca.algorithm(), ca.public_key(), std::move(expected_peer)};
}

Identity make_identity(const PrimitiveSuite& suite, const TestCa& ca, Bytes entity_id, primitives::Drbg& rng) {
  Identity id;
  id.entity_id = entity_id;
  Instant now = suite.now();
  auto sig = suite.sig().keygen(now, suite.t_hpt(), &rng);
  Certificate sc = ca.issue(entity_id, sig.algorithm, sig.pk, now + suite.t_hpt(), rng);
  id.sig = Credential{std::move(sc), std::move(sig)};
  auto kem = suite.kem().keygen(now, suite.t_hpt(), &rng);
  Certificate kc = ca.issue(entity_id, kem.algorithm, kem.pk, now + suite.t_hpt(), rng);
  id.kem = Credential{std::move(kc), std::move(kem)};
  return id;
}

bool ReplayCache::check_and_insert(ByteView nonce) {
  return !seen_.insert(Bytes(nonce.begin(), nonce.end())).second;
}

std::string to_string(const KeyId& id) {
  return std::to_string(id.stage) + ":" + std::to_string(id.offset);
}

void KeyPool::add(std::uint32_t stage, const Secret& key, double epsilon) {
  if (key.empty()) return;
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("pool epsilon outside [0,1]");
  entries_.push_back({KeyId{stage, 0}, key, epsilon});
}

std::optional<KeyId> KeyPool::select(std::size_t len) const {
  const Entry* best = nullptr;
  for (const auto& e : entries_) {
    if (e.key.size() < len) continue;
    if (!best || e.epsilon < best->epsilon || (e.epsilon == best->epsilon && e.id < best->id)) best = &e;
  }
  if (!best) return std::nullopt;
  return best->id;
}

Secret KeyPool::peek(const KeyId& id, std::size_t len) const {
  for (const auto& e : entries_) {
    if (e.id != id) continue;
    if (e.key.size() < len) throw PoolExhausted("entry " + to_string(id) + " holds fewer than " + std::to_string(len));
    return Secret(Bytes(e.key.expose().begin(), e.key.expose().begin() + static_cast<std::ptrdiff_t>(len)));
  }
  throw PoolExhausted("no entry " + to_string(id));
}

std::pair<KeyId, Secret> KeyPool::draw(std::size_t len) {
  auto id = select(len);
  if (!id)
    throw PoolExhausted("no pooled key holds " + std::to_string(len) + " octets (" + std::to_string(total_octets()) +
                        " in pool)");
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.id == *id; });
  const Bytes& all = it->key.expose();
  Secret taken(Bytes(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(len)));
  Secret rest(Bytes(all.begin() + static_cast<std::ptrdiff_t>(len), all.end()));
  history_.push_back(*id);
  if (rest.empty()) {
    entries_.erase(it);
  } else {
    it->key = std::move(rest);
    it->id.offset += len;
  }
  return {*id, std::move(taken)};
}

std::size_t KeyPool::total_octets() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.key.size();
  return n;
}

std::string KeyPool::fingerprint() const {
  Bytes b;
  for (const auto& e : entries_) {
    put_u32be(b, e.id.stage);
    put_u64be(b, e.id.offset);
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof e.epsilon);
    std::memcpy(&bits, &e.epsilon, sizeof bits);
    put_u64be(b, bits);
    put_field(b, e.key.expose());
  }
  std::string fp = qkdauth::fingerprint(b);
  secure_wipe(b);
  return fp;
}

bool KeyPool::operator==(const KeyPool& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& x = entries_[i];
    const auto& y = o.entries_[i];
    if (x.id != y.id || x.epsilon != y.epsilon || !(x.key == y.key)) return false;
  }
  return true;
}

void KeyPool::wipe() {
  for (auto& e : entries_) e.key.wipe();
  entries_.clear();
}

Party::Party(std::string name_, Role role_, Identity identity_, PeerTrust trust_, std::uint64_t seed)
    : name(std::move(name_)),
      role(role_),
      identity(std::move(identity_)),
      trust(std::move(trust_)),
      rng(seed, "party/" + name) {}

void Party::wipe_live_secrets() {
  for (auto* c : {&identity.sig, &identity.kem})
    if (*c) (*c)->keys.sk.wipe();
  sec_state.wipe();
}

}  // namespace qkdauth::sessions
