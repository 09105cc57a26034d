#include <chrono>

#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"

namespace qkdauth::sessions {

using keyschedule::LabelName;
namespace ks = keyschedule;

struct StageEngine::StepFailure {
  int idx;
  RejectDetail detail;
};

namespace {

constexpr std::uint32_t kPrefixA = 0x41414141;
constexpr std::uint32_t kPrefixB = 0x42424242;

class Stopwatch {
 public:
  explicit Stopwatch(double& sink) : sink_(sink), t0_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() { sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace

Bytes StageOutcome::m_s() const {
  Bytes out;
  for (const auto& f : sent) append(out, f);
  return out;
}

Bytes StageOutcome::m_r() const {
  Bytes out;
  for (const auto& f : received) append(out, f);
  return out;
}

StageEngine::StageEngine(const PrimitiveSuite& suite, Party& party, ProtocolId protocol, std::uint32_t stage,
                         const qkd::QkdOutcome& qkd, StageOptions opts)
    : suite_(suite), party_(party), p_(protocol), opts_(opts), qkd_(qkd) {
  out_.stage = stage;
  out_.protocol = protocol;
  out_.role = party.role;
  out_.pss_in = party.sec_state;
}

StageEngine::~StageEngine() {
  sched_.wipe();
  for (auto* s : {&ss_qkd_, &ss_rest_, &k_a_, &k_b_}) s->wipe();
}

std::vector<WireMessage> StageEngine::start() {
  if (out_.status != Status::Bottom) throw StateError("stage already started");
  Stopwatch sw(out_.compute_seconds);
  out_.status = Status::Active;
  bool initiator = party_.role == Role::Initiator;

  if (qkd_.aborted) {
    abort(RejectReason::QkdAborted);
    return {};
  }
  log_.append(0, qkd_.m_qkd);

  if (p_ == ProtocolId::Mac) {
    ss_rest_ = qkd_.k_qkd;
  } else {
    auto part = qkd::partition(qkd_.k_qkd, {{"ss_qkd", kSsQkdLen}});
    ss_qkd_ = part.segment("ss_qkd");
    ss_rest_ = part.remainder;
    out_.esk = ss_qkd_;
  }

  if (opts_.authentication_disabled) {
    party_.pool.add(out_.stage, ss_rest_, opts_.pool_epsilon);
    out_.k = ss_rest_;
    out_.status = Status::Accept;
    return {};
  }

  if (p_ == ProtocolId::Mac) {
    auto id = party_.pool.select(kK0Len);
    if (!id) {
      abort(RejectReason::PoolExhausted);
      throw PoolExhausted("no pooled key holds " + std::to_string(kK0Len) + " octets");
    }
    out_.k0_id = *id;
    sched_.k0 = party_.pool.peek(*id, kK0Len);
    sched_.ctr = party_.ctr;
    sched_.k1 = ks::derive_k1(suite_, p_, party_.sec_state.view(), sched_.k0->view(), sched_.ctr);
    install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k1->view(),
                                                 {LabelName::TSA, LabelName::TSB, LabelName::MACA1, LabelName::MACB1},
                                                 log_.through(0), sched_.ctr));
    if (!initiator) {
      expect_ = 1;
      return {};
    }
    expect_ = 2;
    Bytes tag = suite_.mac().auth(sched_.kmac.at(LabelName::MACA1).view(),
                                  ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(0), sched_.ctr));
    return {emit(1, tag, LabelName::TSA)};
  }

  const Credential& own = own_credential(p_ == ProtocolId::Kem);
  if (own.keys.expired(suite_.now())) {
    abort(RejectReason::KeyExpired);
    return {};
  }
  out_.qk = own.keys.sk;
  if (!initiator) {
    expect_ = 1;
    return {};
  }
  n_a_ = fresh_nonce();
  expect_ = 2;
  return {emit(1, n_a_, std::nullopt)};
}

std::vector<WireMessage> StageEngine::on_message(const WireMessage& m) {
  if (out_.status != Status::Active) return {};
  Stopwatch sw(out_.compute_seconds);
  out_.received.push_back(m.encode());
  if (m.protocol_id != static_cast<std::uint8_t>(p_) || m.msg_type != expect_) {
    fail(expect_, RejectDetail::UnexpectedMessage);
    return {};
  }
  try {
    switch (p_) {
      case ProtocolId::Sigma: return sigma_on(m);
      case ProtocolId::Kem: return kem_on(m);
      case ProtocolId::Mac: return mac_on(m);
    }
  } catch (const StepFailure& f) {
    fail(f.idx, f.detail);
  } catch (const KeyExpired&) {
    fail(m.msg_type, RejectDetail::None, RejectReason::KeyExpired);
  } catch (const Error&) {
    fail(m.msg_type, RejectDetail::MalformedPayload);
  }
  return {};
}

void StageEngine::abort(RejectReason r, RejectDetail d) {
  if (out_.status == Status::Accept || out_.status == Status::Reject) return;
  fail(0, d, r);
  out_.step = 0;
}

std::vector<WireMessage> StageEngine::sigma_on(const WireMessage& m) {
  const int idx = m.msg_type;
  std::vector<WireMessage> out;
  auto sig_alg = [&]() -> const primitives::Signature& {
    return primitives::Registry::builtin().signature(peer_cert_->algorithm);
  };

  if (party_.role == Role::Initiator) {
    switch (idx) {
      case 2:
        n_b_ = receive(m, std::nullopt);
        check_nonce(2, n_b_);
        derive_k0_k1();
        install_keys(ks::derive_traffic_and_mac_keys(
            suite_, p_, sched_.k1->view(), {LabelName::TSA, LabelName::TSB, LabelName::MACA1, LabelName::MACB1},
            log_.through(2)));
        expect_ = 3;
        return {};
      case 3:
        check_peer_cert(3, receive(m, LabelName::TSB), false);
        expect_ = 4;
        return {};
      case 4: {
        Bytes sigma = receive(m, LabelName::TSB);
        if (!sig_alg().verify(peer_cert_->public_key, ks::tagged_digest(suite_, p_, LabelName::SB, log_.through(3)),
                              sigma))
          throw StepFailure{4, RejectDetail::SignatureInvalid};
        expect_ = 5;
        return {};
      }
      case 5: {
        Bytes tau = receive(m, LabelName::TSB);
        if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACB1).view(),
                                 ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(4)), tau))
          throw StepFailure{5, RejectDetail::TagMismatch};
        const Credential& own = own_credential(false);
        out.push_back(emit(6, own.cert.encode(), LabelName::TSA));
        Bytes sa = suite_.sig().sign(own.keys, ks::tagged_digest(suite_, p_, LabelName::SA, log_.through(6)),
                                     suite_.now(), &party_.rng);
        out.push_back(emit(7, sa, LabelName::TSA));
        Bytes ta = suite_.mac().auth(sched_.kmac.at(LabelName::MACA1).view(),
                                     ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(7)));
        out.push_back(emit(8, ta, LabelName::TSA));
        accept();
        out_.liveness_gap = true;
        return out;
      }
    }
  } else {
    switch (idx) {
      case 1: {
        n_a_ = receive(m, std::nullopt);
        check_nonce(1, n_a_);
        n_b_ = fresh_nonce();
        out.push_back(emit(2, n_b_, std::nullopt));
        derive_k0_k1();
        install_keys(ks::derive_traffic_and_mac_keys(
            suite_, p_, sched_.k1->view(), {LabelName::TSA, LabelName::TSB, LabelName::MACA1, LabelName::MACB1},
            log_.through(2)));
        const Credential& own = own_credential(false);
        out.push_back(emit(3, own.cert.encode(), LabelName::TSB));
        Bytes sb = suite_.sig().sign(own.keys, ks::tagged_digest(suite_, p_, LabelName::SB, log_.through(3)),
                                     suite_.now(), &party_.rng);
        out.push_back(emit(4, sb, LabelName::TSB));
        Bytes tb = suite_.mac().auth(sched_.kmac.at(LabelName::MACB1).view(),
                                     ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(4)));
        out.push_back(emit(5, tb, LabelName::TSB));
        expect_ = 6;
        return out;
      }
      case 6:
        check_peer_cert(6, receive(m, LabelName::TSA), false);
        expect_ = 7;
        return {};
      case 7: {
        Bytes sigma = receive(m, LabelName::TSA);
        if (!sig_alg().verify(peer_cert_->public_key, ks::tagged_digest(suite_, p_, LabelName::SA, log_.through(6)),
                              sigma))
          throw StepFailure{7, RejectDetail::SignatureInvalid};
        expect_ = 8;
        return {};
      }
      case 8: {
        Bytes tau = receive(m, LabelName::TSA);
        if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACA1).view(),
                                 ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(7)), tau))
          throw StepFailure{8, RejectDetail::TagMismatch};
        accept();
        return {};
      }
    }
  }
  throw StepFailure{idx, RejectDetail::UnexpectedMessage};
}

std::vector<WireMessage> StageEngine::kem_on(const WireMessage& m) {
  const int idx = m.msg_type;
  std::vector<WireMessage> out;
  const auto& reg = primitives::Registry::builtin();
  const std::vector<LabelName> ts1{LabelName::TSA1, LabelName::TSB1};
  const std::vector<LabelName> ts2{LabelName::TSA2, LabelName::TSB2};
  const std::vector<LabelName> macs{LabelName::MACA1, LabelName::MACB1};

  auto decap = [&](int at, const Bytes& ct) {
    const Credential& own = own_credential(true);
    auto k = reg.kem(own.keys.algorithm).decapsulate(own.keys, ct, suite_.now());
    if (!k) throw StepFailure{at, RejectDetail::DecapsulationFailed};
    return std::move(*k);
  };
  auto encap = [&]() { return reg.kem(peer_cert_->algorithm).encapsulate(peer_cert_->public_key, &party_.rng); };
  auto finish_k3 = [&]() {
    sched_.k3 = ks::derive_k3_kem(suite_, sched_.k2->view(), k_a_.view());
    out_.eqk = Secret(concat({k_a_.view(), k_b_.view()}));
    install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k3->view(), macs, log_.through(6)));
  };

  if (party_.role == Role::Initiator) {
    switch (idx) {
      case 2:
        n_b_ = receive(m, std::nullopt);
        check_nonce(2, n_b_);
        derive_k0_k1();
        install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k1->view(), ts1, log_.through(2)));
        expect_ = 3;
        return {};
      case 3: {
        check_peer_cert(3, receive(m, LabelName::TSB1), true);
        auto enc = encap();
        k_b_ = std::move(enc.shared);
        out.push_back(emit(4, enc.ciphertext, LabelName::TSA1));
        sched_.k2 = ks::derive_k2_kem(suite_, sched_.k1->view(), k_b_.view());
        install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k2->view(), ts2, log_.through(4)));
        out.push_back(emit(5, own_credential(true).cert.encode(), LabelName::TSA2));
        expect_ = 6;
        return out;
      }
      case 6:
        k_a_ = decap(6, receive(m, LabelName::TSA2));
        finish_k3();
        expect_ = 7;
        return {};
      case 7: {
        Bytes tau = receive(m, LabelName::TSB2);
        if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACB1).view(),
                                 ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(6)), tau))
          throw StepFailure{7, RejectDetail::TagMismatch};
        Bytes ta = suite_.mac().auth(sched_.kmac.at(LabelName::MACA1).view(),
                                     ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(7)));
        out.push_back(emit(8, ta, LabelName::TSA2));
        accept();
        out_.liveness_gap = true;
        return out;
      }
    }
  } else {
    switch (idx) {
      case 1:
        n_a_ = receive(m, std::nullopt);
        check_nonce(1, n_a_);
        n_b_ = fresh_nonce();
        out.push_back(emit(2, n_b_, std::nullopt));
        derive_k0_k1();
        install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k1->view(), ts1, log_.through(2)));
        out.push_back(emit(3, own_credential(true).cert.encode(), LabelName::TSB1));
        expect_ = 4;
        return out;
      case 4:
        k_b_ = decap(4, receive(m, LabelName::TSA1));
        sched_.k2 = ks::derive_k2_kem(suite_, sched_.k1->view(), k_b_.view());
        install_keys(ks::derive_traffic_and_mac_keys(suite_, p_, sched_.k2->view(), ts2, log_.through(4)));
        expect_ = 5;
        return {};
      case 5: {
        check_peer_cert(5, receive(m, LabelName::TSA2), true);
        auto enc = encap();
        k_a_ = std::move(enc.shared);
        out.push_back(emit(6, enc.ciphertext, LabelName::TSA2));
        finish_k3();
        Bytes tb = suite_.mac().auth(sched_.kmac.at(LabelName::MACB1).view(),
                                     ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(6)));
        out.push_back(emit(7, tb, LabelName::TSB2));
        expect_ = 8;
        return out;
      }
      case 8: {
        Bytes tau = receive(m, LabelName::TSA2);
        if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACA1).view(),
                                 ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(7)), tau))
          throw StepFailure{8, RejectDetail::TagMismatch};
        accept();
        return {};
      }
    }
  }
  throw StepFailure{idx, RejectDetail::UnexpectedMessage};
}

std::vector<WireMessage> StageEngine::mac_on(const WireMessage& m) {
  const int idx = m.msg_type;
  if (party_.role == Role::Responder && idx == 1) {
    Bytes tau = receive(m, LabelName::TSA);
    if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACA1).view(),
                             ks::tagged_digest(suite_, p_, LabelName::MACA2, log_.through(0), sched_.ctr), tau))
      throw StepFailure{1, RejectDetail::TagMismatch};
    Bytes tb = suite_.mac().auth(sched_.kmac.at(LabelName::MACB1).view(),
                                 ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(1), sched_.ctr));
    std::vector<WireMessage> out{emit(2, tb, LabelName::TSB)};
    accept();
    out_.liveness_gap = true;
    return out;
  }
  if (party_.role == Role::Initiator && idx == 2) {
    Bytes tau = receive(m, LabelName::TSB);
    if (!suite_.mac().verify(sched_.kmac.at(LabelName::MACB1).view(),
                             ks::tagged_digest(suite_, p_, LabelName::MACB2, log_.through(1), sched_.ctr), tau))
      throw StepFailure{2, RejectDetail::TagMismatch};
    accept();
    return {};
  }
  throw StepFailure{idx, RejectDetail::UnexpectedMessage};
}

WireMessage StageEngine::emit(int idx, const Bytes& plaintext, std::optional<LabelName> key) {
  WireMessage m;
  m.protocol_id = static_cast<std::uint8_t>(p_);
  m.msg_type = static_cast<std::uint8_t>(idx);
  m.plaintext_payload = plaintext;
  if (key && opts_.entity_protection) {
    auto ct = aead_.at(*key)->encrypt_next(m.header_ad(), plaintext);
    m.payload = concat({ct.nonce, ct.bytes});
  } else {
    m.payload = plaintext;
  }
  log_.append(idx, plaintext);
  out_.sent.push_back(m.encode());
  return m;
}

Bytes StageEngine::receive(const WireMessage& m, std::optional<LabelName> key) {
  const int idx = m.msg_type;
  Bytes pt;
  if (key && opts_.entity_protection) {
    if (m.payload.size() < primitives::kAeadNonceLen) throw StepFailure{idx, RejectDetail::AeadOpenFailed};
    ByteView all(m.payload);
    auto opened = aead_.at(*key)->decrypt(all.first(primitives::kAeadNonceLen), m.header_ad(),
                                          all.subspan(primitives::kAeadNonceLen));
    if (!opened) throw StepFailure{idx, RejectDetail::AeadOpenFailed};
    pt = std::move(*opened);
  } else {
    pt = m.payload;
  }
  log_.append(idx, pt);
  return pt;
}

void StageEngine::install_keys(const std::map<LabelName, Secret>& keys) {
  std::uint32_t prefix = party_.role == Role::Initiator ? kPrefixA : kPrefixB;
  for (const auto& [name, k] : keys) {
    switch (name) {
      case LabelName::MACA1:
      case LabelName::MACB1:
        sched_.kmac[name] = k;
        break;
      default:
        sched_.kts[name] = k;
        aead_[name] = std::make_unique<primitives::AeadKey>(suite_.aead(), k, prefix);
    }
  }
}

void StageEngine::fail(int idx, RejectDetail d, RejectReason forced) {
  out_.status = Status::Reject;
  out_.failed_message = idx;
  out_.step = verification_step(p_, party_.role, idx);
  out_.reason = forced != RejectReason::None ? forced : reason_for_step(p_, out_.step);
  out_.detail = d;
  expect_ = 0;
  sched_.wipe();
  for (auto& [_, k] : aead_) k->wipe();
  aead_.clear();
  for (auto* s : {&ss_qkd_, &ss_rest_, &k_a_, &k_b_, &out_.k, &out_.esk, &out_.eqk}) s->wipe();
}

void StageEngine::accept() {
  sched_.verified = true;
  out_.transcript_all = log_.all();
  Secret next = ks::update_sec_state(suite_, p_, sched_, out_.transcript_all);
  party_.sec_state = next;
  out_.pss_out = std::move(next);
  if (p_ == ProtocolId::Mac) {
    party_.ctr += 1;
    auto [id, k0] = party_.pool.draw(kK0Len);
    if (id != *out_.k0_id) throw StateError("pool selection changed during the stage");
    out_.sskp = std::move(k0);
  }
  party_.pool.add(out_.stage, ss_rest_, opts_.pool_epsilon);
  out_.k = ss_rest_;
  out_.schedule = sched_;
  out_.status = Status::Accept;
  expect_ = 0;
}

void StageEngine::derive_k0_k1() {
  sched_.k0 = ks::derive_k0_sig(suite_, p_, ss_qkd_.view(), qkd_.m_qkd, n_a_, n_b_);
  sched_.k1 = ks::derive_k1(suite_, p_, party_.sec_state.view(), sched_.k0->view());
}

const Credential& StageEngine::own_credential(bool kem) const {
  const auto& c = kem ? party_.identity.kem : party_.identity.sig;
  if (!c) throw StateError(party_.name + " has no " + (kem ? "KEM" : "signature") + " credential");
  return *c;
}

Certificate StageEngine::check_peer_cert(int idx, const Bytes& pt, bool kem) {
  Certificate c;
  try {
    c = Certificate::decode(pt);
  } catch (const FramingError&) {
    throw StepFailure{idx, RejectDetail::MalformedPayload};
  }
  try {
    const auto& reg = primitives::Registry::builtin();
    if (kem)
      (void)reg.kem(c.algorithm);
    else
      (void)reg.signature(c.algorithm);
  } catch (const UnknownAlgorithm&) {
    throw StepFailure{idx, RejectDetail::CertInvalid};
  }
  switch (party_.trust.check(c, suite_.now())) {
    case CertCheck::Ok: break;
    case CertCheck::Invalid: throw StepFailure{idx, RejectDetail::CertInvalid};
    case CertCheck::Expired: throw StepFailure{idx, RejectDetail::CertExpired};
  }
  peer_cert_ = c;
  return c;
}

Bytes StageEngine::fresh_nonce() { return party_.rng.bytes(kNonceLen); }

void StageEngine::check_nonce(int idx, const Bytes& n) {
  if (n.size() != kNonceLen) throw StepFailure{idx, RejectDetail::MalformedPayload};
  if (party_.seen_nonces.check_and_insert(n)) throw StepFailure{idx, RejectDetail::NonceReplay};
}

}  // namespace qkdauth::sessions
