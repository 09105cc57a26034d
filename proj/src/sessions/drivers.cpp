#include <algorithm>
#include <chrono>
#include <exception>
#include <thread>

#include "qkdauth/budget.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"

namespace qkdauth::sessions {

namespace {

using Clock = std::chrono::steady_clock;

constexpr auto kIdleTimeout = std::chrono::seconds(10);
constexpr int kMaxHeldSpins = 100000;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void send_all(transport::Endpoint& ep, const std::vector<WireMessage>& ms) {
  for (const auto& m : ms) ep.send(m);
}

struct CloseOnExit {
  transport::Endpoint& ep;
  ~CloseOnExit() { ep.close(); }
};

}  // namespace

StageOutcome run_party(ProtocolId p, Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                       transport::Endpoint& channel, std::uint32_t stage, StageOptions opts) {
  CloseOnExit closer{channel};
  StageEngine e(suite, party, p, stage, qkd, opts);
  send_all(channel, e.start());
  auto last_activity = Clock::now();
  while (e.status() == Status::Active) {
    std::optional<WireMessage> m;
    try {
      m = channel.try_recv();
    } catch (const ChannelClosed&) {
      e.abort(RejectReason::ChannelClosed);
      break;
    }
    if (!m) {
      if (Clock::now() - last_activity > kIdleTimeout) {
        e.abort(RejectReason::ChannelClosed);
        break;
      }
      std::this_thread::sleep_for(std::chrono::microseconds(200));
      continue;
    }
    last_activity = Clock::now();
    send_all(channel, e.on_message(*m));
  }
  return e.outcome();
}

StageOutcome run_sigma(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                       transport::Endpoint& channel, std::uint32_t stage, StageOptions opts) {
  return run_party(ProtocolId::Sigma, party, suite, qkd, channel, stage, opts);
}

StageOutcome run_kem(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                     transport::Endpoint& channel, std::uint32_t stage, StageOptions opts) {
  return run_party(ProtocolId::Kem, party, suite, qkd, channel, stage, opts);
}

StageOutcome run_mac(Party& party, const PrimitiveSuite& suite, const qkd::QkdOutcome& qkd,
                     transport::Endpoint& channel, std::uint32_t stage, StageOptions opts) {
  return run_party(ProtocolId::Mac, party, suite, qkd, channel, stage, opts);
}

PairOutcome run_pair_memory(ProtocolId p, Party& a, Party& b, const PrimitiveSuite& suite, const qkd::QkdPair& qkd,
                            transport::MemoryChannel& channel, std::uint32_t stage, StageOptions opts) {
  auto t0 = Clock::now();
  channel.set_stage(stage);
  StageEngine ea(suite, a, p, stage, qkd.initiator, opts);
  StageEngine eb(suite, b, p, stage, qkd.responder, opts);
  auto& ia = channel.initiator();
  auto& ib = channel.responder();
  auto oa = ea.start();
  auto ob = eb.start();
  send_all(ia, oa);
  send_all(ib, ob);

  struct Side {
    StageEngine& e;
    transport::Endpoint& ep;
  };
  Side sides[] = {{ea, ia}, {eb, ib}};
  int held_spins = 0;
  while (ea.status() == Status::Active || eb.status() == Status::Active) {
    bool moved = false;
    for (auto& s : sides) {
      if (s.e.status() != Status::Active) continue;
      std::optional<WireMessage> m;
      try {
        m = s.ep.try_recv();
      } catch (const ChannelClosed&) {
        s.e.abort(RejectReason::ChannelClosed);
        continue;
      }
      if (!m) continue;
      moved = true;
      send_all(s.ep, s.e.on_message(*m));
    }
    if (moved) {
      held_spins = 0;
      continue;
    }
    if (channel.has_held() && ++held_spins < kMaxHeldSpins) continue;
    break;
  }
  ea.abort(RejectReason::ChannelClosed);
  eb.abort(RejectReason::ChannelClosed);

  PairOutcome out{ea.outcome(), eb.outcome()};
  out.t_a = out.initiator.compute_seconds;
  out.t_b = out.responder.compute_seconds;
  out.t_t = std::max(0.0, seconds_since(t0) - out.t_a - out.t_b);
  return out;
}

Multistage::Multistage(MultistageConfig cfg) : cfg_(std::move(cfg)) {
  suite_ = std::make_unique<PrimitiveSuite>(cfg_.suite, cfg_.clock);
  primitives::Drbg rng(cfg_.seed, "multistage/setup");
  ca_ = std::make_unique<TestCa>(*suite_, to_bytes("qkdauth-test-ca"), rng);
  Bytes id_a = to_bytes("A");
  Bytes id_b = to_bytes("B");
  a_ = std::make_unique<Party>("A", Role::Initiator, make_identity(*suite_, *ca_, id_a, rng),
                               PeerTrust::from(*ca_, id_b), cfg_.seed);
  b_ = std::make_unique<Party>("B", Role::Responder, make_identity(*suite_, *ca_, id_b, rng),
                               PeerTrust::from(*ca_, id_a), cfg_.seed);
  mb_ = std::make_shared<transport::Middlebox>(cfg_.adversary);
  channel_ = std::make_unique<transport::MemoryChannel>(mb_);
}

Multistage::~Multistage() = default;

double Multistage::stage_epsilon(ProtocolId p, std::uint32_t stage) const {
  std::vector<ProtocolId> plan;
  for (const auto& s : summaries_) plan.push_back(s.protocol);
  plan.push_back(p);
  std::map<std::uint32_t, std::uint32_t> sources;
  for (std::size_t i = 0; i < history_.size(); ++i)
    if (history_[i].initiator.k0_id) sources[static_cast<std::uint32_t>(i + 1)] = history_[i].initiator.k0_id->stage;
  if (p == ProtocolId::Mac)
    if (auto id = a_->pool.select(kK0Len)) sources[stage] = id->stage;
  try {
    auto bounds = budget::plan_bounds(plan, suite_->adv(), sources);
    return qkd::prob_not_its(std::min(1.0, bounds.back().value), cfg_.qkd.epsilon);
  } catch (const MissingDependency&) {
    return 1.0;
  }
}

PairOutcome Multistage::run_tcp(ProtocolId p, const qkd::QkdPair& q, std::uint32_t stage, StageOptions opts) {
  auto [host, port] = transport::parse_address(std::string_view(cfg_.transport).substr(4));
  mb_->set_stage(stage);
  transport::TcpListener listener(host, port);
  auto t0 = Clock::now();

  StageOutcome ob;
  std::exception_ptr b_err;
  std::thread responder([&] {
    try {
      auto ep = listener.accept(mb_);
      ob = run_party(p, *b_, *suite_, q.responder, *ep, stage, opts);
    } catch (...) {
      b_err = std::current_exception();
    }
  });
  StageOutcome oa;
  std::exception_ptr a_err;
  try {
    auto ep = transport::tcp_connect(host, listener.port(), mb_);
    oa = run_party(p, *a_, *suite_, q.initiator, *ep, stage, opts);
  } catch (...) {
    a_err = std::current_exception();
  }
  responder.join();
  if (a_err) std::rethrow_exception(a_err);
  if (b_err) std::rethrow_exception(b_err);

  PairOutcome out{std::move(oa), std::move(ob)};
  out.t_a = out.initiator.compute_seconds;
  out.t_b = out.responder.compute_seconds;
  out.t_t = std::max(0.0, seconds_since(t0) - out.t_a - out.t_b);
  return out;
}

const StageSummary& Multistage::run_stage(ProtocolId p) {
  if (halted_) throw StateError("plan halted after a rejected stage");
  auto stage = static_cast<std::uint32_t>(summaries_.size() + 1);
  if (stage == 1) validate_plan({p});

  qkd::QkdPair q = qkd::run_unauthenticated_qkd(cfg_.qkd, cfg_.qkd_adversary.get(), stage);
  last_qkd_ = q;
  qkd_history_.push_back(q);
  StageOptions opts{cfg_.entity_protection, cfg_.authentication_disabled, stage_epsilon(p, stage)};

  StageSummary s;
  s.stage = stage;
  s.protocol = p;
  s.pool_epsilon = opts.pool_epsilon;
  PairOutcome po;
  try {
    if (cfg_.transport == "memory") {
      channel_->reset();
      po = run_pair_memory(p, *a_, *b_, *suite_, q, *channel_, stage, opts);
    } else if (cfg_.transport.rfind("tcp:", 0) == 0) {
      po = run_tcp(p, q, stage, opts);
    } else {
      throw ConfigError("unknown transport '" + cfg_.transport + "'");
    }
  } catch (const PoolExhausted&) {
    for (StageOutcome* o : {&po.initiator, &po.responder}) {
      o->stage = stage;
      o->protocol = p;
      o->status = Status::Reject;
      o->reason = RejectReason::PoolExhausted;
    }
    po.initiator.role = Role::Initiator;
    po.responder.role = Role::Responder;
  }
  counts_[static_cast<int>(p) - 1] += 1;

  const StageOutcome& A = po.initiator;
  const StageOutcome& B = po.responder;
  s.alpha_a = A.status;
  s.alpha_b = B.status;
  bool ra = A.status == Status::Reject;
  bool rb = B.status == Status::Reject;
  s.rejecting = ra && rb ? "both" : ra ? "initiator" : rb ? "responder" : "";
  const StageOutcome* primary = nullptr;
  if (ra && A.reason != RejectReason::ChannelClosed)
    primary = &A;
  else if (rb && B.reason != RejectReason::ChannelClosed)
    primary = &B;
  else if (ra)
    primary = &A;
  else if (rb)
    primary = &B;
  if (primary) {
    s.reason = primary->reason;
    s.detail = primary->detail;
    s.step = primary->step;
  }
  s.pool_a = a_->pool.total_octets();
  s.pool_b = b_->pool.total_octets();
  s.pool_fp_a = a_->pool.fingerprint();
  s.pool_fp_b = b_->pool.fingerprint();
  s.sec_state_fp_a = a_->sec_state.fingerprint();
  s.sec_state_fp_b = b_->sec_state.fingerprint();
  if (A.status == Status::Accept) s.ss_rest_fp = A.k.fingerprint();
  s.k0_id = A.k0_id;
  s.liveness_gap = (A.liveness_gap && A.status == Status::Accept && B.status != Status::Accept) ||
                   (B.liveness_gap && B.status == Status::Accept && A.status != Status::Accept);
  bool both = A.status == Status::Accept && B.status == Status::Accept;
  s.agree = both && A.k == B.k && a_->sec_state == b_->sec_state && a_->ctr == b_->ctr && a_->pool == b_->pool;
  s.t_a = po.t_a;
  s.t_b = po.t_b;
  s.t_t = po.t_t;
  s.runtime_feasible = budget::runtime_feasible(budget::Seconds(s.t_a), budget::Seconds(s.t_b),
                                                budget::Seconds(s.t_t),
                                                std::chrono::duration_cast<budget::Seconds>(suite_->t_hpt()));
  if (!both) halted_ = true;

  history_.push_back(po);
  last_ = std::move(po);
  summaries_.push_back(std::move(s));
  return summaries_.back();
}

StageReport Multistage::report() const {
  StageReport r;
  r.stages = summaries_;
  r.n_t_sigma = counts_[0];
  r.n_t_kem = counts_[1];
  r.n_t_mac = counts_[2];
  r.all_accept = !summaries_.empty() && std::all_of(summaries_.begin(), summaries_.end(), [](const StageSummary& s) {
    return s.alpha_a == Status::Accept && s.alpha_b == Status::Accept;
  });
  r.audit = mb_->audit();
  r.passive_log = mb_->passive_log();
  return r;
}

StageReport run_multistage(const MultistageConfig& cfg) {
  validate_plan(cfg.plan);
  Multistage ms(cfg);
  for (ProtocolId p : cfg.plan) {
    ms.run_stage(p);
    if (ms.halted()) break;
  }
  return ms.report();
}

}  // namespace qkdauth::sessions
