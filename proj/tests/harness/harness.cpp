#include "harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "qkdauth/errors.hpp"
#include "qkdauth/transport.hpp"

namespace harness {

using namespace qkdauth;
using sessions::Multistage;
using sessions::StageSummary;
using transport::Direction;
using transport::WireMessage;

sessions::MultistageConfig config(const std::vector<ProtocolId>& plan, std::uint64_t seed) {
  sessions::MultistageConfig cfg;
  cfg.plan = plan;
  cfg.seed = seed;
  cfg.qkd.seed = seed * 7919 + 1;
  cfg.clock = std::make_shared<primitives::ManualClock>();
  return cfg;
}

std::vector<ProtocolId> plan_ending_in(ProtocolId p) {
  if (p == ProtocolId::Mac) return {ProtocolId::Kem, ProtocolId::Mac};
  return {p};
}

int message_count(ProtocolId p) { return p == ProtocolId::Mac ? 2 : 8; }

Role sender(ProtocolId p, int i) {
  switch (p) {
    case ProtocolId::Sigma: return (i == 1 || i >= 6) ? Role::Initiator : Role::Responder;
    case ProtocolId::Kem: return (i == 1 || i == 4 || i == 5 || i == 8) ? Role::Initiator : Role::Responder;
    case ProtocolId::Mac: return i == 1 ? Role::Initiator : Role::Responder;
  }
  throw StateError("unknown protocol");
}

std::pair<Role, int> expected_reject(ProtocolId p, int i) {
  if (p != ProtocolId::Mac && (i == 1 || i == 2)) return {Role::Initiator, sessions::verification_step(p, Role::Initiator, 3)};
  Role receiver = sender(p, i) == Role::Initiator ? Role::Responder : Role::Initiator;
  return {receiver, sessions::verification_step(p, receiver, i)};
}

namespace {

void run_until(Multistage& ms, const std::vector<ProtocolId>& plan) {
  for (ProtocolId p : plan) {
    ms.run_stage(p);
    if (ms.halted()) return;
  }
}

}  // namespace

std::vector<std::size_t> payload_lengths(ProtocolId p, std::uint64_t seed) {
  auto plan = plan_ending_in(p);
  Multistage ms(config(plan, seed));
  run_until(ms, plan);
  if (ms.halted()) throw StateError("honest run rejected");
  std::vector<std::size_t> out(static_cast<std::size_t>(message_count(p)) + 1, 0);
  for (const auto* side : {&ms.last().initiator.sent, &ms.last().responder.sent})
    for (const auto& f : *side) {
      auto m = WireMessage::decode(f);
      out.at(m.msg_type) = m.payload.size();
    }
  return out;
}

FlipResult run_flip(const FlipCase& c, std::uint64_t seed) {
  auto plan = plan_ending_in(c.protocol);
  auto cfg = config(plan, seed);
  transport::Rule r;
  r.match.stage = static_cast<std::uint32_t>(plan.size());
  r.match.msg_type = static_cast<std::uint8_t>(c.msg_index);
  r.action.kind = transport::ActionKind::FlipBit;
  r.action.n = c.bit;
  cfg.adversary.rules.push_back(r);

  Multistage ms(cfg);
  std::vector<ProtocolId> before(plan.begin(), plan.end() - 1);
  run_until(ms, before);
  if (ms.halted()) throw StateError("setup stage rejected");
  std::size_t pool_a = ms.initiator().pool.total_octets();
  std::size_t pool_b = ms.responder().pool.total_octets();
  std::size_t draw_a = ms.initiator().pool.draw_history().size();

  FlipResult out;
  out.summary = ms.run_stage(plan.back());
  // A MAC stage retires K0 before it can accept, so compare what was added.
  std::size_t k0 = ms.initiator().pool.draw_history().size() > draw_a ? sessions::kK0Len : 0;
  out.pooled_a = ms.initiator().pool.total_octets() + k0 > pool_a;
  out.pooled_b = ms.responder().pool.total_octets() + k0 > pool_b;
  return out;
}

StageSummary run_replay(ProtocolId p, std::uint64_t seed) {
  // Stage layout: the prior flow comes from stage s-1, the fresh session is stage s.
  std::vector<ProtocolId> plan =
      p == ProtocolId::Mac ? std::vector{ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac} : std::vector{p, p};
  const auto replayed = static_cast<std::uint32_t>(plan.size() - 1);
  // MAC replays the initiator's flow at the responder; the others replay the
  // responder's flow at the initiator.
  const Role from = p == ProtocolId::Mac ? Role::Initiator : Role::Responder;

  std::map<int, std::uint64_t> log_index;
  {
    Multistage probe(config(plan, seed));
    std::vector<ProtocolId> head(plan.begin(), plan.end() - 1);
    run_until(probe, head);
    if (probe.halted()) throw StateError("honest prefix rejected");
    auto log = probe.middlebox()->passive_log();
    std::size_t earlier = 0;
    for (std::size_t s = 0; s + 1 < replayed; ++s)
      earlier += probe.history()[s].initiator.sent.size() + probe.history()[s].responder.sent.size();
    for (std::size_t i = earlier; i < log.size(); ++i) {
      auto m = WireMessage::decode(log[i]);
      if (sender(p, m.msg_type) == from) log_index.emplace(m.msg_type, i);
    }
  }

  auto cfg = config(plan, seed);
  for (const auto& [type, index] : log_index) {
    transport::Rule r;
    r.match.stage = replayed + 1;
    r.match.msg_type = static_cast<std::uint8_t>(type);
    r.action.kind = transport::ActionKind::Replay;
    r.action.n = index;
    cfg.adversary.rules.push_back(r);
  }
  Multistage ms(cfg);
  run_until(ms, plan);
  return ms.report().stages.back();
}

}  // namespace harness

namespace harness {

namespace {

std::vector<WireMessage> split_frames(const Bytes& concatenated) {
  std::vector<WireMessage> out;
  std::size_t off = 0;
  while (off + WireMessage::kHeaderLen <= concatenated.size()) {
    const auto* p = concatenated.data() + off;
    std::size_t len = (std::size_t{p[2]} << 24) | (std::size_t{p[3]} << 16) | (std::size_t{p[4]} << 8) | p[5];
    std::size_t total = WireMessage::kHeaderLen + len;
    out.push_back(WireMessage::decode(ByteView(concatenated).subspan(off, total)));
    off += total;
  }
  return out;
}

}  // namespace

std::vector<CorpusCase> cleanness_corpus() {
  std::vector<CorpusCase> out;
  for (const auto& entry : std::filesystem::directory_iterator(QKDAUTH_FIXTURES_DIR "/clean")) {
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    CorpusCase c;
    c.name = entry.path().stem().string();
    c.text = ss.str();
    auto first = c.text.substr(0, c.text.find('\n'));
    if (first == "# expect: clean") c.clean = true;
    else if (first != "# expect: not_clean") throw ConfigError(c.name + ": missing '# expect:' label");
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const CorpusCase& a, const CorpusCase& b) { return a.name < b.name; });
  return out;
}

bool classify(const CorpusCase& c, std::uint64_t seed, std::shared_ptr<const hake::World> world) {
  hake::EnvConfig cfg;
  cfg.seed = seed;
  cfg.qkd.seed = seed * 31 + 7;
  return hake::run_experiment(cfg, transport::parse_script(c.text), std::move(world)).clean;
}

Impersonation impersonate_responder(bool corrupt_initiator, std::uint64_t seed) {
  auto mallory = std::make_shared<qkd::SplittingAdversary>(seed ^ 0xabcdefULL);
  hake::EnvConfig cfg;
  cfg.seed = seed;
  cfg.qkd.seed = seed + 3;
  cfg.qkd.mode = qkd::Mode::Tampered;
  cfg.qkd_adversary = mallory;
  cfg.network = transport::parse_script("on dir:to_initiator do drop\n");
  hake::Environment env(cfg);
  env.create(0, 1, Role::Initiator, 0);
  env.create(1, 0, Role::Responder, 0);
  env.corrupt_qk(1, -1, 0);
  if (corrupt_initiator) env.corrupt_qk(0, -1, 0);
  env.execute(0, 0, 1, 0, ProtocolId::Sigma);

  const auto& a = env.session(0, 0);
  qkd::QkdOutcome view = a.stages.at(0).qkd;
  view.k_qkd = mallory->key_with_initiator();
  sessions::Party shadow("shadow", Role::Responder, env.world().identity(1), env.world().trust_for(0), seed + 5);
  sessions::StageEngine forger(env.world().suite(), shadow, ProtocolId::Sigma, 1, view);
  forger.start();

  std::vector<WireMessage> pending{WireMessage::decode(a.live->outcome().sent.at(0))};
  while (!pending.empty() && env.session(0, 0).alpha(1) == sessions::Status::Active) {
    std::vector<WireMessage> next;
    for (const auto& m : pending) {
      if (forger.status() != sessions::Status::Active) break;
      for (const auto& out : forger.on_message(m)) {
        auto reply = env.send(0, 0, out.encode());
        if (reply.bottom) continue;
        for (auto& r : split_frames(reply.value)) next.push_back(std::move(r));
      }
    }
    pending = std::move(next);
  }

  Impersonation r;
  r.accepted = env.session(0, 0).alpha(1) == sessions::Status::Accept;
  r.has_origin = env.has_origin(0, 0, 1).has_value();
  r.clean = env.clean_hpt(0, 0, 1);
  return r;
}

double reveal_its_rate(double epsilon, int trials, bool mitm_without_auth, std::uint64_t seed) {
  auto world = std::make_shared<hake::World>(primitives::SuiteConfig{}, 2, seed);
  int revealed = 0;
  for (int n = 0; n < trials; ++n) {
    hake::EnvConfig cfg;
    cfg.seed = seed + static_cast<std::uint64_t>(n);
    cfg.qkd.seed = cfg.seed * 2654435761ULL;
    cfg.qkd.epsilon = epsilon;
    if (mitm_without_auth) {
      cfg.qkd.mode = qkd::Mode::Tampered;
      cfg.authentication_disabled = true;
    }
    hake::Environment env(cfg, world);
    env.create(0, 1, Role::Initiator, 0);
    env.create(1, 0, Role::Responder, 0);
    env.execute(0, 0, 1, 0, ProtocolId::Kem);
    if (!env.reveal_its(0, 0, 1).bottom) ++revealed;
  }
  return static_cast<double>(revealed) / trials;
}

}  // namespace harness

namespace harness {

using budget::Coefficients;
using budget::Sym;

namespace {

void add(Coefficients& into, const Coefficients& block, long long k) {
  for (const auto& [s, c] : block) into[s] += c * k;
}

void drop_zeros(Coefficients& c) {
  for (auto it = c.begin(); it != c.end();) it = it->second == 0 ? c.erase(it) : std::next(it);
}

}  // namespace

Coefficients expected_kem_then_mac(int t) {
  Coefficients stage1;
  add(stage1, {{Sym::Kem, 1}, {Sym::Eps, 1}, {Sym::Dual, 2}, {Sym::Prf, 22}, {Sym::Cpa, 5}, {Sym::Ctxt, 5},
               {Sym::Mac, 3}, {Sym::Hash, 15}}, 8);
  add(stage1, {{Sym::Cpa, 4}, {Sym::Eps, 1}}, 4);
  if (t == 1) return stage1;

  const long long n = t - 1;
  Coefficients out = stage1;
  Coefficients b1{{Sym::Dual, 1}, {Sym::Prf, 3}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}};
  add(b1, stage1, 1);
  Coefficients b2{{Sym::Dual, 1}, {Sym::Prf, 4}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}};
  add(b2, stage1, 1);
  add(out, b1, 4 * n);
  add(out, b2, 4 * n * n);
  add(out, {{Sym::Prf, 5}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}}, 4 * n * n * n);
  add(out, {{Sym::Cpa, 2}, {Sym::Eps, 1}}, 4LL * t);
  add(out, {{Sym::Cpa, 2}}, 4);
  drop_zeros(out);
  return out;
}

Coefficients computed_kem_then_mac(int t) {
  std::vector<ProtocolId> plan{ProtocolId::Kem};
  auto stage1 = budget::theorem1_total(budget::counts_for(plan));
  for (int s = 2; s <= t; ++s) plan.push_back(ProtocolId::Mac);
  return budget::theorem1_total(budget::counts_for(plan)).substitute_r(stage1).flatten();
}

}  // namespace harness
