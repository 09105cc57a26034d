#include <algorithm>
#include <charconv>
#include <limits>

#include "qkdauth/errors.hpp"
#include "qkdauth/hake.hpp"

namespace qkdauth::hake {

namespace {

using sessions::StageEngine;
using sessions::StageOutcome;
using transport::WireMessage;

constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
constexpr int kMaxHeldSpins = 100000;

struct NameEntry {
  std::string_view name;
  QueryKind kind;
};

constexpr NameEntry kNames[] = {
    {"Create", QueryKind::Create},
    {"Send", QueryKind::Send},
    {"Execute", QueryKind::Execute},
    {"Reveal", QueryKind::Reveal},
    {"Test", QueryKind::Test},
    {"CorruptQK", QueryKind::CorruptQK},
    {"CorruptSK", QueryKind::CorruptSK},
    {"CorruptCK", QueryKind::CorruptCK},
    {"CompromiseQK", QueryKind::CompromiseQK},
    {"CompromiseCK", QueryKind::CompromiseCK},
    {"CompromiseSK", QueryKind::CompromiseSK},
    {"CompromiseSS", QueryKind::CompromiseSS},
    {"CompromiseKP", QueryKind::CompromiseKP},
    {"RevealITS", QueryKind::RevealITS},
    {"Guess", QueryKind::Guess},
};

int parse_int(const transport::QueryLine& line, const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || out < 0)
    throw QueryError("line " + std::to_string(line.line) + ": bad value for " + key + ": '" + v + "'");
  return out;
}

Bytes concat_frames(const std::vector<WireMessage>& ms) {
  Bytes out;
  for (const auto& m : ms) append(out, m.encode());
  return out;
}

}  // namespace

std::string_view to_string(QueryKind k) {
  for (const auto& e : kNames)
    if (e.kind == k) return e.name;
  return "?";
}

QueryKind parse_query_kind(std::string_view name) {
  for (const auto& e : kNames)
    if (e.name == name) return e.kind;
  throw QueryError("unknown query '" + std::string(name) + "'");
}

Query parse_query(const transport::QueryLine& line) {
  Query q;
  try {
    q.kind = parse_query_kind(line.name);
  } catch (const QueryError&) {
    throw QueryError("line " + std::to_string(line.line) + ": unknown query '" + line.name + "'");
  }
  for (const auto& [key, v] : line.args) {
    if (key == "i") q.i = parse_int(line, key, v);
    else if (key == "s") q.s = parse_int(line, key, v);
    else if (key == "j") q.j = parse_int(line, key, v);
    else if (key == "r") q.r = parse_int(line, key, v);
    else if (key == "t") q.t = static_cast<std::uint32_t>(parse_int(line, key, v));
    else if (key == "d") q.d = parse_int(line, key, v);
    else if (key == "role") {
      if (v == "init" || v == "initiator") q.role = Role::Initiator;
      else if (v == "resp" || v == "responder") q.role = Role::Responder;
      else throw QueryError("line " + std::to_string(line.line) + ": bad role '" + v + "'");
    } else if (key == "proto") {
      try {
        q.protocol = sessions::parse_protocol(v);
      } catch (const Error&) {
        throw QueryError("line " + std::to_string(line.line) + ": bad protocol '" + v + "'");
      }
    } else if (key == "m") {
      try {
        q.message = from_hex(v);
      } catch (const std::invalid_argument&) {
        throw QueryError("line " + std::to_string(line.line) + ": bad hex in m");
      }
    } else {
      throw QueryError("line " + std::to_string(line.line) + ": unknown argument '" + key + "'");
    }
  }
  return q;
}

World::World(const primitives::SuiteConfig& suite, int n_p, std::uint64_t seed,
             std::shared_ptr<const primitives::Clock> clock) {
  if (n_p < 2) throw ConfigError("n_p must be at least 2");
  suite_ = std::make_unique<primitives::PrimitiveSuite>(suite, std::move(clock));
  primitives::Drbg rng(seed, "hake/world");
  ca_ = std::make_unique<sessions::TestCa>(*suite_, to_bytes("qkdauth-test-ca"), rng);
  for (int i = 0; i < n_p; ++i) identities_.push_back(sessions::make_identity(*suite_, *ca_, entity_id(i), rng));
}

sessions::PeerTrust World::trust_for(int peer) const { return sessions::PeerTrust::from(*ca_, entity_id(peer)); }

Bytes World::entity_id(int i) { return to_bytes("P" + std::to_string(i)); }

const StageRecord* SessionState::stage(std::uint32_t t) const {
  if (t == 0 || t > stages.size()) return nullptr;
  return &stages[t - 1];
}

Status SessionState::alpha(std::uint32_t t) const {
  if (t == stid() && live) return live->status();
  const StageRecord* r = stage(t);
  return r ? r->outcome.status : Status::Bottom;
}

Environment::Environment(EnvConfig cfg, std::shared_ptr<const World> world)
    : cfg_(std::move(cfg)), world_(std::move(world)), rng_(cfg_.seed, "hake/challenger") {
  if (cfg_.n_s < 1 || cfg_.n_t < 1) throw ConfigError("n_s and n_t must be positive");
  if (!world_) world_ = std::make_shared<World>(cfg_.suite, cfg_.n_p, cfg_.seed);
  if (world_->n_p() < cfg_.n_p) throw ConfigError("world has fewer parties than n_p");
  b_ = cfg_.b ? (*cfg_.b != 0 ? 1 : 0) : static_cast<int>(rng_.next_u64() & 1);
  qkd_seed_ = cfg_.qkd.seed ^ primitives::Drbg(cfg_.seed, "hake/qkd").next_u64();
  mb_ = std::make_shared<transport::Middlebox>(cfg_.network);
}

Environment::~Environment() = default;

void Environment::check_party(int i) const {
  if (i < 0 || i >= cfg_.n_p) throw QueryError("party index " + std::to_string(i) + " out of range");
}

bool Environment::has_session(int i, int s) const { return sessions_.count({i, s}) != 0; }

const SessionState& Environment::session(int i, int s) const {
  auto it = sessions_.find({i, s});
  if (it == sessions_.end()) throw QueryError("no session (" + std::to_string(i) + "," + std::to_string(s) + ")");
  return it->second;
}

SessionState& Environment::at(int i, int s) { return const_cast<SessionState&>(session(i, s)); }

const StageOutcome* Environment::view(int i, int s, std::uint32_t t) const {
  if (!has_session(i, s)) return nullptr;
  const SessionState& st = session(i, s);
  if (t == st.stid() && st.live) return &st.live->outcome();
  const StageRecord* r = st.stage(t);
  return r ? &r->outcome : nullptr;
}

bool Environment::mark(QueryKind k, int i, int s, std::uint32_t t) {
  return registers_.emplace(RegKey{k, i, s, t}, clock_).second;
}

bool Environment::issued_before(QueryKind k, int i, int s, std::uint32_t t, std::uint64_t deadline) const {
  auto it = registers_.find(RegKey{k, i, s, t});
  return it != registers_.end() && it->second < deadline;
}

void Environment::finish_if_done(SessionState& st) {
  if (!st.live || st.live->status() == Status::Active) return;
  StageRecord& rec = st.stages.back();
  rec.outcome = st.live->outcome();
  rec.finished_at = ++clock_;
  st.live.reset();
}

QueryOutcome Environment::query(const Query& q) {
  switch (q.kind) {
    case QueryKind::Create: {
      if (!q.role) throw QueryError("Create needs role=");
      auto s = create(q.i, q.j, *q.role, q.s >= 0 ? std::optional<int>(q.s) : std::nullopt);
      if (!s) return QueryOutcome::none();
      Bytes v;
      put_u32be(v, static_cast<std::uint32_t>(*s));
      return QueryOutcome::of(std::move(v));
    }
    case QueryKind::Send:
      return send(q.i, q.s, q.message);
    case QueryKind::Execute:
      if (!q.protocol) throw QueryError("Execute needs proto=");
      execute(q.i, q.s, q.j, q.r, *q.protocol);
      return QueryOutcome::of({});
    case QueryKind::Reveal:
      return reveal(q.i, q.s, q.t);
    case QueryKind::Test:
      return test(q.i, q.s, q.t);
    case QueryKind::CorruptQK:
      return corrupt_qk(q.i, q.s, q.t);
    case QueryKind::CorruptSK:
      return corrupt_sk(q.i);
    case QueryKind::CorruptCK:
      return corrupt_ck(q.i);
    case QueryKind::CompromiseQK:
    case QueryKind::CompromiseCK:
    case QueryKind::CompromiseSK:
    case QueryKind::CompromiseSS:
    case QueryKind::CompromiseKP:
      return compromise(q.kind, q.i, q.s, q.t);
    case QueryKind::RevealITS:
      return reveal_its(q.i, q.s, q.t);
    case QueryKind::Guess:
      ++clock_;
      if (q.d != 0 && q.d != 1) throw QueryError("Guess needs d=0 or d=1");
      guess_ = q.d;
      return QueryOutcome::of({});
  }
  return QueryOutcome::none();
}

std::optional<int> Environment::create(int i, int j, Role role, std::optional<int> s) {
  ++clock_;
  check_party(i);
  check_party(j);
  if (i == j) throw QueryError("a session needs a distinct peer");
  int idx = -1;
  if (s) {
    if (*s < 0 || *s >= cfg_.n_s) throw QueryError("session index " + std::to_string(*s) + " out of range");
    if (has_session(i, *s)) return std::nullopt;
    idx = *s;
  } else {
    for (int k = 0; k < cfg_.n_s && idx < 0; ++k)
      if (!has_session(i, k)) idx = k;
    if (idx < 0) return std::nullopt;
  }
  SessionState st;
  st.owner = i;
  st.index = idx;
  st.pid = j;
  st.role = role;
  std::string name = "P" + std::to_string(i) + "." + std::to_string(idx);
  st.party = std::make_unique<sessions::Party>(name, role, world_->identity(i), world_->trust_for(j),
                                               rng_.next_u64());
  sessions_.emplace(std::make_pair(i, idx), std::move(st));
  return idx;
}

void Environment::execute(int i, int s, int j, int r, ProtocolId p) {
  ++clock_;
  SessionState& x = at(i, s);
  SessionState& y = at(j, r);
  if (x.pid != j || y.pid != i || x.role == y.role)
    throw QueryError("Execute needs two sessions that name each other with opposite roles");
  if (x.live || y.live) throw QueryError("Execute on a session with an active stage");
  if (x.stid() != y.stid()) throw QueryError("Execute needs sessions at the same stage");
  auto t = x.stid() + 1;
  if (t > cfg_.n_t) throw QueryError("stage " + std::to_string(t) + " exceeds n_t");
  if (t == 1) sessions::validate_plan({p});

  SessionState& init = x.role == Role::Initiator ? x : y;
  SessionState& resp = x.role == Role::Initiator ? y : x;

  qkd::QkdConfig qc = cfg_.qkd;
  qc.seed = qkd_seed_;
  qkd::QkdPair pair = qkd::run_unauthenticated_qkd(qc, cfg_.qkd_adversary.get(), executions_++);
  sessions::StageOptions opts{cfg_.entity_protection, cfg_.authentication_disabled, cfg_.qkd.epsilon};

  const auto& suite = world_->suite();
  init.stages.push_back(StageRecord{t, p, {}, pair.initiator, 0});
  resp.stages.push_back(StageRecord{t, p, {}, pair.responder, 0});
  init.live = std::make_unique<StageEngine>(suite, *init.party, p, t, pair.initiator, opts);
  resp.live = std::make_unique<StageEngine>(suite, *resp.party, p, t, pair.responder, opts);

  mb_->set_stage(t);
  transport::MemoryChannel ch(mb_);
  auto& ia = ch.initiator();
  auto& ib = ch.responder();
  auto start = [](StageEngine& e, transport::Endpoint& ep) {
    try {
      for (const auto& m : e.start()) ep.send(m);
    } catch (const PoolExhausted&) {
      e.abort(sessions::RejectReason::PoolExhausted);
    }
  };
  start(*init.live, ia);
  start(*resp.live, ib);

  struct Side {
    StageEngine& e;
    transport::Endpoint& ep;
  };
  Side sides[] = {{*init.live, ia}, {*resp.live, ib}};
  int held_spins = 0;
  while (init.live->status() == Status::Active || resp.live->status() == Status::Active) {
    bool moved = false;
    for (auto& side : sides) {
      if (side.e.status() != Status::Active) continue;
      std::optional<WireMessage> m;
      try {
        m = side.ep.try_recv();
      } catch (const ChannelClosed&) {
        continue;
      }
      if (!m) continue;
      moved = true;
      for (const auto& out : side.e.on_message(*m)) side.ep.send(out);
    }
    if (moved) {
      held_spins = 0;
      continue;
    }
    if (ch.has_held() && ++held_spins < kMaxHeldSpins) continue;
    break;
  }
  finish_if_done(init);
  finish_if_done(resp);
}

QueryOutcome Environment::send(int i, int s, ByteView frame) {
  ++clock_;
  SessionState& st = at(i, s);
  if (!st.live || st.live->status() != Status::Active) return QueryOutcome::none();
  WireMessage m;
  try {
    m = WireMessage::decode(frame);
  } catch (const FramingError&) {
    return QueryOutcome::none();
  }
  Bytes replies = concat_frames(st.live->on_message(m));
  finish_if_done(st);
  return QueryOutcome::of(std::move(replies));
}

QueryOutcome Environment::reveal(int i, int s, std::uint32_t t) {
  ++clock_;
  check_party(i);
  const StageOutcome* o = view(i, s, t);
  if (!o || session(i, s).alpha(t) != Status::Accept) return QueryOutcome::none();
  mark(QueryKind::Reveal, i, s, t);
  learned_[{i, s, t}] = o->k.expose();
  return QueryOutcome::of(o->k.expose());
}

QueryOutcome Environment::test(int i, int s, std::uint32_t t) {
  ++clock_;
  check_party(i);
  if (tests_answered_.count({i, s, t})) return QueryOutcome::none();
  const StageOutcome* o = view(i, s, t);
  if (!o || session(i, s).alpha(t) != Status::Accept) return QueryOutcome::none();
  tests_answered_.insert({i, s, t});
  Bytes v = b_ == 1 ? o->k.expose() : rng_.bytes(o->k.size());
  if (!tested_) {
    tested_ = std::make_tuple(i, s, t);
    test_value_ = v;
  }
  return QueryOutcome::of(std::move(v));
}

QueryOutcome Environment::corrupt_qk(int i, int s, std::uint32_t t) {
  ++clock_;
  check_party(i);
  if (!mark(QueryKind::CorruptQK, i, -1, 0)) return QueryOutcome::none();
  const auto& id = world_->identity(i);
  const StageOutcome* o = s >= 0 ? view(i, s, t) : nullptr;
  if (!o) {
    Bytes v;
    if (id.sig) append(v, id.sig->keys.sk.view());
    if (id.kem) append(v, id.kem->keys.sk.view());
    return QueryOutcome::of(std::move(v));
  }
  if (session(i, s).alpha(t) == Status::Active) return QueryOutcome::none();
  switch (o->protocol) {
    case ProtocolId::Sigma:
      return id.sig ? QueryOutcome::of(id.sig->keys.sk.expose()) : QueryOutcome::none();
    case ProtocolId::Kem:
      return id.kem ? QueryOutcome::of(id.kem->keys.sk.expose()) : QueryOutcome::none();
    case ProtocolId::Mac:
      break;
  }
  return QueryOutcome::none();
}

QueryOutcome Environment::corrupt_sk(int i) {
  ++clock_;
  check_party(i);
  mark(QueryKind::CorruptSK, i, -1, 0);
  return QueryOutcome::none();
}

QueryOutcome Environment::corrupt_ck(int i) {
  ++clock_;
  check_party(i);
  mark(QueryKind::CorruptCK, i, -1, 0);
  return QueryOutcome::none();
}

QueryOutcome Environment::compromise(QueryKind kind, int i, int s, std::uint32_t t) {
  ++clock_;
  check_party(i);
  if (!has_session(i, s)) throw QueryError("no session (" + std::to_string(i) + "," + std::to_string(s) + ")");
  if (!mark(kind, i, s, t)) return QueryOutcome::none();
  const StageOutcome* o = view(i, s, t);
  if (!o || session(i, s).alpha(t) == Status::Active) return QueryOutcome::none();
  const Secret* v = nullptr;
  switch (kind) {
    case QueryKind::CompromiseSK:
      if (o->protocol != ProtocolId::Mac) v = &o->esk;
      break;
    case QueryKind::CompromiseSS:
      v = &o->pss_out;
      break;
    case QueryKind::CompromiseKP:
      if (o->protocol == ProtocolId::Mac) v = &o->sskp;
      break;
    default:
      break;
  }
  if (!v || v->empty()) return QueryOutcome::none();
  return QueryOutcome::of(v->expose());
}

QueryOutcome Environment::reveal_its(int i, int s, std::uint32_t t) {
  ++clock_;
  check_party(i);
  const StageOutcome* o = view(i, s, t);
  if (!o) throw QueryError("RevealITS on a stage that never ran");
  const SessionState& st = session(i, s);
  if (st.alpha(t) == Status::Active) throw QueryError("RevealITS on an active stage");
  const StageRecord* rec = st.stage(t);
  if (o->status != Status::Accept || !(rec->qkd.failure_event || rec->qkd.intercepted)) return QueryOutcome::none();
  mark(QueryKind::Reveal, i, s, t);
  learned_[{i, s, t}] = o->k.expose();
  return QueryOutcome::of(o->k.expose());
}

bool Environment::matches(int i, int s, int j, int r, std::uint32_t t) const {
  if (!has_session(i, s) || !has_session(j, r)) return false;
  const SessionState& a = session(i, s);
  const SessionState& b = session(j, r);
  if (a.pid != j || b.pid != i || a.role == b.role) return false;
  const StageOutcome* x = view(i, s, t);
  const StageOutcome* y = view(j, r, t);
  if (!x || !y) return false;
  return x->m_r() == y->m_s() && x->m_s() == y->m_r();
}

bool Environment::prefix_matches(int i, int s, int j, int r, std::uint32_t t) const {
  if (!has_session(i, s) || !has_session(j, r)) return false;
  const SessionState& a = session(i, s);
  const SessionState& b = session(j, r);
  if (a.pid != j || b.pid != i || a.role == b.role) return false;
  const StageOutcome* x = view(i, s, t);
  const StageOutcome* y = view(j, r, t);
  if (!x || !y) return false;
  Bytes mr = x->m_r();
  Bytes ms = y->m_s();
  if (mr.size() < ms.size()) return false;
  return std::equal(ms.begin(), ms.end(), mr.begin());
}

std::optional<std::pair<int, int>> Environment::has_origin(int i, int s, std::uint32_t t) const {
  if (!has_session(i, s)) return std::nullopt;
  int j = session(i, s).pid;
  for (int r = 0; r < cfg_.n_s; ++r)
    if (prefix_matches(i, s, j, r, t)) return std::make_pair(j, r);
  return std::nullopt;
}

bool Environment::forbidden_set_issued(int i, int s, int j, int r, std::uint32_t t, std::uint64_t dl) const {
  if (issued_before(QueryKind::CorruptQK, i, -1, 0, dl) && issued_before(QueryKind::CorruptQK, j, -1, 0, dl))
    return true;
  if (r < 0) return false;
  auto both = [&](QueryKind k, std::uint32_t u) {
    return issued_before(k, i, s, u, dl) && issued_before(k, j, r, u, dl);
  };
  if (both(QueryKind::CompromiseKP, t)) return true;
  for (std::uint32_t tp = 1; tp <= t; ++tp) {
    if (!both(QueryKind::CompromiseSK, tp) && !both(QueryKind::CompromiseKP, tp)) continue;
    bool chain = true;
    for (std::uint32_t u = tp; u < t && chain; ++u)
      chain = both(QueryKind::CompromiseSS, u) && matches(i, s, j, r, u);
    if (chain) return true;
  }
  return false;
}

bool Environment::clean_hpt(int i, int s, std::uint32_t t) const {
  if (!has_session(i, s)) return false;
  const SessionState& st = session(i, s);
  const StageRecord* rec = st.stage(t);
  if (!rec || st.alpha(t) != Status::Accept) return false;

  if (issued_before(QueryKind::Reveal, i, s, t, kNever)) return false;
  for (const auto& [key, other] : sessions_)
    if (matches(i, s, key.first, key.second, t) && issued_before(QueryKind::Reveal, key.first, key.second, t, kNever))
      return false;

  int j = st.pid;
  if (auto origin = has_origin(i, s, t)) {
    const SessionState& o = session(origin->first, origin->second);
    const StageRecord* orec = o.stage(t);
    std::uint64_t dl = orec && o.alpha(t) == Status::Accept ? orec->finished_at : kNever;
    if (forbidden_set_issued(i, s, origin->first, origin->second, t, dl)) return false;
  } else {
    std::uint64_t dl = rec->finished_at;
    if (forbidden_set_issued(i, s, j, -1, t, dl)) return false;
    for (int r = 0; r < cfg_.n_s; ++r)
      if (has_session(j, r) && forbidden_set_issued(i, s, j, r, t, dl)) return false;
  }

  if (rec->protocol == ProtocolId::Mac) {
    const auto& k0 = rec->outcome.k0_id;
    if (!k0 || k0->stage == 0 || k0->stage >= t) return false;
    bool partnered = false;
    for (int r = 0; r < cfg_.n_s && !partnered; ++r) {
      if (!matches(i, s, j, r, k0->stage)) continue;
      const StageRecord* mine = st.stage(k0->stage);
      const StageRecord* theirs = session(j, r).stage(k0->stage);
      partnered = mine && theirs && mine->outcome.status == Status::Accept &&
                  theirs->outcome.status == Status::Accept && mine->outcome.k == theirs->outcome.k;
    }
    if (!partnered) return false;
  }
  return true;
}

std::optional<Bytes> Environment::known_key(int i, int s, std::uint32_t t) const {
  if (auto it = learned_.find({i, s, t}); it != learned_.end()) return it->second;
  for (const auto& [key, value] : learned_) {
    auto [j, r, u] = key;
    if (u == t && matches(i, s, j, r, t)) return value;
  }
  return std::nullopt;
}

ExperimentResult run_experiment(const EnvConfig& cfg, const transport::AdversaryScript& script,
                                std::shared_ptr<const World> world) {
  EnvConfig c = cfg;
  c.network.rules.insert(c.network.rules.end(), script.rules.begin(), script.rules.end());
  c.network.seed ^= script.seed;
  Environment env(std::move(c), std::move(world));

  std::vector<Query> queries;
  for (const auto& line : script.queries) queries.push_back(parse_query(line));
  bool creates = std::any_of(queries.begin(), queries.end(), [](const Query& q) { return q.kind == QueryKind::Create; });
  if (!creates) {
    env.create(0, 1, Role::Initiator, 0);
    env.create(1, 0, Role::Responder, 0);
    for (ProtocolId p : cfg.plan) {
      env.execute(0, 0, 1, 0, p);
      if (env.session(0, 0).alpha(env.session(0, 0).stid()) != Status::Accept) break;
    }
  }
  for (const auto& q : queries) env.query(q);
  if (!env.tested() && env.has_session(0, 0)) env.test(0, 0, env.session(0, 0).stid());

  ExperimentResult res;
  res.b = env.challenger_bit();
  res.test_bottom = !env.test_value().has_value();
  std::optional<Bytes> known;
  if (auto tgt = env.tested()) {
    auto [i, s, t] = *tgt;
    res.clean = !res.test_bottom && env.clean_hpt(i, s, t);
    known = env.known_key(i, s, t);
  }
  res.trivial_win = !res.test_bottom && known.has_value();
  if (env.guess()) {
    res.d = *env.guess();
  } else if (res.trivial_win) {
    res.d = *known == *env.test_value() ? 1 : 0;
  } else {
    primitives::Drbg coin(script.seed ^ cfg.seed, "hake/adversary-coin");
    res.d = static_cast<int>(coin.next_u64() & 1);
  }
  res.win = res.clean && res.d == res.b;
  return res;
}

}  // namespace qkdauth::hake
