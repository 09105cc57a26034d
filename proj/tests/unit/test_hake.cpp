#include <cmath>

#include "doctest.h"
#include "harness.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/hake.hpp"
#include "qkdauth/transport.hpp"

using namespace qkdauth;
using namespace qkdauth::hake;

namespace {

EnvConfig env_config(std::uint64_t seed, const std::string& network = "") {
  EnvConfig cfg;
  cfg.seed = seed;
  cfg.qkd.seed = seed * 13 + 5;
  cfg.network = transport::parse_script(network);
  return cfg;
}

void pair_up(Environment& env) {
  env.create(0, 1, Role::Initiator, 0);
  env.create(1, 0, Role::Responder, 0);
}

QueryOutcome run(Environment& env, const std::string& line) {
  auto script = transport::parse_script(line + "\n");
  return env.query(parse_query(script.queries.at(0)));
}

}  // namespace

TEST_SUITE("hake") {

TEST_CASE("query parsing") {
  auto s = transport::parse_script("query Create i=0 j=1 role=init s=0\nquery Execute i=0 s=0 j=1 r=0 proto=mac\n");
  Query c = parse_query(s.queries[0]);
  CHECK(c.kind == QueryKind::Create);
  CHECK(c.role == Role::Initiator);
  Query e = parse_query(s.queries[1]);
  CHECK(e.protocol == ProtocolId::Mac);
  CHECK_THROWS_AS(parse_query(transport::parse_script("query Peek i=0\n").queries[0]), QueryError);
  CHECK_THROWS_AS(parse_query(transport::parse_script("query Reveal i=x\n").queries[0]), QueryError);
}

TEST_CASE("sessions are created once per slot") {
  Environment env(env_config(1));
  CHECK(env.create(0, 1, Role::Initiator, 0) == 0);
  CHECK_FALSE(env.create(0, 1, Role::Initiator, 0));
  CHECK_FALSE(env.create(0, 1, Role::Initiator));
  CHECK_THROWS_AS(env.create(0, 0, Role::Initiator), QueryError);
  CHECK_THROWS_AS(env.create(0, 1, Role::Initiator, 3), QueryError);
}

TEST_CASE("reveal and test answer bottom before accept") {
  Environment env(env_config(2, "on any do drop\n"));
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  CHECK(env.session(0, 0).alpha(1) == Status::Active);
  CHECK(env.reveal(0, 0, 1).bottom);
  CHECK(env.test(0, 0, 1).bottom);
  CHECK_THROWS_AS(env.reveal_its(0, 0, 1), QueryError);
  CHECK_THROWS_AS(env.reveal_its(0, 0, 2), QueryError);
  CHECK_FALSE(env.clean_hpt(0, 0, 1));
}

TEST_CASE("corruption queries") {
  Environment env(env_config(3));
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  CHECK(env.corrupt_ck(0).bottom);
  CHECK(env.corrupt_sk(0).bottom);
  auto qk = env.corrupt_qk(0, -1, 0);
  CHECK_FALSE(qk.bottom);
  const auto& id = env.world().identity(0);
  CHECK(qk.value.size() == id.sig->keys.sk.size() + id.kem->keys.sk.size());
  CHECK(env.corrupt_qk(0, 0, 1).bottom);

  auto kem_sk = env.corrupt_qk(1, 0, 1);
  CHECK(kem_sk.value == env.world().identity(1).kem->keys.sk.expose());

  auto esk = env.compromise(QueryKind::CompromiseSK, 0, 0, 1);
  CHECK(esk.value == env.session(0, 0).stage(1)->outcome.esk.expose());
  CHECK(env.compromise(QueryKind::CompromiseSK, 0, 0, 1).bottom);
  CHECK(env.compromise(QueryKind::CompromiseKP, 0, 0, 1).bottom);
  auto ss = env.compromise(QueryKind::CompromiseSS, 1, 0, 1);
  CHECK(ss.value == env.session(1, 0).stage(1)->outcome.pss_out.expose());
}

TEST_CASE("CompromiseKP on a MAC stage returns the retired K0") {
  Environment env(env_config(4));
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  env.execute(0, 0, 1, 0, ProtocolId::Mac);
  const auto& o = env.session(0, 0).stage(2)->outcome;
  REQUIRE(o.status == Status::Accept);
  auto kp = env.compromise(QueryKind::CompromiseKP, 0, 0, 2);
  CHECK(kp.value == o.sskp.expose());
  CHECK(kp.value.size() == sessions::kK0Len);
  CHECK(env.compromise(QueryKind::CompromiseSK, 0, 0, 2).bottom);
  CHECK(env.corrupt_qk(0, 0, 2).bottom);
}

TEST_CASE("honest stages match in both directions") {
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem}) {
    Environment env(env_config(5));
    pair_up(env);
    env.execute(0, 0, 1, 0, p);
    env.execute(0, 0, 1, 0, ProtocolId::Mac);
    for (std::uint32_t t : {1u, 2u}) {
      CHECK(env.matches(0, 0, 1, 0, t));
      CHECK(env.matches(1, 0, 0, 0, t));
      CHECK(env.prefix_matches(0, 0, 1, 0, t));
      CHECK(env.has_origin(1, 0, t) == std::make_pair(0, 0));
      CHECK(env.clean_hpt(0, 0, t));
    }
    CHECK_FALSE(env.matches(0, 0, 1, 0, 3));
  }
}

TEST_CASE("dropping the last message leaves prefix matching one way") {
  Environment env(env_config(6, "on stage:1 type:8 do drop\n"));
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Sigma);
  CHECK(env.session(0, 0).alpha(1) == Status::Accept);
  CHECK(env.session(1, 0).alpha(1) == Status::Active);
  CHECK(env.prefix_matches(0, 0, 1, 0, 1));
  CHECK_FALSE(env.prefix_matches(1, 0, 0, 0, 1));
  CHECK_FALSE(env.matches(0, 0, 1, 0, 1));
}

TEST_CASE("a flipped bit breaks matching") {
  for (int type = 1; type <= 8; ++type) {
    Environment env(env_config(7, "on stage:1 type:" + std::to_string(type) + " do flip_bit:50\n"));
    pair_up(env);
    env.execute(0, 0, 1, 0, ProtocolId::Kem);
    CHECK_FALSE(env.matches(0, 0, 1, 0, 1));
    CHECK_FALSE(env.matches(1, 0, 0, 0, 1));
  }
}

TEST_CASE("matching implies prefix matching implies origin") {
  primitives::Drbg rng(8, "tamper-positions");
  for (int n = 0; n < 40; ++n) {
    ProtocolId p = n % 2 ? ProtocolId::Sigma : ProtocolId::Kem;
    std::string rule = n % 5 == 0 ? "" : "on stage:1 type:" + std::to_string(1 + rng.next_u64() % 8) +
                                             " do flip_bit:" + std::to_string(rng.next_u64() % 256) + "\n";
    Environment env(env_config(100 + static_cast<std::uint64_t>(n), rule));
    pair_up(env);
    env.execute(0, 0, 1, 0, p);
    for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 0}}) {
      if (env.matches(i, 0, j, 0, 1)) CHECK(env.prefix_matches(i, 0, j, 0, 1));
      if (env.prefix_matches(i, 0, j, 0, 1)) CHECK(env.has_origin(i, 0, 1).has_value());
    }
    if (rule.empty()) CHECK(env.matches(0, 0, 1, 0, 1));
  }
}

TEST_CASE("cleanness corpus agrees with hand labels") {
  auto corpus = harness::cleanness_corpus();
  CHECK(corpus.size() >= 30);
  int allowed = 0;
  for (const auto& c : corpus) {
    INFO(c.name);
    CHECK(harness::classify(c, 9) == c.clean);
    allowed += c.clean;
  }
  CHECK(allowed >= 10);
}

TEST_CASE("impersonation without an origin session") {
  auto one = harness::impersonate_responder(false, 10);
  CHECK(one.accepted);
  CHECK_FALSE(one.has_origin);
  CHECK(one.clean);
  auto both = harness::impersonate_responder(true, 10);
  CHECK(both.accepted);
  CHECK_FALSE(both.has_origin);
  CHECK_FALSE(both.clean);
}

TEST_CASE("MAC stage without pool material is not clean") {
  EnvConfig cfg = env_config(11);
  cfg.qkd.key_len = sessions::kSsQkdLen;
  Environment env(cfg);
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  env.execute(0, 0, 1, 0, ProtocolId::Mac);
  CHECK(env.session(0, 0).alpha(2) == Status::Reject);
  CHECK(env.test(0, 0, 2).bottom);
  CHECK_FALSE(env.clean_hpt(0, 0, 2));
}

TEST_CASE("passive adversary guesses at chance") {
  auto world = std::make_shared<World>(primitives::SuiteConfig{}, 2, 12);
  const int n = 300;
  int wins = 0;
  for (int k = 0; k < n; ++k) {
    auto r = run_experiment(env_config(1000 + static_cast<std::uint64_t>(k)), {}, world);
    CHECK(r.clean);
    CHECK_FALSE(r.trivial_win);
    wins += r.win;
  }
  double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(static_cast<double>(wins) / n - 0.5) <= 3 * sigma);
}

TEST_CASE("Reveal then Test is a trivial win and not clean") {
  auto script = transport::parse_script("query Reveal i=0 s=0 t=1\nquery Test i=0 s=0 t=1\n");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = run_experiment(env_config(seed), script);
    CHECK(r.trivial_win);
    CHECK_FALSE(r.clean);
    CHECK_FALSE(r.win);
    CHECK(r.d == r.b);
  }
}

TEST_CASE("Test answers with the real key length for either bit") {
  for (int b : {0, 1}) {
    EnvConfig cfg = env_config(13);
    cfg.b = b;
    Environment env(cfg);
    pair_up(env);
    env.execute(0, 0, 1, 0, ProtocolId::Kem);
    auto v = env.test(0, 0, 1);
    const auto& k = env.session(0, 0).stage(1)->outcome.k;
    CHECK(v.value.size() == k.size());
    CHECK((v.value == k.expose()) == (b == 1));
    CHECK(env.test(0, 0, 1).bottom);
  }
}

TEST_CASE("tampering with Pi_Sigma without corruption leaves nothing to test") {
  auto r = run_experiment([] {
    EnvConfig cfg = env_config(14, "on stage:1 type:4 do flip_bit:12\n");
    cfg.plan = {ProtocolId::Sigma};
    return cfg;
  }(), {});
  CHECK(r.test_bottom);
  CHECK_FALSE(r.clean);
}

TEST_CASE("RevealITS") {
  CHECK(harness::reveal_its_rate(0.0, 20, false, 15) == 0.0);
  CHECK(harness::reveal_its_rate(0.0, 10, true, 16) == 1.0);
  CHECK(harness::reveal_its_rate(1.0, 5, false, 17) == 1.0);

  EnvConfig cfg = env_config(18);
  cfg.qkd.epsilon = 1.0;
  Environment env(cfg);
  pair_up(env);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  auto k = env.reveal_its(0, 0, 1);
  CHECK(k.value == env.session(0, 0).stage(1)->outcome.k.expose());
  CHECK(env.known_key(1, 0, 1) == k.value);
}

TEST_CASE("query script drives the environment") {
  Environment env(env_config(19));
  CHECK(run(env, "query Create i=0 j=1 role=init").value == Bytes{0, 0, 0, 0});
  run(env, "query Create i=1 j=0 role=resp");
  run(env, "query Execute i=0 s=0 j=1 r=0 proto=sigma");
  CHECK(env.session(1, 0).alpha(1) == Status::Accept);
  CHECK_FALSE(run(env, "query Reveal i=1 s=0 t=1").bottom);
  CHECK_THROWS_AS(run(env, "query Guess d=4"), QueryError);
  CHECK_THROWS_AS(run(env, "query Execute i=0 s=0 j=1 r=0"), QueryError);
}

TEST_CASE("forward secrecy harness recovers nothing pooled earlier") {
  for (auto plan : {std::vector{ProtocolId::Kem, ProtocolId::Kem}, std::vector{ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac},
                    std::vector{ProtocolId::Sigma, ProtocolId::Sigma}}) {
    auto r = forward_secrecy_trial(harness::config(plan, 20));
    CHECK(r.recovered_octets == 0);
    CHECK(r.target_octets > 0);
    CHECK(r.pool_intact);
    CHECK(r.frames_examined > 0);
    if (plan.back() != ProtocolId::Mac) CHECK(r.decryptions > 0);
  }
}

}  // TEST_SUITE
