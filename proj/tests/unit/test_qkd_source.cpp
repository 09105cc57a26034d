#include <cmath>

#include "doctest.h"
#include "qkdauth/errors.hpp"
#include "qkdauth/primitives.hpp"
#include "qkdauth/qkd_source.hpp"

using namespace qkdauth;
using namespace qkdauth::qkd;

TEST_SUITE("qkd_source") {

TEST_CASE("honest views agree") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    QkdConfig cfg;
    cfg.key_len = 64;
    cfg.seed = seed;
    auto p = run_unauthenticated_qkd(cfg);
    CHECK_FALSE(p.initiator.aborted);
    CHECK(p.initiator.k_qkd.size() == 64);
    CHECK(p.initiator.k_qkd == p.responder.k_qkd);
    CHECK(p.initiator.m_qkd == p.responder.m_qkd);
    CHECK_FALSE(p.initiator.intercepted);
  }
}

TEST_CASE("same seed and round reproduce; rounds differ") {
  QkdConfig cfg;
  cfg.seed = 42;
  auto a = run_unauthenticated_qkd(cfg, nullptr, 3);
  auto b = run_unauthenticated_qkd(cfg, nullptr, 3);
  auto c = run_unauthenticated_qkd(cfg, nullptr, 4);
  CHECK(a.initiator.k_qkd == b.initiator.k_qkd);
  CHECK(a.initiator.m_qkd == b.initiator.m_qkd);
  CHECK_FALSE(a.initiator.k_qkd == c.initiator.k_qkd);
}

TEST_CASE("qber above threshold aborts both views") {
  QkdConfig cfg;
  cfg.mode = Mode::Tampered;
  cfg.qber = 0.25;
  cfg.abort_threshold = 0.11;
  auto p = run_unauthenticated_qkd(cfg);
  CHECK(p.initiator.aborted);
  CHECK(p.responder.aborted);
  CHECK(p.initiator.k_qkd.empty());
  CHECK(p.initiator.m_qkd.empty());
}

TEST_CASE("eavesdropper sees the transcript without changing the views") {
  QkdConfig cfg;
  cfg.mode = Mode::Eavesdropped;
  cfg.seed = 5;
  SplittingAdversary eve(1);
  auto p = run_unauthenticated_qkd(cfg, &eve);
  REQUIRE(eve.observed().size() == 1);
  CHECK(eve.observed()[0] == p.initiator.m_qkd);
  CHECK(p.initiator.k_qkd == p.responder.k_qkd);
}

TEST_CASE("splitting person-in-the-middle") {
  QkdConfig cfg;
  cfg.mode = Mode::Tampered;
  cfg.seed = 6;
  SplittingAdversary mallory(9);
  auto p = run_unauthenticated_qkd(cfg, &mallory);
  CHECK_FALSE(p.initiator.k_qkd == p.responder.k_qkd);
  CHECK(p.initiator.k_qkd == mallory.key_with_initiator());
  CHECK(p.responder.k_qkd == mallory.key_with_responder());
  CHECK(p.initiator.k_qkd.size() == cfg.key_len);
  CHECK(p.initiator.intercepted);
  CHECK(p.responder.intercepted);
}

TEST_CASE("partition slices left to right") {
  Bytes raw(96);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(i);
  Secret k(raw);

  auto exact = partition(Secret(Bytes(raw.begin(), raw.begin() + 64)), {{"ss_qkd", 64}});
  CHECK(exact.remainder.empty());

  auto p = partition(k, {{"ss_qkd", 64}});
  CHECK(p.remainder.size() == 32);
  CHECK(p.remainder.expose() == Bytes(raw.begin() + 64, raw.end()));
  CHECK(p.segment("ss_qkd").expose() == Bytes(raw.begin(), raw.begin() + 64));

  CHECK_THROWS_AS(partition(k, {{"a", 64}, {"b", 64}}), InsufficientKeyMaterial);
  CHECK_THROWS_AS(partition(k, {{"a", 8}, {"a", 8}}), DomainError);
}

TEST_CASE("partition round trip over random requests") {
  Bytes raw(256);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(i * 7 + 3);
  Secret k(raw);
  primitives::Drbg rng(3, "partition");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<std::string, std::size_t>> req;
    std::size_t left = raw.size();
    int n = static_cast<int>(rng.next_u64() % 5);
    for (int i = 0; i < n && left; ++i) {
      std::size_t len = rng.next_u64() % (left + 1);
      req.emplace_back("seg" + std::to_string(i), len);
      left -= len;
    }
    auto p = partition(k, req);
    Bytes joined;
    for (const auto& [_, s] : p.segments) append(joined, s.view());
    append(joined, p.remainder.view());
    CHECK(joined == raw);
  }
}

TEST_CASE("epsilon composition") {
  auto z = compose_epsilon({0.0});
  CHECK(z.exact == 0.0);
  CHECK(z.upper == 0.0);
  auto one = compose_epsilon({0.25});
  CHECK(one.exact == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(one.upper == 0.25);
  auto two = compose_epsilon({1e-10, 1e-10});
  CHECK(std::abs(two.exact - (2e-10 - 1e-20)) < 1e-24);
  CHECK(two.upper == 2e-10);
  CHECK_THROWS_AS(compose_epsilon({1.5}), DomainError);

  primitives::Drbg rng(4, "eps");
  for (int i = 0; i < 500; ++i) {
    std::vector<double> e;
    for (int j = 0; j < 4; ++j) e.push_back(rng.uniform() * 0.3);
    auto base = compose_epsilon(e);
    CHECK(base.exact <= base.upper);
    auto bumped = e;
    bumped[static_cast<std::size_t>(i % 4)] += 0.01;
    auto more = compose_epsilon(bumped);
    CHECK(more.exact >= base.exact);
    CHECK(more.upper >= base.upper);
  }
}

TEST_CASE("probability the keys are not ITS") {
  CHECK(prob_not_its(0, 0.3) == doctest::Approx(0.3));
  CHECK(prob_not_its(1, 0.42) == 1.0);
  CHECK(std::abs(prob_not_its(1e-6, 1e-9) - 1.000999999e-6) < 1e-15);
  CHECK(prob_not_its(1e-3, 2e-3) <= 3e-3);
  CHECK_THROWS_AS(prob_not_its(-0.1, 0), DomainError);
}

TEST_CASE("config parsing") {
  auto cfg = parse_qkd_config("qkd.mode=tampered\nqkd.qber=0.05\nqkd.key_len=128\nqkd.epsilon=0.1\nqkd.seed=7\n");
  CHECK(cfg.mode == Mode::Tampered);
  CHECK(cfg.key_len == 128);
  CHECK(cfg.seed == 7);
  CHECK_THROWS_AS(parse_qkd_config("qkd.key_len=16\n"), DomainError);
  CHECK_THROWS_AS(parse_qkd_config("qkd.colour=blue\n"), ConfigError);
}

}  // TEST_SUITE
