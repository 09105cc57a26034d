#include <cmath>

#include "doctest.h"
#include "harness.hpp"
#include "qkdauth/budget.hpp"
#include "qkdauth/errors.hpp"

using namespace qkdauth;
using namespace qkdauth::budget;
using keyschedule::ProtocolId;

namespace {

StagePlanCounts counts(std::uint64_t n_p, std::uint64_t n_s, std::uint64_t sigma, std::uint64_t kem,
                       std::uint64_t mac) {
  StagePlanCounts c;
  c.n_p = n_p;
  c.n_s = n_s;
  c.n_t_sigma = sigma;
  c.n_t_kem = kem;
  c.n_t_mac = mac;
  return c;
}

AdvantageParams uniform(double adv, double eps) {
  AdvantageParams p;
  p.adv_sig_eufcma = p.adv_kem_indcca = p.adv_mac_eufcma = p.adv_prf = p.adv_prf_dual = p.adv_hash =
      p.adv_aead_indcpa = p.adv_aead_intctxt = adv;
  p.eps_qkd = eps;
  return p;
}

AdvantageParams random_params(primitives::Drbg& rng) {
  auto u = [&] { return static_cast<double>(rng.next_u64() % 1000000) * 1e-12; };
  AdvantageParams p;
  p.adv_sig_eufcma = u();
  p.adv_kem_indcca = u();
  p.adv_mac_eufcma = u();
  p.adv_prf = u();
  p.adv_prf_dual = u();
  p.adv_hash = u();
  p.adv_aead_indcpa = u();
  p.adv_aead_intctxt = u();
  p.eps_qkd = u();
  return p;
}

// Case-1 signature bound written out term by term in floating point.
double case1_sigma_oracle(double np, double ns, double nt, const AdvantageParams& p) {
  double first = np * np * ns * nt * (p.adv_sig_eufcma + 6 * p.adv_hash);
  double inner = 5 * p.adv_prf + p.adv_aead_indcpa + p.adv_aead_intctxt + p.adv_mac_eufcma + 6 * p.adv_hash;
  double second = np * np * ns * ns * nt * nt * (p.eps_qkd + p.adv_prf_dual + (1 + nt) * inner);
  return first + second;
}

}  // namespace

TEST_SUITE("budget") {

TEST_CASE("case 1 signature bound coefficients") {
  auto e = bound_case1_sigma(counts(2, 1, 1, 0, 0));
  CHECK(e.to_string() == "4[SIG + 6H] + 4[eps + dual + 10PRF + 2CPA + 2CTXT + 2MAC + 12H]");
  CHECK(e.coefficient(Sym::Sig) == 4);
  CHECK(e.coefficient(Sym::Hash) == 24 + 48);
  CHECK(e.coefficient(Sym::Prf) == 40);
  CHECK(bound_case1_sigma(counts(2, 1, 0, 1, 1)).blocks().empty());
  CHECK(e.evaluate(AdvantageParams{}) == 0.0);
}

TEST_CASE("case 1 signature bound numeric spot value") {
  auto p = uniform(1e-6, 1e-9);
  double v = bound_case1_sigma(counts(2, 1, 1, 0, 0)).evaluate(p);
  CHECK(v == doctest::Approx(case1_sigma_oracle(2, 1, 1, p)).epsilon(1e-12));
  CHECK(v == doctest::Approx(1.44004e-4).epsilon(1e-12));

  primitives::Drbg rng(21, "oracle");
  for (int i = 0; i < 200; ++i) {
    auto q = random_params(rng);
    double np = 1 + static_cast<double>(rng.next_u64() % 5);
    double ns = 1 + static_cast<double>(rng.next_u64() % 4);
    double nt = static_cast<double>(rng.next_u64() % 6);
    auto c = counts(static_cast<std::uint64_t>(np), static_cast<std::uint64_t>(ns), static_cast<std::uint64_t>(nt), 0, 0);
    double want = case1_sigma_oracle(np, ns, nt, q);
    CHECK(bound_case1_sigma(c).evaluate(q) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("case 1 MAC bound with a zero recursive term") {
  auto e = bound_case1_mac(counts(2, 1, 0, 0, 1));
  CHECK(e.to_string() ==
        "4[dual + 3PRF + CPA + CTXT + MAC + R] + 4[dual + 4PRF + CPA + CTXT + MAC + R] + 4[5PRF + CPA + CTXT + MAC]");
  CHECK_THROWS_AS(e.evaluate(uniform(1e-6, 0)), MissingDependency);
  auto p = uniform(1e-6, 0);
  CHECK(e.evaluate(p, 0.0) == doctest::Approx(4 * 7e-6 + 4 * 8e-6 + 4 * 8e-6).epsilon(1e-12));
  CHECK(e.evaluate(p, 1e-3) - e.evaluate(p, 0.0) == doctest::Approx(8e-3).epsilon(1e-9));
}

TEST_CASE("case 2 equals case 1") {
  primitives::Drbg rng(22, "case2");
  for (int i = 0; i < 100; ++i) {
    auto c = counts(1 + rng.next_u64() % 4, 1 + rng.next_u64() % 3, rng.next_u64() % 5, rng.next_u64() % 5,
                    rng.next_u64() % 5);
    CHECK(bound_case2_sigma(c).flatten() == bound_case1_sigma(c).flatten());
    CHECK(bound_case2_kem(c).flatten() == bound_case1_kem(c).flatten());
    CHECK(bound_case2_mac(c).flatten() == bound_case1_mac(c).flatten());
  }
}

TEST_CASE("case 3 without KEM stages") {
  auto e = bound_case3(counts(3, 2, 2, 0, 3));
  auto f = e.flatten();
  CHECK(f.size() == 2);
  CHECK(f[Sym::Cpa] == 36 * 5 * 2);
  CHECK(f[Sym::Eps] == 36 * 5);
  auto k = bound_case3(counts(2, 1, 0, 1, 0)).flatten();
  CHECK(k[Sym::Cpa] == 16);
  CHECK(k[Sym::Eps] == 4);
}

TEST_CASE("stage-1 KEM bound") {
  auto e = theorem1_total(counts_for({ProtocolId::Kem}));
  CHECK(e.grouped_string() == "8[KEM + eps + 2dual + 22PRF + 5CPA + 5CTXT + 3MAC + 15H] + 4[eps + 4CPA]");
  CHECK(e.flatten() == harness::expected_kem_then_mac(1));
  auto bare = theorem1_total(counts_for({ProtocolId::Kem}), Composition::StageWise, Options{true});
  CHECK(bare.coefficient(Sym::Prf) == 48);
  CHECK(bare.coefficient(Sym::Kem) == 8);
  CHECK(e.evaluate(AdvantageParams{}) == 0.0);
}

TEST_CASE("KEM then MAC stages reproduce the expected blocks") {
  for (int t : {2, 3, 4, 5, 8}) {
    INFO("t = " << t);
    CHECK(harness::computed_kem_then_mac(t) == harness::expected_kem_then_mac(t));
  }
  auto c = counts_for({ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac});
  CHECK(theorem1_total(c).uses(Sym::R));
  CHECK_FALSE(theorem1_total(c, Composition::UnionOfCases).flatten() == theorem1_total(c).flatten());
}

TEST_CASE("bounds are monotone in parameters and counts") {
  primitives::Drbg rng(23, "monotone");
  for (int i = 0; i < 100; ++i) {
    auto p = random_params(rng);
    auto c = counts(1 + rng.next_u64() % 3, 1 + rng.next_u64() % 3, rng.next_u64() % 3, 1 + rng.next_u64() % 3,
                    rng.next_u64() % 3);
    double r = 1e-7;
    double v = theorem1_total(c).evaluate(p, r);
    for (int field = 0; field < 9; ++field) {
      AdvantageParams q = p;
      double* fields[] = {&q.adv_sig_eufcma, &q.adv_kem_indcca, &q.adv_mac_eufcma, &q.adv_prf, &q.adv_prf_dual,
                          &q.adv_hash, &q.adv_aead_indcpa, &q.adv_aead_intctxt, &q.eps_qkd};
      *fields[field] += 1e-8;
      CHECK(theorem1_total(c).evaluate(q, r) >= v);
    }
    CHECK(theorem1_total(c).evaluate(p, 2 * r) >= v);
    for (int which = 0; which < 5; ++which) {
      auto bigger = c;
      std::uint64_t* n[] = {&bigger.n_p, &bigger.n_s, &bigger.n_t_sigma, &bigger.n_t_kem, &bigger.n_t_mac};
      ++*n[which];
      CHECK(theorem1_total(bigger).evaluate(p, r) >= v);
    }
  }
}

TEST_CASE("symbolic and numeric evaluation agree") {
  primitives::Drbg rng(24, "agree");
  for (int i = 0; i < 100; ++i) {
    auto p = random_params(rng);
    auto c = counts(2, 1 + rng.next_u64() % 2, rng.next_u64() % 3, 1, rng.next_u64() % 4);
    auto e = theorem1_total(c);
    double r = 3e-7;
    double by_hand = 0;
    for (const auto& [s, k] : e.flatten())
      by_hand += static_cast<double>(k) * (s == Sym::R ? r : value_of(s, p));
    CHECK(e.evaluate(p, r) == doctest::Approx(by_hand).epsilon(1e-12));
  }
}

TEST_CASE("per-stage bounds resolve the recursive term") {
  auto p = uniform(1e-9, 1e-12);
  auto stages = plan_bounds({ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac}, p);
  REQUIRE(stages.size() == 3);
  CHECK(stages[0].r == 0.0);
  CHECK(stages[1].r == stages[0].value);
  CHECK(stages[2].value > stages[1].value);
  CHECK_THROWS_AS(plan_bounds({ProtocolId::Kem, ProtocolId::Mac}, p, {{2, 2}}), MissingDependency);
}

TEST_CASE("runtime condition and QKD bound") {
  using S = Seconds;
  CHECK(runtime_feasible(S(1), S(1), S(1), S(10)));
  CHECK_FALSE(runtime_feasible(S(4), S(4), S(2), S(10)));
  CHECK_THROWS_AS(runtime_feasible(S(-1), S(1), S(1), S(10)), DomainError);
  CHECK(qkd_security_bound(0, 0) == 0.0);
  CHECK(qkd_security_bound(1e-9, 1e-6) == doctest::Approx(1.001e-6).epsilon(1e-12));
  CHECK_THROWS_AS(qkd_security_bound(2, 0), DomainError);
  auto sym = qkd_security_bound(bound_case1_sigma(counts(2, 1, 1, 0, 0)));
  CHECK(sym.coefficient(Sym::Eps) == 5);
  CHECK(sym.uses(Sym::Sig));
}

TEST_CASE("params and plan files") {
  auto p = parse_params("[advantages]\nadv_prf = 1e-6\nadv_hash = \"2e-7\" # note\neps_qkd=1e-9\n");
  CHECK(p.adv_prf == 1e-6);
  CHECK(p.adv_hash == 2e-7);
  CHECK(p.eps_qkd == 1e-9);
  CHECK_THROWS_AS(parse_params("adv_nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_params("adv_prf = x\n"), ConfigError);
  CHECK_THROWS_AS(parse_params("adv_prf = 2\n"), DomainError);

  auto pf = parse_plan_file("plan = [\"kem\", \"mac\", \"mac\"]\nn_p = 3\nsource.3 = 2\n");
  CHECK(pf.plan == std::vector{ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac});
  CHECK(pf.n_p == 3);
  CHECK(pf.k0_source_stage.at(3) == 2);
  CHECK(parse_plan_file("plan = sigma,mac\n").plan.size() == 2);
  CHECK_THROWS_AS(parse_plan_file("n_p = 2\n"), PlanError);
  CHECK_THROWS_AS(parse_plan_file("plan = kem\nn_s = -1\n"), ConfigError);
}

}  // TEST_SUITE
