// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "harness.hpp"
#include "qkdauth/budget.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/hake.hpp"
#include "qkdauth/sessions.hpp"

using namespace qkdauth;
using sessions::ProtocolId;
using sessions::Role;
using sessions::Status;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Verdict honest_interop() {
  const std::vector<std::vector<ProtocolId>> plans{
      {ProtocolId::Sigma}, {ProtocolId::Kem}, {ProtocolId::Kem, ProtocolId::Mac}};
  int ok = 0, total = 0;
  auto start = std::chrono::steady_clock::now();
  for (const auto& plan : plans) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      ++total;
      auto report = sessions::run_multistage(harness::config(plan, 1000 + seed));
      bool good = report.all_accept && report.stages.size() == plan.size();
      for (const auto& s : report.stages)
        good = good && s.alpha_a == Status::Accept && s.alpha_b == Status::Accept && s.agree &&
               s.sec_state_fp_a == s.sec_state_fp_b && s.pool_fp_a == s.pool_fp_b && s.pool_a == s.pool_b;
      ok += good;
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok == total && secs < 5.0,
          std::to_string(ok) + "/" + std::to_string(total) + " runs agree in " + fmt("%.2f", secs) + " s"};
}

Verdict tamper_totality() {
  int cases = 0, ok = 0;
  std::string first_bad;
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    auto lens = harness::payload_lengths(p, 77);
    for (int i = 1; i <= harness::message_count(p); ++i) {
      std::uint64_t bits = lens.at(static_cast<std::size_t>(i)) * 8;
      const std::uint64_t per_message = std::min<std::uint64_t>(60, bits);
      for (std::uint64_t k = 0; k < per_message; ++k) {
        std::uint64_t bit = per_message == 1 ? 0 : k * (bits - 1) / (per_message - 1);
        auto r = harness::run_flip({p, i, bit}, 500 + static_cast<std::uint64_t>(cases));
        auto [role, step] = harness::expected_reject(p, i);
        Status at = role == Role::Initiator ? r.summary.alpha_a : r.summary.alpha_b;
        bool good = at == Status::Reject && r.summary.step == step &&
                    r.summary.reason == sessions::reason_for_step(p, step);
        ++cases;
        ok += good;
        if (!good && first_bad.empty())
          first_bad = "; first mismatch " + std::string(keyschedule::to_string(p)) + " m" + std::to_string(i) + " bit " +
                      std::to_string(bit) + " step " + std::to_string(r.summary.step);
      }
    }
  }
  return {cases >= 1000 && ok == cases, std::to_string(ok) + "/" + std::to_string(cases) +
                                            " flips rejected at the expected step" + first_bad};
}

Verdict replay_resistance() {
  int ok = 0, total = 0;
  for (ProtocolId p : {ProtocolId::Sigma, ProtocolId::Kem, ProtocolId::Mac}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      ++total;
      auto s = harness::run_replay(p, 2000 + seed);
      Status attacked = p == ProtocolId::Mac ? s.alpha_b : s.alpha_a;
      ok += attacked == Status::Reject && (s.alpha_a != Status::Accept || s.alpha_b != Status::Accept);
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " replayed flows rejected"};
}

Verdict budget_regression() {
  bool ok = budget::theorem1_total(budget::counts_for({ProtocolId::Kem})).grouped_string() ==
            "8[KEM + eps + 2dual + 22PRF + 5CPA + 5CTXT + 3MAC + 15H] + 4[eps + 4CPA]";
  std::string detail = ok ? "stage 1" : "stage 1 differs";
  for (int t : {1, 2, 3, 5}) {
    bool same = harness::computed_kem_then_mac(t) == harness::expected_kem_then_mac(t);
    ok = ok && same;
    detail += same ? ", t=" + std::to_string(t) : ", t=" + std::to_string(t) + " differs";
  }
  return {ok, detail + " coefficient-exact"};
}

Verdict cleanness_corpus() {
  auto world = std::make_shared<hake::World>(primitives::SuiteConfig{}, 2, 31);
  auto corpus = harness::cleanness_corpus();
  int ok = 0, total = 0, allowed = 0;
  std::string bad;
  for (const auto& c : corpus) {
    ++total;
    allowed += c.clean;
    bool got = harness::classify(c, 31, world);
    ok += got == c.clean;
    if (got != c.clean) bad += " " + c.name;
  }
  // Cases a script cannot express: forged flows with no origin session, and a
  // MAC stage that found no pool material.
  auto one = harness::impersonate_responder(false, 32);
  ++total;
  ++allowed;
  ok += one.accepted && !one.has_origin && one.clean;
  auto both = harness::impersonate_responder(true, 33);
  ++total;
  ok += both.accepted && !both.has_origin && !both.clean;

  hake::EnvConfig cfg;
  cfg.seed = 34;
  cfg.qkd.key_len = sessions::kSsQkdLen;
  hake::Environment env(cfg, world);
  env.create(0, 1, Role::Initiator, 0);
  env.create(1, 0, Role::Responder, 0);
  env.execute(0, 0, 1, 0, ProtocolId::Kem);
  env.execute(0, 0, 1, 0, ProtocolId::Mac);
  ++total;
  ok += !env.clean_hpt(0, 0, 2);

  return {total >= 30 && allowed >= 10 && ok == total,
          std::to_string(ok) + "/" + std::to_string(total) + " scripts match hand labels (" + std::to_string(allowed) +
              " allowed)" + (bad.empty() ? "" : "; mismatched:" + bad)};
}

Verdict indistinguishability() {
  auto world = std::make_shared<hake::World>(primitives::SuiteConfig{}, 2, 41);
  const int n = 1000;
  int correct = 0, clean = 0;
  for (int k = 0; k < n; ++k) {
    hake::EnvConfig cfg;
    cfg.seed = 40000 + static_cast<std::uint64_t>(k);
    cfg.qkd.seed = cfg.seed * 3 + 1;
    auto r = hake::run_experiment(cfg, {}, world);
    correct += r.d == r.b;
    clean += r.clean && !r.trivial_win;
  }
  double rate = static_cast<double>(correct) / n;
  double sigma = std::sqrt(0.25 / n);

  auto script = transport::parse_script("query Reveal i=0 s=0 t=1\nquery Test i=0 s=0 t=1\n");
  int trivial = 0;
  const int m = 100;
  for (int k = 0; k < m; ++k) {
    hake::EnvConfig cfg;
    cfg.seed = 50000 + static_cast<std::uint64_t>(k);
    auto r = hake::run_experiment(cfg, script, world);
    trivial += r.trivial_win && !r.clean;
  }
  return {std::abs(rate - 0.5) <= 3 * sigma && clean == n && trivial == m,
          "passive guess rate " + fmt("%.3f", rate) + " (bound 0.5 +/- " + fmt("%.3f", 3 * sigma) + "), " +
              std::to_string(trivial) + "/" + std::to_string(m) + " Reveal+Test flagged trivial_win"};
}

Verdict reveal_its_calibration() {
  double zero = harness::reveal_its_rate(0.0, 10000, false, 60000);
  double tenth = harness::reveal_its_rate(0.1, 10000, false, 70000);
  double mitm = harness::reveal_its_rate(0.0, 100, true, 80000);
  return {zero == 0.0 && std::abs(tenth - 0.1) <= 0.01 && mitm == 1.0,
          "eps 0: " + fmt("%.4f", zero) + ", eps 0.1: " + fmt("%.4f", tenth) + ", MITM without auth: " +
              fmt("%.2f", mitm)};
}

Verdict forward_secrecy() {
  const std::vector<std::vector<ProtocolId>> plans{{ProtocolId::Kem, ProtocolId::Mac, ProtocolId::Mac},
                                                   {ProtocolId::Sigma, ProtocolId::Sigma},
                                                   {ProtocolId::Kem, ProtocolId::Kem, ProtocolId::Mac}};
  std::size_t recovered = 0, target = 0, decryptions = 0;
  int intact = 0;
  const int n = 100;
  for (int k = 0; k < n; ++k) {
    auto r = hake::forward_secrecy_trial(harness::config(plans[static_cast<std::size_t>(k) % plans.size()],
                                                         90000 + static_cast<std::uint64_t>(k)));
    recovered += r.recovered_octets;
    target += r.target_octets;
    decryptions += r.decryptions;
    intact += r.pool_intact;
  }
  return {recovered == 0 && intact == n && target > 0,
          std::to_string(recovered) + " of " + std::to_string(target) + " earlier pooled octets recovered, " +
              std::to_string(decryptions) + " frames opened, pools intact " + std::to_string(intact) + "/" +
              std::to_string(n)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"honest_interop", honest_interop},
      {"tamper_abort_totality", tamper_totality},
      {"replay_resistance", replay_resistance},
      {"budget_regression", budget_regression},
      {"cleanness_corpus", cleanness_corpus},
      {"indistinguishability_sanity", indistinguishability},
      {"reveal_its_calibration", reveal_its_calibration},
      {"forward_secrecy", forward_secrecy},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
