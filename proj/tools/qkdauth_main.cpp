#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "qkdauth/budget.hpp"
#include "qkdauth/errors.hpp"
#include "qkdauth/hake.hpp"
#include "qkdauth/sessions.hpp"

namespace {

using namespace qkdauth;

constexpr int kExitAccept = 0;
constexpr int kExitReject = 2;
constexpr int kExitUsage = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string plan;
  std::string suite_file;
  std::string qkd_file;
  std::string adversary_file;
  std::string transport = "memory";
  std::uint64_t seed = 0;
  std::string format = "text";
  bool no_auth = false;
  bool no_entity_protection = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t effective_seed(std::uint64_t flag) {
  if (const char* env = std::getenv("QKD_AUTH_SEED")) {
    char* end = nullptr;
    auto v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw UsageError("QKD_AUTH_SEED is not an unsigned integer");
    return v;
  }
  return flag;
}

std::string yes_no(bool b) { return b ? "1" : "0"; }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Protocol plan from `kem,mac` or from a plan file.
budget::PlanFile load_plan(const std::string& arg) {
  if (arg.empty()) throw UsageError("--plan is required");
  if (std::filesystem::is_regular_file(arg)) return budget::parse_plan_file(read_file(arg));
  budget::PlanFile p;
  p.plan = sessions::parse_plan(arg);
  return p;
}

sessions::MultistageConfig multistage_config(const Common& c) {
  sessions::MultistageConfig m;
  m.plan = load_plan(c.plan).plan;
  if (!c.suite_file.empty()) m.suite = primitives::parse_suite_config(read_file(c.suite_file));
  if (!c.qkd_file.empty()) m.qkd = qkd::parse_qkd_config(read_file(c.qkd_file));
  if (!c.adversary_file.empty()) {
    m.adversary = transport::parse_script(read_file(c.adversary_file));
    if (!m.adversary.queries.empty()) throw UsageError("query lines are only accepted by the experiment command");
  }
  m.transport = c.transport;
  m.seed = effective_seed(c.seed);
  m.qkd.seed ^= m.seed;
  m.authentication_disabled = c.no_auth;
  m.entity_protection = !c.no_entity_protection;
  // Certificates embed issue times; a logical clock keeps reports reproducible.
  m.clock = std::make_shared<primitives::ManualClock>();
  return m;
}

void print_kv(std::ostream& os, const std::string& k, const std::string& v) { os << k << "=" << v << "\n"; }

int cmd_handshake(const Common& c) {
  auto cfg = multistage_config(c);
  sessions::validate_plan(cfg.plan);
  auto report = sessions::run_multistage(cfg);
  std::ostream& os = std::cout;
  bool kv = c.format == "kv";

  const sessions::StageSummary* failed = nullptr;
  for (const auto& s : report.stages) {
    if (!failed && !(s.alpha_a == sessions::Status::Accept && s.alpha_b == sessions::Status::Accept)) failed = &s;
    std::string k0 = s.k0_id ? sessions::to_string(*s.k0_id) : "-";
    if (kv) {
      std::string p = "stage." + std::to_string(s.stage) + ".";
      print_kv(os, p + "protocol", std::string(keyschedule::to_string(s.protocol)));
      print_kv(os, p + "alpha_a", std::string(sessions::to_string(s.alpha_a)));
      print_kv(os, p + "alpha_b", std::string(sessions::to_string(s.alpha_b)));
      print_kv(os, p + "reason", std::string(sessions::to_string(s.reason)));
      print_kv(os, p + "detail", std::string(sessions::to_string(s.detail)));
      print_kv(os, p + "step", std::to_string(s.step));
      print_kv(os, p + "rejecting", s.rejecting.empty() ? "-" : s.rejecting);
      print_kv(os, p + "pool_a", std::to_string(s.pool_a));
      print_kv(os, p + "pool_b", std::to_string(s.pool_b));
      print_kv(os, p + "pool_fp_a", s.pool_fp_a);
      print_kv(os, p + "pool_fp_b", s.pool_fp_b);
      print_kv(os, p + "sec_state_fp_a", s.sec_state_fp_a);
      print_kv(os, p + "sec_state_fp_b", s.sec_state_fp_b);
      print_kv(os, p + "ss_rest_fp", s.ss_rest_fp.empty() ? "-" : s.ss_rest_fp);
      print_kv(os, p + "k0_id", k0);
      print_kv(os, p + "pool_epsilon", fmt_double(s.pool_epsilon));
      print_kv(os, p + "liveness_gap", yes_no(s.liveness_gap));
      print_kv(os, p + "agree", yes_no(s.agree));
      print_kv(os, p + "runtime_feasible", yes_no(s.runtime_feasible));
    } else {
      os << "stage " << s.stage << " " << keyschedule::to_string(s.protocol) << ": A=" << sessions::to_string(s.alpha_a)
         << " B=" << sessions::to_string(s.alpha_b);
      if (s.reason != sessions::RejectReason::None)
        os << " reason=" << sessions::to_string(s.reason) << " detail=" << sessions::to_string(s.detail)
           << " step=" << s.step << " rejecting=" << s.rejecting;
      os << "\n  pool A=" << s.pool_a << " B=" << s.pool_b << " fp=" << s.pool_fp_a << "/" << s.pool_fp_b
         << " k0=" << k0 << " eps=" << fmt_double(s.pool_epsilon) << "\n"
         << "  sec_state fp=" << s.sec_state_fp_a << "/" << s.sec_state_fp_b
         << " ss_rest fp=" << (s.ss_rest_fp.empty() ? "-" : s.ss_rest_fp) << " agree=" << yes_no(s.agree)
         << " liveness_gap=" << yes_no(s.liveness_gap) << "\n";
    }
  }
  for (const auto& s : report.stages) {
    std::string p = "timing.stage." + std::to_string(s.stage) + ".";
    if (kv) {
      print_kv(os, p + "t_a", fmt_double(s.t_a));
      print_kv(os, p + "t_b", fmt_double(s.t_b));
      print_kv(os, p + "t_t", fmt_double(s.t_t));
    } else {
      os << "timing stage " << s.stage << ": T_A=" << fmt_double(s.t_a) << "s T_B=" << fmt_double(s.t_b)
         << "s T_T=" << fmt_double(s.t_t) << "s runtime_feasible=" << yes_no(s.runtime_feasible) << "\n";
    }
  }
  std::string result = report.all_accept ? "accept" : "reject";
  std::string reason = failed ? std::string(sessions::to_string(failed->reason)) : "none";
  if (kv) {
    print_kv(os, "stages", std::to_string(report.stages.size()));
    print_kv(os, "result", result);
    print_kv(os, "reason", reason);
  } else {
    os << "result " << result;
    if (failed) os << " reason=" << reason;
    os << "\n";
  }
  return report.all_accept && report.stages.size() == cfg.plan.size() ? kExitAccept : kExitReject;
}

int cmd_experiment(const Common& c, std::uint64_t trials, std::optional<int> b) {
  if (trials == 0) throw UsageError("--trials must be positive");
  hake::EnvConfig env;
  env.plan = load_plan(c.plan).plan;
  sessions::validate_plan(env.plan);
  if (!c.suite_file.empty()) env.suite = primitives::parse_suite_config(read_file(c.suite_file));
  if (!c.qkd_file.empty()) env.qkd = qkd::parse_qkd_config(read_file(c.qkd_file));
  env.authentication_disabled = c.no_auth;
  env.entity_protection = !c.no_entity_protection;
  env.n_t = std::max<std::uint32_t>(env.n_t, static_cast<std::uint32_t>(env.plan.size()));
  env.b = b;
  transport::AdversaryScript script;
  if (!c.adversary_file.empty()) script = transport::parse_script(read_file(c.adversary_file));
  for (const auto& q : script.queries) hake::parse_query(q);

  std::uint64_t seed = effective_seed(c.seed);
  auto world = std::make_shared<const hake::World>(env.suite, env.n_p, seed,
                                                   std::make_shared<primitives::ManualClock>());
  bool kv = c.format == "kv";
  std::uint64_t correct = 0, wins = 0, clean = 0, trivial = 0, bottom = 0;
  for (std::uint64_t n = 0; n < trials; ++n) {
    env.seed = seed + n;
    auto r = hake::run_experiment(env, script, world);
    correct += r.d == r.b;
    wins += r.win;
    clean += r.clean;
    trivial += r.trivial_win;
    bottom += r.test_bottom;
    std::string p = "trial." + std::to_string(n) + ".";
    if (kv) {
      print_kv(std::cout, p + "b", std::to_string(r.b));
      print_kv(std::cout, p + "d", std::to_string(r.d));
      print_kv(std::cout, p + "clean", yes_no(r.clean));
      print_kv(std::cout, p + "trivial_win", yes_no(r.trivial_win));
      print_kv(std::cout, p + "test_bottom", yes_no(r.test_bottom));
    } else {
      std::cout << "trial " << n << ": b=" << r.b << " d=" << r.d << " clean=" << yes_no(r.clean)
                << " trivial_win=" << yes_no(r.trivial_win) << " test_bottom=" << yes_no(r.test_bottom) << "\n";
    }
  }
  double rate = static_cast<double>(correct) / static_cast<double>(trials);
  double sigma = std::sqrt(0.25 / static_cast<double>(trials));
  if (kv) {
    print_kv(std::cout, "trials", std::to_string(trials));
    print_kv(std::cout, "guess_rate", fmt_double(rate));
    print_kv(std::cout, "sigma", fmt_double(sigma));
    print_kv(std::cout, "wins", std::to_string(wins));
    print_kv(std::cout, "clean", std::to_string(clean));
    print_kv(std::cout, "trivial_win", std::to_string(trivial));
    print_kv(std::cout, "test_bottom", std::to_string(bottom));
  } else {
    std::cout << "trials=" << trials << " guess_rate=" << fmt_double(rate) << " (0.5 +/- " << fmt_double(3 * sigma)
              << " at 3 sigma) wins=" << wins << " clean=" << clean << " trivial_win=" << trivial
              << " test_bottom=" << bottom << "\n";
  }
  return kExitAccept;
}

int cmd_budget(const Common& c, const std::string& params_file, std::uint32_t stage, bool bare_prf, bool union_cases) {
  auto plan = load_plan(c.plan);
  sessions::validate_plan(plan.plan);
  primitives::AdvantageParams params;
  if (!params_file.empty()) params = budget::parse_params(read_file(params_file));
  if (stage > plan.plan.size()) throw UsageError("--stage exceeds the plan length");
  budget::Options opts{bare_prf};
  auto comp = union_cases ? budget::Composition::UnionOfCases : budget::Composition::StageWise;
  auto bounds = budget::plan_bounds(plan.plan, params, plan.k0_source_stage, plan.n_p, plan.n_s, comp, opts);
  bool kv = c.format == "kv";
  for (const auto& b : bounds) {
    if (stage != 0 && b.stage != stage) continue;
    std::string proto(keyschedule::to_string(b.protocol));
    if (kv) {
      std::string p = "stage." + std::to_string(b.stage) + ".";
      print_kv(std::cout, p + "protocol", proto);
      print_kv(std::cout, p + "expr", b.expr.grouped_string());
      print_kv(std::cout, p + "flat", b.expr.flat_string());
      print_kv(std::cout, p + "r", fmt_double(b.r));
      print_kv(std::cout, p + "value", fmt_double(b.value));
    } else {
      std::cout << "stage " << b.stage << " (" << proto << ")\n"
                << "  bound  " << b.expr.grouped_string() << "\n"
                << "  flat   " << b.expr.flat_string() << "\n";
      if (b.expr.uses(budget::Sym::R)) std::cout << "  R      " << fmt_double(b.r) << "\n";
      std::cout << "  value  " << fmt_double(b.value) << "\n";
    }
  }
  return kExitAccept;
}

void add_common(CLI::App* sub, Common& c, bool with_transport) {
  sub->add_option("--plan", c.plan, "comma-separated protocols (sigma,kem,mac) or a plan file")->required();
  sub->add_option("--suite", c.suite_file, "suite config file")->check(CLI::ExistingFile);
  sub->add_option("--qkd", c.qkd_file, "QKD simulator config file")->check(CLI::ExistingFile);
  sub->add_option("--adversary", c.adversary_file, "adversary script")->check(CLI::ExistingFile);
  if (with_transport) sub->add_option("--transport", c.transport, "memory | tcp:<host>:<port>");
  sub->add_option("--seed", c.seed, "seed; QKD_AUTH_SEED overrides");
  sub->add_option("--format", c.format, "text | kv")->check(CLI::IsMember({"text", "kv"}));
  sub->add_flag("--no-auth", c.no_auth, "skip authentication (misuse mode)");
  sub->add_flag("--no-entity-protection", c.no_entity_protection, "send identities in clear");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QKD post-processing authentication: handshakes, experiments and security budgets"};
  app.require_subcommand(1);

  Common hs, ex, bu;
  auto* handshake = app.add_subcommand("handshake", "run a multistage handshake between two parties");
  add_common(handshake, hs, true);

  auto* experiment = app.add_subcommand("experiment", "run key-indistinguishability experiments");
  add_common(experiment, ex, false);
  std::uint64_t trials = 1;
  std::optional<int> bit;
  experiment->add_option("--trials", trials, "number of trials");
  experiment->add_option("--b", bit, "fix the challenger bit")->check(CLI::Range(0, 1));

  auto* budget_cmd = app.add_subcommand("budget", "print per-stage security bounds");
  std::string params_file;
  std::uint32_t stage = 0;
  bool bare_prf = false, union_cases = false;
  budget_cmd->add_option("--plan", bu.plan, "comma-separated protocols or a plan file")->required();
  budget_cmd->add_option("--params", params_file, "advantage parameters")->check(CLI::ExistingFile);
  budget_cmd->add_option("--stage", stage, "only this stage (default: all)");
  budget_cmd->add_option("--format", bu.format, "text | kv")->check(CLI::IsMember({"text", "kv"}));
  budget_cmd->add_flag("--bare-kem-prf", bare_prf, "bare PRF coefficient in the KEM block");
  budget_cmd->add_flag("--union", union_cases, "sum all cases for all sub-protocols");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*handshake) return cmd_handshake(hs);
    if (*experiment) return cmd_experiment(ex, trials, bit);
    if (*budget_cmd) return cmd_budget(bu, params_file, stage, bare_prf, union_cases);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const qkdauth::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
