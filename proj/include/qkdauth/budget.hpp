#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qkdauth/keyschedule.hpp"
#include "qkdauth/primitives.hpp"

namespace qkdauth::budget {

using Rational = boost::multiprecision::cpp_rational;
using primitives::AdvantageParams;

// Advantage symbols. R stands for the bound of the stage that produced K0.
enum class Sym { Sig, Kem, Eps, Dual, Prf, Cpa, Ctxt, Mac, Hash, R };

std::string_view to_string(Sym s);
double value_of(Sym s, const AdvantageParams& p);

using Coefficients = std::map<Sym, Rational>;

// coefficient * [ sum of inner terms ]
struct Block {
  Rational coefficient;
  Coefficients inner;
  std::string group;  // blocks sharing a non-empty group print merged
};

class AdvantageExpr {
 public:
  AdvantageExpr() = default;

  void add_block(Rational coefficient, Coefficients inner);
  AdvantageExpr& operator+=(const AdvantageExpr& other);
  friend AdvantageExpr operator+(AdvantageExpr a, const AdvantageExpr& b) { return a += b; }

  const std::vector<Block>& blocks() const { return blocks_; }
  // Expanded coefficient per symbol; zero coefficients are dropped.
  Coefficients flatten() const;
  Rational coefficient(Sym s) const;
  bool uses(Sym s) const { return coefficient(s) != 0; }

  // Throws MissingDependency when R appears and `r` is not supplied.
  double evaluate(const AdvantageParams& p, std::optional<double> r = std::nullopt) const;
  // Replaces R by `r` block-wise.
  AdvantageExpr substitute_r(const AdvantageExpr& r) const;
  // Copy with every block assigned to `group`.
  AdvantageExpr grouped(std::string group) const;

  // "8[KEM + eps + 2dual] + 4[4CPA + eps]"
  std::string to_string() const;
  // Expanded single-bracket form, symbols in declaration order.
  std::string flat_string() const;
  // Each group merged into one block with the integer gcd pulled out, e.g.
  // "8[KEM + eps + 2dual + 22PRF] + 4[4CPA + eps]"; ungrouped blocks as is.
  std::string grouped_string() const;

 private:
  std::vector<Block> blocks_;
};

struct StagePlanCounts {
  std::uint64_t n_p = 2;
  std::uint64_t n_s = 1;
  std::uint64_t n_t_sigma = 0;
  std::uint64_t n_t_kem = 0;
  std::uint64_t n_t_mac = 0;
  // MAC stage -> stage whose pooled key it consumed.
  std::map<std::uint32_t, std::uint32_t> k0_source_stage;

  std::uint64_t n_t() const { return n_t_sigma + n_t_kem + n_t_mac; }
  // Throws DomainError when n_p or n_s is zero.
  void validate() const;
};

StagePlanCounts counts_for(const std::vector<keyschedule::ProtocolId>& plan, std::uint64_t n_p = 2,
                           std::uint64_t n_s = 1);

struct Options {
  // Coefficient 1 instead of 9 for PRF inside the second KEM block.
  bool bare_kem_prf = false;
};

AdvantageExpr bound_case1_sigma(const StagePlanCounts& c, const Options& o = {});
AdvantageExpr bound_case1_kem(const StagePlanCounts& c, const Options& o = {});
// Keeps R symbolic; resolve with substitute_r or evaluate(params, r).
AdvantageExpr bound_case1_mac(const StagePlanCounts& c, const Options& o = {});
AdvantageExpr bound_case2_sigma(const StagePlanCounts& c, const Options& o = {});
AdvantageExpr bound_case2_kem(const StagePlanCounts& c, const Options& o = {});
AdvantageExpr bound_case2_mac(const StagePlanCounts& c, const Options& o = {});
AdvantageExpr bound_case3(const StagePlanCounts& c, const Options& o = {});

enum class Composition {
  // Stage-wise composition: the PQC stages contribute
  // cases 1, 2 and 3 over their own counts; when MAC stages exist they add the
  // case-1 MAC bound and case 3 over the full counts.
  StageWise,
  // Plain sum of cases 1, 2 and 3 for the three sub-protocols.
  UnionOfCases,
};

AdvantageExpr theorem1_total(const StagePlanCounts& c, Composition comp = Composition::StageWise,
                             const Options& o = {});

struct StageBound {
  std::uint32_t stage;
  keyschedule::ProtocolId protocol;
  AdvantageExpr expr;  // R still symbolic
  double r = 0;        // resolved value of R (0 when unused)
  double value = 0;
};

// Bound after each stage of `plan`. MAC stages default to consuming stage-1
// keys unless `k0_source_stage` names another earlier stage. Throws
// MissingDependency when a source is not an earlier PQC or MAC stage.
std::vector<StageBound> plan_bounds(const std::vector<keyschedule::ProtocolId>& plan, const AdvantageParams& p,
                                    std::map<std::uint32_t, std::uint32_t> k0_source_stage = {},
                                    std::uint64_t n_p = 2, std::uint64_t n_s = 1,
                                    Composition comp = Composition::StageWise, const Options& o = {});

using Seconds = std::chrono::duration<double>;
// T_A + T_B + T_T < T_HPT. Throws DomainError on a negative duration.
bool runtime_feasible(Seconds t_a, Seconds t_b, Seconds t_t, Seconds t_hpt);

// eps_QKD + eps_auth. Throws DomainError outside [0,1].
double qkd_security_bound(double eps_qkd, double eps_auth);
AdvantageExpr qkd_security_bound(const AdvantageExpr& eps_auth);

// `key = value` lines (an optional `[section]` header is ignored). Keys are
// the AdvantageParams field names.
AdvantageParams parse_params(std::string_view text);

struct PlanFile {
  std::vector<keyschedule::ProtocolId> plan;
  std::uint64_t n_p = 2;
  std::uint64_t n_s = 1;
  std::map<std::uint32_t, std::uint32_t> k0_source_stage;
};

// plan = ["kem", "mac"] | plan = "kem,mac"; n_p = 2; n_s = 1; source.<stage> = <stage>
PlanFile parse_plan_file(std::string_view text);

}  // namespace qkdauth::budget
