#include "qkdauth/budget.hpp"

#include <algorithm>
#include <sstream>

#include "qkdauth/errors.hpp"
#include "qkdauth/sessions.hpp"

namespace qkdauth::budget {

using keyschedule::ProtocolId;

std::string_view to_string(Sym s) {
  switch (s) {
    case Sym::Sig: return "SIG";
    case Sym::Kem: return "KEM";
    case Sym::Eps: return "eps";
    case Sym::Dual: return "dual";
    case Sym::Prf: return "PRF";
    case Sym::Cpa: return "CPA";
    case Sym::Ctxt: return "CTXT";
    case Sym::Mac: return "MAC";
    case Sym::Hash: return "H";
    case Sym::R: return "R";
  }
  return "?";
}

double value_of(Sym s, const AdvantageParams& p) {
  switch (s) {
    case Sym::Sig: return p.adv_sig_eufcma;
    case Sym::Kem: return p.adv_kem_indcca;
    case Sym::Eps: return p.eps_qkd;
    case Sym::Dual: return p.adv_prf_dual;
    case Sym::Prf: return p.adv_prf;
    case Sym::Cpa: return p.adv_aead_indcpa;
    case Sym::Ctxt: return p.adv_aead_intctxt;
    case Sym::Mac: return p.adv_mac_eufcma;
    case Sym::Hash: return p.adv_hash;
    case Sym::R: break;
  }
  throw MissingDependency("R has no parameter value");
}

namespace {

void add_scaled(Coefficients& into, const Coefficients& from, const Rational& k) {
  for (const auto& [s, c] : from) into[s] += c * k;
}

}  // namespace

void AdvantageExpr::add_block(Rational coefficient, Coefficients inner) {
  if (coefficient == 0) return;
  for (auto it = inner.begin(); it != inner.end();) it = it->second == 0 ? inner.erase(it) : std::next(it);
  if (inner.empty()) return;
  blocks_.push_back({std::move(coefficient), std::move(inner)});
}

AdvantageExpr& AdvantageExpr::operator+=(const AdvantageExpr& other) {
  blocks_.insert(blocks_.end(), other.blocks_.begin(), other.blocks_.end());
  return *this;
}

Coefficients AdvantageExpr::flatten() const {
  Coefficients out;
  for (const auto& b : blocks_)
    for (const auto& [s, c] : b.inner) out[s] += b.coefficient * c;
  for (auto it = out.begin(); it != out.end();) it = it->second == 0 ? out.erase(it) : std::next(it);
  return out;
}

Rational AdvantageExpr::coefficient(Sym s) const {
  auto f = flatten();
  auto it = f.find(s);
  return it == f.end() ? Rational(0) : it->second;
}

double AdvantageExpr::evaluate(const AdvantageParams& p, std::optional<double> r) const {
  p.validate();
  double total = 0;
  for (const auto& [s, c] : flatten()) {
    double v;
    if (s == Sym::R) {
      if (!r) throw MissingDependency("bound of the K0 derivation stage is unresolved");
      v = *r;
    } else {
      v = value_of(s, p);
    }
    total += c.convert_to<double>() * v;
  }
  return total;
}

AdvantageExpr AdvantageExpr::grouped(std::string group) const {
  AdvantageExpr out = *this;
  for (auto& b : out.blocks_) b.group = group;
  return out;
}

AdvantageExpr AdvantageExpr::substitute_r(const AdvantageExpr& r) const {
  AdvantageExpr out;
  for (const auto& b : blocks_) {
    auto it = b.inner.find(Sym::R);
    if (it == b.inner.end()) {
      out.blocks_.push_back(b);
      continue;
    }
    Rational times = it->second;
    Coefficients rest = b.inner;
    rest.erase(Sym::R);
    out.add_block(b.coefficient, rest);
    if (!out.blocks_.empty()) out.blocks_.back().group = b.group;
    for (const auto& rb : r.blocks_) out.add_block(b.coefficient * times * rb.coefficient, rb.inner);
  }
  return out;
}

namespace {

std::string fmt(const Rational& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

std::string inner_string(const Coefficients& inner) {
  std::string s;
  for (const auto& [sym, c] : inner) {
    if (!s.empty()) s += " + ";
    if (c != 1) s += fmt(c);
    s += to_string(sym);
  }
  return s;
}

}  // namespace

std::string AdvantageExpr::to_string() const {
  if (blocks_.empty()) return "0";
  std::string s;
  for (const auto& b : blocks_) {
    if (!s.empty()) s += " + ";
    s += fmt(b.coefficient) + "[" + inner_string(b.inner) + "]";
  }
  return s;
}

std::string AdvantageExpr::grouped_string() const {
  std::vector<Block> merged;
  std::map<std::string, std::size_t> where;
  for (const auto& b : blocks_) {
    if (b.group.empty()) {
      merged.push_back(b);
      continue;
    }
    auto [it, fresh] = where.emplace(b.group, merged.size());
    if (fresh) merged.push_back({1, {}, b.group});
    add_scaled(merged[it->second].inner, b.inner, b.coefficient);
  }
  std::string s;
  for (auto& b : merged) {
    if (!b.group.empty()) {
      boost::multiprecision::cpp_int g = 0;
      bool integral = true;
      for (const auto& [_, c] : b.inner) {
        if (denominator(c) != 1) integral = false;
        g = gcd(g, numerator(c));
      }
      if (integral && g > 1) {
        b.coefficient = Rational(g);
        for (auto& [_, c] : b.inner) c /= b.coefficient;
      }
    }
    if (!s.empty()) s += " + ";
    s += fmt(b.coefficient) + "[" + inner_string(b.inner) + "]";
  }
  return s.empty() ? "0" : s;
}

std::string AdvantageExpr::flat_string() const {
  auto f = flatten();
  return f.empty() ? "0" : inner_string(f);
}

void StagePlanCounts::validate() const {
  if (n_p == 0 || n_s == 0) throw DomainError("n_p and n_s must be positive");
}

StagePlanCounts counts_for(const std::vector<ProtocolId>& plan, std::uint64_t n_p, std::uint64_t n_s) {
  StagePlanCounts c;
  c.n_p = n_p;
  c.n_s = n_s;
  for (ProtocolId p : plan) {
    switch (p) {
      case ProtocolId::Sigma: ++c.n_t_sigma; break;
      case ProtocolId::Kem: ++c.n_t_kem; break;
      case ProtocolId::Mac: ++c.n_t_mac; break;
    }
  }
  return c;
}

namespace {

// n_P^2 n_S^e
Rational base(const StagePlanCounts& c, unsigned s_pow) {
  Rational v = Rational(c.n_p) * c.n_p;
  for (unsigned i = 0; i < s_pow; ++i) v *= c.n_s;
  return v;
}

}  // namespace

AdvantageExpr bound_case1_sigma(const StagePlanCounts& c, const Options&) {
  c.validate();
  AdvantageExpr e;
  Rational n = c.n_t_sigma;
  e.add_block(base(c, 1) * n, {{Sym::Sig, 1}, {Sym::Hash, 6}});
  Coefficients second{{Sym::Eps, 1}, {Sym::Dual, 1}};
  add_scaled(second, {{Sym::Prf, 5}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}, {Sym::Hash, 6}}, 1 + n);
  e.add_block(base(c, 2) * n * n, second);
  return e;
}

AdvantageExpr bound_case1_kem(const StagePlanCounts& c, const Options& o) {
  c.validate();
  AdvantageExpr e;
  Rational n = c.n_t_kem;
  e.add_block(base(c, 1) * n, {{Sym::Kem, 1},
                               {Sym::Dual, 1},
                               {Sym::Prf, 4},
                               {Sym::Cpa, 1},
                               {Sym::Ctxt, 1},
                               {Sym::Mac, 1},
                               {Sym::Hash, 5}});
  Coefficients second{{Sym::Eps, 1}, {Sym::Dual, 1}};
  Rational prf = o.bare_kem_prf ? 1 : 9;
  add_scaled(second, {{Sym::Prf, prf}, {Sym::Cpa, 2}, {Sym::Ctxt, 2}, {Sym::Mac, 1}, {Sym::Hash, 5}}, 1 + n);
  e.add_block(base(c, 2) * n * n, second);
  return e;
}

AdvantageExpr bound_case1_mac(const StagePlanCounts& c, const Options&) {
  c.validate();
  AdvantageExpr e;
  Rational n = c.n_t_mac;
  e.add_block(base(c, 1) * n,
              {{Sym::R, 1}, {Sym::Dual, 1}, {Sym::Prf, 3}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}});
  e.add_block(base(c, 2) * n * n,
              {{Sym::R, 1}, {Sym::Dual, 1}, {Sym::Prf, 4}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}});
  e.add_block(base(c, 2) * n * n * n, {{Sym::Prf, 5}, {Sym::Cpa, 1}, {Sym::Ctxt, 1}, {Sym::Mac, 1}});
  return e;
}

AdvantageExpr bound_case2_sigma(const StagePlanCounts& c, const Options& o) { return bound_case1_sigma(c, o); }
AdvantageExpr bound_case2_kem(const StagePlanCounts& c, const Options& o) { return bound_case1_kem(c, o); }
AdvantageExpr bound_case2_mac(const StagePlanCounts& c, const Options& o) { return bound_case1_mac(c, o); }

AdvantageExpr bound_case3(const StagePlanCounts& c, const Options&) {
  c.validate();
  AdvantageExpr e;
  e.add_block(base(c, 2) * c.n_t(), {{Sym::Cpa, 2}, {Sym::Eps, 1}});
  e.add_block(base(c, 2) * c.n_t_kem, {{Sym::Cpa, 2}});
  return e;
}

AdvantageExpr theorem1_total(const StagePlanCounts& c, Composition comp, const Options& o) {
  c.validate();
  AdvantageExpr e;
  e += bound_case1_sigma(c, o).grouped("pqc");
  e += bound_case2_sigma(c, o).grouped("pqc");
  e += bound_case1_kem(c, o).grouped("pqc");
  e += bound_case2_kem(c, o).grouped("pqc");
  if (comp == Composition::UnionOfCases) {
    e += bound_case1_mac(c, o);
    e += bound_case2_mac(c, o);
    e += bound_case3(c, o).grouped("case3");
    return e;
  }
  StagePlanCounts pqc = c;
  pqc.n_t_mac = 0;
  e += bound_case3(pqc, o).grouped("pqc-case3");
  if (c.n_t_mac > 0) {
    e += bound_case1_mac(c, o);
    e += bound_case3(c, o).grouped("case3");
  }
  return e;
}

std::vector<StageBound> plan_bounds(const std::vector<ProtocolId>& plan, const AdvantageParams& p,
                                    std::map<std::uint32_t, std::uint32_t> k0_source_stage, std::uint64_t n_p,
                                    std::uint64_t n_s, Composition comp, const Options& o) {
  std::vector<StageBound> out;
  for (std::uint32_t stage = 1; stage <= plan.size(); ++stage) {
    std::vector<ProtocolId> prefix(plan.begin(), plan.begin() + stage);
    StagePlanCounts c = counts_for(prefix, n_p, n_s);
    StageBound b{stage, plan[stage - 1], theorem1_total(c, comp, o), 0, 0};
    if (b.expr.uses(Sym::R)) {
      double r = 0;
      for (std::uint32_t s = 1; s <= stage; ++s) {
        if (plan[s - 1] != ProtocolId::Mac) continue;
        auto it = k0_source_stage.find(s);
        std::uint32_t src = it == k0_source_stage.end() ? 1 : it->second;
        if (src == 0 || src >= s)
          throw MissingDependency("stage " + std::to_string(s) + " draws K0 from stage " + std::to_string(src) +
                                  ", which has no earlier bound");
        r = std::max(r, out[src - 1].value);
      }
      b.r = r;
    }
    b.value = b.expr.evaluate(p, b.r);
    out.push_back(std::move(b));
  }
  return out;
}

bool runtime_feasible(Seconds t_a, Seconds t_b, Seconds t_t, Seconds t_hpt) {
  for (Seconds d : {t_a, t_b, t_t, t_hpt})
    if (d.count() < 0) throw DomainError("negative duration");
  return t_a + t_b + t_t < t_hpt;
}

double qkd_security_bound(double eps_qkd, double eps_auth) {
  for (double e : {eps_qkd, eps_auth})
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("epsilon outside [0,1]");
  return eps_qkd + eps_auth;
}

AdvantageExpr qkd_security_bound(const AdvantageExpr& eps_auth) {
  AdvantageExpr e;
  e.add_block(1, {{Sym::Eps, 1}});
  e += eps_auth;
  return e;
}

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  return std::string(v);
}

template <typename F>
void for_each_pair(std::string_view text, F&& f) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    f(std::string(trim(line.substr(0, eq))), trim(line.substr(eq + 1)), lineno);
  }
}

std::uint64_t to_u64(std::string_view v, int lineno) {
  std::string s = unquote(v);
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || s[0] == '-')
    throw ConfigError("line " + std::to_string(lineno) + ": bad integer '" + s + "'");
  return out;
}

}  // namespace

AdvantageParams parse_params(std::string_view text) {
  AdvantageParams p;
  for_each_pair(text, [&](const std::string& key, std::string_view value, int lineno) {
    std::string v = unquote(value);
    double d = 0;
    std::size_t used = 0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("line " + std::to_string(lineno) + ": bad number '" + v + "'");
    if (!p.set(key, d)) throw ConfigError("line " + std::to_string(lineno) + ": unknown parameter '" + key + "'");
  });
  p.validate();
  return p;
}

PlanFile parse_plan_file(std::string_view text) {
  PlanFile pf;
  bool have_plan = false;
  for_each_pair(text, [&](const std::string& key, std::string_view value, int lineno) {
    if (key == "plan") {
      std::string v(trim(value));
      if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated list");
        v = v.substr(1, v.size() - 2);
      }
      std::string joined;
      std::istringstream items(v);
      std::string item;
      while (std::getline(items, item, ',')) {
        std::string name = unquote(item);
        if (name.empty()) continue;
        if (!joined.empty()) joined += ",";
        joined += name;
      }
      pf.plan = sessions::parse_plan(joined);
      have_plan = true;
    } else if (key == "n_p") {
      pf.n_p = to_u64(value, lineno);
    } else if (key == "n_s") {
      pf.n_s = to_u64(value, lineno);
    } else if (key.rfind("source.", 0) == 0) {
      auto stage = static_cast<std::uint32_t>(to_u64(key.substr(7), lineno));
      pf.k0_source_stage[stage] = static_cast<std::uint32_t>(to_u64(value, lineno));
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  });
  if (!have_plan) throw PlanError("plan file has no plan entry");
  return pf;
}

}  // namespace qkdauth::budget
