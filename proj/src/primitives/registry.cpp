#include <algorithm>
#include <charconv>
#include <sstream>

#include "qkdauth/primitives.hpp"
#include "symmetric_impl.hpp"

namespace qkdauth::primitives {

Registry::Registry() {
  detail::register_symmetric(hashes_, prfs_, macs_, aeads_);
  detail::register_pqc(sigs_, kems_);
}

const Registry& Registry::builtin() {
  static const Registry r;
  return r;
}

namespace {
template <class T>
const T& find(const std::vector<std::unique_ptr<T>>& v, std::string_view id, const char* kind) {
  for (const auto& p : v)
    if (p->id() == id) return *p;
  throw UnknownAlgorithm(std::string(kind) + " '" + std::string(id) + "'");
}

template <class T>
void collect(const std::vector<std::unique_ptr<T>>& v, std::vector<std::string>& out) {
  for (const auto& p : v) out.emplace_back(p->id());
}
}  // namespace

const Hash& Registry::hash(std::string_view id) const { return find(hashes_, id, "hash"); }
const Prf& Registry::prf(std::string_view id) const { return find(prfs_, id, "prf"); }
const Mac& Registry::mac(std::string_view id) const { return find(macs_, id, "mac"); }
const Aead& Registry::aead(std::string_view id) const { return find(aeads_, id, "aead"); }
const Signature& Registry::signature(std::string_view id) const { return find(sigs_, id, "sig"); }
const Kem& Registry::kem(std::string_view id) const { return find(kems_, id, "kem"); }

std::vector<std::string> Registry::ids(std::string_view kind) const {
  std::vector<std::string> out;
  if (kind == "hash") collect(hashes_, out);
  else if (kind == "prf") collect(prfs_, out);
  else if (kind == "mac") collect(macs_, out);
  else if (kind == "aead") collect(aeads_, out);
  else if (kind == "sig") collect(sigs_, out);
  else if (kind == "kem") collect(kems_, out);
  else throw UnknownAlgorithm("primitive kind '" + std::string(kind) + "'");
  return out;
}

void AdvantageParams::validate() const {
  const std::pair<const char*, double> entries[] = {
      {"adv_sig_eufcma", adv_sig_eufcma}, {"adv_kem_indcca", adv_kem_indcca},
      {"adv_mac_eufcma", adv_mac_eufcma}, {"adv_prf", adv_prf},
      {"adv_prf_dual", adv_prf_dual},     {"adv_hash", adv_hash},
      {"adv_aead_indcpa", adv_aead_indcpa}, {"adv_aead_intctxt", adv_aead_intctxt},
      {"eps_qkd", eps_qkd}};
  for (auto [name, v] : entries)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(name) + " outside [0,1]");
}

bool AdvantageParams::set(std::string_view name, double value) {
  double* fields[] = {&adv_sig_eufcma, &adv_kem_indcca,  &adv_mac_eufcma,   &adv_prf, &adv_prf_dual,
                      &adv_hash,       &adv_aead_indcpa, &adv_aead_intctxt, &eps_qkd};
  static constexpr std::string_view names[] = {"adv_sig_eufcma", "adv_kem_indcca",  "adv_mac_eufcma",
                                               "adv_prf",        "adv_prf_dual",    "adv_hash",
                                               "adv_aead_indcpa", "adv_aead_intctxt", "eps_qkd"};
  for (std::size_t i = 0; i < std::size(names); ++i) {
    if (names[i] == name) {
      *fields[i] = value;
      return true;
    }
  }
  return false;
}

namespace {
std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

SuiteConfig parse_suite_config(std::string_view text) {
  SuiteConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string_view key = trim(line.substr(0, eq));
    std::string value(trim(line.substr(eq + 1)));
    if (key == "suite.prf") cfg.prf = value;
    else if (key == "suite.hash") cfg.hash = value;
    else if (key == "suite.sig") cfg.sig = value;
    else if (key == "suite.kem") cfg.kem = value;
    else if (key == "suite.mac") cfg.mac = value;
    else if (key == "suite.aead") cfg.aead = value;
    else if (key == "suite.t_hpt_seconds") {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size() || v == 0)
        throw ConfigError("line " + std::to_string(lineno) + ": t_hpt_seconds must be a positive integer");
      cfg.t_hpt_seconds = v;
    } else if (key.substr(0, 10) == "suite.adv.") {
      double v = 0;
      std::size_t used = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size() || !cfg.adv.set(key.substr(10), v))
        throw ConfigError("line " + std::to_string(lineno) + ": bad advantage entry '" + std::string(key) + "'");
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
    }
  }
  cfg.adv.validate();
  return cfg;
}

PrimitiveSuite::PrimitiveSuite(const SuiteConfig& cfg, std::shared_ptr<const Clock> clock)
    : cfg_(cfg), clock_(clock ? std::move(clock) : std::make_shared<SteadyClock>()) {
  const auto& r = Registry::builtin();
  hash_ = &r.hash(cfg.hash);
  prf_ = &r.prf(cfg.prf);
  mac_ = &r.mac(cfg.mac);
  aead_ = &r.aead(cfg.aead);
  sig_ = &r.signature(cfg.sig);
  kem_ = &r.kem(cfg.kem);
  cfg_.adv.validate();
  if (hash_->width() < 32) throw ConfigError("hash width below 32 octets");
  if (prf_->output_width() < kMinSymmetricKeyLen) throw ConfigError("PRF output narrower than 64 octets");
}

}  // namespace qkdauth::primitives
