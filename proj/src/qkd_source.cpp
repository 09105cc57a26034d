#include "qkdauth/qkd_source.hpp"

#include <cmath>
#include <sstream>

#include "qkdauth/errors.hpp"
#include "qkdauth/primitives.hpp"

namespace qkdauth::qkd {

using primitives::Drbg;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Honest: return "honest";
    case Mode::Eavesdropped: return "eavesdropped";
    case Mode::Tampered: return "tampered";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "honest") return Mode::Honest;
  if (s == "eavesdropped") return Mode::Eavesdropped;
  if (s == "tampered") return Mode::Tampered;
  throw ConfigError("unknown qkd mode '" + std::string(s) + "'");
}

void QkdConfig::validate() const {
  if (!(qber >= 0.0 && qber <= 0.5)) throw DomainError("qber outside [0, 0.5]");
  if (!(abort_threshold >= 0.0 && abort_threshold <= 0.5)) throw DomainError("abort_threshold outside [0, 0.5]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon outside [0, 1]");
  if (key_len < kMinQkdKeyLen)
    throw DomainError("key_len below the " + std::to_string(kMinQkdKeyLen) + "-octet PRF input size");
}

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, int lineno) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("line " + std::to_string(lineno) + ": bad number '" + v + "'");
  return d;
}

std::uint64_t parse_u64(const std::string& v, int lineno) {
  std::size_t used = 0;
  std::uint64_t d = 0;
  try {
    d = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-')
    throw ConfigError("line " + std::to_string(lineno) + ": bad integer '" + v + "'");
  return d;
}

// Canonical public transcript: protocol tag, sifting summary, QBER in ppm,
// key length.
Bytes make_transcript(Drbg& rng, double qber, std::size_t key_len) {
  Bytes m = to_bytes("qkd-sim/bb84");
  Bytes sift = rng.bytes(32);
  put_u32be(m, static_cast<std::uint32_t>(sift.size()));
  append(m, sift);
  put_u32be(m, static_cast<std::uint32_t>(std::lround(qber * 1e6)));
  put_u32be(m, static_cast<std::uint32_t>(key_len));
  return m;
}

}  // namespace

QkdConfig parse_qkd_config(std::string_view text) {
  QkdConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string_view key = trim(line.substr(0, eq));
    std::string value(trim(line.substr(eq + 1)));
    if (key == "qkd.mode") cfg.mode = parse_mode(value);
    else if (key == "qkd.qber") cfg.qber = parse_double(value, lineno);
    else if (key == "qkd.abort_threshold") cfg.abort_threshold = parse_double(value, lineno);
    else if (key == "qkd.key_len") cfg.key_len = parse_u64(value, lineno);
    else if (key == "qkd.epsilon") cfg.epsilon = parse_double(value, lineno);
    else if (key == "qkd.seed") cfg.seed = parse_u64(value, lineno);
    else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
  }
  cfg.validate();
  return cfg;
}

void SplittingAdversary::intercept(QkdOutcome& initiator, QkdOutcome& responder) {
  Drbg rng(seed_, "splitting-adversary/" + std::to_string(calls_++));
  with_initiator_ = Secret(rng.bytes(initiator.k_qkd.size()));
  with_responder_ = Secret(rng.bytes(responder.k_qkd.size()));
  initiator.k_qkd = with_initiator_;
  responder.k_qkd = with_responder_;
  initiator.intercepted = responder.intercepted = true;
}

QkdPair run_unauthenticated_qkd(const QkdConfig& cfg, QuantumAdversaryHook* adversary, std::uint64_t round) {
  cfg.validate();
  Drbg rng(cfg.seed, "qkd/round/" + std::to_string(round));
  QkdPair out;
  out.initiator.epsilon_qkd = out.responder.epsilon_qkd = cfg.epsilon;

  if (cfg.qber > cfg.abort_threshold) {
    out.initiator.aborted = out.responder.aborted = true;
    return out;
  }

  Bytes m_qkd = make_transcript(rng, cfg.qber, cfg.key_len);
  Secret key(rng.bytes(cfg.key_len));
  bool failure = rng.bernoulli(cfg.epsilon);
  for (QkdOutcome* v : {&out.initiator, &out.responder}) {
    v->k_qkd = key;
    v->m_qkd = m_qkd;
    v->failure_event = failure;
  }

  if (adversary && cfg.mode != Mode::Honest) adversary->observe(m_qkd);
  if (cfg.mode == Mode::Tampered) {
    if (adversary) {
      adversary->intercept(out.initiator, out.responder);
    } else {
      SplittingAdversary split(cfg.seed ^ 0x5a5a5a5a5a5a5a5aULL);
      split.intercept(out.initiator, out.responder);
    }
  }
  return out;
}

const Secret& KeyPartition::segment(std::string_view label) const {
  for (const auto& [l, s] : segments)
    if (l == label) return s;
  throw DomainError("no segment labelled '" + std::string(label) + "'");
}

KeyPartition partition(const Secret& k_qkd, const std::vector<std::pair<std::string, std::size_t>>& requested) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < requested.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (requested[j].first == requested[i].first) throw DomainError("label '" + requested[i].first + "' requested twice");
    total += requested[i].second;
  }
  if (total > k_qkd.size())
    throw InsufficientKeyMaterial("requested " + std::to_string(total) + " octets from " +
                                  std::to_string(k_qkd.size()));
  KeyPartition p;
  const Bytes& k = k_qkd.expose();
  std::size_t off = 0;
  for (const auto& [label, len] : requested) {
    p.segments.emplace_back(label, Secret(Bytes(k.begin() + static_cast<std::ptrdiff_t>(off),
                                                k.begin() + static_cast<std::ptrdiff_t>(off + len))));
    off += len;
  }
  p.remainder = Secret(Bytes(k.begin() + static_cast<std::ptrdiff_t>(off), k.end()));
  return p;
}

namespace {
void check_unit(double e, const char* what) {
  if (!(e >= 0.0 && e <= 1.0)) throw DomainError(std::string(what) + " outside [0,1]");
}
}  // namespace

EpsilonComposition compose_epsilon(const std::vector<double>& eps) {
  double survive = 1.0;
  double upper = 0.0;
  for (double e : eps) {
    check_unit(e, "epsilon");
    survive *= 1.0 - e;
    upper += e;
  }
  // 1 - prod(1 - e) loses precision for tiny e; expm1/log1p keeps it.
  double log_survive = 0.0;
  for (double e : eps) log_survive += std::log1p(-e);
  double exact = survive == 0.0 ? 1.0 : -std::expm1(log_survive);
  if (exact > upper) exact = upper;
  return {exact, upper};
}

double prob_not_its(double eps_auth, double eps_qkd) {
  check_unit(eps_auth, "eps_auth");
  check_unit(eps_qkd, "eps_qkd");
  return eps_auth + eps_qkd - eps_auth * eps_qkd;
}

}  // namespace qkdauth::qkd
