#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qkdauth/bytes.hpp"

namespace qkdauth::qkd {

enum class Mode { Honest, Eavesdropped, Tampered };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

struct QkdConfig {
  Mode mode = Mode::Honest;
  double qber = 0.02;
  double abort_threshold = 0.11;
  std::size_t key_len = 256;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  // Throws DomainError.
  void validate() const;
};

// Reads `qkd.<field>=<value>` lines; `#` starts a comment.
QkdConfig parse_qkd_config(std::string_view text);

inline constexpr std::size_t kMinQkdKeyLen = 64;

struct QkdOutcome {
  Secret k_qkd;
  Bytes m_qkd;
  double epsilon_qkd = 0.0;
  bool aborted = false;
  // Ground truth kept for the unbounded-adversary oracle; never read by the
  // protocol engines.
  bool failure_event = false;   // the epsilon-probability failure fired
  bool intercepted = false;     // a person-in-the-middle replaced this view
};

struct QkdPair {
  QkdOutcome initiator;
  QkdOutcome responder;
};

class QuantumAdversaryHook {
 public:
  virtual ~QuantumAdversaryHook() = default;
  // Read access to the public transcript (eavesdropped and tampered modes).
  virtual void observe(ByteView /*m_qkd*/) {}
  // Tampered mode only: may replace either view.
  virtual void intercept(QkdOutcome& /*initiator*/, QkdOutcome& /*responder*/) {}
};

// Runs an independent QKD session with each side, as an intercept-resend
// person-in-the-middle would. Views differ but each is well formed.
class SplittingAdversary final : public QuantumAdversaryHook {
 public:
  explicit SplittingAdversary(std::uint64_t seed) : seed_(seed) {}
  void observe(ByteView m_qkd) override { observed_.emplace_back(m_qkd.begin(), m_qkd.end()); }
  void intercept(QkdOutcome& initiator, QkdOutcome& responder) override;

  const std::vector<Bytes>& observed() const { return observed_; }
  // Keys the adversary now shares with each side.
  const Secret& key_with_initiator() const { return with_initiator_; }
  const Secret& key_with_responder() const { return with_responder_; }

 private:
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
  std::vector<Bytes> observed_;
  Secret with_initiator_;
  Secret with_responder_;
};

// `round` separates successive runs under one configuration (one per stage).
QkdPair run_unauthenticated_qkd(const QkdConfig& cfg, QuantumAdversaryHook* adversary = nullptr,
                                std::uint64_t round = 0);

struct KeyPartition {
  std::vector<std::pair<std::string, Secret>> segments;
  Secret remainder;

  const Secret& segment(std::string_view label) const;
};

KeyPartition partition(const Secret& k_qkd, const std::vector<std::pair<std::string, std::size_t>>& requested);

struct EpsilonComposition {
  double exact;
  double upper;
};

EpsilonComposition compose_epsilon(const std::vector<double>& eps);
double prob_not_its(double eps_auth, double eps_qkd);

}  // namespace qkdauth::qkd
