#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qkdauth/bytes.hpp"
#include "qkdauth/errors.hpp"

namespace qkdauth::primitives {

// Symmetric secrets fed to the PRF, MAC and AEAD are at least 512 bits.
inline constexpr std::size_t kMinSymmetricKeyLen = 64;
inline constexpr std::size_t kAeadNonceLen = 12;

using Duration = std::chrono::nanoseconds;
// Monotonic instant measured from an arbitrary clock epoch.
using Instant = std::chrono::nanoseconds;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Instant now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  Instant now() const override;
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(Instant start = Instant{0}) : now_(start) {}
  Instant now() const override;
  void advance(Duration d);
  void set(Instant t);

 private:
  mutable std::mutex mu_;
  Instant now_;
};

// ChaCha20 keystream seeded from a label and seed material.
class Drbg {
 public:
  explicit Drbg(std::uint64_t seed, std::string_view label = {});
  explicit Drbg(ByteView seed_material, std::string_view label = {});
  Drbg(const Drbg&) = delete;
  Drbg& operator=(const Drbg&) = delete;
  Drbg(Drbg&&) noexcept;
  Drbg& operator=(Drbg&&) noexcept;
  ~Drbg();

  void fill(std::span<std::uint8_t> out);
  Bytes bytes(std::size_t n);
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  bool bernoulli(double p);
  // Independent child stream; the parent stream is advanced.
  Drbg fork(std::string_view label);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// Routes PQClean's randombytes() to `rng` on this thread while alive.
class ScopedPqcRandomness {
 public:
  explicit ScopedPqcRandomness(Drbg* rng);
  ~ScopedPqcRandomness();
  ScopedPqcRandomness(const ScopedPqcRandomness&) = delete;
  ScopedPqcRandomness& operator=(const ScopedPqcRandomness&) = delete;

 private:
  Drbg* previous_;
};

class PrfKey {
 public:
  explicit PrfKey(Bytes bytes);
  explicit PrfKey(const Secret& s) : PrfKey(s.expose()) {}
  ByteView view() const { return bytes_.view(); }
  std::size_t size() const { return bytes_.size(); }

 private:
  Secret bytes_;
};

struct SignatureKeyPair {
  std::string algorithm;
  Secret sk;
  Bytes pk;
  Instant created_at{0};
  Duration lifetime{0};

  bool expired(Instant now) const { return now - created_at >= lifetime; }
};

using KemKeyPair = SignatureKeyPair;

using SigTag = Bytes;
using MacTag = Bytes;
using KemCiphertext = Bytes;
using Digest = Bytes;

struct AeadCiphertext {
  Bytes nonce;
  Bytes associated_data;
  Bytes bytes;  // ciphertext followed by the tag
};

struct Encapsulation {
  Secret shared;
  KemCiphertext ciphertext;
};

class Hash {
 public:
  virtual ~Hash() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t width() const = 0;
  virtual Digest digest(ByteView msg) const = 0;
};

class Prf {
 public:
  virtual ~Prf() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t output_width() const = 0;
  virtual std::size_t max_input() const = 0;
  virtual Secret eval(const PrfKey& key, ByteView msg) const = 0;
  // prf_dual(m, k) == prf(k, m): the same function with its arguments in
  // swapped canonical positions.
  Secret eval_dual(ByteView msg, const PrfKey& key) const { return eval(key, msg); }
};

class Mac {
 public:
  virtual ~Mac() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t tag_len() const = 0;
  virtual MacTag auth(ByteView key, ByteView msg) const = 0;
  bool verify(ByteView key, ByteView msg, ByteView tag) const;
};

class Aead {
 public:
  virtual ~Aead() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t key_len() const = 0;
  virtual std::size_t tag_len() const = 0;
  // `key` must hold at least kMinSymmetricKeyLen octets; the cipher key is its
  // leading key_len() octets.
  virtual Bytes seal(ByteView key, ByteView nonce, ByteView ad, ByteView plaintext) const = 0;
  virtual std::optional<Bytes> open(ByteView key, ByteView nonce, ByteView ad, ByteView ct) const = 0;
};

class Signature {
 public:
  virtual ~Signature() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t public_key_len() const = 0;
  virtual std::size_t signature_len() const = 0;
  virtual SignatureKeyPair keygen(Instant now, Duration lifetime, Drbg* rng = nullptr) const = 0;
  virtual SigTag sign(const SignatureKeyPair& kp, ByteView msg, Instant now, Drbg* rng = nullptr) const = 0;
  virtual bool verify(ByteView pk, ByteView msg, ByteView sig) const = 0;
};

class Kem {
 public:
  virtual ~Kem() = default;
  virtual std::string_view id() const = 0;
  virtual std::size_t public_key_len() const = 0;
  virtual std::size_t ciphertext_len() const = 0;
  virtual KemKeyPair keygen(Instant now, Duration lifetime, Drbg* rng = nullptr) const = 0;
  virtual Encapsulation encapsulate(ByteView pk, Drbg* rng = nullptr) const = 0;
  // nullopt is the decapsulation failure symbol.
  virtual std::optional<Secret> decapsulate(const KemKeyPair& kp, ByteView ct, Instant now) const = 0;
};

class Registry {
 public:
  static const Registry& builtin();

  const Hash& hash(std::string_view id) const;
  const Prf& prf(std::string_view id) const;
  const Mac& mac(std::string_view id) const;
  const Aead& aead(std::string_view id) const;
  const Signature& signature(std::string_view id) const;
  const Kem& kem(std::string_view id) const;

  std::vector<std::string> ids(std::string_view kind) const;

 private:
  Registry();
  std::vector<std::unique_ptr<Hash>> hashes_;
  std::vector<std::unique_ptr<Prf>> prfs_;
  std::vector<std::unique_ptr<Mac>> macs_;
  std::vector<std::unique_ptr<Aead>> aeads_;
  std::vector<std::unique_ptr<Signature>> sigs_;
  std::vector<std::unique_ptr<Kem>> kems_;
};

struct AdvantageParams {
  double adv_sig_eufcma = 0;
  double adv_kem_indcca = 0;
  double adv_mac_eufcma = 0;
  double adv_prf = 0;
  double adv_prf_dual = 0;
  double adv_hash = 0;
  double adv_aead_indcpa = 0;
  double adv_aead_intctxt = 0;
  double eps_qkd = 0;

  // Throws DomainError when any entry lies outside [0, 1].
  void validate() const;
  // Sets the field named `name` (e.g. "adv_prf"); false for an unknown name.
  bool set(std::string_view name, double value);
};

struct SuiteConfig {
  std::string prf = "hmac-sha512-dual";
  std::string hash = "sha-256";
  std::string sig = "ml-dsa-65";
  std::string kem = "ml-kem-768";
  std::string mac = "hmac-sha512";
  std::string aead = "aes-256-gcm";
  std::uint64_t t_hpt_seconds = 3600;
  AdvantageParams adv;
};

// Reads `suite.<field>=<value>` and `suite.adv.<param>=<value>` lines; `#`
// starts a comment.
SuiteConfig parse_suite_config(std::string_view text);

class PrimitiveSuite {
 public:
  explicit PrimitiveSuite(const SuiteConfig& cfg = {}, std::shared_ptr<const Clock> clock = nullptr);

  const SuiteConfig& config() const { return cfg_; }
  const Hash& hash() const { return *hash_; }
  const Prf& prf() const { return *prf_; }
  const Mac& mac() const { return *mac_; }
  const Aead& aead() const { return *aead_; }
  const Signature& sig() const { return *sig_; }
  const Kem& kem() const { return *kem_; }
  const AdvantageParams& adv() const { return cfg_.adv; }

  Instant now() const { return clock_->now(); }
  Duration t_hpt() const { return std::chrono::seconds(cfg_.t_hpt_seconds); }
  const std::shared_ptr<const Clock>& clock() const { return clock_; }

 private:
  SuiteConfig cfg_;
  std::shared_ptr<const Clock> clock_;
  const Hash* hash_;
  const Prf* prf_;
  const Mac* mac_;
  const Aead* aead_;
  const Signature* sig_;
  const Kem* kem_;
};

// One sender's view of an AEAD key. Nonces are a 4-octet sender prefix
// followed by an 8-octet big-endian counter starting at 0, so two parties
// sharing a traffic key never collide.
class AeadKey {
 public:
  AeadKey(const Aead& alg, Secret key, std::uint32_t sender_prefix = 0);

  AeadCiphertext encrypt(ByteView nonce, ByteView ad, ByteView plaintext);
  AeadCiphertext encrypt_next(ByteView ad, ByteView plaintext);
  std::optional<Bytes> decrypt(ByteView nonce, ByteView ad, ByteView ct) const;
  std::optional<Bytes> decrypt(const AeadCiphertext& c) const;
  void wipe();

 private:
  const Aead* alg_;
  Secret key_;
  std::uint32_t prefix_;
  std::uint64_t next_ctr_ = 0;
  std::set<Bytes> used_;
  mutable std::mutex mu_;
};

}  // namespace qkdauth::primitives
