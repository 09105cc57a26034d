#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstring>

#include "qkdauth/primitives.hpp"

namespace qkdauth::primitives {

Instant SteadyClock::now() const {
  return std::chrono::duration_cast<Instant>(std::chrono::steady_clock::now().time_since_epoch());
}

Instant ManualClock::now() const {
  std::lock_guard lk(mu_);
  return now_;
}

void ManualClock::advance(Duration d) {
  std::lock_guard lk(mu_);
  now_ += d;
}

void ManualClock::set(Instant t) {
  std::lock_guard lk(mu_);
  if (t < now_) throw DomainError("manual clock cannot run backwards");
  now_ = t;
}

struct Drbg::State {
  EVP_CIPHER_CTX* ctx = nullptr;
  ~State() { EVP_CIPHER_CTX_free(ctx); }
};

namespace {
constexpr std::string_view kDrbgDomain = "qkdauth/drbg/chacha20";
}

Drbg::Drbg(std::uint64_t seed, std::string_view label) : Drbg(ByteView(u64be(seed)), label) {}

Drbg::Drbg(ByteView seed_material, std::string_view label) : state_(std::make_unique<State>()) {
  Bytes in = to_bytes(kDrbgDomain);
  put_u32be(in, static_cast<std::uint32_t>(seed_material.size()));
  append(in, seed_material);
  put_u32be(in, static_cast<std::uint32_t>(label.size()));
  append(in, to_bytes(label));
  unsigned char key[SHA256_DIGEST_LENGTH];
  SHA256(in.data(), in.size(), key);
  unsigned char iv[16] = {0};
  state_->ctx = EVP_CIPHER_CTX_new();
  if (!state_->ctx || EVP_EncryptInit_ex(state_->ctx, EVP_chacha20(), nullptr, key, iv) != 1)
    throw std::runtime_error("chacha20 init failed");
  OPENSSL_cleanse(key, sizeof key);
}

Drbg::Drbg(Drbg&&) noexcept = default;
Drbg& Drbg::operator=(Drbg&&) noexcept = default;
Drbg::~Drbg() = default;

void Drbg::fill(std::span<std::uint8_t> out) {
  static const std::uint8_t zeros[256] = {0};
  std::size_t done = 0;
  while (done < out.size()) {
    int chunk = static_cast<int>(std::min<std::size_t>(sizeof zeros, out.size() - done));
    int outl = 0;
    if (EVP_EncryptUpdate(state_->ctx, out.data() + done, &outl, zeros, chunk) != 1 || outl != chunk)
      throw std::runtime_error("chacha20 keystream failed");
    done += static_cast<std::size_t>(chunk);
  }
}

Bytes Drbg::bytes(std::size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

std::uint64_t Drbg::next_u64() {
  std::uint8_t b[8];
  fill(b);
  return get_u64be(ByteView(b, 8), 0);
}

double Drbg::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

bool Drbg::bernoulli(double p) {
  if (p <= 0) return false;
  if (p >= 1) return true;
  return uniform() < p;
}

Drbg Drbg::fork(std::string_view label) {
  Bytes seed = bytes(32);
  Drbg child(ByteView(seed), label);
  secure_wipe(seed);
  return child;
}

namespace {
thread_local Drbg* tls_rng = nullptr;
}

ScopedPqcRandomness::ScopedPqcRandomness(Drbg* rng) : previous_(tls_rng) { tls_rng = rng; }
ScopedPqcRandomness::~ScopedPqcRandomness() { tls_rng = previous_; }

}  // namespace qkdauth::primitives

extern "C" int QKDAUTH_pqclean_randombytes(std::uint8_t* output, std::size_t n) {
  using qkdauth::primitives::tls_rng;
  if (tls_rng) {
    tls_rng->fill(std::span<std::uint8_t>(output, n));
    return 0;
  }
  while (n > 0) {
    int chunk = static_cast<int>(std::min<std::size_t>(n, 1 << 20));
    if (RAND_bytes(output, chunk) != 1) return -1;
    output += chunk;
    n -= static_cast<std::size_t>(chunk);
  }
  return 0;
}
