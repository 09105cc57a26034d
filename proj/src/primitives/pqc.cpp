#include <openssl/evp.h>

#include "qkdauth/primitives.hpp"
#include "symmetric_impl.hpp"

extern "C" {
#include "ml-dsa-44/api.h"
#include "ml-dsa-65/api.h"
#include "ml-dsa-87/api.h"
#include "ml-kem-1024/api.h"
#include "ml-kem-512/api.h"
#include "ml-kem-768/api.h"
}

namespace qkdauth::primitives::detail {

namespace {

struct SigBinding {
  const char* id;
  std::size_t pk_len, sk_len, sig_len;
  int (*keypair)(std::uint8_t*, std::uint8_t*);
  int (*sign)(std::uint8_t*, std::size_t*, const std::uint8_t*, std::size_t, const std::uint8_t*, std::size_t,
              const std::uint8_t*);
  int (*verify)(const std::uint8_t*, std::size_t, const std::uint8_t*, std::size_t, const std::uint8_t*,
                std::size_t, const std::uint8_t*);
};

struct KemBinding {
  const char* id;
  std::size_t pk_len, sk_len, ct_len, ss_len;
  int (*keypair)(std::uint8_t*, std::uint8_t*);
  int (*enc)(std::uint8_t*, std::uint8_t*, const std::uint8_t*);
  int (*dec)(std::uint8_t*, const std::uint8_t*, const std::uint8_t*);
};

#define QKDAUTH_SIG(ID, NS)                                                                     \
  SigBinding {                                                                                  \
    ID, PQCLEAN_##NS##_CLEAN_CRYPTO_PUBLICKEYBYTES, PQCLEAN_##NS##_CLEAN_CRYPTO_SECRETKEYBYTES, \
        PQCLEAN_##NS##_CLEAN_CRYPTO_BYTES, PQCLEAN_##NS##_CLEAN_crypto_sign_keypair,            \
        PQCLEAN_##NS##_CLEAN_crypto_sign_signature_ctx, PQCLEAN_##NS##_CLEAN_crypto_sign_verify_ctx \
  }

#define QKDAUTH_KEM(ID, NS)                                                                     \
  KemBinding {                                                                                  \
    ID, PQCLEAN_##NS##_CLEAN_CRYPTO_PUBLICKEYBYTES, PQCLEAN_##NS##_CLEAN_CRYPTO_SECRETKEYBYTES, \
        PQCLEAN_##NS##_CLEAN_CRYPTO_CIPHERTEXTBYTES, PQCLEAN_##NS##_CLEAN_CRYPTO_BYTES,         \
        PQCLEAN_##NS##_CLEAN_crypto_kem_keypair, PQCLEAN_##NS##_CLEAN_crypto_kem_enc,           \
        PQCLEAN_##NS##_CLEAN_crypto_kem_dec                                                     \
  }

class PqcleanSignature final : public Signature {
 public:
  explicit PqcleanSignature(SigBinding b) : b_(b) {}
  std::string_view id() const override { return b_.id; }
  std::size_t public_key_len() const override { return b_.pk_len; }
  std::size_t signature_len() const override { return b_.sig_len; }

  SignatureKeyPair keygen(Instant now, Duration lifetime, Drbg* rng) const override {
    ScopedPqcRandomness scope(rng);
    Bytes pk(b_.pk_len), sk(b_.sk_len);
    if (b_.keypair(pk.data(), sk.data()) != 0) throw std::runtime_error("signature keygen failed");
    return {b_.id, Secret(std::move(sk)), std::move(pk), now, lifetime};
  }

  SigTag sign(const SignatureKeyPair& kp, ByteView msg, Instant now, Drbg* rng) const override {
    if (kp.expired(now)) throw KeyExpired(std::string(b_.id) + " signing key past its lifetime");
    if (kp.sk.size() != b_.sk_len) throw DomainError("signing key has the wrong length");
    ScopedPqcRandomness scope(rng);
    Bytes sig(b_.sig_len);
    std::size_t len = 0;
    if (b_.sign(sig.data(), &len, msg.data(), msg.size(), nullptr, 0, kp.sk.view().data()) != 0)
      throw std::runtime_error("signing failed");
    sig.resize(len);
    return sig;
  }

  bool verify(ByteView pk, ByteView msg, ByteView sig) const override {
    if (pk.size() != b_.pk_len || sig.size() != b_.sig_len) return false;
    return b_.verify(sig.data(), sig.size(), msg.data(), msg.size(), nullptr, 0, pk.data()) == 0;
  }

 private:
  SigBinding b_;
};

// ML-KEM rejects implicitly. A confirmation digest over (shared key,
// ciphertext) is appended so a mismatching decapsulation surfaces as an
// explicit failure.
class ConfirmedKem final : public Kem {
 public:
  static constexpr std::size_t kConfirmLen = 32;

  explicit ConfirmedKem(KemBinding b) : b_(b) {}
  std::string_view id() const override { return b_.id; }
  std::size_t public_key_len() const override { return b_.pk_len; }
  std::size_t ciphertext_len() const override { return b_.ct_len + kConfirmLen; }

  KemKeyPair keygen(Instant now, Duration lifetime, Drbg* rng) const override {
    ScopedPqcRandomness scope(rng);
    Bytes pk(b_.pk_len), sk(b_.sk_len);
    if (b_.keypair(pk.data(), sk.data()) != 0) throw std::runtime_error("KEM keygen failed");
    return {b_.id, Secret(std::move(sk)), std::move(pk), now, lifetime};
  }

  Encapsulation encapsulate(ByteView pk, Drbg* rng) const override {
    if (pk.size() != b_.pk_len) throw DomainError("KEM public key has the wrong length");
    ScopedPqcRandomness scope(rng);
    Bytes ct(b_.ct_len), ss(b_.ss_len);
    if (b_.enc(ct.data(), ss.data(), pk.data()) != 0) throw std::runtime_error("encapsulation failed");
    append(ct, confirm(ss, ByteView(ct.data(), b_.ct_len)));
    return {Secret(std::move(ss)), std::move(ct)};
  }

  std::optional<Secret> decapsulate(const KemKeyPair& kp, ByteView ct, Instant now) const override {
    if (kp.expired(now)) throw KeyExpired(std::string(b_.id) + " decapsulation key past its lifetime");
    if (ct.size() != ciphertext_len() || kp.sk.size() != b_.sk_len) return std::nullopt;
    Bytes ss(b_.ss_len);
    if (b_.dec(ss.data(), ct.data(), kp.sk.view().data()) != 0) {
      secure_wipe(ss);
      return std::nullopt;
    }
    Bytes expected = confirm(ss, ct.first(b_.ct_len));
    if (!ct_equal(expected, ct.subspan(b_.ct_len))) {
      secure_wipe(ss);
      return std::nullopt;
    }
    return Secret(std::move(ss));
  }

 private:
  static Bytes confirm(ByteView ss, ByteView ct) {
    Bytes in = to_bytes(kKemConfirmDomain);
    append(in, ss);
    append(in, ct);
    Bytes out(kConfirmLen);
    unsigned int len = 0;
    EVP_Digest(in.data(), in.size(), out.data(), &len, EVP_sha3_256(), nullptr);
    secure_wipe(in);
    return out;
  }

  KemBinding b_;
};

}  // namespace

void register_pqc(std::vector<std::unique_ptr<Signature>>& sigs, std::vector<std::unique_ptr<Kem>>& kems) {
  sigs.push_back(std::make_unique<PqcleanSignature>(QKDAUTH_SIG("ml-dsa-44", MLDSA44)));
  sigs.push_back(std::make_unique<PqcleanSignature>(QKDAUTH_SIG("ml-dsa-65", MLDSA65)));
  sigs.push_back(std::make_unique<PqcleanSignature>(QKDAUTH_SIG("ml-dsa-87", MLDSA87)));
  kems.push_back(std::make_unique<ConfirmedKem>(QKDAUTH_KEM("ml-kem-512", MLKEM512)));
  kems.push_back(std::make_unique<ConfirmedKem>(QKDAUTH_KEM("ml-kem-768", MLKEM768)));
  kems.push_back(std::make_unique<ConfirmedKem>(QKDAUTH_KEM("ml-kem-1024", MLKEM1024)));
}

}  // namespace qkdauth::primitives::detail
