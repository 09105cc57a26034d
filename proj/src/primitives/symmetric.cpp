#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <memory>

#include "qkdauth/primitives.hpp"
#include "symmetric_impl.hpp"

namespace qkdauth::primitives {

PrfKey::PrfKey(Bytes bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() < kMinSymmetricKeyLen)
    throw KeyTooShort("PRF key of " + std::to_string(bytes_.size()) + " octets, need " +
                      std::to_string(kMinSymmetricKeyLen));
}

bool Mac::verify(ByteView key, ByteView msg, ByteView tag) const {
  if (key.size() < kMinSymmetricKeyLen || tag.size() != tag_len()) return false;
  Bytes expected = auth(key, msg);
  return ct_equal(expected, tag);
}

namespace detail {

namespace {

Bytes evp_digest(const EVP_MD* md, ByteView msg) {
  Bytes out(static_cast<std::size_t>(EVP_MD_get_size(md)));
  unsigned int len = 0;
  if (EVP_Digest(msg.data(), msg.size(), out.data(), &len, md, nullptr) != 1)
    throw std::runtime_error("digest failed");
  out.resize(len);
  return out;
}

Bytes hmac(const EVP_MD* md, ByteView key, ByteView msg) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!HMAC(md, key.data(), static_cast<int>(key.size()), msg.data(), msg.size(), out.data(), &len))
    throw std::runtime_error("hmac failed");
  out.resize(len);
  return out;
}

class EvpHash final : public Hash {
 public:
  EvpHash(std::string id, const EVP_MD* md) : id_(std::move(id)), md_(md) {}
  std::string_view id() const override { return id_; }
  std::size_t width() const override { return static_cast<std::size_t>(EVP_MD_get_size(md_)); }
  Digest digest(ByteView msg) const override { return evp_digest(md_, msg); }

 private:
  std::string id_;
  const EVP_MD* md_;
};

// HMAC keyed by a fixed domain constant over len(k) || k || len(m) || m.
class CanonicalHmacPrf final : public Prf {
 public:
  CanonicalHmacPrf(std::string id, const EVP_MD* md, std::string domain)
      : id_(std::move(id)), md_(md), domain_(to_bytes(domain)) {}
  std::string_view id() const override { return id_; }
  std::size_t output_width() const override { return static_cast<std::size_t>(EVP_MD_get_size(md_)); }
  std::size_t max_input() const override { return kMaxPrfInput; }

  Secret eval(const PrfKey& key, ByteView msg) const override {
    if (msg.size() > kMaxPrfInput) throw InputTooLong("PRF message of " + std::to_string(msg.size()) + " octets");
    if (key.size() > kMaxPrfInput) throw InputTooLong("PRF key of " + std::to_string(key.size()) + " octets");
    Bytes enc;
    enc.reserve(8 + key.size() + msg.size());
    put_u32be(enc, static_cast<std::uint32_t>(key.size()));
    append(enc, key.view());
    put_u32be(enc, static_cast<std::uint32_t>(msg.size()));
    append(enc, msg);
    Secret out(hmac(md_, domain_, enc));
    secure_wipe(enc);
    return out;
  }

 private:
  std::string id_;
  const EVP_MD* md_;
  Bytes domain_;
};

class HmacMac final : public Mac {
 public:
  HmacMac(std::string id, const EVP_MD* md) : id_(std::move(id)), md_(md) {}
  std::string_view id() const override { return id_; }
  std::size_t tag_len() const override { return static_cast<std::size_t>(EVP_MD_get_size(md_)); }
  MacTag auth(ByteView key, ByteView msg) const override {
    if (key.size() < kMinSymmetricKeyLen)
      throw KeyTooShort("MAC key of " + std::to_string(key.size()) + " octets");
    return hmac(md_, key, msg);
  }

 private:
  std::string id_;
  const EVP_MD* md_;
};

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

class EvpAead final : public Aead {
 public:
  EvpAead(std::string id, const EVP_CIPHER* cipher) : id_(std::move(id)), cipher_(cipher) {}
  std::string_view id() const override { return id_; }
  std::size_t key_len() const override { return 32; }
  std::size_t tag_len() const override { return 16; }

  Bytes seal(ByteView key, ByteView nonce, ByteView ad, ByteView pt) const override {
    check_key(key);
    if (nonce.size() != kAeadNonceLen) throw DomainError("AEAD nonce must be 12 octets");
    CtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    Bytes out(pt.size() + tag_len());
    bool ok = ctx && EVP_EncryptInit_ex(ctx.get(), cipher_, nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, 12, nullptr) == 1 &&
              EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) == 1 &&
              EVP_EncryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) == 1 &&
              EVP_EncryptUpdate(ctx.get(), out.data(), &len, pt.data(), static_cast<int>(pt.size())) == 1 &&
              EVP_EncryptFinal_ex(ctx.get(), out.data() + len, &len) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, 16, out.data() + pt.size()) == 1;
    if (!ok) throw std::runtime_error("AEAD seal failed");
    return out;
  }

  std::optional<Bytes> open(ByteView key, ByteView nonce, ByteView ad, ByteView ct) const override {
    if (key.size() < kMinSymmetricKeyLen || nonce.size() != kAeadNonceLen || ct.size() < tag_len())
      return std::nullopt;
    std::size_t body = ct.size() - tag_len();
    CtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    Bytes out(body);
    Bytes tag(ct.begin() + static_cast<std::ptrdiff_t>(body), ct.end());
    bool ok = ctx && EVP_DecryptInit_ex(ctx.get(), cipher_, nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_IVLEN, 12, nullptr) == 1 &&
              EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) == 1 &&
              EVP_DecryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) == 1 &&
              EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.data(), static_cast<int>(body)) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, 16, tag.data()) == 1 &&
              EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &len) == 1;
    if (!ok) {
      secure_wipe(out);
      return std::nullopt;
    }
    return out;
  }

 private:
  static void check_key(ByteView key) {
    if (key.size() < kMinSymmetricKeyLen)
      throw KeyTooShort("AEAD key of " + std::to_string(key.size()) + " octets");
  }

  std::string id_;
  const EVP_CIPHER* cipher_;
};

}  // namespace

void register_symmetric(std::vector<std::unique_ptr<Hash>>& hashes, std::vector<std::unique_ptr<Prf>>& prfs,
                        std::vector<std::unique_ptr<Mac>>& macs, std::vector<std::unique_ptr<Aead>>& aeads) {
  hashes.push_back(std::make_unique<EvpHash>("sha-256", EVP_sha256()));
  hashes.push_back(std::make_unique<EvpHash>("sha-384", EVP_sha384()));
  hashes.push_back(std::make_unique<EvpHash>("sha-512", EVP_sha512()));
  hashes.push_back(std::make_unique<EvpHash>("sha3-256", EVP_sha3_256()));
  hashes.push_back(std::make_unique<EvpHash>("sha3-512", EVP_sha3_512()));
  prfs.push_back(std::make_unique<CanonicalHmacPrf>("hmac-sha512-dual", EVP_sha512(), std::string(kPrfDomain)));
  prfs.push_back(std::make_unique<CanonicalHmacPrf>("hmac-sha3-512-dual", EVP_sha3_512(), std::string(kPrfDomain)));
  macs.push_back(std::make_unique<HmacMac>("hmac-sha512", EVP_sha512()));
  macs.push_back(std::make_unique<HmacMac>("hmac-sha256", EVP_sha256()));
  macs.push_back(std::make_unique<HmacMac>("hmac-sha3-512", EVP_sha3_512()));
  aeads.push_back(std::make_unique<EvpAead>("aes-256-gcm", EVP_aes_256_gcm()));
  aeads.push_back(std::make_unique<EvpAead>("chacha20-poly1305", EVP_chacha20_poly1305()));
}

}  // namespace detail

AeadKey::AeadKey(const Aead& alg, Secret key, std::uint32_t sender_prefix)
    : alg_(&alg), key_(std::move(key)), prefix_(sender_prefix) {
  if (key_.size() < kMinSymmetricKeyLen)
    throw KeyTooShort("AEAD key of " + std::to_string(key_.size()) + " octets");
}

AeadCiphertext AeadKey::encrypt(ByteView nonce, ByteView ad, ByteView plaintext) {
  std::lock_guard lk(mu_);
  Bytes n(nonce.begin(), nonce.end());
  if (!used_.insert(n).second) throw NonceReuse("nonce " + to_hex(n) + " already used under this key");
  return {n, Bytes(ad.begin(), ad.end()), alg_->seal(key_.view(), n, ad, plaintext)};
}

AeadCiphertext AeadKey::encrypt_next(ByteView ad, ByteView plaintext) {
  Bytes nonce;
  {
    std::lock_guard lk(mu_);
    do {
      nonce.clear();
      put_u32be(nonce, prefix_);
      put_u64be(nonce, next_ctr_++);
    } while (used_.count(nonce));
  }
  return encrypt(nonce, ad, plaintext);
}

std::optional<Bytes> AeadKey::decrypt(ByteView nonce, ByteView ad, ByteView ct) const {
  return alg_->open(key_.view(), nonce, ad, ct);
}

std::optional<Bytes> AeadKey::decrypt(const AeadCiphertext& c) const {
  return decrypt(c.nonce, c.associated_data, c.bytes);
}

void AeadKey::wipe() {
  std::lock_guard lk(mu_);
  key_.wipe();
}

}  // namespace qkdauth::primitives
