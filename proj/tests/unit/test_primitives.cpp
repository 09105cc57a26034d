#include <chrono>
#include <sstream>

#include "doctest.h"
#include "qkdauth/errors.hpp"
#include "qkdauth/primitives.hpp"
#include "support.hpp"

using namespace qkdauth;
using namespace qkdauth::primitives;
using testing::golden;
using testing::range_bytes;

namespace {

Bytes flip(Bytes b, std::size_t bit) {
  b[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
  return b;
}

}  // namespace

TEST_SUITE("primitives") {

TEST_CASE("hash matches published digests") {
  PrimitiveSuite suite;
  CHECK(suite.hash().digest({}) == golden("sha256_empty"));
  CHECK(suite.hash().digest(to_bytes("abc")) == golden("sha256_abc"));
  CHECK(suite.hash().width() == 32);
}

TEST_CASE("hash separates single-bit neighbours") {
  PrimitiveSuite suite;
  Drbg rng(11, "hash");
  for (int i = 0; i < 1000; ++i) {
    Bytes m = rng.bytes(1 + rng.next_u64() % 96);
    Bytes d = suite.hash().digest(m);
    CHECK(d.size() == suite.hash().width());
    CHECK(d == suite.hash().digest(m));
    CHECK(d != suite.hash().digest(flip(m, rng.next_u64() % (m.size() * 8))));
  }
}

TEST_CASE("prf golden vectors") {
  PrimitiveSuite suite;
  PrfKey k(range_bytes(64));
  CHECK(suite.prf().eval(k, to_bytes("qkdauth")).expose() == golden("prf_range_qkdauth"));
  CHECK(suite.prf().eval(k, {}).expose() == golden("prf_range_empty"));
  CHECK(suite.prf().output_width() == 64);
}

TEST_CASE("prf and its dual agree on random inputs") {
  PrimitiveSuite suite;
  Drbg rng(12, "dual");
  for (int i = 0; i < 100; ++i) {
    PrfKey k(rng.bytes(64 + rng.next_u64() % 64));
    Bytes m = rng.bytes(rng.next_u64() % 200);
    Secret a = suite.prf().eval(k, m);
    CHECK(a == suite.prf().eval_dual(m, k));
    CHECK(a == suite.prf().eval(k, m));
  }
}

TEST_CASE("prf rejects short keys and oversized input") {
  CHECK_THROWS_AS(PrfKey(Bytes(63, 1)), KeyTooShort);
  PrimitiveSuite suite;
  PrfKey k(range_bytes(64));
  CHECK_THROWS_AS(suite.prf().eval(k, Bytes(suite.prf().max_input() + 1, 0)), InputTooLong);
}

TEST_CASE("hmac-sha512 known answer") {
  PrimitiveSuite suite;
  CHECK(suite.mac().auth(Bytes(64, 0x0b), to_bytes("Hi There")) == golden("hmac_sha512_hi_there"));
}

TEST_CASE("mac verification") {
  PrimitiveSuite suite;
  Drbg rng(13, "mac");
  Bytes k = rng.bytes(64);
  Bytes m = to_bytes("tag me");
  MacTag t = suite.mac().auth(k, m);
  CHECK(suite.mac().verify(k, m, t));
  for (std::size_t bit = 0; bit < t.size() * 8; ++bit) CHECK_FALSE(suite.mac().verify(k, m, flip(t, bit)));
  for (int i = 0; i < 100; ++i) CHECK_FALSE(suite.mac().verify(rng.bytes(64), m, t));
  for (int i = 0; i < 1000; ++i) {
    Bytes key = rng.bytes(64);
    Bytes msg = rng.bytes(rng.next_u64() % 64);
    CHECK(suite.mac().verify(key, msg, suite.mac().auth(key, msg)));
  }
  CHECK_THROWS_AS(suite.mac().auth(Bytes(32, 1), m), KeyTooShort);
}

TEST_CASE("aead known answers") {
  const Bytes nonce = concat({from_hex("41414141"), u64be(0)});
  const Bytes ad = {0x03, 0x01};
  const auto& reg = Registry::builtin();
  CHECK(reg.aead("aes-256-gcm").seal(range_bytes(64), nonce, ad, to_bytes("hello")) == golden("aes_gcm_hello"));
  CHECK(reg.aead("chacha20-poly1305").seal(range_bytes(64), nonce, ad, to_bytes("hello")) ==
        golden("chacha_hello"));

  AeadKey key(reg.aead("aes-256-gcm"), Secret(range_bytes(64)), 0x41414141);
  AeadCiphertext c = key.encrypt_next(ad, to_bytes("hello"));
  CHECK(c.nonce == nonce);
  CHECK(c.bytes == golden("aes_gcm_hello"));
}

TEST_CASE("aead round trip and ciphertext integrity") {
  PrimitiveSuite suite;
  Drbg rng(14, "aead");
  AeadKey key(suite.aead(), Secret(rng.bytes(64)), 7);
  for (int i = 0; i < 1000; ++i) {
    Bytes pt = rng.bytes(rng.next_u64() % 80);
    Bytes ad = rng.bytes(2);
    AeadCiphertext c = key.encrypt_next(ad, pt);
    CHECK(c.bytes.size() == pt.size() + suite.aead().tag_len());
    CHECK(key.decrypt(c) == pt);
  }

  AeadCiphertext c = key.encrypt_next(Bytes{2, 4}, to_bytes("short"));
  for (std::size_t bit = 0; bit < c.bytes.size() * 8; ++bit) {
    AeadCiphertext bad = c;
    bad.bytes = flip(c.bytes, bit);
    CHECK_FALSE(key.decrypt(bad));
  }
  for (std::size_t bit = 0; bit < c.nonce.size() * 8; ++bit) {
    AeadCiphertext bad = c;
    bad.nonce = flip(c.nonce, bit);
    CHECK_FALSE(key.decrypt(bad));
  }
  for (std::size_t bit = 0; bit < c.associated_data.size() * 8; ++bit) {
    AeadCiphertext bad = c;
    bad.associated_data = flip(c.associated_data, bit);
    CHECK_FALSE(key.decrypt(bad));
  }
}

TEST_CASE("aead refuses a repeated nonce") {
  PrimitiveSuite suite;
  AeadKey key(suite.aead(), Secret(range_bytes(64)));
  Bytes nonce(kAeadNonceLen, 9);
  key.encrypt(nonce, {}, to_bytes("one"));
  CHECK_THROWS_AS(key.encrypt(nonce, {}, to_bytes("two")), NonceReuse);
  CHECK_THROWS_AS(AeadKey(suite.aead(), Secret(Bytes(32, 1))), KeyTooShort);
}

TEST_CASE("signatures") {
  PrimitiveSuite suite;
  Drbg rng(15, "sig");
  const Instant t0{0};
  const Duration life = std::chrono::seconds(3600);
  auto kp = suite.sig().keygen(t0, life, &rng);
  CHECK(kp.pk.size() == suite.sig().public_key_len());
  Bytes m = to_bytes("the message");
  SigTag s = suite.sig().sign(kp, m, t0, &rng);
  CHECK(suite.sig().verify(kp.pk, m, s));
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(suite.sig().verify(kp.pk, rng.bytes(1 + i % 40), s));
  CHECK_FALSE(suite.sig().verify(kp.pk, m, Bytes(3, 0)));
  CHECK_FALSE(suite.sig().verify(kp.pk, m, flip(s, 17)));
  CHECK_THROWS_AS(suite.sig().sign(kp, m, t0 + life, &rng), KeyExpired);
}

TEST_CASE("signature correctness over many messages") {
  PrimitiveSuite suite;
  Drbg rng(16, "sig-many");
  auto kp = suite.sig().keygen(Instant{0}, std::chrono::seconds(60), &rng);
  for (int i = 0; i < 1000; ++i) {
    Bytes m = rng.bytes(1 + i % 64);
    CHECK(suite.sig().verify(kp.pk, m, suite.sig().sign(kp, m, Instant{0}, &rng)));
  }
}

TEST_CASE("expiry is monotone") {
  SignatureKeyPair kp;
  kp.created_at = Instant{100};
  kp.lifetime = Duration{50};
  CHECK_FALSE(kp.expired(Instant{149}));
  for (long t = 150; t < 400; t += 7) CHECK(kp.expired(Instant{t}));
}

TEST_CASE("kem") {
  PrimitiveSuite suite;
  Drbg rng(17, "kem");
  const Instant t0{0};
  auto kp = suite.kem().keygen(t0, std::chrono::seconds(60), &rng);
  for (int i = 0; i < 1000; ++i) {
    Encapsulation e = suite.kem().encapsulate(kp.pk, &rng);
    CHECK(e.ciphertext.size() == suite.kem().ciphertext_len());
    auto k = suite.kem().decapsulate(kp, e.ciphertext, t0);
    REQUIRE(k);
    CHECK(*k == e.shared);
  }
  for (int i = 0; i < 100; ++i)
    CHECK_FALSE(suite.kem().decapsulate(kp, rng.bytes(suite.kem().ciphertext_len()), t0));

  auto other = suite.kem().keygen(t0, std::chrono::seconds(60), &rng);
  Encapsulation e = suite.kem().encapsulate(kp.pk, &rng);
  auto wrong = suite.kem().decapsulate(other, e.ciphertext, t0);
  CHECK((!wrong || !(*wrong == e.shared)));
  CHECK_THROWS_AS(suite.kem().decapsulate(kp, e.ciphertext, t0 + std::chrono::seconds(60)), KeyExpired);
}

TEST_CASE("suite config and registry") {
  auto cfg = parse_suite_config("suite.hash=sha-512\nsuite.aead=chacha20-poly1305 # comment\nsuite.t_hpt_seconds=60\n");
  CHECK(cfg.hash == "sha-512");
  CHECK(cfg.t_hpt_seconds == 60);
  PrimitiveSuite suite(cfg);
  CHECK(suite.aead().id() == "chacha20-poly1305");
  CHECK(suite.t_hpt() == std::chrono::seconds(60));
  SuiteConfig bad;
  bad.kem = "rsa";
  CHECK_THROWS_AS(PrimitiveSuite{bad}, UnknownAlgorithm);
  AdvantageParams p;
  p.adv_prf = 2;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("secrets redact and compare by content") {
  Secret a(Bytes(64, 5)), b(Bytes(64, 5)), c(Bytes(64, 6));
  CHECK(a == b);
  CHECK_FALSE(a == c);
  std::ostringstream os;
  os << a;
  CHECK(os.str().find("05") == std::string::npos);
  CHECK(os.str().find("64") != std::string::npos);
}

TEST_CASE("drbg is reproducible") {
  Drbg x(99, "lbl"), y(99, "lbl"), z(99, "other");
  Bytes a = x.bytes(32);
  CHECK(a == y.bytes(32));
  CHECK(a != z.bytes(32));
}

}  // TEST_SUITE
