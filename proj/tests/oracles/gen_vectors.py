#!/usr/bin/env python3
"""Independent oracle for the golden vectors in tests/golden/vectors.inc.

Uses only hashlib, hmac and the `cryptography` package. Run once and commit
the output; the C++ tests compare against the frozen file.
"""
import hashlib
import hmac
import struct
import sys

from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

PRF_DOMAIN = b"qkdauth/dual-prf/v1"
SIGMA, KEM, MAC = 1, 2, 3


def u32(n):
    return struct.pack(">I", n)


def u64(n):
    return struct.pack(">Q", n)


def prf(k, m):
    return hmac.new(PRF_DOMAIN, u32(len(k)) + k + u32(len(m)) + m, hashlib.sha512).digest()


def h(m):
    return hashlib.sha256(m).digest()


def label(p, name):
    return bytes([p]) + name.encode()


def ctr_part(ctr):
    return b"" if ctr is None else u64(ctr)


def tagged(p, name, prefix, ctr=None):
    return label(p, name) + ctr_part(ctr) + h(prefix)


def k0(p, ss, m_qkd, na, nb):
    return prf(ss, tagged(p, "l0", m_qkd + na + nb))


def k1(p, sec, k0v, ctr=None):
    return prf(sec, label(p, "l1") + ctr_part(ctr) + k0v)


def traffic(p, k, name, prefix, ctr=None):
    return prf(k, label(p, name) + ctr_part(ctr) + h(prefix))


def main():
    ss = bytes([0x11]) * 64
    m_qkd = b"m_qkd transcript"
    na = bytes([0xAA]) * 32
    nb = bytes([0xBB]) * 32
    sec0 = bytes(64)
    key64 = bytes(range(64))
    kb = bytes([0x22]) * 32
    ka = bytes([0x33]) * 32

    v = {}
    v["sha256_empty"] = h(b"")
    v["sha256_abc"] = h(b"abc")
    v["prf_range_qkdauth"] = prf(key64, b"qkdauth")
    v["prf_range_empty"] = prf(key64, b"")
    v["hmac_sha512_hi_there"] = hmac.new(bytes([0x0B]) * 64, b"Hi There", hashlib.sha512).digest()
    nonce = u32(0x41414141) + u64(0)
    v["aes_gcm_hello"] = AESGCM(key64[:32]).encrypt(nonce, b"hello", bytes([MAC, 1]))
    v["chacha_hello"] = ChaCha20Poly1305(key64[:32]).encrypt(nonce, b"hello", bytes([MAC, 1]))
    v["label_kem_tsa1"] = label(KEM, "lTSA1")
    s_k0 = k0(SIGMA, ss, m_qkd, na, nb)
    v["sigma_k0"] = s_k0
    s_k1 = k1(SIGMA, sec0, s_k0)
    v["sigma_k1"] = s_k1
    pre2 = m_qkd + na + nb
    v["sigma_tsa"] = traffic(SIGMA, s_k1, "lTSA", pre2)
    v["sigma_macb1"] = traffic(SIGMA, s_k1, "lMACB1", pre2)
    v["sigma_tagged_sb"] = tagged(SIGMA, "lSB", pre2 + b"cert")
    k_k0 = k0(KEM, ss, m_qkd, na, nb)
    k_k1 = k1(KEM, sec0, k_k0)
    k_k2 = prf(k_k1, label(KEM, "l2") + kb)
    k_k3 = prf(k_k2, label(KEM, "l3") + ka)
    v["kem_k1"] = k_k1
    v["kem_k2"] = k_k2
    v["kem_k3"] = k_k3
    v["kem_secstate"] = prf(k_k3, tagged(KEM, "lSecState", b"all of it"))
    m_k1 = k1(MAC, sec0, key64, 7)
    v["mac_k1_ctr7"] = m_k1
    v["mac_tsa_ctr7"] = traffic(MAC, m_k1, "lTSA", m_qkd, 7)
    v["mac_secstate_ctr7"] = prf(m_k1, tagged(MAC, "lSecState", b"all of it", 7))

    out = sys.stdout
    out.write("// Generated by tests/oracles/gen_vectors.py; do not edit.\n")
    for name, value in v.items():
        out.write('{"%s", "%s"},\n' % (name, value.hex()))


if __name__ == "__main__":
    main()
