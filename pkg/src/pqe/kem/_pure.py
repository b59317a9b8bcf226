"""Pure-Python ML-KEM-768 (FIPS 203, August 2024).

Fallback backend for interpreters whose OpenSSL lacks ML-KEM, and the only
backend able to expand a 64-byte (d || z) seed into the 2400-byte
decapsulation key or to run encapsulation deterministically for
known-answer tests. The compiled OpenSSL backend (see _native) is preferred
whenever available; tests cross-validate the two byte-for-byte.

Operates over Z_q[X]/(X^256 + 1), q = 3329, module rank k = 3.
Sizes: ek 1184 B, dk 2400 B, ciphertext 1088 B, shared secret 32 B.

Not side-channel hardened: CPython arithmetic is variable-time. The native
backend carries the production traffic; this one exists for correctness,
portability, and auditability.
"""

import hashlib
import hmac

Q = 3329
N = 256
K = 3                   # module rank (ML-KEM-768)
ETA1 = 2
ETA2 = 2
DU = 10
DV = 4

EK_LEN = 384 * K + 32   # 1184
DK_LEN = 768 * K + 96   # 2400
CT_LEN = 32 * (DU * K + DV)  # 1088
SS_LEN = 32
SEED_LEN = 64           # d || z


def _bitrev7(i: int) -> int:
    r = 0
    for _ in range(7):
        r = (r << 1) | (i & 1)
        i >>= 1
    return r


# zeta = 17 is a primitive 256th root of unity mod q.
_ZETAS = [pow(17, _bitrev7(i), Q) for i in range(128)]
# BaseCaseMultiply constants: zeta^(2*BitRev7(i)+1) for the 128 quadratic factors.
_GAMMAS = [pow(17, 2 * _bitrev7(i) + 1, Q) for i in range(128)]
_INV_128 = pow(128, -1, Q)


# ---------------------------------------------------------------------------
# Hash/XOF wrappers (FIPS 203 section 4.1)
# ---------------------------------------------------------------------------

def _g(data: bytes) -> tuple[bytes, bytes]:
    d = hashlib.sha3_512(data).digest()
    return d[:32], d[32:]


def _h(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def _j(data: bytes) -> bytes:
    return hashlib.shake_256(data).digest(32)


def _prf(eta: int, s: bytes, b: int) -> bytes:
    return hashlib.shake_256(s + bytes([b])).digest(64 * eta)


# ---------------------------------------------------------------------------
# NTT (FIPS 203 algorithms 9-12)
# ---------------------------------------------------------------------------

def _ntt(f: list[int]) -> list[int]:
    f = f[:]
    i = 1
    length = 128
    while length >= 2:
        for start in range(0, 256, 2 * length):
            zeta = _ZETAS[i]
            i += 1
            for j in range(start, start + length):
                t = zeta * f[j + length] % Q
                f[j + length] = (f[j] - t) % Q
                f[j] = (f[j] + t) % Q
        length >>= 1
    return f


def _ntt_inv(f: list[int]) -> list[int]:
    f = f[:]
    i = 127
    length = 2
    while length <= 128:
        for start in range(0, 256, 2 * length):
            zeta = _ZETAS[i]
            i -= 1
            for j in range(start, start + length):
                t = f[j]
                f[j] = (t + f[j + length]) % Q
                f[j + length] = zeta * (f[j + length] - t) % Q
        length <<= 1
    return [x * _INV_128 % Q for x in f]


def _mul_ntt(f: list[int], g: list[int]) -> list[int]:
    h = [0] * 256
    for i in range(128):
        a0, a1 = f[2 * i], f[2 * i + 1]
        b0, b1 = g[2 * i], g[2 * i + 1]
        h[2 * i] = (a0 * b0 + a1 * b1 % Q * _GAMMAS[i]) % Q
        h[2 * i + 1] = (a0 * b1 + a1 * b0) % Q
    return h


def _add(f: list[int], g: list[int]) -> list[int]:
    return [(a + b) % Q for a, b in zip(f, g)]


def _sub(f: list[int], g: list[int]) -> list[int]:
    return [(a - b) % Q for a, b in zip(f, g)]


# ---------------------------------------------------------------------------
# Sampling (FIPS 203 algorithms 7-8)
# ---------------------------------------------------------------------------

def _sample_ntt(seed34: bytes) -> list[int]:
    """Rejection-sample a uniform NTT-domain polynomial from SHAKE-128."""
    xof = hashlib.shake_128(seed34)
    want = 840  # 280 candidate pairs; ~0.4 expected shortfall retries overall
    stream = xof.digest(want)
    coeffs: list[int] = []
    pos = 0
    while len(coeffs) < 256:
        if pos + 3 > len(stream):
            want *= 2
            stream = xof.digest(want)  # SHAKE output is prefix-stable
        b0, b1, b2 = stream[pos], stream[pos + 1], stream[pos + 2]
        pos += 3
        d1 = b0 + 256 * (b1 & 0x0F)
        d2 = (b1 >> 4) + 16 * b2
        if d1 < Q:
            coeffs.append(d1)
        if d2 < Q and len(coeffs) < 256:
            coeffs.append(d2)
    return coeffs


def _sample_cbd(eta: int, data: bytes) -> list[int]:
    """Centered binomial distribution with parameter eta (here always 2)."""
    bits = []
    for byte in data:
        for k in range(8):
            bits.append((byte >> k) & 1)
    f = []
    for i in range(256):
        x = sum(bits[2 * i * eta + j] for j in range(eta))
        y = sum(bits[2 * i * eta + eta + j] for j in range(eta))
        f.append((x - y) % Q)
    return f


# ---------------------------------------------------------------------------
# Encoding and compression (FIPS 203 section 4.2.1)
# ---------------------------------------------------------------------------

def _byte_encode(d: int, f: list[int]) -> bytes:
    out = bytearray()
    acc = 0
    acc_bits = 0
    for c in f:
        acc |= c << acc_bits
        acc_bits += d
        while acc_bits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            acc_bits -= 8
    return bytes(out)


def _byte_decode(d: int, data: bytes) -> list[int]:
    # FIPS 203 ByteDecode_d: coefficients reduce mod 2^d, except d = 12
    # which reduces mod q (this is what lets the section 7.2 modulus check
    # detect out-of-range encodings).
    mask = (1 << d) - 1
    modulus = Q if d == 12 else None
    f = []
    acc = 0
    acc_bits = 0
    pos = 0
    while len(f) < 256:
        while acc_bits < d:
            acc |= data[pos] << acc_bits
            acc_bits += 8
            pos += 1
        c = acc & mask
        if modulus is not None:
            c %= modulus
        f.append(c)
        acc >>= d
        acc_bits -= d
    return f


def _compress(d: int, f: list[int]) -> list[int]:
    # round(2^d * x / q) mod 2^d, rounding half up
    mask = (1 << d) - 1
    return [(((x << (d + 1)) + Q) // (2 * Q)) & mask for x in f]


def _decompress(d: int, f: list[int]) -> list[int]:
    # round(q * y / 2^d), rounding half up
    half = 1 << (d - 1)
    return [(Q * y + half) >> d for y in f]


# ---------------------------------------------------------------------------
# K-PKE (FIPS 203 algorithms 13-15)
# ---------------------------------------------------------------------------

def _matrix_a(rho: bytes) -> list[list[list[int]]]:
    # A_hat[i][j] sampled from XOF(rho || j || i) -- column byte first.
    return [
        [_sample_ntt(rho + bytes([j, i])) for j in range(K)]
        for i in range(K)
    ]


def _pke_keygen(d: bytes) -> tuple[bytes, bytes]:
    rho, sigma = _g(d + bytes([K]))
    a_hat = _matrix_a(rho)
    n = 0
    s_hat = []
    for _ in range(K):
        s_hat.append(_ntt(_sample_cbd(ETA1, _prf(ETA1, sigma, n))))
        n += 1
    e_hat = []
    for _ in range(K):
        e_hat.append(_ntt(_sample_cbd(ETA1, _prf(ETA1, sigma, n))))
        n += 1
    t_hat = []
    for i in range(K):
        acc = [0] * 256
        for j in range(K):
            acc = _add(acc, _mul_ntt(a_hat[i][j], s_hat[j]))
        t_hat.append(_add(acc, e_hat[i]))
    ek = b"".join(_byte_encode(12, t) for t in t_hat) + rho
    dk = b"".join(_byte_encode(12, s) for s in s_hat)
    return ek, dk


def _pke_encrypt(ek_pke: bytes, m: bytes, r: bytes) -> bytes:
    t_hat = [_byte_decode(12, ek_pke[384 * i: 384 * (i + 1)]) for i in range(K)]
    rho = ek_pke[384 * K: 384 * K + 32]
    a_hat = _matrix_a(rho)
    n = 0
    y_hat = []
    for _ in range(K):
        y_hat.append(_ntt(_sample_cbd(ETA1, _prf(ETA1, r, n))))
        n += 1
    e1 = []
    for _ in range(K):
        e1.append(_sample_cbd(ETA2, _prf(ETA2, r, n)))
        n += 1
    e2 = _sample_cbd(ETA2, _prf(ETA2, r, n))
    u = []
    for j in range(K):
        acc = [0] * 256
        for i in range(K):
            acc = _add(acc, _mul_ntt(a_hat[i][j], y_hat[i]))  # A^T: swapped indices
        u.append(_add(_ntt_inv(acc), e1[j]))
    mu = _decompress(1, _byte_decode(1, m))
    acc = [0] * 256
    for i in range(K):
        acc = _add(acc, _mul_ntt(t_hat[i], y_hat[i]))
    v = _add(_add(_ntt_inv(acc), e2), mu)
    c1 = b"".join(_byte_encode(DU, _compress(DU, ui)) for ui in u)
    c2 = _byte_encode(DV, _compress(DV, v))
    return c1 + c2


def _pke_decrypt(dk_pke: bytes, c: bytes) -> bytes:
    du_bytes = 32 * DU
    u = [
        _decompress(DU, _byte_decode(DU, c[du_bytes * i: du_bytes * (i + 1)]))
        for i in range(K)
    ]
    v = _decompress(DV, _byte_decode(DV, c[du_bytes * K:]))
    s_hat = [_byte_decode(12, dk_pke[384 * i: 384 * (i + 1)]) for i in range(K)]
    acc = [0] * 256
    for i in range(K):
        acc = _add(acc, _mul_ntt(s_hat[i], _ntt(u[i])))
    w = _sub(v, _ntt_inv(acc))
    return _byte_encode(1, _compress(1, w))


# ---------------------------------------------------------------------------
# ML-KEM (FIPS 203 algorithms 16-18, plus section 7 input checks)
# ---------------------------------------------------------------------------

def ek_is_valid(ek: bytes) -> bool:
    """FIPS 203 section 7.2 modulus check: every coefficient already < q."""
    if len(ek) != EK_LEN:
        return False
    for i in range(K):
        block = ek[384 * i: 384 * (i + 1)]
        if _byte_encode(12, _byte_decode(12, block)) != block:
            return False
    return True


def keygen(seed: bytes) -> tuple[bytes, bytes]:
    """ML-KEM.KeyGen_internal on seed = d || z. Returns (ek, dk)."""
    if len(seed) != SEED_LEN:
        raise ValueError("ML-KEM-768 seed must be 64 bytes (d || z)")
    d, z = seed[:32], seed[32:]
    ek_pke, dk_pke = _pke_keygen(d)
    dk = dk_pke + ek_pke + _h(ek_pke) + z
    return ek_pke, dk


def encaps(ek: bytes, m: bytes) -> tuple[bytes, bytes]:
    """ML-KEM.Encaps_internal with explicit 32-byte randomness m.

    Returns (ciphertext, shared_secret).
    """
    if not ek_is_valid(ek):
        raise ValueError("encapsulation key failed FIPS 203 input validation")
    if len(m) != 32:
        raise ValueError("encapsulation randomness must be 32 bytes")
    k, r = _g(m + _h(ek))
    return _pke_encrypt(ek, m, r), k


def decaps(dk: bytes, c: bytes) -> bytes:
    """ML-KEM.Decaps_internal. Invalid ciphertexts yield the implicit-
    rejection secret J(z || c) rather than an error."""
    if len(dk) != DK_LEN:
        raise ValueError("ML-KEM-768 decapsulation key must be 2400 bytes")
    if len(c) != CT_LEN:
        raise ValueError("ML-KEM-768 ciphertext must be 1088 bytes")
    dk_pke = dk[: 384 * K]
    ek_pke = dk[384 * K: 768 * K + 32]
    h_ek = dk[768 * K + 32: 768 * K + 64]
    z = dk[768 * K + 64:]
    m2 = _pke_decrypt(dk_pke, c)
    k2, r2 = _g(m2 + h_ek)
    k_reject = _j(z + c)
    c2 = _pke_encrypt(ek_pke, m2, r2)
    if hmac.compare_digest(c, c2):
        return k2
    return k_reject


def dk_matches_ek(dk: bytes, ek: bytes) -> bool:
    """True iff dk embeds exactly this ek (FIPS 203 section 7.3 hash check)."""
    return (
        len(dk) == DK_LEN
        and len(ek) == EK_LEN
        and dk[384 * K: 768 * K + 32] == ek
        and hmac.compare_digest(dk[768 * K + 32: 768 * K + 64], _h(ek))
    )
