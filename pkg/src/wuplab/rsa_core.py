"""Textbook RSA, its malleability, and an OAEP variant for comparison.

``encrypt_raw``/``decrypt_raw`` apply no padding at all, so ciphertexts
are deterministic and multiplicatively homomorphic:
``E(a) * E(b) = E(a * b mod n)``. :func:`shift_ciphertext` uses that to
turn an encryption of ``k`` into one of ``2**b * k`` without the private
key. The OAEP functions exist only to show that randomised padding breaks
this.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .numtheory import DomainError, gen_prime, int_from_bytes, int_to_bytes, mod_inv, mod_pow, parse_decimal

ALLOWED_BITS = (128, 256, 512, 1024, 2048)
OAEP_LABEL = b"rsa-oaep-demo"
_HASH = hashlib.sha256
_HLEN = _HASH().digest_size


class KeygenError(RuntimeError):
    pass


class PaddingError(ValueError):
    """Decryption failed. Deliberately carries no detail about why."""

    def __init__(self):
        super().__init__("decryption error")


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    @property
    def byte_len(self) -> int:
        return (self.bits + 7) // 8


@dataclass(frozen=True)
class RsaKeyPair:
    public: RsaPublicKey
    d: int
    p: int
    q: int

    @property
    def n(self) -> int:
        return self.public.n

    @property
    def e(self) -> int:
        return self.public.e

    @classmethod
    def from_primes(cls, p: int, q: int, e: int = 65537) -> "RsaKeyPair":
        lam = math.lcm(p - 1, q - 1)
        return cls(RsaPublicKey(p * q, e), mod_inv(e, lam), p, q)


def keygen(bits: int = 1024, e: int = 65537, rng: random.Random | int | None = None) -> RsaKeyPair:
    """A key pair whose modulus has exactly ``bits`` bits.

    ``rng`` may be a ``random.Random`` or an integer seed; a fixed seed
    gives a byte-identical key pair.
    """
    if bits not in ALLOWED_BITS:
        raise DomainError(f"bits must be one of {ALLOWED_BITS}")
    if e < 3 or e % 2 == 0:
        raise DomainError("e must be odd and >= 3")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    for _ in range(100):
        p = gen_prime(bits // 2, rng, top_two=True)
        q = gen_prime(bits // 2, rng, top_two=True)
        if p == q:
            continue
        lam = math.lcm(p - 1, q - 1)
        if math.gcd(e, lam) != 1:
            continue
        key = RsaKeyPair(RsaPublicKey(p * q, e), mod_inv(e, lam), p, q)
        assert key.n.bit_length() == bits
        return key
    raise KeygenError(f"e={e} not coprime with lambda(n) after 100 attempts")


def encrypt_raw(pub: RsaPublicKey, m: int) -> int:
    if not 0 <= m < pub.n:
        raise DomainError("plaintext must satisfy 0 <= m < n")
    return mod_pow(m, pub.e, pub.n)


def decrypt_raw(key: RsaKeyPair, c: int) -> int:
    if not 0 <= c < key.n:
        raise DomainError("ciphertext must satisfy 0 <= c < n")
    # CRT: same value as c^d mod n, about four times faster
    p, q = key.p, key.q
    mp = pow(c, key.d % (p - 1), p)
    mq = pow(c, key.d % (q - 1), q)
    h = (mp - mq) * pow(q, -1, p) % p
    return mq + h * q


def shift_ciphertext(pub: RsaPublicKey, c: int, b: int) -> int:
    """Encryption of ``2**b * k mod n`` given the encryption ``c`` of ``k``.

    Uses only the public key: c * (2^(b*e) mod n) mod n
    = k^e * (2^b)^e mod n = (2^b * k)^e mod n.
    """
    if not 0 <= c < pub.n:
        raise DomainError("ciphertext must satisfy 0 <= c < n")
    if b < 0:
        raise DomainError("shift must be non-negative")
    return c * mod_pow(2, b * pub.e, pub.n) % pub.n


# -- OAEP (SHA-256, MGF1) ------------------------------------------------------

def _mgf1(seed: bytes, length: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < length:
        out += _HASH(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return out[:length]


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def oaep_capacity(pub: RsaPublicKey) -> int:
    return pub.byte_len - 2 * _HLEN - 2


def encrypt_padded(pub: RsaPublicKey, m: bytes, rng: random.Random | None = None,
                   label: bytes = OAEP_LABEL) -> int:
    k = pub.byte_len
    if len(m) > oaep_capacity(pub):
        raise DomainError(f"message of {len(m)} bytes exceeds OAEP capacity {oaep_capacity(pub)}")
    rng = rng or random.SystemRandom()
    lhash = _HASH(label).digest()
    db = lhash + bytes(k - len(m) - 2 * _HLEN - 2) + b"\x01" + m
    seed = rng.getrandbits(8 * _HLEN).to_bytes(_HLEN, "big")
    masked_db = _xor(db, _mgf1(seed, k - _HLEN - 1))
    masked_seed = _xor(seed, _mgf1(masked_db, _HLEN))
    return encrypt_raw(pub, int_from_bytes(b"\x00" + masked_seed + masked_db))


def decrypt_padded(key: RsaKeyPair, c: int, label: bytes = OAEP_LABEL) -> bytes:
    k = key.public.byte_len
    try:
        em = int_to_bytes(decrypt_raw(key, c), k)
    except DomainError:
        raise PaddingError() from None
    masked_seed, masked_db = em[1 : 1 + _HLEN], em[1 + _HLEN :]
    seed = _xor(masked_seed, _mgf1(masked_db, _HLEN))
    db = _xor(masked_db, _mgf1(seed, k - _HLEN - 1))
    # evaluate every check before deciding, so all failures look alike
    good = em[0] == 0
    good &= db[:_HLEN] == _HASH(label).digest()
    rest = db[_HLEN:].lstrip(b"\x00")
    good &= rest[:1] == b"\x01"
    if not good:
        raise PaddingError()
    return rest[1:]


# -- key files -----------------------------------------------------------------

_FIELDS = ("n", "e", "d", "p", "q")


def dump_key(key: RsaKeyPair | RsaPublicKey) -> str:
    """One ``name: decimal`` line per field; public keys carry only n and e."""
    if isinstance(key, RsaPublicKey):
        values = {"n": key.n, "e": key.e}
    else:
        values = {"n": key.n, "e": key.e, "d": key.d, "p": key.p, "q": key.q}
    return "".join(f"{name}: {value}\n" for name, value in values.items())


def load_key(text: str) -> RsaKeyPair | RsaPublicKey:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, value = line.partition(":")
        name = name.strip()
        if not sep or name not in _FIELDS:
            raise ValueError(f"line {lineno}: expected '<field>: <decimal>' with field in {_FIELDS}")
        values[name] = parse_decimal(value)
    if "n" not in values or "e" not in values:
        raise ValueError("key file must contain n and e")
    pub = RsaPublicKey(values["n"], values["e"])
    if not {"d", "p", "q"} <= values.keys():
        return pub
    key = RsaKeyPair(pub, values["d"], values["p"], values["q"])
    if key.p * key.q != key.n or key.e * key.d % math.lcm(key.p - 1, key.q - 1) != 1:
        raise ValueError("inconsistent key pair")
    return key


def save_key(path: str | Path, key: RsaKeyPair | RsaPublicKey) -> None:
    Path(path).write_text(dump_key(key))


def read_key(path: str | Path) -> RsaKeyPair | RsaPublicKey:
    return load_key(Path(path).read_text())
