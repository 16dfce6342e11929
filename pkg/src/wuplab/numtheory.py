"""Integer arithmetic and number-theoretic primitives.

Python ``int`` is the arbitrary-precision integer type throughout. The
canonical external encodings are decimal strings and big-endian bytes.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache

DEFAULT_FACTOR_BUDGET = 1 << 34
TRIAL_DIVISION_LIMIT = 10_000

# Deterministic Miller-Rabin witnesses for every n < 2**64.
_MR64_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""


class NotCoprimeError(DomainError):
    def __init__(self, a: int, modulus: int):
        super().__init__(f"not coprime: gcd({a}, {modulus}) = {math.gcd(a, modulus)}")
        self.a = a
        self.modulus = modulus


class NotCompositeError(DomainError):
    pass


class FactoringBudgetExhausted(RuntimeError):
    def __init__(self, iterations: int, partial: "Factorization | None" = None):
        super().__init__(f"factoring budget exhausted after {iterations} iterations")
        self.iterations = iterations
        self.partial = partial


# -- encodings ---------------------------------------------------------------

def byte_length(x: int) -> int:
    return max(1, (x.bit_length() + 7) // 8)


def int_to_bytes(x: int, length: int | None = None) -> bytes:
    """Big-endian encoding, left-padded with zeros to ``length`` if given."""
    if x < 0:
        raise DomainError("negative integers have no BigUint encoding")
    if length is None:
        length = byte_length(x)
    try:
        return x.to_bytes(length, "big")
    except OverflowError:
        raise DomainError(f"{x.bit_length()}-bit value does not fit in {length} bytes") from None


def int_from_bytes(data: bytes) -> int:
    return int.from_bytes(data, "big")


def parse_decimal(text: str) -> int:
    text = text.strip()
    if not text.isdigit():
        raise DomainError(f"not a non-negative decimal integer: {text!r}")
    return int(text)


# -- modular arithmetic ------------------------------------------------------

def mod_pow(base: int, exp: int, modulus: int) -> int:
    """``base ** exp % modulus`` by square-and-multiply."""
    if modulus < 2:
        raise DomainError("modulus must be >= 2")
    if exp < 0 or base < 0:
        raise DomainError("base and exponent must be non-negative")
    return pow(base, exp, modulus)


def mod_inv(a: int, modulus: int) -> int:
    if modulus < 1:
        raise DomainError("modulus must be positive")
    try:
        return pow(a, -1, modulus)
    except ValueError:
        raise NotCoprimeError(a, modulus) from None


# -- primality ---------------------------------------------------------------

@lru_cache(maxsize=8)
def primes_up_to(limit: int) -> tuple[int, ...]:
    """All primes <= limit (sieve of Eratosthenes)."""
    if limit < 2:
        return ()
    sieve = bytearray([1]) * (limit + 1)
    sieve[0] = sieve[1] = 0
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p :: p] = bytes(len(range(p * p, limit + 1, p)))
    return tuple(i for i, flag in enumerate(sieve) if flag)


_SMALL_PRIMES = primes_up_to(1000)


def _mr_round(n: int, a: int, d: int, s: int) -> bool:
    x = pow(a, d, n)
    if x == 1 or x == n - 1:
        return True
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def is_probable_prime(n: int, rounds: int = 40, rng: random.Random | None = None) -> bool:
    """Miller-Rabin.

    Deterministic for ``n < 2**64``. Above that, ``rounds`` random witnesses
    are drawn, so a composite slips through with probability at most
    ``4 ** -rounds``.
    """
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    if n < 1 << 64:
        return all(_mr_round(n, a, d, s) for a in _MR64_BASES)
    rng = rng or random.SystemRandom()
    return all(_mr_round(n, rng.randrange(2, n - 1), d, s) for _ in range(rounds))


def gen_prime(bits: int, rng: random.Random, *, top_two: bool = False) -> int:
    """A random probable prime of exactly ``bits`` bits.

    With ``top_two`` the two most significant bits are set, so the product
    of two such primes has exactly ``2 * bits`` bits.
    """
    if bits < 16:
        raise DomainError("bits must be >= 16")
    top = 3 << (bits - 2) if top_two else 1 << (bits - 1)
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate):
            return candidate


# -- factoring ---------------------------------------------------------------

@dataclass(frozen=True)
class Factorization:
    factors: tuple[tuple[int, int], ...]

    @classmethod
    def from_primes(cls, primes) -> "Factorization":
        counts: dict[int, int] = {}
        for p in primes:
            counts[p] = counts.get(p, 0) + 1
        return cls(tuple(sorted(counts.items())))

    @property
    def value(self) -> int:
        return math.prod(p**e for p, e in self.factors)

    @property
    def primes(self) -> list[int]:
        """Prime factors with multiplicity, ascending."""
        return [p for p, e in self.factors for _ in range(e)]

    def to_json(self) -> dict:
        return {
            "n": str(self.value),
            "factors": [{"prime": str(p), "exponent": e} for p, e in self.factors],
        }


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self, k: int) -> None:
        self.used += k
        if self.used > self.limit:
            raise FactoringBudgetExhausted(self.used)


def _brent(n: int, c: int, y: int, budget: _Budget, cap: int, batch: int = 128) -> int:
    """One Pollard-Brent run on f(x) = x^2 + c; returns a divisor of n (maybe n itself)
    or 1 when ``cap`` iterations pass without a hit."""
    r, q, g = 1, 1, 1
    x = ys = y
    steps = 0
    while g == 1:
        x = y
        for _ in range(r):
            y = (y * y + c) % n
        budget.spend(r)
        steps += r
        k = 0
        while k < r and g == 1:
            ys = y
            m = min(batch, r - k)
            for _ in range(m):
                y = (y * y + c) % n
                q = q * abs(x - y) % n
            budget.spend(m)
            steps += m
            g = math.gcd(q, n)
            k += m
        r *= 2
        if g == 1 and steps >= cap:
            return 1
    if g == n:
        # the batch overshot; replay it one gcd at a time
        while True:
            ys = (ys * ys + c) % n
            budget.spend(1)
            g = math.gcd(abs(x - ys), n)
            if g > 1:
                break
    return g


# ECM (Montgomery curves, Suyama parametrisation) takes over when rho stalls:
# a 64-bit prime factor costs rho ~2**32 steps but ECM well under a minute.
_ECM_STAGE2_HALF_WIDTH = 105
_ECM_SCHEDULE = ((2_000, 25), (11_000, 90), (50_000, 300), (250_000, 700), (1_000_000, 1800))


def _xdbl(x, z, n, a24):
    s = (x + z) * (x + z) % n
    d = (x - z) * (x - z) % n
    t = s - d
    return s * d % n, t * (d + a24 * t) % n


def _xadd(xp, zp, xq, zq, xd, zd, n):
    u = (xp - zp) * (xq + zq)
    v = (xp + zp) * (xq - zq)
    w, t = u + v, u - v
    return zd * w * w % n, xd * t * t % n


def _ladder(k, x, z, n, a24):
    if k == 1:
        return x, z
    x0, z0 = x, z
    x1, z1 = _xdbl(x, z, n, a24)
    for bit in bin(k)[3:]:
        if bit == "1":
            x0, z0 = _xadd(x1, z1, x0, z0, x, z, n)
            x1, z1 = _xdbl(x1, z1, n, a24)
        else:
            x1, z1 = _xadd(x1, z1, x0, z0, x, z, n)
            x0, z0 = _xdbl(x0, z0, n, a24)
    return x0, z0


@lru_cache(maxsize=8)
def _stage1_multiplier(b1: int) -> int:
    k = 1
    for p in primes_up_to(b1):
        pe = p
        while pe * p <= b1:
            pe *= p
        k *= pe
    return k


def _ecm_curve(n: int, sigma: int, b1: int, budget: _Budget) -> int:
    """Stage 1 and standard-continuation stage 2 with B2 = 100 * B1."""
    u = (sigma * sigma - 5) % n
    v = 4 * sigma % n
    x, z = pow(u, 3, n), pow(v, 3, n)
    denom = 16 * x * v % n
    g = math.gcd(denom, n)
    if g != 1:
        return g
    a24 = pow(v - u, 3, n) * (3 * u + v) * pow(denom, -1, n) % n

    k = _stage1_multiplier(b1)
    budget.spend(k.bit_length())
    qx, qz = _ladder(k, x, z, n, a24)
    g = math.gcd(qz, n)
    if g != 1:
        return g

    half = _ECM_STAGE2_HALF_WIDTH
    b2 = 100 * b1
    # baby steps: S[d] = [2d]Q
    sx = [0] * (half + 1)
    sz = [0] * (half + 1)
    beta = [0] * (half + 1)
    sx[1], sz[1] = _xdbl(qx, qz, n, a24)
    sx[2], sz[2] = _xdbl(sx[1], sz[1], n, a24)
    for d in range(3, half + 1):
        sx[d], sz[d] = _xadd(sx[d - 1], sz[d - 1], sx[1], sz[1], sx[d - 2], sz[d - 2], n)
    for d in range(1, half + 1):
        beta[d] = sx[d] * sz[d] % n

    r = b1 if b1 % 2 else b1 - 1
    tx, tz = _ladder(r - 2 * half, qx, qz, n, a24)
    rx, rz = _ladder(r, qx, qz, n, a24)
    primes = primes_up_to(b2)
    idx = next(i for i, p in enumerate(primes) if p > r)
    acc = 1
    while r < b2:
        alpha = rx * rz % n
        top = r + 2 * half
        while idx < len(primes) and primes[idx] <= top:
            d = (primes[idx] - r) // 2
            acc = acc * ((rx - sx[d]) * (rz + sz[d]) - alpha + beta[d]) % n
            idx += 1
        rx, rz, tx, tz = *_xadd(rx, rz, sx[half], sz[half], tx, tz, n), rx, rz
        r = top
    budget.spend(b2 // (2 * half) + half)
    return math.gcd(acc, n)


def _find_factor(n: int, budget: _Budget, rng: random.Random) -> int:
    """A non-trivial divisor of the odd composite n."""
    root = math.isqrt(n)
    if root * root == n:
        return root
    # Rho alone for small n; for larger n rho gets a short run to pick off
    # small factors cheaply before ECM.
    cap = budget.limit if n.bit_length() <= 80 else 1 << 16
    for _ in range(8):
        g = _brent(n, rng.randrange(1, n - 1), rng.randrange(0, n), budget, cap)
        if 1 < g < n:
            return g
        if g == 1:
            break
    for b1, curves in _ECM_SCHEDULE:
        for _ in range(curves):
            g = _ecm_curve(n, rng.randrange(6, n - 1), b1, budget)
            if 1 < g < n:
                return g
    while True:
        g = _brent(n, rng.randrange(1, n - 1), rng.randrange(0, n), budget, budget.limit)
        if 1 < g < n:
            return g


def trial_divide(n: int, limit: int = TRIAL_DIVISION_LIMIT) -> tuple[list[int], int]:
    """Strip prime factors <= limit; returns (found primes, cofactor)."""
    found = []
    for p in primes_up_to(limit):
        if p * p > n:
            break
        while n % p == 0:
            found.append(p)
            n //= p
    if 1 < n <= limit:
        found.append(n)
        n = 1
    return found, n


def factorize(n: int, budget: int = DEFAULT_FACTOR_BUDGET, seed: int = 0) -> Factorization:
    """Complete prime factorisation of n >= 1.

    ``budget`` caps the total work, counted in rho polynomial steps plus
    elliptic-curve group operations. Runs are deterministic for a fixed
    ``seed``.
    """
    if n < 1:
        raise DomainError("can only factor positive integers")
    rng = random.Random(seed)
    tracker = _Budget(budget)
    primes, rest = trial_divide(n)
    stack = [rest] if rest > 1 else []
    try:
        while stack:
            m = stack.pop()
            if is_probable_prime(m):
                primes.append(m)
                continue
            d = _find_factor(m, tracker, rng)
            stack.extend((d, m // d))
    except FactoringBudgetExhausted as exc:
        exc.partial = Factorization.from_primes(primes)
        raise
    return Factorization.from_primes(primes)


def factor_semiprime(n: int, budget: int = DEFAULT_FACTOR_BUDGET, seed: int = 0) -> Factorization:
    """Factor a composite, typically an RSA modulus p*q.

    Trial division to 10**4, then Pollard-Brent rho, then ECM once rho
    stalls. Practical up to factors of roughly 2**64.
    """
    if n < 4 or is_probable_prime(n):
        raise NotCompositeError(f"not composite: {n}")
    return factorize(n, budget=budget, seed=seed)
