"""Hot loops: 64-bit factoring and batched victim-key regeneration.

Each kernel exists twice. The ``*_jit`` versions are numba-compiled and
work on fixed-width ``uint64`` arithmetic (Montgomery multiplication for
the factoring path). The ``*_fallback`` versions use numpy vectorisation
or plain Python integers. The public dispatchers pick one according to
:data:`wuplab._accel.USE_NUMBA`.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit
from .numtheory import factorize, trial_divide

MAX_FACTORS_64 = 64

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_U32 = np.uint64(32)
_MASK32 = np.uint64(0xFFFFFFFF)

# -- 64-bit Montgomery arithmetic ---------------------------------------------


@njit
def _mulhi(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _U32
    b_lo = b & _MASK32
    b_hi = b >> _U32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    cross = (lo_lo >> _U32) + (hi_lo & _MASK32) + lo_hi
    return a_hi * b_hi + (hi_lo >> _U32) + (cross >> _U32)


@njit
def _inv64(n):
    # n * inv == 1 (mod 2**64); five Newton steps from a 3-bit start
    inv = n
    for _ in range(5):
        inv = inv * (_U2 - n * inv)
    return inv


@njit
def _montmul(a, b, n, ninv):
    # a, b < n; returns a*b / 2**64 mod n
    lo = a * b
    hi = _mulhi(a, b)
    m = lo * ninv
    mh = _mulhi(m, n)
    if hi >= mh:
        return hi - mh
    return hi + (n - mh)


@njit
def _addmod(a, b, n):
    s = a + b
    if s < a or s >= n:
        s = s - n
    return s


@njit
def _to_mont_slow(x, n):
    # x * 2**64 mod n by 64 modular doublings; only used for the constants
    x = x % n
    for _ in range(64):
        x = _addmod(x, x, n)
    return x


@njit
def _gcd(a, b):
    while b != _U0:
        a, b = b, a % b
    return a


@njit
def is_prime_u64_jit(n):
    if n < _U2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for p in small:
        pu = np.uint64(p)
        if n % pu == _U0:
            return n == pu
    ninv = _inv64(n)
    one = _to_mont_slow(_U1, n)
    r2 = _to_mont_slow(one, n)
    minus_one = n - one
    d = n - _U1
    s = 0
    while d & _U1 == _U0:
        d = d >> _U1
        s += 1
    for p in small:
        a = _montmul(np.uint64(p), r2, n, ninv)
        x = one
        base = a
        e = d
        while e != _U0:
            if e & _U1:
                x = _montmul(x, base, n, ninv)
            base = _montmul(base, base, n, ninv)
            e = e >> _U1
        if x == one or x == minus_one:
            continue
        witness = True
        for _ in range(s - 1):
            x = _montmul(x, x, n, ninv)
            if x == minus_one:
                witness = False
                break
        if witness:
            return False
    return True


@njit
def _brent_u64(n, c, y0):
    """Pollard-Brent on the Montgomery-domain map y -> y^2 + c.

    Returns a divisor of the odd composite n, possibly n itself.
    """
    ninv = _inv64(n)
    y = y0 % n
    c = c % n
    x = y
    ys = y
    q = _to_mont_slow(_U1, n)
    g = _U1
    r = 1
    while g == _U1:
        x = y
        for _ in range(r):
            y = _addmod(_montmul(y, y, n, ninv), c, n)
        k = 0
        while k < r and g == _U1:
            ys = y
            m = min(128, r - k)
            for _ in range(m):
                y = _addmod(_montmul(y, y, n, ninv), c, n)
                diff = x - y if x > y else y - x
                q = _montmul(q, diff, n, ninv)
            g = _gcd(q, n)
            k += m
        r *= 2
    if g == n:
        while True:
            ys = _addmod(_montmul(ys, ys, n, ninv), c, n)
            diff = x - ys if x > ys else ys - x
            g = _gcd(diff, n)
            if g > _U1:
                break
    return g


@njit
def _isqrt_u64(n):
    r = np.uint64(np.sqrt(np.float64(n)))
    while r > _MASK32 or r * r > n:
        r -= _U1
    while r < _MASK32 and (r + _U1) * (r + _U1) <= n:
        r += _U1
    return r


@njit
def factor_u64_jit(n, out):
    """Write the prime factors of n (>= 1) into ``out``; return their count."""
    count = 0
    while n & _U1 == _U0 and n > _U1:
        out[count] = _U2
        count += 1
        n = n >> _U1
    p = np.uint64(3)
    while p < np.uint64(10_000) and p * p <= n:
        while n % p == _U0:
            out[count] = p
            count += 1
            n = n // p
        p += _U2
    if n == _U1:
        return count
    stack = np.empty(MAX_FACTORS_64, dtype=np.uint64)
    top = 0
    stack[top] = n
    top += 1
    seed = np.uint64(1)
    while top > 0:
        top -= 1
        m = stack[top]
        if m == _U1:
            continue
        if is_prime_u64_jit(m):
            out[count] = m
            count += 1
            continue
        root = _isqrt_u64(m)
        if root * root == m:
            d = root
        else:
            d = m
            while d == m or d == _U1:
                d = _brent_u64(m, seed, seed + _U2)
                seed += _U1
        stack[top] = d
        stack[top + 1] = m // d
        top += 2
    return count


@njit
def factor_batch_jit(values):
    n = values.shape[0]
    out = np.zeros((n, MAX_FACTORS_64), dtype=np.uint64)
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        counts[i] = factor_u64_jit(values[i], out[i])
        out[i, : counts[i]].sort()
    return out, counts


@njit
def _splits_jit(value, primes, count, bound1, bound2):
    # all divisors of value from its (sorted) prime list, checked in place
    divs = np.empty(1, dtype=np.uint64)
    divs[0] = _U1
    i = 0
    while i < count:
        p = primes[i]
        e = 0
        while i < count and primes[i] == p:
            e += 1
            i += 1
        size = divs.shape[0]
        grown = np.empty(size * (e + 1), dtype=np.uint64)
        grown[:size] = divs
        pk = _U1
        for j in range(1, e + 1):
            pk = pk * p
            grown[j * size : (j + 1) * size] = divs * pk
        divs = grown
    for d in divs:
        if d <= bound1 and value // d <= bound2:
            return True
    return False


@njit
def split_batch_jit(values, factors, counts, bound1, bound2):
    hits = np.zeros(values.shape[0], dtype=np.bool_)
    for i in range(values.shape[0]):
        hits[i] = _splits_jit(values[i], factors[i], counts[i], bound1, bound2)
    return hits


# -- victim key regeneration ---------------------------------------------------

_LCG_MULT = np.uint64(0x5DEECE66D)
_LCG_INC = np.uint64(0xB)
_MASK48 = np.uint64((1 << 48) - 1)
_U16 = np.uint64(16)
_BYTE = np.uint64(0xFF)


@njit
def v65_keys_jit(millis):
    """Session keys for each timestamp: seed, then four next(32) draws, LSB first."""
    n = millis.shape[0]
    out = np.empty((n, 16), dtype=np.uint8)
    for i in range(n):
        state = (np.uint64(millis[i]) ^ _LCG_MULT) & _MASK48
        for w in range(4):
            state = (state * _LCG_MULT + _LCG_INC) & _MASK48
            word = state >> _U16
            for b in range(4):
                out[i, 4 * w + b] = np.uint8((word >> np.uint64(8 * b)) & _BYTE)
    return out


def v65_keys_fallback(millis: np.ndarray) -> np.ndarray:
    state = (np.asarray(millis).astype(np.uint64) ^ _LCG_MULT) & _MASK48
    out = np.empty((state.shape[0], 16), dtype=np.uint8)
    for w in range(4):
        state = (state * _LCG_MULT + _LCG_INC) & _MASK48
        word = state >> _U16
        for b in range(4):
            out[:, 4 * w + b] = ((word >> np.uint64(8 * b)) & _BYTE).astype(np.uint8)
    return out


def factor_batch_fallback(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=np.uint64)
    out = np.zeros((values.shape[0], MAX_FACTORS_64), dtype=np.uint64)
    counts = np.zeros(values.shape[0], dtype=np.int64)
    for i, v in enumerate(values.tolist()):
        primes = factorize(v).primes if v > 1 else []
        out[i, : len(primes)] = primes
        counts[i] = len(primes)
    return out, counts


def split_batch_fallback(values, factors, counts, bound1: int, bound2: int) -> np.ndarray:
    from .attacks.split import splits_from_primes

    hits = np.zeros(len(values), dtype=bool)
    for i, v in enumerate(np.asarray(values).tolist()):
        primes = [int(p) for p in factors[i, : counts[i]]]
        hits[i] = splits_from_primes(int(v), primes, bound1, bound2)
    return hits


# -- dispatch -------------------------------------------------------------------


def v65_keys(millis) -> np.ndarray:
    """(N, 16) uint8 array of v6.5 session keys for N timestamps."""
    millis = np.ascontiguousarray(millis, dtype=np.int64)
    if _accel.USE_NUMBA:
        return v65_keys_jit(millis)
    return v65_keys_fallback(millis)


def factor_batch(values) -> tuple[np.ndarray, np.ndarray]:
    values = np.ascontiguousarray(values, dtype=np.uint64)
    if _accel.USE_NUMBA:
        return factor_batch_jit(values)
    return factor_batch_fallback(values)


def split_batch(values, factors, counts, bound1: int, bound2: int) -> np.ndarray:
    cap = (1 << 64) - 1
    bound1, bound2 = min(bound1, cap), min(bound2, cap)
    if _accel.USE_NUMBA:
        return split_batch_jit(
            np.ascontiguousarray(values, dtype=np.uint64), factors, counts,
            np.uint64(bound1), np.uint64(bound2),
        )
    return split_batch_fallback(values, factors, counts, bound1, bound2)


__all__ = [
    "factor_batch",
    "split_batch",
    "v65_keys",
    "trial_divide",
]
