"""How often does a random m-bit integer split as M1 * M2 with M1 <= 2^m1, M2 <= 2^m2?

Each sample is factored completely and its divisors are searched for a d
with d <= 2^m1 and M / d <= 2^m2. Because the roles are interchangeable
(d and M / d), checking one assignment covers the symmetric one.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..numtheory import DEFAULT_FACTOR_BUDGET, FactoringBudgetExhausted, factorize

# Above this many prime factors (with multiplicity) enumerate divisors of two halves and bisect.
MITM_FACTOR_THRESHOLD = 20
MIN_SAMPLES = 100


@dataclass(frozen=True)
class SplitEstimate:
    bit_length: int
    m1: int
    m2: int
    samples: int
    successes: int
    skipped: int = 0

    @property
    def probability(self) -> float:
        return self.successes / self.samples if self.samples else 0.0

    def to_json(self) -> dict:
        return {
            "bit_length": self.bit_length,
            "m1": self.m1,
            "m2": self.m2,
            "samples": self.samples,
            "successes": self.successes,
            "skipped": self.skipped,
            "probability": round(self.probability, 6),
        }


def _divisors(primes: list[int]) -> list[int]:
    divs = [1]
    i = 0
    while i < len(primes):
        p, e = primes[i], 0
        while i < len(primes) and primes[i] == p:
            e += 1
            i += 1
        divs = [d * p**k for d in divs for k in range(e + 1)]
    return divs


def splits_from_primes(value: int, primes: list[int], bound1: int, bound2: int) -> bool:
    """Is there a divisor d of ``value`` with d <= bound1 and value / d <= bound2?

    ``primes`` is the prime factorisation of ``value`` with multiplicity.
    """
    lo = -(-value // bound2)  # smallest admissible d
    if lo > bound1:
        return False
    primes = sorted(primes)
    if len(primes) <= MITM_FACTOR_THRESHOLD:
        return any(lo <= d <= bound1 for d in _divisors(primes))
    # every divisor is a * b with a, b divisors of the two halves
    cut = len(primes) // 2
    left = _divisors(primes[:cut])
    right = sorted(_divisors(primes[cut:]))
    for a in left:
        if a > bound1:
            continue
        # need lo <= a*b <= bound1
        j = bisect.bisect_left(right, -(-lo // a))
        if j < len(right) and a * right[j] <= bound1:
            return True
    return False


def draw_samples(bit_length: int, samples: int, rng: random.Random) -> list[int]:
    """Uniform integers in [1, 2^bit_length)."""
    return [rng.randrange(1, 1 << bit_length) for _ in range(samples)]


def split_probability(bit_length: int, m1: int, m2: int, samples: int = 2000,
                      rng: random.Random | int | None = None,
                      budget: int = DEFAULT_FACTOR_BUDGET) -> SplitEstimate:
    """Monte Carlo estimate of the splitting probability.

    Inputs of up to 64 bits go through the batched fixed-width kernels.
    Wider inputs are factored one by one under ``budget``; a sample whose
    factoring exhausts the budget is skipped and counted in ``skipped``.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples for a meaningful estimate")
    if bit_length < 1:
        raise ValueError("bit_length must be positive")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    values = draw_samples(bit_length, samples, rng)
    bound1, bound2 = 1 << m1, 1 << m2
    if bit_length <= 64:
        arr = np.array(values, dtype=np.uint64)
        factors, counts = kernels.factor_batch(arr)
        hits = kernels.split_batch(arr, factors, counts, bound1, bound2)
        return SplitEstimate(bit_length, m1, m2, samples, int(hits.sum()))
    successes = skipped = 0
    for v in values:
        if -(-v // bound2) > bound1:
            continue  # cannot split whatever its factors; skip the factoring
        try:
            primes = factorize(v, budget=budget).primes
        except FactoringBudgetExhausted:
            skipped += 1
            continue
        successes += splits_from_primes(v, primes, bound1, bound2)
    return SplitEstimate(bit_length, m1, m2, samples - skipped, successes, skipped)
