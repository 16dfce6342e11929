"""Recovering the private key of a short RSA modulus by factoring it."""

from __future__ import annotations

from ..numtheory import DEFAULT_FACTOR_BUDGET, Factorization, factor_semiprime
from ..rsa_core import RsaKeyPair, RsaPublicKey


def factor_modulus(n: int, budget: int = DEFAULT_FACTOR_BUDGET) -> Factorization:
    return factor_semiprime(n, budget=budget)


def recover_private_key(pub: RsaPublicKey, budget: int = DEFAULT_FACTOR_BUDGET) -> RsaKeyPair:
    """Factor ``pub.n`` (which must be a product of two distinct primes) and rebuild the key pair."""
    primes = factor_modulus(pub.n, budget).primes
    if len(primes) != 2 or primes[0] == primes[1]:
        raise ValueError(f"modulus is not a product of two distinct primes: {primes}")
    return RsaKeyPair.from_primes(primes[0], primes[1], pub.e)
