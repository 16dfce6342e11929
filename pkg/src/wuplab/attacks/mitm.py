"""Meet-in-the-middle recovery of short textbook-RSA plaintexts.

If the plaintext splits as M = M1 * M2 with M1 <= 2^m1 and M2 <= 2^m2, then
``c / M2^e = M1^e (mod n)``. Tabulate M1^e once per public key, then try
every M2.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from ..numtheory import NotCoprimeError, mod_inv, mod_pow
from ..rsa_core import RsaPublicKey

MAX_DESK_M1 = 28


class TableTooLarge(MemoryError):
    def __init__(self, m1: int, cost: "MitmCost"):
        super().__init__(
            f"m1={m1} needs a table of {cost.table_bytes_human}; pass allow_large=True to build it anyway"
        )
        self.cost = cost


@dataclass(frozen=True)
class MitmTable:
    m1: int
    n: int
    e: int
    values: tuple[int, ...]
    m1_candidates: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.values)

    def lookup(self, value: int) -> int | None:
        i = bisect.bisect_left(self.values, value)
        if i < len(self.values) and self.values[i] == value:
            return self.m1_candidates[i]
        return None


def mitm_build_table(pub: RsaPublicKey, m1: int, allow_large: bool = False) -> MitmTable:
    """Sorted (M1^e mod n, M1) for 1 <= M1 <= 2^m1. Reusable for every ciphertext under pub."""
    if m1 < 0:
        raise ValueError("m1 must be non-negative")
    if m1 > MAX_DESK_M1 and not allow_large:
        raise TableTooLarge(m1, mitm_cost(m1, m1, 2 * m1))
    n, e = pub.n, pub.e
    entries = sorted((pow(x, e, n), x) for x in range(1, (1 << m1) + 1))
    return MitmTable(m1, n, e, tuple(v for v, _ in entries), tuple(x for _, x in entries))


def mitm_attack(table: MitmTable, c: int, m2: int) -> int | None:
    """Find M = M1 * M2 with M^e = c (mod n), or None if c's plaintext does not split."""
    n, e = table.n, table.e
    if not 0 <= c < n:
        raise ValueError("ciphertext must satisfy 0 <= c < n")
    for m2_candidate in range(1, (1 << m2) + 1):
        try:
            target = c * mod_inv(mod_pow(m2_candidate, e, n), n) % n
        except NotCoprimeError:
            continue
        m1_candidate = table.lookup(target)
        if m1_candidate is None:
            continue
        m = m1_candidate * m2_candidate
        if mod_pow(m, e, n) == c:
            return m
    return None


# -- cost model --------------------------------------------------------------------

_SI_UNITS = (
    (10**15, "petabytes"),
    (10**12, "terabytes"),
    (10**9, "gigabytes"),
    (10**6, "megabytes"),
    (10**3, "kilobytes"),
)


@dataclass(frozen=True)
class MitmCost:
    m1: int
    m2: int
    key_bits: int
    table_bits: int
    exponentiations: int

    @property
    def table_bytes(self) -> int:
        return -(-self.table_bits // 8)

    @property
    def petabytes(self) -> float:
        return self.table_bytes / 10**15

    @property
    def table_bytes_human(self) -> str:
        size = self.table_bytes
        for scale, unit in _SI_UNITS:
            if size >= scale:
                return f"{round(size / scale):,} {unit}"
        return f"{size} bytes"

    def to_json(self) -> dict:
        return {
            "m1": self.m1,
            "m2": self.m2,
            "key_bits": self.key_bits,
            "table_bits": str(self.table_bits),
            "table_bytes": str(self.table_bytes),
            "table_bytes_human": self.table_bytes_human,
            "petabytes": round(self.petabytes),
            "exponentiations": str(self.exponentiations),
            "exponentiations_log2": self.m2,
        }


def mitm_cost(m1: int, m2: int, key_bits: int) -> MitmCost:
    """Table of 2^(m1+1) * max(m1, m2) bits, plus 2^m2 modular exponentiations."""
    return MitmCost(m1, m2, key_bits, (1 << (m1 + 1)) * max(m1, m2), 1 << m2)
