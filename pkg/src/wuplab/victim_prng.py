"""Bit-exact replica of the victim client's session-key generation.

The client uses the platform's 48-bit linear congruential generator
(``java.util.Random``). Two key-generation routines are modelled:

* v6.3: two freshly constructed generators, each drawing one
  ``nextInt(89999999)``; the key is the ASCII concatenation of
  ``10000000 + i`` and ``10000000 + j``.
* v6.5: one generator seeded with the current time in milliseconds,
  two ``nextBytes`` calls of 8 bytes each, concatenated.

Knowing the timestamp means knowing the key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels

MULTIPLIER = 0x5DEECE66D
INCREMENT = 0xB
MASK48 = (1 << 48) - 1

V63_BOUND = 89_999_999
V63_OFFSET = 10_000_000


class Origin(enum.Enum):
    V63 = "v63"
    V65 = "v65"
    EXTERNAL = "external"


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    # provenance only; two keys with the same bytes are the same key
    origin: Origin = field(default=Origin.EXTERNAL, compare=False)
    seed_millis: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.key) != 16:
            raise ValueError(f"session key must be 16 bytes, got {len(self.key)}")
        if self.origin is Origin.V63 and not all(0x30 <= b <= 0x39 for b in self.key):
            raise ValueError("v6.3 session keys consist of ASCII digits only")

    @classmethod
    def from_int(cls, value: int) -> "SessionKey":
        return cls(value.to_bytes(16, "big"))

    def as_int(self) -> int:
        return int.from_bytes(self.key, "big")

    def hex(self) -> str:
        return self.key.hex()


class Lcg48:
    """The platform's ``java.util.Random`` generator."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = (seed ^ MULTIPLIER) & MASK48

    def next(self, bits: int) -> int:
        """Advance once and return the top ``bits`` bits of the new state (unsigned)."""
        if not 1 <= bits <= 32:
            raise ValueError("bits must be in 1..32")
        self.state = (self.state * MULTIPLIER + INCREMENT) & MASK48
        return self.state >> (48 - bits)

    def next_int(self, bound: int) -> int:
        """``nextInt(bound)``: uniform in [0, bound) via rejection sampling."""
        if not 1 <= bound < 1 << 31:
            raise ValueError("bound must be a positive 32-bit int")
        if bound & (bound - 1) == 0:
            return (bound * self.next(31)) >> 31
        while True:
            r = self.next(31)
            v = r % bound
            # Java rejects when r - v + (bound - 1) overflows a signed int
            if r - v + (bound - 1) < 1 << 31:
                return v

    def next_bytes(self, length: int) -> bytes:
        out = bytearray()
        while len(out) < length:
            word = self.next(32)
            for _ in range(min(4, length - len(out))):
                out.append(word & 0xFF)
                word >>= 8
        return bytes(out)


# Module-level aliases matching the operation names used elsewhere.
def lcg_next(gen: Lcg48, bits: int) -> int:
    return gen.next(bits)


def bounded_int(gen: Lcg48, bound: int) -> int:
    return gen.next_int(bound)


def keygen_v63(seed_i: int, seed_j: int) -> SessionKey:
    """v6.3 key from the seeds of its two independently constructed generators."""
    i = V63_OFFSET + Lcg48(seed_i).next_int(V63_BOUND)
    j = V63_OFFSET + Lcg48(seed_j).next_int(V63_BOUND)
    return SessionKey(f"{i}{j}".encode("ascii"), Origin.V63)


def keygen_v63_from_clock(clock: Callable[[], int]) -> SessionKey:
    """v6.3 key with each generator seeded from one reading of ``clock``."""
    seed_i = clock()
    seed_j = clock()
    return keygen_v63(seed_i, seed_j)


def keygen_v65(millis: int) -> SessionKey:
    gen = Lcg48(millis)
    first = gen.next_bytes(8)
    second = gen.next_bytes(8)
    return SessionKey(first + second, Origin.V65, seed_millis=millis)


def keygen_v65_batch(millis) -> np.ndarray:
    """Vectorised :func:`keygen_v65`: an (N, 16) uint8 array of raw keys."""
    return kernels.v65_keys(np.asarray(millis, dtype=np.int64))


V63_KEYSPACE = V63_BOUND**2
