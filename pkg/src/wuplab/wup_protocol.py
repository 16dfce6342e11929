"""WUP request encryption: message format, AES-ECB, RSA key blob, framing.

Client side (``seal_session``)::

    rsa_blob = big-endian(k ^ e mod n), left-padded to the modulus length
    payload  = AES-128-ECB(k, PKCS#7(serialize(msg)))

Server side (``open_session``) decrypts the blob, keeps only the low
``key_bits`` bits of the plaintext as the AES key (128 in the real
protocol), then decrypts and parses the payload. Every failure collapses
into :class:`InvalidRequest`; that single bit is what the server leaks.

The message serialization is our own canonical stand-in::

    "WUP1" | kind (1B) | field count (2B BE)
           | (name len 1B | name | value len 4B BE | value)* | CRC-32 (4B BE)
"""

from __future__ import annotations

import enum
import io
import random
import struct
import zlib
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .numtheory import DomainError, int_from_bytes, int_to_bytes
from .rsa_core import (
    PaddingError,
    RsaKeyPair,
    RsaPublicKey,
    decrypt_padded,
    decrypt_raw,
    encrypt_padded,
    encrypt_raw,
)
from .victim_prng import SessionKey

MAGIC = b"WUP1"
BLOCK = 16
MAX_FRAME = 1 << 20
KEY_BITS = 128

# Hard-coded keys shipped in the v6.3 client.
DES_MAC_KEY = bytes.fromhex("25923c7f2ae5ef92")
TEA_RESPONSE_KEY = b"sDf434ol*123+-KD"


class Scheme(str, enum.Enum):
    TEXTBOOK = "textbook"
    OAEP = "oaep"


class WupFormatError(ValueError):
    pass


class DecryptionError(ValueError):
    pass


class InvalidRequest(Exception):
    """The server could not open a session. Carries no reason on purpose."""


class FramingError(IOError):
    pass


class MessageKind(enum.IntEnum):
    REQUEST = 1
    RESPONSE = 2
    UPDATE_QUERY = 3
    UPDATE_INFO = 4


@dataclass(frozen=True)
class WupMessage:
    kind: MessageKind
    fields: tuple[tuple[str, bytes], ...] = ()

    @classmethod
    def build(cls, kind: MessageKind, **fields: bytes | str) -> "WupMessage":
        items = tuple((k, v.encode() if isinstance(v, str) else bytes(v)) for k, v in fields.items())
        return cls(kind, items)

    def get(self, name: str, default: bytes | None = None) -> bytes | None:
        for key, value in self.fields:
            if key == name:
                return value
        return default

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack(">BH", self.kind, len(self.fields))
        for name, value in self.fields:
            raw = name.encode("utf-8")
            if len(raw) > 255:
                raise WupFormatError(f"field name too long: {name!r}")
            out += struct.pack(">B", len(raw)) + raw + struct.pack(">I", len(value)) + value
        out += struct.pack(">I", zlib.crc32(out))
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WupMessage":
        if len(data) < 11 or data[:4] != MAGIC:
            raise WupFormatError("bad magic or truncated message")
        body, (crc,) = data[:-4], struct.unpack(">I", data[-4:])
        if zlib.crc32(body) != crc:
            raise WupFormatError("checksum mismatch")
        try:
            kind = MessageKind(body[4])
        except ValueError:
            raise WupFormatError(f"unknown message kind {body[4]}") from None
        (count,) = struct.unpack(">H", body[5:7])
        pos, fields = 7, []
        try:
            for _ in range(count):
                nlen = body[pos]
                name = body[pos + 1 : pos + 1 + nlen].decode("utf-8")
                pos += 1 + nlen
                (vlen,) = struct.unpack(">I", body[pos : pos + 4])
                value = body[pos + 4 : pos + 4 + vlen]
                if len(value) != vlen:
                    raise WupFormatError("truncated field value")
                pos += 4 + vlen
                fields.append((name, value))
        except (IndexError, struct.error, UnicodeDecodeError) as exc:
            raise WupFormatError(f"malformed field list: {exc}") from None
        if pos != len(body):
            raise WupFormatError("trailing bytes after last field")
        return cls(kind, tuple(fields))


def _key_bytes(key: SessionKey | bytes) -> bytes:
    raw = key.key if isinstance(key, SessionKey) else bytes(key)
    if len(raw) != 16:
        raise ValueError("AES-128 keys are 16 bytes")
    return raw


# -- AES-128-ECB -----------------------------------------------------------------

def aes_block_encrypt(key: SessionKey | bytes, block: bytes) -> bytes:
    """Raw single-block AES-128, no padding."""
    if len(block) != BLOCK:
        raise ValueError("AES blocks are 16 bytes")
    enc = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def pkcs7_pad(data: bytes, block: int = BLOCK) -> bytes:
    n = block - len(data) % block
    return data + bytes([n]) * n


def pkcs7_unpad(data: bytes, block: int = BLOCK) -> bytes:
    if not data or len(data) % block:
        raise DecryptionError("ciphertext length is not a positive multiple of the block size")
    n = data[-1]
    if not 1 <= n <= block or data[-n:] != bytes([n]) * n:
        raise DecryptionError("bad padding")
    return data[:-n]


def aes_ecb_encrypt(key: SessionKey | bytes, plaintext: bytes) -> bytes:
    enc = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).encryptor()
    return enc.update(pkcs7_pad(plaintext)) + enc.finalize()


def aes_ecb_decrypt(key: SessionKey | bytes, ciphertext: bytes) -> bytes:
    if not ciphertext or len(ciphertext) % BLOCK:
        raise DecryptionError("ciphertext length is not a positive multiple of 16")
    dec = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).decryptor()
    return pkcs7_unpad(dec.update(ciphertext) + dec.finalize())


def decrypt_message(key: SessionKey | bytes, ciphertext: bytes) -> WupMessage:
    """AES-decrypt and parse; raises DecryptionError or WupFormatError."""
    return WupMessage.from_bytes(aes_ecb_decrypt(key, ciphertext))


def looks_like_message(key: SessionKey | bytes, first_block: bytes) -> bool:
    """Cheap pre-filter: does the first ciphertext block decrypt to the magic?"""
    dec = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).decryptor()
    return dec.update(first_block).startswith(MAGIC)


# -- TEA-CBC (stand-in for the v6.3 response cipher) ------------------------------
# The client's TEA and CBC are both "modified" in undocumented ways; this is
# textbook TEA (32 rounds, big-endian words) in textbook CBC with a zero IV.

_DELTA = 0x9E3779B9
_M32 = 0xFFFFFFFF


def tea_encrypt_block(key: bytes, block: bytes) -> bytes:
    v0, v1 = struct.unpack(">2I", block)
    k = struct.unpack(">4I", key)
    s = 0
    for _ in range(32):
        s = (s + _DELTA) & _M32
        v0 = (v0 + ((((v1 << 4) + k[0]) ^ (v1 + s) ^ ((v1 >> 5) + k[1])) & _M32)) & _M32
        v1 = (v1 + ((((v0 << 4) + k[2]) ^ (v0 + s) ^ ((v0 >> 5) + k[3])) & _M32)) & _M32
    return struct.pack(">2I", v0, v1)


def tea_decrypt_block(key: bytes, block: bytes) -> bytes:
    v0, v1 = struct.unpack(">2I", block)
    k = struct.unpack(">4I", key)
    s = (_DELTA * 32) & _M32
    for _ in range(32):
        v1 = (v1 - ((((v0 << 4) + k[2]) ^ (v0 + s) ^ ((v0 >> 5) + k[3])) & _M32)) & _M32
        v0 = (v0 - ((((v1 << 4) + k[0]) ^ (v1 + s) ^ ((v1 >> 5) + k[1])) & _M32)) & _M32
        s = (s - _DELTA) & _M32
    return struct.pack(">2I", v0, v1)


def tea_cbc_encrypt(key: bytes, plaintext: bytes) -> bytes:
    data = pkcs7_pad(plaintext, 8)
    prev, out = bytes(8), bytearray()
    for i in range(0, len(data), 8):
        prev = tea_encrypt_block(key, bytes(a ^ b for a, b in zip(data[i : i + 8], prev)))
        out += prev
    return bytes(out)


def tea_cbc_decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if not ciphertext or len(ciphertext) % 8:
        raise DecryptionError("TEA ciphertext length is not a positive multiple of 8")
    prev, out = bytes(8), bytearray()
    for i in range(0, len(ciphertext), 8):
        block = ciphertext[i : i + 8]
        out += bytes(a ^ b for a, b in zip(tea_decrypt_block(key, block), prev))
        prev = block
    return pkcs7_unpad(bytes(out), 8)


# -- sessions --------------------------------------------------------------------

@dataclass(frozen=True)
class EncryptedSession:
    rsa_blob: bytes
    payload: bytes

    def __post_init__(self):
        if len(self.payload) < BLOCK or len(self.payload) % BLOCK:
            raise WupFormatError("payload must be a positive multiple of 16 bytes")

    @property
    def blob_int(self) -> int:
        return int_from_bytes(self.rsa_blob)

    def to_bytes(self) -> bytes:
        return self.rsa_blob + self.payload

    @classmethod
    def from_bytes(cls, data: bytes, modulus_len: int) -> "EncryptedSession":
        if len(data) < modulus_len + BLOCK:
            raise WupFormatError("session body shorter than key blob plus one block")
        return cls(data[:modulus_len], data[modulus_len:])


def key_int_to_session_key(value: int, key_bits: int = KEY_BITS) -> SessionKey:
    """The AES key the server derives from an RSA plaintext: the low ``key_bits`` bits."""
    return SessionKey.from_int(value & ((1 << key_bits) - 1))


def seal_raw(pub: RsaPublicKey, rsa_value: int, key: SessionKey | bytes, msg: WupMessage) -> EncryptedSession:
    """A session with an arbitrary (attacker-chosen) RSA ciphertext integer."""
    return EncryptedSession(int_to_bytes(rsa_value, pub.byte_len), aes_ecb_encrypt(key, msg.to_bytes()))


def seal_session(pub: RsaPublicKey, key: SessionKey, msg: WupMessage, *,
                 scheme: Scheme = Scheme.TEXTBOOK, rng: random.Random | None = None) -> EncryptedSession:
    """Client steps 1-4. Deterministic under the textbook scheme."""
    if scheme is Scheme.OAEP:
        c = encrypt_padded(pub, key.key, rng)
    else:
        c = encrypt_raw(pub, key.as_int())
    return seal_raw(pub, c, key, msg)


def open_session(key_pair: RsaKeyPair, sess: EncryptedSession, *, key_bits: int = KEY_BITS,
                 scheme: Scheme = Scheme.TEXTBOOK) -> tuple[SessionKey, WupMessage]:
    """Server steps 5-6. Any failure raises :class:`InvalidRequest`."""
    try:
        if len(sess.rsa_blob) != key_pair.public.byte_len:
            raise WupFormatError("key blob length differs from modulus length")
        c = sess.blob_int
        if scheme is Scheme.OAEP:
            raw = decrypt_padded(key_pair, c)
            if len(raw) != 16:
                raise PaddingError()
            key = SessionKey(raw)
        else:
            key = key_int_to_session_key(decrypt_raw(key_pair, c), key_bits)
        return key, decrypt_message(key, sess.payload)
    except (DomainError, PaddingError, DecryptionError, WupFormatError) as exc:
        raise InvalidRequest() from exc


# -- framing ---------------------------------------------------------------------

def frame_write(stream, data: bytes) -> None:
    if len(data) > MAX_FRAME:
        raise FramingError(f"frame of {len(data)} bytes exceeds {MAX_FRAME}")
    stream.write(struct.pack(">I", len(data)) + data)
    flush = getattr(stream, "flush", None)
    if flush:
        flush()


def _read_exact(stream, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise FramingError(f"truncated frame: wanted {n} bytes, got {len(buf)}")
        buf += chunk
    return bytes(buf)


def frame_read(stream) -> bytes:
    (length,) = struct.unpack(">I", _read_exact(stream, 4))
    if length > MAX_FRAME:
        raise FramingError(f"frame length {length} exceeds {MAX_FRAME}")
    return _read_exact(stream, length)


def frame(data: bytes) -> bytes:
    buf = io.BytesIO()
    frame_write(buf, data)
    return buf.getvalue()
