"""Stand-ins for APK and EXE files, and for code signing.

Nothing here is ever executed. An "APK" is a small header naming package,
version and signing key, followed by an opaque body. An "EXE" is a
:class:`SignedBlob` whose payload is a JSON manifest describing what it
would do when run (its ``role``).

Code signing is a keyed hash per signer name, held by a mock certificate
authority. That is enough to model the relevant property: a valid
signature proves *who* signed a binary, not *what* the binary does.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass

APK_MAGIC = b"APKSIM\x00"
EXE_MAGIC = b"MZSIM\x00"
VENDOR_SIGNER = "Tencent-mock"


class ArtifactFormatError(ValueError):
    pass


def md5_digest(data: bytes) -> bytes:
    return hashlib.md5(data).digest()


def _split_header(data: bytes, magic: bytes) -> tuple[dict, bytes]:
    if not data.startswith(magic):
        raise ArtifactFormatError(f"missing {magic!r} header")
    head, sep, body = data[len(magic) :].partition(b"\n")
    if not sep:
        raise ArtifactFormatError("unterminated header")
    try:
        return json.loads(head), body
    except ValueError as exc:
        raise ArtifactFormatError(f"bad header: {exc}") from None


@dataclass(frozen=True)
class Apk:
    package: str
    version: str
    signer: str
    body: bytes = b""

    def to_bytes(self) -> bytes:
        head = json.dumps({"package": self.package, "version": self.version, "signer": self.signer},
                          sort_keys=True)
        return APK_MAGIC + head.encode() + b"\n" + self.body

    @classmethod
    def from_bytes(cls, data: bytes) -> "Apk":
        head, body = _split_header(data, APK_MAGIC)
        try:
            return cls(head["package"], head["version"], head["signer"], body)
        except KeyError as exc:
            raise ArtifactFormatError(f"APK header lacks {exc}") from None


@dataclass(frozen=True)
class SignedBlob:
    payload: bytes
    signer: str = ""
    signature: bytes = b""

    def to_bytes(self) -> bytes:
        head = json.dumps({"signer": self.signer, "signature": self.signature.hex()}, sort_keys=True)
        return EXE_MAGIC + head.encode() + b"\n" + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedBlob":
        head, payload = _split_header(data, EXE_MAGIC)
        try:
            return cls(payload, head.get("signer", ""), bytes.fromhex(head.get("signature", "")))
        except ValueError as exc:
            raise ArtifactFormatError(f"bad signature field: {exc}") from None

    @property
    def manifest(self) -> dict:
        try:
            return json.loads(self.payload)
        except ValueError:
            return {}


def exe(role: str, signer: str | None = None, ca: "MockCA | None" = None, **manifest) -> SignedBlob:
    """Build an EXE stand-in; signed when both ``signer`` and ``ca`` are given."""
    payload = json.dumps({"role": role, **manifest}, sort_keys=True).encode()
    if signer and ca:
        return ca.sign(signer, payload)
    return SignedBlob(payload)


class MockCA:
    """Per-signer HMAC keys derived from a secret seed."""

    def __init__(self, secret: bytes = b"mock-ca"):
        self._secret = secret

    def _key(self, signer: str) -> bytes:
        return hashlib.sha256(self._secret + b"/" + signer.encode()).digest()

    def sign(self, signer: str, payload: bytes) -> SignedBlob:
        return SignedBlob(payload, signer, hmac.new(self._key(signer), payload, hashlib.sha256).digest())

    def verify(self, blob: SignedBlob) -> bool:
        if not blob.signer or not blob.signature:
            return False
        expected = hmac.new(self._key(blob.signer), blob.payload, hashlib.sha256).digest()
        return hmac.compare_digest(expected, blob.signature)


@dataclass(frozen=True)
class SignatureVerifier:
    """Accepts any binary carrying a valid signature by ``expected_signer``."""

    ca: MockCA
    expected_signer: str = VENDOR_SIGNER

    def __call__(self, data: bytes) -> SignedBlob | None:
        try:
            blob = SignedBlob.from_bytes(data)
        except ArtifactFormatError:
            return None
        if blob.signer != self.expected_signer or not self.ca.verify(blob):
            return None
        return blob
