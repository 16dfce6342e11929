"""The two victim update procedures, as deterministic state machines.

Both run to an :class:`UpdateOutcome`. Install prompts and execution are
recorded as outcome events with the artifact's MD5; nothing is run.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

from ..rsa_core import RsaPublicKey
from ..victim_prng import keygen_v63_from_clock, keygen_v65
from ..wup_protocol import (
    TEA_RESPONSE_KEY,
    DecryptionError,
    MessageKind,
    WupFormatError,
    WupMessage,
    decrypt_message,
    seal_session,
    tea_cbc_decrypt,
)
from .artifacts import VENDOR_SIGNER, Apk, ArtifactFormatError, SignatureVerifier, SignedBlob, md5_digest
from .network import Channel, ChannelAuthError, CryptoMode, NotFound, SimClock, parse_version
from .vfs import FsRefused, VirtualFs

ANDROID_PACKAGE = "com.tencent.mtt"
WUP_SERVER = "wup.qq-mock.test"
WINDOWS_UPDATE_SERVER = "update.qq-mock.test"


class Variant(str, enum.Enum):
    ANDROID_WUP = "android"
    WINDOWS_JSON = "windows"


class OutcomeKind(str, enum.Enum):
    UPGRADE_PROMPT = "upgrade_prompt"
    NEW_PACKAGE_PROMPT = "new_package_prompt"
    EXECUTE = "execute"
    HALT = "halt"


class HaltReason(str, enum.Enum):
    NO_RESPONSE = "no_response"
    NO_UPDATE = "no_update"
    DECRYPT_FAILURE = "decrypt_failure"
    BAD_METADATA = "bad_metadata"
    DOWNGRADE = "downgrade"
    DOWNLOAD_FAILED = "download_failed"
    HASH_MISMATCH = "hash_mismatch"
    BAD_PACKAGE = "bad_package"
    SIGNER_MISMATCH = "signer_mismatch"
    SIGNATURE_INVALID = "signature_invalid"
    FS_REFUSED = "fs_refused"
    CHANNEL_AUTH_FAILURE = "channel_auth_failure"


@dataclass(frozen=True)
class UpdateMetadata:
    variant: Variant
    url: str
    md5: bytes
    version: str
    save_as: str | None = None

    def __post_init__(self):
        if len(self.md5) != 16:
            raise ValueError("md5 must be exactly 16 bytes")
        if self.variant is Variant.ANDROID_WUP and self.save_as is not None:
            raise ValueError("Android metadata has no save_as")

    @classmethod
    def from_fields(cls, variant: Variant, fields: dict) -> "UpdateMetadata":
        """Parse wire fields (all strings); raises ValueError if malformed."""
        try:
            md5 = bytes.fromhex(fields["md5"])
            return cls(variant, fields["url"], md5, fields["version"],
                       fields.get("save_as") if variant is Variant.WINDOWS_JSON else None)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"metadata lacks {exc}") from None

    def to_fields(self) -> dict:
        out = {"url": self.url, "md5": self.md5.hex(), "version": self.version}
        if self.save_as is not None:
            out["save_as"] = self.save_as
        return out


@dataclass(frozen=True)
class UpdateOutcome:
    kind: OutcomeKind
    reason: HaltReason | None = None
    package: str | None = None
    signer: str | None = None
    role: str | None = None
    payload_digest: str | None = None
    saved_path: str | None = None
    escaped: bool | None = None
    overwrite_target: str | None = None
    second_stage: dict | None = None
    steps: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def halt(cls, reason: HaltReason, steps: list[str], **kw) -> "UpdateOutcome":
        return cls(OutcomeKind.HALT, reason, steps=tuple(steps), **kw)

    def to_json(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if v is not None}
        out["kind"] = self.kind.value
        if self.reason is not None:
            out["reason"] = self.reason.value
        out["steps"] = list(self.steps)
        return out


def _is_downgrade(offered: str, installed: str) -> bool:
    try:
        return parse_version(offered) < parse_version(installed)
    except ValueError:
        return True


# -- Android ---------------------------------------------------------------------

def victim_update_android(version: str, channel: Channel, crypto: CryptoMode | str, *,
                          server_pub: RsaPublicKey, package: str = ANDROID_PACKAGE,
                          signer: str = VENDOR_SIGNER) -> UpdateOutcome:
    """Query, metadata, download, MD5 check, then an install prompt.

    An APK for the installed package with a higher version yields an
    upgrade prompt; any other package yields a new-package prompt.
    """
    crypto = CryptoMode(crypto)
    clock: SimClock = channel.clock
    steps = ["query"]
    key = keygen_v63_from_clock(clock) if crypto is CryptoMode.V63_HARDCODED else keygen_v65(clock())
    query = WupMessage.build(MessageKind.UPDATE_QUERY, package=package, version=version)
    sess = seal_session(server_pub, key, query)
    try:
        resp = channel.exchange("wup", WUP_SERVER, sess.to_bytes())
    except ChannelAuthError:
        return UpdateOutcome.halt(HaltReason.CHANNEL_AUTH_FAILURE, steps)
    except NotFound:
        return UpdateOutcome.halt(HaltReason.NO_RESPONSE, steps)
    if not resp:
        return UpdateOutcome.halt(HaltReason.NO_RESPONSE, steps)

    steps.append("metadata")
    try:
        if crypto is CryptoMode.V63_HARDCODED:
            info = WupMessage.from_bytes(tea_cbc_decrypt(TEA_RESPONSE_KEY, resp))
        else:
            info = decrypt_message(key, resp)
    except (DecryptionError, WupFormatError):
        return UpdateOutcome.halt(HaltReason.DECRYPT_FAILURE, steps)
    if info.kind is not MessageKind.UPDATE_INFO:
        return UpdateOutcome.halt(HaltReason.BAD_METADATA, steps)
    fields = {name: value.decode(errors="replace") for name, value in info.fields}
    if "url" not in fields:
        return UpdateOutcome.halt(HaltReason.NO_UPDATE, steps)
    try:
        meta = UpdateMetadata.from_fields(Variant.ANDROID_WUP, fields)
    except ValueError:
        return UpdateOutcome.halt(HaltReason.BAD_METADATA, steps)
    if _is_downgrade(meta.version, version):
        return UpdateOutcome.halt(HaltReason.DOWNGRADE, steps)

    steps.append("download")
    try:
        apk_bytes = channel.exchange("http", meta.url)
    except ChannelAuthError:
        return UpdateOutcome.halt(HaltReason.CHANNEL_AUTH_FAILURE, steps)
    except NotFound:
        return UpdateOutcome.halt(HaltReason.DOWNLOAD_FAILED, steps)

    steps.append("verify_md5")
    digest = md5_digest(apk_bytes)
    if digest != meta.md5:
        return UpdateOutcome.halt(HaltReason.HASH_MISMATCH, steps, payload_digest=digest.hex())

    steps.append("install")
    try:
        apk = Apk.from_bytes(apk_bytes)
    except ArtifactFormatError:
        return UpdateOutcome.halt(HaltReason.BAD_PACKAGE, steps, payload_digest=digest.hex())
    common = dict(package=apk.package, signer=apk.signer, payload_digest=digest.hex(), steps=tuple(steps))
    if apk.package != package:
        return UpdateOutcome(OutcomeKind.NEW_PACKAGE_PROMPT, **common)
    # the package manager refuses a same-package install with another key, or a downgrade
    if apk.signer != signer:
        return UpdateOutcome(OutcomeKind.HALT, HaltReason.SIGNER_MISMATCH, **common)
    if _is_downgrade(apk.version, version):
        return UpdateOutcome(OutcomeKind.HALT, HaltReason.DOWNGRADE, **common)
    return UpdateOutcome(OutcomeKind.UPGRADE_PROMPT, **common)


# -- Windows ---------------------------------------------------------------------

def _second_stage(blob: SignedBlob, channel: Channel, fs: VirtualFs, verifier: SignatureVerifier) -> dict | None:
    """A web installer fetches and runs its payload without any verification."""
    manifest = blob.manifest
    url = manifest.get("fetch")
    if manifest.get("role") != "web-installer" or not url:
        return None
    try:
        data = channel.exchange("http", url)
    except (ChannelAuthError, NotFound) as exc:
        return {"url": url, "executed": False, "error": type(exc).__name__}
    try:
        write = fs.save_download(manifest.get("save_as") or url.rsplit("/", 1)[-1], data)
    except FsRefused:
        return {"url": url, "executed": False, "error": "FsRefused"}
    try:
        inner = SignedBlob.from_bytes(data)
        role = inner.manifest.get("role")
    except ArtifactFormatError:
        inner, role = None, None
    return {
        "url": url,
        "digest": md5_digest(data).hex(),
        "saved_path": write.resolved_path,
        "role": role,
        "signature_valid": verifier(data) is not None,
        "executed": True,
    }


def victim_update_windows(version: str, channel: Channel, fs: VirtualFs,
                          verifier: SignatureVerifier) -> UpdateOutcome:
    """Query, metadata, download-and-save, MD5 check, signature check, execute.

    The file is written under the server-supplied name *before* any check,
    so a traversal name lands wherever it points even when later checks fail.
    """
    steps = ["query"]
    try:
        resp = channel.exchange("json", WINDOWS_UPDATE_SERVER, json.dumps({"version": version}).encode())
    except ChannelAuthError:
        return UpdateOutcome.halt(HaltReason.CHANNEL_AUTH_FAILURE, steps)
    except NotFound:
        return UpdateOutcome.halt(HaltReason.NO_RESPONSE, steps)

    steps.append("metadata")
    try:
        fields = json.loads(resp) if resp else {}
        if not isinstance(fields, dict):
            raise ValueError("metadata is not an object")
    except ValueError:
        return UpdateOutcome.halt(HaltReason.BAD_METADATA, steps)
    if "url" not in fields:
        return UpdateOutcome.halt(HaltReason.NO_UPDATE, steps)
    try:
        meta = UpdateMetadata.from_fields(Variant.WINDOWS_JSON, fields)
    except ValueError:
        return UpdateOutcome.halt(HaltReason.BAD_METADATA, steps)

    steps.append("download")
    try:
        data = channel.exchange("http", meta.url)
    except ChannelAuthError:
        return UpdateOutcome.halt(HaltReason.CHANNEL_AUTH_FAILURE, steps)
    except NotFound:
        return UpdateOutcome.halt(HaltReason.DOWNLOAD_FAILED, steps)

    steps.append("save")
    name = meta.save_as or meta.url.rsplit("/", 1)[-1]
    try:
        write = fs.save_download(name, data)
    except FsRefused:
        return UpdateOutcome.halt(HaltReason.FS_REFUSED, steps)
    digest = md5_digest(data).hex()
    placed = dict(payload_digest=digest, saved_path=write.resolved_path, escaped=write.escaped_root,
                  overwrite_target=write.resolved_path if write.escaped_root and write.overwrote else None)

    steps.append("verify_md5")
    if md5_digest(data) != meta.md5:
        return UpdateOutcome.halt(HaltReason.HASH_MISMATCH, steps, **placed)

    steps.append("verify_signature")
    blob = verifier(data)
    if blob is None:
        return UpdateOutcome.halt(HaltReason.SIGNATURE_INVALID, steps, **placed)

    steps.append("execute")
    second = _second_stage(blob, channel, fs, verifier)
    return UpdateOutcome(OutcomeKind.EXECUTE, signer=blob.signer, role=blob.manifest.get("role"),
                         second_stage=second, steps=tuple(steps), **placed)
