"""Message channels, mock upstream servers and the scriptable man-in-the-middle.

Every hop is an :class:`Endpoint` with one method, ``handle(Exchange) ->
bytes``. The victim talks to a :class:`Channel`, which adds simulated
latency and, when the authenticated-transport toggle is on, checks a
per-response tag that only the genuine servers can produce.

Three kinds of exchange exist:

``wup``   Android update query: an encrypted WUP session, as in the
          key-exchange protocol. The response is an encrypted
          ``UPDATE_INFO`` message.
``json``  Windows update query: plaintext JSON both ways.
``http``  Download of ``target`` (a URL).
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
from dataclasses import dataclass, field
from typing import Callable, Protocol

from ..attacks.cca2 import cca2_attack
from ..attacks.prng import SeedNotInWindow, prng_attack
from ..oracle_server import OracleUnavailable
from ..rsa_core import RsaKeyPair, RsaPublicKey
from ..victim_prng import SessionKey
from ..wup_protocol import (
    TEA_RESPONSE_KEY,
    DecryptionError,
    EncryptedSession,
    InvalidRequest,
    MessageKind,
    WupFormatError,
    WupMessage,
    aes_ecb_encrypt,
    decrypt_message,
    open_session,
    tea_cbc_decrypt,
    tea_cbc_encrypt,
)
from .artifacts import md5_digest

TAG_LEN = 32


class CryptoMode(str, enum.Enum):
    V63_HARDCODED = "v63_hardcoded"
    V65_SESSION = "v65_session"


class NotFound(LookupError):
    pass


class ChannelAuthError(ConnectionError):
    pass


class ScriptedAttackError(RuntimeError):
    """A forge script asked for something the attacker cannot do."""


@dataclass(frozen=True)
class Exchange:
    kind: str
    target: str
    body: bytes = b""


class Endpoint(Protocol):
    def handle(self, req: Exchange) -> bytes: ...


class SimClock:
    """Millisecond wall clock under test control."""

    def __init__(self, start_ms: int):
        self.now_ms = start_ms

    def __call__(self) -> int:
        return self.now_ms

    def advance(self, ms: int) -> None:
        self.now_ms += ms


# -- upstream servers ---------------------------------------------------------

def update_info(latest: "dict | None") -> WupMessage:
    """UPDATE_INFO with url/md5/version/package fields, or an empty one for "no update"."""
    if not latest:
        return WupMessage.build(MessageKind.UPDATE_INFO)
    fields = {k: str(v) for k, v in latest.items()}
    return WupMessage.build(MessageKind.UPDATE_INFO, **fields)


def parse_version(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split("."))
    except ValueError:
        raise ValueError(f"bad version string {text!r}") from None


class AndroidUpdateServer:
    """Answers WUP update queries. Silent (empty body) on anything it cannot open.

    ``keys`` maps each crypto mode to the RSA key pair its clients encrypt to.
    v6.3 responses are TEA-encrypted under the hard-coded key; later
    versions encrypt the response with the request's AES session key.
    """

    def __init__(self, keys: dict[CryptoMode, RsaKeyPair], latest: dict):
        self.keys = keys
        self.latest = latest
        self.accepted = 0

    def _open(self, body: bytes) -> tuple[CryptoMode, SessionKey, WupMessage] | None:
        for mode, pair in sorted(self.keys.items(), key=lambda kv: -kv[1].public.byte_len):
            try:
                sess = EncryptedSession.from_bytes(body, pair.public.byte_len)
                key, msg = open_session(pair, sess)
            except (WupFormatError, InvalidRequest):
                continue
            return mode, key, msg
        return None

    def handle(self, req: Exchange) -> bytes:
        if req.kind != "wup":
            raise NotFound(req.kind)
        opened = self._open(req.body)
        if opened is None:
            return b""
        self.accepted += 1
        mode, key, msg = opened
        installed = (msg.get("version") or b"0").decode(errors="replace")
        try:
            newer = parse_version(self.latest["version"]) > parse_version(installed)
        except ValueError:
            newer = False
        info = update_info(self.latest if newer else None).to_bytes()
        if mode is CryptoMode.V63_HARDCODED:
            return tea_cbc_encrypt(TEA_RESPONSE_KEY, info)
        return aes_ecb_encrypt(key, info)


class WindowsUpdateServer:
    def __init__(self, latest: dict):
        self.latest = latest

    def handle(self, req: Exchange) -> bytes:
        if req.kind != "json":
            raise NotFound(req.kind)
        try:
            installed = json.loads(req.body)["version"]
            newer = parse_version(self.latest["version"]) > parse_version(installed)
        except (ValueError, KeyError, TypeError):
            newer = False
        return json.dumps(self.latest if newer else {}, sort_keys=True).encode()


class HttpServer:
    def __init__(self, files: dict[str, bytes] | None = None):
        self.files = dict(files or {})

    def handle(self, req: Exchange) -> bytes:
        if req.kind != "http" or req.target not in self.files:
            raise NotFound(req.target)
        return self.files[req.target]


@dataclass
class Internet:
    """Routes each exchange kind to its server."""

    routes: dict[str, Endpoint]

    def handle(self, req: Exchange) -> bytes:
        try:
            return self.routes[req.kind].handle(req)
        except KeyError:
            raise NotFound(req.kind) from None


# -- authenticated transport toggle ----------------------------------------------

def _tag(key: bytes, req: Exchange, body: bytes) -> bytes:
    mac = hmac.new(key, digestmod=hashlib.sha256)
    for part in (req.kind.encode(), req.target.encode(), req.body, body):
        mac.update(len(part).to_bytes(8, "big"))
        mac.update(part)
    return mac.digest()


@dataclass
class TaggingEndpoint:
    """Server side of the authenticated transport: prefixes each response with a tag."""

    inner: Endpoint
    key: bytes

    def handle(self, req: Exchange) -> bytes:
        body = self.inner.handle(req)
        return _tag(self.key, req, body) + body


@dataclass
class Channel:
    """What the victim sends through. Advances the clock by ``latency_ms`` per exchange."""

    endpoint: Endpoint
    clock: SimClock
    latency_ms: int = 0
    auth_key: bytes | None = None
    log: list[Exchange] = field(default_factory=list)

    def exchange(self, kind: str, target: str, body: bytes = b"") -> bytes:
        req = Exchange(kind, target, body)
        self.log.append(req)
        self.clock.advance(self.latency_ms)
        resp = self.endpoint.handle(req)
        if self.auth_key is None:
            return resp
        tag, resp = resp[:TAG_LEN], resp[TAG_LEN:]
        if not hmac.compare_digest(tag, _tag(self.auth_key, req, resp)):
            raise ChannelAuthError(f"bad transport tag on {kind} {target}")
        return resp


# -- the attacker ---------------------------------------------------------------

ACTIONS = ("pass", "modify", "fabricate", "replace", "flip_byte")


@dataclass(frozen=True)
class ForgeRule:
    match: str
    action: str = "pass"
    url: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.match not in ("wup", "json", "http"):
            raise ValueError(f"unknown exchange kind {self.match!r}")
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")

    def applies(self, req: Exchange) -> bool:
        return req.kind == self.match and (self.url is None or self.url == req.target)


@dataclass(frozen=True)
class ForgeScript:
    """Ordered interception rules plus where v6.5 session keys come from.

    ``key_source`` is ``"prng"``, ``"cca2"``, ``"hex:<32 hex digits>"`` or None.
    """

    rules: tuple[ForgeRule, ...] = ()
    key_source: str | None = None
    prng_radius: int = 35_000

    @classmethod
    def from_json(cls, data: dict | None) -> "ForgeScript":
        data = data or {}
        rules = tuple(ForgeRule(r["match"], r.get("action", "pass"), r.get("url"), dict(r.get("params", {})))
                      for r in data.get("rules", []))
        return cls(rules, data.get("key_source"), int(data.get("prng_radius", 35_000)))


ArtifactBuilder = Callable[[dict], bytes]


class MitmProxy:
    """On-path attacker between the victim's channel and the internet.

    ``android_pub`` maps crypto modes to the server keys the victim encrypts
    to, so intercepted WUP sessions can be parsed. ``build_artifact`` turns
    an artifact spec from the script into bytes. Attacker-hosted files
    (URLs named in fabricated metadata) are served by the proxy itself.
    """

    def __init__(self, script: ForgeScript, upstream: Endpoint, *, clock: SimClock,
                 android_pub: dict[CryptoMode, RsaPublicKey] | None = None,
                 build_artifact: ArtifactBuilder | None = None, tagged: bool = False):
        self.script = script
        self.upstream = upstream
        self.clock = clock
        self.android_pub = android_pub or {}
        self.build_artifact = build_artifact or (lambda spec: b"")
        self.tag_len = TAG_LEN if tagged else 0
        self.hosted: dict[str, bytes] = {}
        self.served_digests: set[bytes] = set()
        self.actions: list[str] = []
        self.attack: dict = {}
        self.session_key: SessionKey | None = None

    # byte-level helpers; with tagging on, the attacker keeps the old tag
    def _forward(self, req: Exchange) -> tuple[bytes, bytes]:
        resp = self.upstream.handle(req)
        return resp[: self.tag_len], resp[self.tag_len :]

    def _artifact(self, params: dict) -> bytes | None:
        spec = params.get("artifact")
        if spec is None:
            return None
        data = self.build_artifact(spec)
        self.served_digests.add(md5_digest(data))
        return data

    def _metadata(self, params: dict, base: dict) -> dict:
        meta = dict(base)
        meta.update({k: v for k, v in params.items() if k != "artifact"})
        data = self._artifact(params)
        if data is not None:
            if params.get("md5", "auto") == "auto":
                meta["md5"] = md5_digest(data).hex()
            if "url" in meta and meta["url"] not in self.hosted:
                self.hosted[meta["url"]] = data
        return meta

    def handle(self, req: Exchange) -> bytes:
        rule = next((r for r in self.script.rules if r.applies(req)), None)
        if rule is None:
            if req.kind == "http" and req.target in self.hosted:
                self.actions.append(f"serve {req.target}")
                return bytes(self.tag_len) + self.hosted[req.target]
            rule = ForgeRule(req.kind)
        self.actions.append(f"{rule.action} {req.kind} {req.target}".rstrip())
        handler = getattr(self, f"_{req.kind}")
        return handler(rule, req)

    def _wup(self, rule: ForgeRule, req: Exchange) -> bytes:
        if rule.action == "pass":
            return b"".join(self._forward(req))
        if rule.action not in ("modify", "fabricate"):
            raise ScriptedAttackError(f"{rule.action} is not meaningful for WUP queries")
        mode, sess = self._parse_session(req.body)
        base: dict = {}
        tag = bytes(self.tag_len)
        if mode is CryptoMode.V63_HARDCODED:
            seal = lambda msg: tea_cbc_encrypt(TEA_RESPONSE_KEY, msg.to_bytes())  # noqa: E731
        else:
            key = self._session_key(sess, req)
            seal = lambda msg: aes_ecb_encrypt(key, msg.to_bytes())  # noqa: E731
        if rule.action == "modify":
            tag, body = self._forward(req)
            base = self._open_response(mode, body, sess)
        return tag + seal(update_info(self._metadata(rule.params, base)))

    def _parse_session(self, body: bytes) -> tuple[CryptoMode, EncryptedSession]:
        # larger moduli first so a 1024-bit session is never misread as a 128-bit one
        for mode, pub in sorted(self.android_pub.items(), key=lambda kv: -kv[1].byte_len):
            if len(body) >= pub.byte_len + 16 and (len(body) - pub.byte_len) % 16 == 0:
                return mode, EncryptedSession.from_bytes(body, pub.byte_len)
        raise ScriptedAttackError("cannot parse intercepted WUP session")

    def _open_response(self, mode: CryptoMode, body: bytes, sess: EncryptedSession) -> dict:
        try:
            if mode is CryptoMode.V63_HARDCODED:
                msg = WupMessage.from_bytes(tea_cbc_decrypt(TEA_RESPONSE_KEY, body))
            else:
                msg = decrypt_message(self.session_key, body)
        except (DecryptionError, WupFormatError):
            return {}
        return {name: value.decode(errors="replace") for name, value in msg.fields}

    def _session_key(self, sess: EncryptedSession, req: Exchange) -> SessionKey:
        source = self.script.key_source
        if not source:
            raise ScriptedAttackError("forging a v6.5 response needs a session key; set key_source")
        if source == "prng":
            try:
                res = prng_attack(sess, self.clock(), self.script.prng_radius)
            except SeedNotInWindow as exc:
                raise ScriptedAttackError(str(exc)) from exc
            key = res.key
            self.attack = {"key_source": "prng", "guesses": res.guesses, "offset_ms": res.offset_ms}
        elif source == "cca2":
            pub = self.android_pub[CryptoMode.V65_SESSION]
            res = cca2_attack(sess, self._oracle(req), pub)
            if not res.recovered:
                raise ScriptedAttackError("cca2 key recovery failed")
            key = res.recovered_key
            self.attack = {"key_source": "cca2", "queries": res.queries}
        elif source.startswith("hex:"):
            key = SessionKey(bytes.fromhex(source[4:]))
            self.attack = {"key_source": "hex"}
        else:
            raise ScriptedAttackError(f"unknown key_source {source!r}")
        self.session_key = key
        self.attack["key"] = key.hex()
        return key

    def _oracle(self, req: Exchange):
        def query(sess: EncryptedSession) -> bytes | None:
            try:
                _tag, body = self._forward(Exchange("wup", req.target, sess.to_bytes()))
            except NotFound as exc:
                raise OracleUnavailable(str(exc)) from exc
            return body or None

        return query

    def _json(self, rule: ForgeRule, req: Exchange) -> bytes:
        if rule.action == "pass":
            return b"".join(self._forward(req))
        if rule.action not in ("modify", "fabricate"):
            raise ScriptedAttackError(f"{rule.action} is not meaningful for JSON queries")
        tag, base = bytes(self.tag_len), {}
        if rule.action == "modify":
            tag, body = self._forward(req)
            try:
                base = json.loads(body)
            except ValueError:
                base = {}
        return tag + json.dumps(self._metadata(rule.params, base), sort_keys=True).encode()

    def _http(self, rule: ForgeRule, req: Exchange) -> bytes:
        if rule.action == "pass":
            return b"".join(self._forward(req))
        if rule.action == "replace":
            data = self._artifact(rule.params)
            if data is None:
                raise ScriptedAttackError("replace needs an artifact")
            return bytes(self.tag_len) + data
        if rule.action == "flip_byte":
            tag, body = self._forward(req)
            if not body:
                return tag + body
            i = int(rule.params.get("index", len(body) // 2)) % len(body)
            flipped = body[:i] + bytes([body[i] ^ 0xFF]) + body[i + 1 :]
            self.served_digests.add(md5_digest(flipped))
            return tag + flipped
        raise ScriptedAttackError(f"{rule.action} is not meaningful for downloads")


def mitm_proxy(script: ForgeScript, upstream: Endpoint, downstream: SimClock | None = None,
               **kwargs) -> MitmProxy:
    """Build a proxy in front of ``upstream``; ``downstream`` is the victim side's clock."""
    clock = downstream if downstream is not None else kwargs.pop("clock")
    return MitmProxy(script, upstream, clock=clock, **kwargs)
