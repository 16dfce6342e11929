"""Scripted end-to-end update scenarios.

A scenario file is JSON::

    {
      "name": "v63-forged-metadata",
      "victim": "android",              # or "windows"
      "crypto": "v63_hardcoded",        # Android only; or "v65_session"
      "installed_version": "6.3.0",     # optional
      "seed": 1,                        # RSA keys and CA secret
      "clock_ms": 1400000000000,
      "latency_ms": 1234,               # per exchange, as seen by the attacker
      "authenticated_transport": false,
      "forge": {"key_source": null, "rules": [...]},  # omit for no attacker
      "expect": {"kind": "new_package_prompt", "attacker_payload": true}
    }

``expect`` is compared against the outcome's JSON form, extended with
``attacker_payload`` (the artifact's MD5 is one the attacker served) and
``sandbox_escapes``. Only the listed keys are checked; nested objects are
compared the same way.

Artifact specs in forge rules are ``{"type": "apk", "package", "version",
"signer"}``, ``{"type": "exe", "role", "signer"?, ...manifest}`` (signed
only if the signer is one the mock CA will sign for the attacker, which
is never the vendor) or ``{"type": "known", "name"}`` for a genuine file
from the mock vendor.
"""

from __future__ import annotations

import functools
import hashlib
import json
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from ..rsa_core import RsaKeyPair, keygen
from .artifacts import VENDOR_SIGNER, Apk, MockCA, SignatureVerifier, exe, md5_digest
from .network import (
    AndroidUpdateServer,
    Channel,
    CryptoMode,
    ForgeScript,
    HttpServer,
    Internet,
    MitmProxy,
    SimClock,
    TaggingEndpoint,
    WindowsUpdateServer,
)
from .vfs import VirtualFs
from .victims import ANDROID_PACKAGE, UpdateOutcome, Variant, victim_update_android, victim_update_windows

DL = "http://dl.qq-mock.test"
ANDROID_APK_URL = f"{DL}/android/qqbrowser-6.6.0.apk"
WINDOWS_EXE_URL = f"{DL}/win/qqbrowser_10.1.0_update.exe"
WEB_INSTALLER_URL = f"{DL}/win/qqbrowser_webinstaller.exe"
FULL_INSTALLER_URL = f"{DL}/win/qqbrowser_full.exe"
INSTALLED_EXE = "programfiles/tencent/qqbrowser/qqbrowser.exe"

ANDROID_INSTALLED = "6.3.0"
ANDROID_LATEST = "6.6.0"
WINDOWS_INSTALLED = "10.0.0"
WINDOWS_LATEST = "10.1.0"


class ScenarioError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def _server_key(bits: int, seed: int) -> RsaKeyPair:
    return keygen(bits, rng=seed * 1000 + bits)


class World:
    """Genuine vendor infrastructure for one scenario, fully determined by ``seed``."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.ca = MockCA(hashlib.sha256(f"mock-ca/{seed}".encode()).digest())
        self.verifier = SignatureVerifier(self.ca)
        self.android_keys = {
            CryptoMode.V63_HARDCODED: _server_key(128, seed),
            CryptoMode.V65_SESSION: _server_key(1024, seed),
        }
        self.known = {
            "android-latest": Apk(ANDROID_PACKAGE, ANDROID_LATEST, VENDOR_SIGNER, b"genuine apk body").to_bytes(),
            "windows-latest": exe("update", VENDOR_SIGNER, self.ca, version=WINDOWS_LATEST).to_bytes(),
            "web-installer": exe("web-installer", VENDOR_SIGNER, self.ca, fetch=FULL_INSTALLER_URL,
                                 save_as="qqbrowser_full.exe").to_bytes(),
            "full-installer": exe("installer", VENDOR_SIGNER, self.ca, version=WINDOWS_LATEST).to_bytes(),
            "installed-exe": exe("browser", VENDOR_SIGNER, self.ca, version=WINDOWS_INSTALLED).to_bytes(),
        }
        self.http = HttpServer({
            ANDROID_APK_URL: self.known["android-latest"],
            WINDOWS_EXE_URL: self.known["windows-latest"],
            WEB_INSTALLER_URL: self.known["web-installer"],
            FULL_INSTALLER_URL: self.known["full-installer"],
        })
        self.android_server = AndroidUpdateServer(self.android_keys, {
            "url": ANDROID_APK_URL,
            "md5": md5_digest(self.known["android-latest"]).hex(),
            "version": ANDROID_LATEST,
            "package": ANDROID_PACKAGE,
        })
        self.windows_server = WindowsUpdateServer({
            "url": WINDOWS_EXE_URL,
            "md5": md5_digest(self.known["windows-latest"]).hex(),
            "version": WINDOWS_LATEST,
            "save_as": "qqbrowser_update.exe",
        })
        self.internet = Internet({"wup": self.android_server, "json": self.windows_server, "http": self.http})
        self.transport_key = hashlib.sha256(f"transport/{seed}".encode()).digest()

    def build_artifact(self, spec: dict) -> bytes:
        kind = spec.get("type")
        if kind == "known":
            try:
                return self.known[spec["name"]]
            except KeyError:
                raise ScenarioError(f"unknown artifact {spec.get('name')!r}") from None
        if kind == "apk":
            return Apk(spec.get("package", "com.attacker.payload"), spec.get("version", "1.0"),
                       spec.get("signer", "Attacker"), spec.get("body", "attacker apk").encode()).to_bytes()
        if kind == "exe":
            manifest = {k: v for k, v in spec.items() if k not in ("type", "role", "signer")}
            signer = spec.get("signer")
            if signer == VENDOR_SIGNER:
                raise ScenarioError("the attacker cannot sign as the vendor")
            return exe(spec.get("role", "malware"), signer, self.ca if signer else None, **manifest).to_bytes()
        raise ScenarioError(f"unknown artifact type {kind!r}")


@dataclass
class Scenario:
    name: str
    victim: Variant
    crypto: CryptoMode = CryptoMode.V65_SESSION
    installed_version: str | None = None
    seed: int = 0
    clock_ms: int = 1_400_000_000_000
    latency_ms: int = 0
    authenticated_transport: bool = False
    forge: ForgeScript | None = None
    expect: dict = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        try:
            victim = Variant(data["victim"])
            crypto = CryptoMode(data.get("crypto", CryptoMode.V65_SESSION.value))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad scenario header: {exc}") from None
        forge = data.get("forge")
        try:
            script = None if forge is None else ForgeScript.from_json(forge)
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioError(f"bad forge script: {exc}") from None
        return cls(
            name=data.get("name", "unnamed"),
            victim=victim,
            crypto=crypto,
            installed_version=data.get("installed_version"),
            seed=int(data.get("seed", 0)),
            clock_ms=int(data.get("clock_ms", 1_400_000_000_000)),
            latency_ms=int(data.get("latency_ms", 0)),
            authenticated_transport=bool(data.get("authenticated_transport", False)),
            forge=script,
            expect=dict(data.get("expect", {})),
            description=data.get("description", ""),
        )


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return Scenario.from_json(data)


def builtin_scenarios() -> dict[str, Scenario]:
    """The scenario files shipped with the package, by name."""
    out = {}
    for entry in sorted(resources.files("wuplab").joinpath("scenarios").iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            sc = Scenario.from_json(json.loads(entry.read_text()))
            out[sc.name] = sc
    return out


@dataclass
class ScenarioResult:
    scenario: Scenario
    outcome: UpdateOutcome
    actual: dict
    mismatches: list[str]
    fs_writes: list
    proxy_actions: list[str]
    attack: dict

    @property
    def matched(self) -> bool:
        return not self.mismatches

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "matched": self.matched,
            "mismatches": self.mismatches,
            "outcome": self.actual,
            "fs_writes": [asdict(w) for w in self.fs_writes],
            "proxy_actions": self.proxy_actions,
            "attack": self.attack,
        }


def _compare(expected: dict, actual: dict, prefix: str = "") -> list[str]:
    problems = []
    for key, want in expected.items():
        got = actual.get(key) if isinstance(actual, dict) else None
        if isinstance(want, dict) and isinstance(got, dict):
            problems += _compare(want, got, f"{prefix}{key}.")
        elif got != want:
            problems.append(f"{prefix}{key}: expected {want!r}, got {got!r}")
    return problems


def run_scenario(scenario: Scenario, sandbox: str | Path | None = None) -> ScenarioResult:
    """Run one scenario in a fresh world. ``sandbox`` defaults to a temporary directory."""
    if sandbox is None:
        with tempfile.TemporaryDirectory(prefix="wuplab-fs-") as tmp:
            return run_scenario(scenario, tmp)
    world = World(scenario.seed)
    clock = SimClock(scenario.clock_ms)
    upstream = world.internet
    auth_key = None
    if scenario.authenticated_transport:
        upstream = TaggingEndpoint(upstream, world.transport_key)
        auth_key = world.transport_key
    proxy = None
    if scenario.forge is not None:
        proxy = MitmProxy(scenario.forge, upstream, clock=clock,
                          android_pub={m: k.public for m, k in world.android_keys.items()},
                          build_artifact=world.build_artifact, tagged=auth_key is not None)
    channel = Channel(proxy or upstream, clock, scenario.latency_ms, auth_key)
    fs = VirtualFs(sandbox)
    if scenario.victim is Variant.ANDROID_WUP:
        outcome = victim_update_android(scenario.installed_version or ANDROID_INSTALLED, channel, scenario.crypto,
                                        server_pub=world.android_keys[scenario.crypto].public)
    else:
        fs.put(INSTALLED_EXE, world.known["installed-exe"])
        outcome = victim_update_windows(scenario.installed_version or WINDOWS_INSTALLED, channel, fs,
                                        world.verifier)
    actual = outcome.to_json()
    served = proxy.served_digests if proxy else set()
    actual["attacker_payload"] = (outcome.payload_digest is not None
                                  and bytes.fromhex(outcome.payload_digest) in served)
    actual["sandbox_escapes"] = fs.sandbox_escapes()
    attack = {k: v for k, v in (proxy.attack if proxy else {}).items()}
    return ScenarioResult(scenario, outcome, actual, _compare(scenario.expect, actual), list(fs.writes),
                          list(proxy.actions) if proxy else [], attack)
