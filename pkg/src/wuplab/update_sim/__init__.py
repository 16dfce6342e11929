"""Sandboxed simulation of the Android and Windows update mechanisms.

Mock vendor servers, a scriptable on-path attacker and a virtual
filesystem let the forged-metadata, directory-traversal and
signed-binary-substitution attacks run end to end without touching the
network or anything outside a temporary directory.
"""

from .artifacts import VENDOR_SIGNER, Apk, MockCA, SignatureVerifier, SignedBlob, md5_digest
from .network import (
    ChannelAuthError,
    CryptoMode,
    ForgeRule,
    ForgeScript,
    MitmProxy,
    ScriptedAttackError,
    SimClock,
    mitm_proxy,
)
from .scenario import (
    Scenario,
    ScenarioError,
    ScenarioResult,
    World,
    builtin_scenarios,
    load_scenario,
    run_scenario,
)
from .vfs import FsRefused, FsWrite, VirtualFs
from .victims import (
    HaltReason,
    OutcomeKind,
    UpdateMetadata,
    UpdateOutcome,
    Variant,
    victim_update_android,
    victim_update_windows,
)

__all__ = [
    "VENDOR_SIGNER",
    "Apk",
    "ChannelAuthError",
    "CryptoMode",
    "ForgeRule",
    "ForgeScript",
    "FsRefused",
    "FsWrite",
    "HaltReason",
    "MitmProxy",
    "MockCA",
    "OutcomeKind",
    "Scenario",
    "ScenarioError",
    "ScenarioResult",
    "ScriptedAttackError",
    "SignatureVerifier",
    "SignedBlob",
    "SimClock",
    "UpdateMetadata",
    "UpdateOutcome",
    "Variant",
    "VirtualFs",
    "World",
    "builtin_scenarios",
    "load_scenario",
    "md5_digest",
    "mitm_proxy",
    "run_scenario",
    "victim_update_android",
    "victim_update_windows",
]
