"""A sandboxed stand-in for the victim's Windows filesystem.

The sandbox directory plays the drive root. Requested names are resolved
the way the victim would resolve them: ``/`` and ``\\`` are both
separators, ``..`` climbs, and climbing past the drive root stays at the
root. Every write is logged with whether it left the download directory
(``escaped_root``). That flag is the traversal signal the attack produces.

A resolved-prefix check runs on top of the lexical resolution: a write
whose real path would fall outside the sandbox is refused, never
performed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

DOWNLOAD_DIR = "users/victim/appdata/local/temp"


class FsRefused(PermissionError):
    pass


@dataclass(frozen=True)
class FsWrite:
    requested_path: str
    resolved_path: str
    escaped_root: bool
    overwrote: bool


def resolve_virtual(requested: str, base: str = DOWNLOAD_DIR) -> str:
    """Lexically resolve ``requested`` against ``base``; result is relative to the drive root."""
    text = requested.replace("\\", "/")
    if len(text) >= 2 and text[1] == ":":  # drive letter
        text = "/" + text[2:].lstrip("/")
    parts = [] if text.startswith("/") else [p for p in base.split("/") if p]
    for part in text.split("/"):
        if part in ("", "."):
            continue
        if part == "..":
            if parts:
                parts.pop()
            continue
        parts.append(part)
    return "/".join(parts)


class VirtualFs:
    def __init__(self, root: str | Path, download_dir: str = DOWNLOAD_DIR):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.download_dir = download_dir.strip("/")
        self.writes: list[FsWrite] = []
        self.refused: list[str] = []

    def _real(self, virtual: str) -> Path:
        real = self.root.joinpath(*PurePosixPath(virtual).parts) if virtual else self.root
        root = self.root.resolve()
        resolved = real.resolve()
        if resolved != root and root not in resolved.parents:
            self.refused.append(virtual)
            raise FsRefused(f"{virtual!r} resolves outside the sandbox")
        return real

    def put(self, virtual: str, data: bytes) -> None:
        """Seed a file directly (scenario setup); not logged."""
        real = self._real(resolve_virtual(virtual, ""))
        real.parent.mkdir(parents=True, exist_ok=True)
        real.write_bytes(data)

    def save_download(self, requested: str, data: bytes) -> FsWrite:
        virtual = resolve_virtual(requested, self.download_dir)
        if not virtual:
            raise FsRefused("empty file name")
        real = self._real(virtual)
        if real.is_dir():
            raise FsRefused(f"{virtual!r} is a directory")
        escaped = not (virtual + "/").startswith(self.download_dir + "/")
        overwrote = real.exists()
        real.parent.mkdir(parents=True, exist_ok=True)
        real.write_bytes(data)
        record = FsWrite(requested, virtual, escaped, overwrote)
        self.writes.append(record)
        return record

    def read(self, virtual: str) -> bytes:
        return self._real(resolve_virtual(virtual, "")).read_bytes()

    def exists(self, virtual: str) -> bool:
        return self._real(resolve_virtual(virtual, "")).exists()

    def sandbox_escapes(self) -> int:
        """Logged writes whose real file lies outside the sandbox. Always 0 by construction."""
        root = os.path.realpath(self.root)
        count = 0
        for w in self.writes:
            real = os.path.realpath(self.root.joinpath(*PurePosixPath(w.resolved_path).parts))
            if os.path.commonpath([root, real]) != root:
                count += 1
        return count
