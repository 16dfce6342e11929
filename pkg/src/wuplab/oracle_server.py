"""Simulated WUP server acting as a one-bit decryption oracle.

A session that opens cleanly gets an AES-ECB encrypted response under the
recovered key. Anything else gets silence: the TCP connection is simply
closed. Response-or-silence is the only thing an attacker observes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .rsa_core import RsaKeyPair, RsaPublicKey
from .wup_protocol import (
    KEY_BITS,
    EncryptedSession,
    FramingError,
    InvalidRequest,
    MessageKind,
    Scheme,
    WupFormatError,
    WupMessage,
    aes_ecb_encrypt,
    frame,
    frame_read,
    open_session,
)

log = logging.getLogger(__name__)

RESPONSE_MESSAGE = WupMessage.build(MessageKind.RESPONSE, status="ok")


class OracleUnavailable(ConnectionError):
    """Transport failure talking to the oracle; the query may be retried."""


@dataclass(frozen=True)
class OracleConfig:
    key_pair: RsaKeyPair
    respond_on_valid: bool = True
    query_log: bool = True
    artificial_latency_ms: int = 0
    scheme: Scheme = Scheme.TEXTBOOK
    key_bits: int = KEY_BITS

    @property
    def public(self) -> RsaPublicKey:
        return self.key_pair.public


@dataclass(frozen=True)
class TranscriptEntry:
    timestamp: float
    client_id: str
    accepted: bool
    rsa_blob_digest: bytes

    def to_json(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "client_id": self.client_id,
            "accepted": self.accepted,
            "rsa_blob_digest": self.rsa_blob_digest.hex(),
        }


class OracleTranscript:
    """Append-only, thread-safe log of every query served."""

    def __init__(self):
        self._entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    @property
    def accepted(self) -> int:
        return sum(e.accepted for e in self.entries)

    def export_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json()) + "\n")


@dataclass
class Oracle:
    """In-process server. ``handle_session`` returns the encrypted response or None."""

    config: OracleConfig
    transcript: OracleTranscript = field(default_factory=OracleTranscript)

    def handle_session(self, sess: EncryptedSession, client_id: str = "local") -> bytes | None:
        cfg = self.config
        if cfg.artificial_latency_ms:
            time.sleep(cfg.artificial_latency_ms / 1000)
        try:
            key, _request = open_session(cfg.key_pair, sess, key_bits=cfg.key_bits, scheme=cfg.scheme)
        except InvalidRequest:
            key = None
        self.record(client_id, key is not None, sess.rsa_blob)
        if key is None or not cfg.respond_on_valid:
            return None
        return aes_ecb_encrypt(key, RESPONSE_MESSAGE.to_bytes())

    def handle_body(self, body: bytes, client_id: str = "local") -> bytes | None:
        """Like :meth:`handle_session` but from a raw frame body, which may be garbage."""
        try:
            sess = EncryptedSession.from_bytes(body, self.config.public.byte_len)
        except WupFormatError:
            self.record(client_id, False, body)
            return None
        return self.handle_session(sess, client_id)

    def record(self, client_id: str, accepted: bool, blob: bytes) -> None:
        if not self.config.query_log:
            return
        entry = TranscriptEntry(time.time(), client_id, accepted, hashlib.sha256(blob).digest())
        self.transcript.append(entry)

    def __call__(self, sess: EncryptedSession) -> bytes | None:
        return self.handle_session(sess)


def handle_session(cfg: OracleConfig, sess: EncryptedSession,
                   transcript: OracleTranscript | None = None) -> bytes | None:
    if transcript is None:
        transcript = OracleTranscript()
    return Oracle(cfg, transcript).handle_session(sess)


# -- TCP -------------------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        oracle: Oracle = self.server.oracle
        client_id = "%s:%d" % self.client_address[:2]
        self.request.settimeout(self.server.read_timeout)
        reader = self.request.makefile("rb")
        try:
            body = frame_read(reader)
        except (FramingError, OSError) as exc:
            log.debug("dropping %s: %s", client_id, exc)
            oracle.record(client_id, False, b"")
            return
        finally:
            reader.close()
        response = oracle.handle_body(body, client_id)
        if response is not None:
            try:
                self.request.sendall(frame(response))
            except OSError:
                pass


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128


class OracleService:
    """A running TCP oracle. Use as a context manager or call :meth:`shutdown`."""

    def __init__(self, oracle: Oracle, address: tuple[str, int], read_timeout: float = 5.0):
        self.oracle = oracle
        self._server = _Server(address, _Handler)
        self._server.oracle = oracle
        self._server.read_timeout = read_timeout
        self._thread = threading.Thread(target=self._server.serve_forever, name="oracle", daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def transcript(self) -> OracleTranscript:
        return self.oracle.transcript

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_tcp(cfg: OracleConfig, address: tuple[str, int] = ("127.0.0.1", 0)) -> OracleService:
    return OracleService(Oracle(cfg), address)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


class TcpOracle:
    """Client-side oracle: one connection per query.

    Returns the response bytes, or None when the server closes without
    answering or stays silent past ``timeout``. Connection failures raise
    :class:`OracleUnavailable`.
    """

    def __init__(self, address: tuple[str, int], timeout: float = 2.0):
        self.address = address
        self.timeout = timeout

    def __call__(self, sess: EncryptedSession) -> bytes | None:
        try:
            conn = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise OracleUnavailable(f"cannot reach oracle at {self.address}: {exc}") from exc
        with conn:
            try:
                conn.sendall(frame(sess.to_bytes()))
                with conn.makefile("rb") as reader:
                    return frame_read(reader)
            except (FramingError, socket.timeout, ConnectionResetError):
                return None
            except OSError as exc:
                raise OracleUnavailable(str(exc)) from exc
