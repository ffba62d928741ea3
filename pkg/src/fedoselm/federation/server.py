"""Aggregation server: an in-memory relay of the newest upload per device."""

from __future__ import annotations

import logging
import socketserver
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from ..errors import FedOselmError, FormatError
from ..merge import validate
from .wire import (
    FederationMessage, Kind, decode_message, deserialize, encode_message, read_frame,
    topology_digest, write_frame,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegistryEntry:
    payload: bytes
    uploaded_at: float
    topology_digest: str


@dataclass
class ServerRegistry:
    entries: dict[str, RegistryEntry] = field(default_factory=dict)
    registered: set[str] = field(default_factory=set)
    clock: Callable[[], float] = time.time
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def _error(device_id: str, text: str) -> FederationMessage:
    return FederationMessage(Kind.ERROR, device_id, error_text=text)


def server_handle(state: ServerRegistry, msg: FederationMessage):
    """Apply one message to the registry; returns ``(state, reply)``.

    Each call holds the registry lock for its whole duration, so concurrent
    connections see a linear sequence of whole-message transitions.
    """
    with state.lock:
        if msg.kind is Kind.REGISTER:
            state.registered.add(msg.device_id)
            return state, FederationMessage(Kind.ACK, msg.device_id)

        if msg.kind is Kind.UPLOAD:
            if not msg.payload:
                return state, _error(msg.device_id, "malformed payload: upload carries no payload")
            try:
                ir = validate(deserialize(msg.payload))
            except FedOselmError as exc:
                return state, _error(msg.device_id, f"malformed payload: {exc}")
            state.registered.add(msg.device_id)
            state.entries[msg.device_id] = RegistryEntry(
                bytes(msg.payload), state.clock(), topology_digest(ir.topology)
            )
            return state, FederationMessage(Kind.ACK, msg.device_id)

        if msg.kind is Kind.LIST:
            listing = "\n".join(sorted(state.entries)).encode("utf-8")
            return state, FederationMessage(Kind.ACK, msg.device_id, payload=listing or None)

        if msg.kind is Kind.DOWNLOAD:
            entry = state.entries.get(msg.device_id)
            if entry is None:
                return state, _error(msg.device_id, "unknown device")
            return state, FederationMessage(Kind.DOWNLOAD, msg.device_id, payload=entry.payload)

        return state, _error(msg.device_id, f"unexpected message kind {msg.kind.name}")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        registry = self.server.registry
        peer = "%s:%s" % self.client_address[:2]
        while True:
            try:
                raw = read_frame(self.request)
                if raw is None:
                    return
                msg = decode_message(raw)
            except (FormatError, EOFError, OSError) as exc:
                log.warning("dropping connection from %s: %s", peer, exc)
                return
            log.info("%s from device %r (%s)", msg.kind.name, msg.device_id, peer)
            _, reply = server_handle(registry, msg)
            try:
                write_frame(self.request, encode_message(reply))
            except OSError as exc:
                log.warning("failed to reply to %s: %s", peer, exc)
                return


class FederationServer(socketserver.ThreadingTCPServer):
    """TCP front end for a :class:`ServerRegistry`.

    Binding happens in the constructor, so an occupied port raises
    ``OSError`` immediately. Use ``port=0`` to let the OS choose.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, host: str = "127.0.0.1", port: int = 0, registry: ServerRegistry | None = None):
        self.registry = registry if registry is not None else ServerRegistry()
        super().__init__((host, port), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "FederationServer":
        """Serve from a background thread."""
        self._thread = threading.Thread(target=self.serve_forever, name="fedoselm-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
