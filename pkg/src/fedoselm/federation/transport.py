"""Client-side transports: in-process (tests, experiments) and TCP."""

from __future__ import annotations

import socket
import threading
from typing import Protocol

from ..errors import ConfigurationError, FormatError, TransportError
from ..merge import Intermediates
from .server import ServerRegistry, server_handle
from .wire import (
    FederationMessage, Kind, decode_message, encode_message, read_frame, serialize, write_frame,
)


def parse_address(address: str) -> tuple[str, int]:
    """``"host:port"`` -> ``(host, port)``; an empty host means loopback."""
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"server address must look like host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class Transport(Protocol):
    def request(self, msg: FederationMessage) -> FederationMessage: ...


class InProcessTransport:
    """Talks to a registry in the same process.

    Messages still go through the envelope codec in both directions so the
    in-process path sees exactly the bytes a socket would carry.
    """

    def __init__(self, registry: ServerRegistry | None = None):
        self.registry = registry if registry is not None else ServerRegistry()

    def request(self, msg: FederationMessage) -> FederationMessage:
        _, reply = server_handle(self.registry, decode_message(encode_message(msg)))
        return decode_message(encode_message(reply))


class TcpTransport:
    """One persistent connection, one request in flight at a time."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.host, self.port, self.timeout = host, int(port), timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    @classmethod
    def from_address(cls, address: str, **kwargs) -> "TcpTransport":
        return cls(*parse_address(address), **kwargs)

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            except OSError as exc:
                raise TransportError(f"cannot reach server {self.host}:{self.port}: {exc}") from exc
        return self._sock

    def request(self, msg: FederationMessage) -> FederationMessage:
        with self._lock:
            sock = self._connect()
            try:
                write_frame(sock, encode_message(msg))
                raw = read_frame(sock)
                if raw is None:
                    raise EOFError("server closed the connection")
                return decode_message(raw)
            except (OSError, EOFError, FormatError) as exc:
                self.close()
                raise TransportError(
                    f"{msg.kind.name} for {msg.device_id!r} failed: {exc}", peer_id=msg.device_id
                ) from exc

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def register(transport: Transport, device_id: str) -> None:
    reply = transport.request(FederationMessage(Kind.REGISTER, device_id))
    if reply.kind is Kind.ERROR:
        raise TransportError(f"register rejected: {reply.error_text}", peer_id=device_id)


def upload(transport: Transport, device_id: str, payload: bytes | Intermediates) -> None:
    if isinstance(payload, Intermediates):
        payload = serialize(payload)
    reply = transport.request(FederationMessage(Kind.UPLOAD, device_id, payload=payload))
    if reply.kind is not Kind.ACK:
        raise TransportError(f"upload rejected: {reply.error_text}", peer_id=device_id)


def download(transport: Transport, device_id: str) -> bytes | None:
    """Raw payload last uploaded by ``device_id``; ``None`` if the server has none."""
    reply = transport.request(FederationMessage(Kind.DOWNLOAD, device_id))
    if reply.kind is Kind.ERROR:
        if reply.error_text == "unknown device":
            return None
        raise TransportError(f"download failed: {reply.error_text}", peer_id=device_id)
    if not reply.payload:
        raise TransportError("download reply without payload", peer_id=device_id)
    return reply.payload


def list_available(transport: Transport, device_id: str = "") -> list[str]:
    reply = transport.request(FederationMessage(Kind.LIST, device_id))
    if reply.kind is Kind.ERROR:
        raise TransportError(f"list failed: {reply.error_text}")
    return reply.payload.decode("utf-8").split("\n") if reply.payload else []
