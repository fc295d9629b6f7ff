"""Client connection plus the read-ahead connector byte source."""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass
from urllib.parse import urlsplit

from ..iostats import IoStats
from . import protocol as P
from .server import DEFAULT_PORT


class XrdError(Exception):
    pass


class XrdProtocolError(XrdError):
    """The peer sent something the wire format does not allow."""


class XrdStatusError(XrdError):
    def __init__(self, status: int, message: str = ""):
        name = P.STATUS_NAMES.get(status, f"status {status}")
        super().__init__(f"{name}: {message}" if message else name)
        self.status = status


def parse_url(url: str) -> tuple[str, int, str]:
    """Split ``xrdl://host:port/path`` into (host, port, path)."""
    parts = urlsplit(url)
    if parts.scheme != "xrdl":
        raise ValueError(f"not an xrdl URL: {url!r}")
    if not parts.hostname:
        raise ValueError(f"missing host in {url!r}")
    return parts.hostname, parts.port or DEFAULT_PORT, parts.path or "/"


@dataclass
class ConnectorConfig:
    read_ahead: int = 65536
    max_cache_windows: int = 4

    def __post_init__(self):
        if self.read_ahead < 1:
            raise ValueError("read_ahead must be >= 1")
        if self.max_cache_windows < 1:
            raise ValueError("max_cache_windows must be >= 1")


class XrdConnection:
    """Synchronous RPC over one TCP connection. Single-owner, not thread-safe."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self._sock = socket.create_connection(address, timeout=timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _request(self, frame: bytes) -> tuple[int, bytes]:
        self._sock.sendall(frame)
        try:
            status, payload = P.recv_frame(self._sock)
        except P.FrameError as exc:
            raise XrdProtocolError(str(exc)) from exc
        if status == -1:
            raise XrdProtocolError("server closed the connection")
        return status, payload

    def _expect_ok(self, frame: bytes) -> bytes:
        status, payload = self._request(frame)
        if status != P.ST_OK:
            raise XrdStatusError(status, payload.decode("utf-8", "replace"))
        return payload

    def open(self, path: str) -> tuple[int, int]:
        payload = self._expect_ok(P.pack_open_request(path))
        if len(payload) != P.OPEN_RESPONSE.size:
            raise XrdProtocolError(f"OPEN response payload has {len(payload)} bytes")
        handle, file_len = P.OPEN_RESPONSE.unpack(payload)
        return handle, file_len

    def read(self, handle: int, offset: int, length: int) -> bytes:
        """Read up to ``length`` bytes, short only at end of file.

        A response frame carries at most MAX_FRAME - 1 payload bytes, so
        larger reads are issued as several wire requests.
        """
        budget = P.MAX_FRAME - 1
        parts: list[bytes] = []
        pos, remaining = offset, length
        while remaining > 0:
            want = min(remaining, budget)
            chunk = self._expect_ok(P.pack_read_request(handle, pos, want))
            parts.append(chunk)
            pos += len(chunk)
            remaining -= len(chunk)
            if len(chunk) < want:
                break  # end of file
        return b"".join(parts)

    def stat(self, handle: int) -> int:
        payload = self._expect_ok(P.pack_frame(P.OP_STAT, P.HANDLE.pack(handle)))
        if len(payload) != P.FILE_LEN.size:
            raise XrdProtocolError(f"STAT response payload has {len(payload)} bytes")
        return P.FILE_LEN.unpack(payload)[0]

    def close_handle(self, handle: int) -> None:
        self._expect_ok(P.pack_frame(P.OP_CLOSE, P.HANDLE.pack(handle)))

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class RemoteByteSource:
    """Byte source over the wire with prefetch and LRU window caching.

    A read served entirely by a cached window costs no wire traffic;
    anything else fetches max(length, read_ahead) bytes anchored at the
    requested offset, clipped to the file end, and caches that window.
    """

    def __init__(
        self,
        conn: XrdConnection,
        handle: int,
        file_len: int,
        config: ConnectorConfig,
        stats: IoStats | None = None,
    ):
        self._conn = conn
        self._handle = handle
        self._size = file_len
        self._config = config
        self.stats = stats if stats is not None else IoStats()
        self._windows: list[tuple[int, bytes]] = []  # LRU order: oldest first

    @property
    def size(self) -> int:
        return self._size

    def read_at(self, offset: int, length: int) -> bytes:
        if length <= 0:
            return b""
        self.stats.record_request(length)
        for i, (start, data) in enumerate(self._windows):
            if start <= offset and offset + length <= start + len(data):
                if i + 1 != len(self._windows):
                    self._windows.append(self._windows.pop(i))
                rel = offset - start
                return data[rel : rel + length]
        fetch_len = max(length, self._config.read_ahead)
        fetch_len = min(fetch_len, max(self._size - offset, 0))
        if fetch_len == 0:
            return b""
        t0 = time.perf_counter()
        data = self._conn.read(self._handle, offset, fetch_len)
        self.stats.record_fetch(len(data), time.perf_counter() - t0)
        if data:
            self._windows.append((offset, data))
            if len(self._windows) > self._config.max_cache_windows:
                self._windows.pop(0)
        rel_end = min(length, len(data))
        return data[:rel_end]

    def close(self) -> None:
        try:
            self._conn.close_handle(self._handle)
        except XrdError:
            pass
        self._conn.close()


def connector_open(
    address: tuple[str, int],
    path: str,
    config: ConnectorConfig | None = None,
    stats: IoStats | None = None,
) -> RemoteByteSource:
    """Open a remote file as a random-access byte source."""
    conn = XrdConnection(address)
    try:
        handle, file_len = conn.open(path)
    except BaseException:
        conn.close()
        raise
    return RemoteByteSource(conn, handle, file_len, config or ConnectorConfig(), stats)
