"""Random-access byte sources shared by the tree reader and the remote client."""

from __future__ import annotations

import os
import time
from pathlib import Path
from typing import Protocol, runtime_checkable

from .iostats import IoStats


@runtime_checkable
class ByteSource(Protocol):
    """Read-at-offset abstraction over local files, memory, or the wire."""

    @property
    def size(self) -> int: ...

    def read_at(self, offset: int, length: int) -> bytes: ...

    def close(self) -> None: ...


class BytesSource:
    """In-memory source, mostly for tests and small round trips."""

    def __init__(self, data: bytes):
        self._data = data

    @property
    def size(self) -> int:
        return len(self._data)

    def read_at(self, offset: int, length: int) -> bytes:
        return self._data[offset : offset + length]

    def close(self) -> None:
        pass


class FileSource:
    """Positioned reads over a local file.

    Uses ``os.pread``, so concurrent readers never race on a shared file
    offset. Optionally records every read into an :class:`IoStats`
    (local reads have amplification 1 by construction).
    """

    def __init__(self, path: str | Path, stats: IoStats | None = None):
        self._path = str(path)
        self._fd = os.open(self._path, os.O_RDONLY)
        self._size = os.fstat(self._fd).st_size
        self.stats = stats

    @property
    def size(self) -> int:
        return self._size

    def read_at(self, offset: int, length: int) -> bytes:
        if length <= 0:
            return b""
        t0 = time.perf_counter()
        data = os.pread(self._fd, length, offset)
        dt = time.perf_counter() - t0
        if self.stats is not None:
            self.stats.record_request(len(data))
            self.stats.record_fetch(len(data), dt)
        return data

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __repr__(self) -> str:
        return f"FileSource({self._path!r})"


class CountingSource:
    """Wrapper that tallies read calls and byte spans of another source.

    Used to assert access-pattern properties (laziness, selectivity)
    without touching the wrapped implementation.
    """

    def __init__(self, inner: ByteSource):
        self.inner = inner
        self.read_calls = 0
        self.bytes_read = 0
        self.reads: list[tuple[int, int]] = []

    @property
    def size(self) -> int:
        return self.inner.size

    def read_at(self, offset: int, length: int) -> bytes:
        data = self.inner.read_at(offset, length)
        self.read_calls += 1
        self.bytes_read += len(data)
        self.reads.append((offset, len(data)))
        return data

    def close(self) -> None:
        self.inner.close()


def open_source(
    path_or_url: str | Path,
    *,
    read_ahead: int | None = None,
    max_cache_windows: int | None = None,
    stats: IoStats | None = None,
) -> ByteSource:
    """Open a local path or an ``xrdl://host:port/path`` URL as a byte source."""
    text = str(path_or_url)
    if text.startswith("xrdl://"):
        from .xrdlite.client import ConnectorConfig, connector_open, parse_url

        host, port, remote_path = parse_url(text)
        kwargs = {}
        if read_ahead is not None:
            kwargs["read_ahead"] = read_ahead
        if max_cache_windows is not None:
            kwargs["max_cache_windows"] = max_cache_windows
        return connector_open((host, port), remote_path, ConnectorConfig(**kwargs), stats=stats)
    return FileSource(text, stats=stats)
