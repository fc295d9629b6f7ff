"""Byte-range remote file access: a small TCP server, client, and
read-ahead connector with LRU window caching and I/O accounting."""

from ..iostats import IoStats
from .client import (
    ConnectorConfig,
    RemoteByteSource,
    XrdConnection,
    XrdError,
    XrdProtocolError,
    XrdStatusError,
    connector_open,
    parse_url,
)
from .protocol import (
    MAX_FRAME,
    OP_CLOSE,
    OP_OPEN,
    OP_READ,
    OP_STAT,
    ST_BAD_HANDLE,
    ST_MALFORMED,
    ST_NOT_FOUND,
    ST_OK,
    ST_RANGE_ERROR,
    ST_SERVER_ERROR,
    STATUS_NAMES,
)
from .server import ServerConfig, XrdServer, serve
from .throttle import TokenBucket

__all__ = [
    "IoStats",
    "ConnectorConfig",
    "RemoteByteSource",
    "XrdConnection",
    "XrdError",
    "XrdProtocolError",
    "XrdStatusError",
    "connector_open",
    "parse_url",
    "MAX_FRAME",
    "OP_OPEN",
    "OP_READ",
    "OP_STAT",
    "OP_CLOSE",
    "ST_OK",
    "ST_NOT_FOUND",
    "ST_BAD_HANDLE",
    "ST_RANGE_ERROR",
    "ST_MALFORMED",
    "ST_SERVER_ERROR",
    "STATUS_NAMES",
    "ServerConfig",
    "XrdServer",
    "serve",
    "TokenBucket",
]
