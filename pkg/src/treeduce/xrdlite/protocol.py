"""Wire format shared by server and client.

Every frame is ``frame_len u32 | first_byte u8 | payload`` with
``frame_len = 1 + len(payload)``, all integers big-endian. For requests
the first byte is an opcode, for responses a status code.

    OPEN  request: path (u16 length + UTF-8); response: handle u32 | file_len u64
    READ  request: handle u32 | offset u64 | length u32; response: the bytes
    STAT  request: handle u32; response: file_len u64
    CLOSE request: handle u32; response: empty

Error responses carry a UTF-8 message as payload.
"""

from __future__ import annotations

import socket
import struct

OP_OPEN = 1
OP_READ = 2
OP_STAT = 3
OP_CLOSE = 4

ST_OK = 0
ST_NOT_FOUND = 1
ST_BAD_HANDLE = 2
ST_RANGE_ERROR = 3
ST_MALFORMED = 4
ST_SERVER_ERROR = 5

STATUS_NAMES = {
    ST_OK: "OK",
    ST_NOT_FOUND: "NotFound",
    ST_BAD_HANDLE: "BadHandle",
    ST_RANGE_ERROR: "RangeError",
    ST_MALFORMED: "Malformed",
    ST_SERVER_ERROR: "ServerError",
}

MAX_FRAME = 1 << 20

_PREFIX = struct.Struct(">IB")
READ_PAYLOAD = struct.Struct(">IQI")
OPEN_RESPONSE = struct.Struct(">IQ")
HANDLE = struct.Struct(">I")
FILE_LEN = struct.Struct(">Q")


class FrameError(Exception):
    """Raised on truncated streams or frames violating the format."""


def pack_frame(first_byte: int, payload: bytes = b"") -> bytes:
    return _PREFIX.pack(1 + len(payload), first_byte) + payload


def pack_open_request(path: str) -> bytes:
    raw = path.encode("utf-8")
    return pack_frame(OP_OPEN, struct.pack(">H", len(raw)) + raw)


def pack_read_request(handle: int, offset: int, length: int) -> bytes:
    return pack_frame(OP_READ, READ_PAYLOAD.pack(handle, offset, length))


def recv_exact(sock: socket.socket, n: int) -> bytes:
    """Read exactly n bytes or raise FrameError on early EOF."""
    parts = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 16))
        if not chunk:
            raise FrameError(f"connection closed with {remaining} bytes outstanding")
        parts.append(chunk)
        remaining -= len(chunk)
    return b"".join(parts)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    """Receive one frame, returning (first_byte, payload).

    Returns (-1, b"") on clean EOF at a frame boundary.
    """
    head = b""
    while len(head) < 4:
        chunk = sock.recv(4 - len(head))
        if not chunk:
            if head:
                raise FrameError("connection closed mid frame header")
            return -1, b""
        head += chunk
    (frame_len,) = struct.unpack(">I", head)
    if frame_len < 1 or frame_len > MAX_FRAME:
        raise FrameError(f"frame length {frame_len} outside [1, {MAX_FRAME}]")
    body = recv_exact(sock, frame_len)
    return body[0], body[1:]
