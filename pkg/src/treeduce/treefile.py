"""TreeFile v1: a columnar event container with basket-level compression.

Layout (all integers big-endian):

    header     32 bytes: magic "TRF1" | version u32 | dir_offset u64
                         | dir_len u64 | file_len u64
    baskets    bare payloads, one per (branch, basket index entry)
    directory  one Record (codec u8 | raw_len u32 | stored payload)
               whose decompressed payload describes every tree/branch/basket

Flat basket payload: n_entries elements, big-endian.
Jagged basket payload: (n_entries + 1) u64 basket-local element offsets
(first is 0), then the flattened elements, big-endian.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .sources import ByteSource, BytesSource, FileSource

MAGIC = b"TRF1"
VERSION = 1
HEADER_LEN = 32

_HEADER = struct.Struct(">4sIQQQ")
_BASKET_ENTRY = struct.Struct(">QIQIIB")

# Compression must pay for itself; equal-size output keeps the raw bytes.
_DEFLATE_LEVEL = 6

DEFAULT_BASKET_ENTRIES = 8192


class Dtype(IntEnum):
    I32 = 1
    I64 = 2
    F32 = 3
    F64 = 4
    BOOL = 5


class Shape(IntEnum):
    FLAT = 0
    JAGGED = 1


class Codec(IntEnum):
    NONE = 0
    DEFLATE = 1


_DTYPE_BE = {
    Dtype.I32: np.dtype(">i4"),
    Dtype.I64: np.dtype(">i8"),
    Dtype.F32: np.dtype(">f4"),
    Dtype.F64: np.dtype(">f8"),
    Dtype.BOOL: np.dtype("u1"),
}

_DTYPE_NATIVE = {
    Dtype.I32: np.dtype(np.int32),
    Dtype.I64: np.dtype(np.int64),
    Dtype.F32: np.dtype(np.float32),
    Dtype.F64: np.dtype(np.float64),
    Dtype.BOOL: np.dtype(bool),
}

_NUMPY_TO_DTYPE = {
    np.dtype(np.int32): Dtype.I32,
    np.dtype(np.int64): Dtype.I64,
    np.dtype(np.float32): Dtype.F32,
    np.dtype(np.float64): Dtype.F64,
    np.dtype(bool): Dtype.BOOL,
}


class TreeFileError(Exception):
    """Base for everything this module raises on purpose."""


class CorruptFileError(TreeFileError):
    """Structurally invalid bytes: bad magic, truncation, range violations."""


class SchemaError(TreeFileError):
    """Caller-side misuse: unknown tree/branch, bad entry range, bad input data."""


def itemsize(dtype: Dtype) -> int:
    return _DTYPE_BE[dtype].itemsize


def native_dtype(dtype: Dtype) -> np.dtype:
    return _DTYPE_NATIVE[dtype]


# ---------------------------------------------------------------------------
# metadata


@dataclass(frozen=True)
class TreeFileHeader:
    dir_offset: int
    dir_len: int
    file_len: int

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, self.dir_offset, self.dir_len, self.file_len)

    @classmethod
    def unpack(cls, raw: bytes) -> "TreeFileHeader":
        if len(raw) < HEADER_LEN:
            raise CorruptFileError(f"header truncated: got {len(raw)} bytes, need {HEADER_LEN}")
        magic, version, dir_offset, dir_len, file_len = _HEADER.unpack(raw[:HEADER_LEN])
        if magic != MAGIC:
            raise CorruptFileError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptFileError(f"unsupported version {version}")
        return cls(dir_offset, dir_len, file_len)


@dataclass(frozen=True)
class BasketIndexEntry:
    first_entry: int
    n_entries: int
    offset: int
    stored_len: int
    raw_len: int
    codec: Codec

    def pack(self) -> bytes:
        return _BASKET_ENTRY.pack(
            self.first_entry, self.n_entries, self.offset,
            self.stored_len, self.raw_len, int(self.codec),
        )


@dataclass
class BranchMeta:
    name: str
    dtype: Dtype
    shape: Shape
    baskets: list[BasketIndexEntry] = field(default_factory=list)

    @property
    def is_jagged(self) -> bool:
        return self.shape is Shape.JAGGED


@dataclass
class TreeMeta:
    name: str
    n_entries: int
    branches: dict[str, BranchMeta] = field(default_factory=dict)


@dataclass
class ReadStats:
    """Decode-side accounting, separate from byte-level I/O stats."""

    baskets_read: int = 0
    bytes_stored: int = 0
    bytes_raw: int = 0
    decompress_time_s: float = 0.0

    def merge(self, other: "ReadStats") -> "ReadStats":
        self.baskets_read += other.baskets_read
        self.bytes_stored += other.bytes_stored
        self.bytes_raw += other.bytes_raw
        self.decompress_time_s += other.decompress_time_s
        return self


# ---------------------------------------------------------------------------
# records


def compress_record(raw: bytes, codec: Codec) -> tuple[Codec, bytes]:
    """Encode a payload, falling back to NONE when compression does not shrink it."""
    if codec is Codec.DEFLATE:
        packed = zlib.compress(raw, _DEFLATE_LEVEL)
        if len(packed) < len(raw):
            return Codec.DEFLATE, packed
    return Codec.NONE, raw


def decompress_record(stored: bytes, codec: Codec, raw_len: int) -> bytes:
    if codec is Codec.NONE:
        raw = stored
    elif codec is Codec.DEFLATE:
        try:
            raw = zlib.decompress(stored)
        except zlib.error as exc:
            raise CorruptFileError(f"deflate payload corrupt: {exc}") from exc
    else:  # pragma: no cover - callers validate codec before dispatch
        raise CorruptFileError(f"unknown codec {codec}")
    if len(raw) != raw_len:
        raise CorruptFileError(f"payload length {len(raw)} != declared raw_len {raw_len}")
    return raw


def _frame_record(raw: bytes, codec: Codec) -> bytes:
    used, stored = compress_record(raw, codec)
    return struct.pack(">BI", int(used), len(raw)) + stored


def _parse_record(buf: bytes) -> bytes:
    if len(buf) < 5:
        raise CorruptFileError(f"record truncated: {len(buf)} bytes")
    codec_byte, raw_len = struct.unpack_from(">BI", buf, 0)
    try:
        codec = Codec(codec_byte)
    except ValueError:
        raise CorruptFileError(f"unknown codec byte {codec_byte}") from None
    return decompress_record(buf[5:], codec, raw_len)


# ---------------------------------------------------------------------------
# column chunks


@dataclass
class ColumnChunk:
    """A contiguous range of entries for one branch, decoded into numpy arrays.

    Flat branches: ``values`` has one element per entry and ``offsets`` is
    None. Jagged branches: ``values`` holds the flattened elements and
    ``offsets`` is an int64 array of length ``n_entries + 1`` starting at 0.
    """

    values: np.ndarray
    offsets: np.ndarray | None = None

    @property
    def is_jagged(self) -> bool:
        return self.offsets is not None

    @property
    def n_entries(self) -> int:
        if self.offsets is not None:
            return len(self.offsets) - 1
        return len(self.values)

    def counts(self) -> np.ndarray:
        if self.offsets is None:
            raise SchemaError("counts() only applies to jagged chunks")
        return np.diff(self.offsets)

    def slice(self, start: int, stop: int) -> "ColumnChunk":
        if self.offsets is None:
            return ColumnChunk(self.values[start:stop])
        lo = int(self.offsets[start])
        hi = int(self.offsets[stop])
        return ColumnChunk(self.values[lo:hi], self.offsets[start : stop + 1] - lo)

    def select(self, mask: np.ndarray) -> "ColumnChunk":
        """Keep entries where ``mask`` is True, preserving per-entry structure."""
        if self.offsets is None:
            return ColumnChunk(self.values[mask])
        counts = self.counts()
        keep_values = self.values[np.repeat(mask, counts)]
        kept_counts = counts[mask]
        offsets = np.zeros(len(kept_counts) + 1, dtype=np.int64)
        np.cumsum(kept_counts, out=offsets[1:])
        return ColumnChunk(keep_values, offsets)

    def to_lists(self):
        """Python-native view, for oracles and small tests."""
        if self.offsets is None:
            return self.values.tolist()
        return [
            self.values[self.offsets[i] : self.offsets[i + 1]].tolist()
            for i in range(self.n_entries)
        ]

    @classmethod
    def from_lists(cls, data, dtype: np.dtype | type, jagged: bool | None = None) -> "ColumnChunk":
        dt = np.dtype(dtype)
        if jagged is None:
            jagged = bool(data) and isinstance(data[0], (list, tuple, np.ndarray))
        if not jagged:
            return cls(np.asarray(data, dtype=dt))
        counts = np.fromiter((len(row) for row in data), dtype=np.int64, count=len(data))
        offsets = np.zeros(len(data) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        flat = np.concatenate([np.asarray(row, dtype=dt) for row in data]) if len(data) else np.array([], dtype=dt)
        return cls(flat.astype(dt, copy=False), offsets)

    @classmethod
    def empty(cls, dtype: np.dtype | type, jagged: bool = False) -> "ColumnChunk":
        values = np.array([], dtype=np.dtype(dtype))
        if jagged:
            return cls(values, np.zeros(1, dtype=np.int64))
        return cls(values)

    @classmethod
    def concatenate(cls, chunks: Sequence["ColumnChunk"]) -> "ColumnChunk":
        if not chunks:
            raise SchemaError("cannot concatenate zero chunks")
        if len(chunks) == 1:
            return chunks[0]
        jagged = chunks[0].is_jagged
        if any(c.is_jagged != jagged for c in chunks):
            raise SchemaError("mixed flat/jagged chunks")
        values = np.concatenate([c.values for c in chunks])
        if not jagged:
            return cls(values)
        total = sum(c.n_entries for c in chunks)
        offsets = np.zeros(total + 1, dtype=np.int64)
        pos, base = 1, 0
        for c in chunks:
            offsets[pos : pos + c.n_entries] = c.offsets[1:] + base
            pos += c.n_entries
            base += int(c.offsets[-1])
        return cls(values, offsets)


# ---------------------------------------------------------------------------
# basket payload encode/decode


def encode_basket(chunk: ColumnChunk, dtype: Dtype, shape: Shape) -> bytes:
    be = _DTYPE_BE[dtype]
    if shape is Shape.FLAT:
        if chunk.offsets is not None:
            raise SchemaError("flat branch given jagged data")
        values = np.ascontiguousarray(chunk.values, dtype=be)
        return values.tobytes()
    if chunk.offsets is None:
        raise SchemaError("jagged branch given flat data")
    local = np.ascontiguousarray(chunk.offsets - chunk.offsets[0], dtype=">u8")
    values = np.ascontiguousarray(chunk.values, dtype=be)
    return local.tobytes() + values.tobytes()


def decode_basket(raw: bytes, dtype: Dtype, shape: Shape, n_entries: int) -> ColumnChunk:
    be = _DTYPE_BE[dtype]
    size = be.itemsize
    if shape is Shape.FLAT:
        if len(raw) != n_entries * size:
            raise CorruptFileError(
                f"flat basket payload is {len(raw)} bytes, expected {n_entries * size}"
            )
        values = np.frombuffer(raw, dtype=be).astype(_DTYPE_NATIVE[dtype], copy=False)
        return ColumnChunk(values)
    head = (n_entries + 1) * 8
    if len(raw) < head:
        raise CorruptFileError(f"jagged basket payload too short for its offset table")
    offsets_u64 = np.frombuffer(raw, dtype=">u8", count=n_entries + 1)
    if offsets_u64[0] != 0:
        raise CorruptFileError("jagged offsets must start at 0")
    if np.any(np.diff(offsets_u64.astype(np.int64)) < 0):
        raise CorruptFileError("jagged offsets must be non-decreasing")
    n_elements = int(offsets_u64[-1])
    if len(raw) != head + n_elements * size:
        raise CorruptFileError(
            f"jagged basket payload is {len(raw)} bytes, expected {head + n_elements * size}"
        )
    values = np.frombuffer(raw, dtype=be, offset=head).astype(_DTYPE_NATIVE[dtype], copy=False)
    return ColumnChunk(values, offsets_u64.astype(np.int64))


# ---------------------------------------------------------------------------
# writer


class TreeFileWriter:
    """Streaming writer: baskets go out as entries arrive, directory at close.

    All branches of a tree advance in lockstep; every ``extend`` call must
    cover the same entry range for every branch in the schema.
    """

    def __init__(
        self,
        path: str | Path,
        *,
        codec: Codec = Codec.DEFLATE,
        basket_entries: int = DEFAULT_BASKET_ENTRIES,
    ):
        if basket_entries < 1:
            raise SchemaError("basket_entries must be >= 1")
        self._path = str(path)
        self._fh: BinaryIO = open(self._path, "wb")
        self._codec = codec
        self._basket_entries = basket_entries
        self._trees: list[TreeMeta] = []
        self._current: TreeMeta | None = None
        self._pending: dict[str, list[ColumnChunk]] = {}
        self._pending_entries = 0
        self._fh.write(bytes(HEADER_LEN))  # placeholder, patched at close
        self._pos = HEADER_LEN
        self._closed = False

    def begin_tree(self, name: str, schema: dict[str, tuple[Dtype, Shape]]) -> None:
        if self._current is not None:
            raise SchemaError("previous tree not ended")
        if any(t.name == name for t in self._trees):
            raise SchemaError(f"duplicate tree name {name!r}")
        if not name:
            raise SchemaError("tree name must be non-empty")
        branches = {
            bname: BranchMeta(bname, Dtype(dt), Shape(sh))
            for bname, (dt, sh) in schema.items()
        }
        self._current = TreeMeta(name, 0, branches)
        self._pending = {bname: [] for bname in branches}
        self._pending_entries = 0

    def extend(self, columns: dict[str, ColumnChunk]) -> None:
        tree = self._current
        if tree is None:
            raise SchemaError("no tree in progress")
        if set(columns) != set(tree.branches):
            missing = set(tree.branches) - set(columns)
            extra = set(columns) - set(tree.branches)
            raise SchemaError(f"branch mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        lengths = {name: chunk.n_entries for name, chunk in columns.items()}
        if len(set(lengths.values())) > 1:
            raise SchemaError(f"branches advanced unevenly: {lengths}")
        n = next(iter(lengths.values())) if lengths else 0
        if n == 0:
            return
        for name, chunk in columns.items():
            meta = tree.branches[name]
            if chunk.is_jagged != (meta.shape is Shape.JAGGED):
                raise SchemaError(f"branch {name!r}: shape mismatch")
            self._pending[name].append(chunk)
        self._pending_entries += n
        tree.n_entries += n
        while self._pending_entries >= self._basket_entries:
            self._flush_basket(self._basket_entries)

    def end_tree(self) -> None:
        tree = self._current
        if tree is None:
            raise SchemaError("no tree in progress")
        if self._pending_entries:
            self._flush_basket(self._pending_entries)
        self._trees.append(tree)
        self._current = None
        self._pending = {}

    def _flush_basket(self, n: int) -> None:
        tree = self._current
        assert tree is not None
        for name, meta in tree.branches.items():
            buffered = ColumnChunk.concatenate(self._pending[name]) if self._pending[name] else None
            assert buffered is not None and buffered.n_entries >= n
            head = buffered.slice(0, n)
            rest = buffered.slice(n, buffered.n_entries)
            self._pending[name] = [rest] if rest.n_entries else []
            raw = encode_basket(head, meta.dtype, meta.shape)
            codec, stored = compress_record(raw, self._codec)
            first_entry = tree.n_entries - self._pending_entries
            meta.baskets.append(
                BasketIndexEntry(first_entry, n, self._pos, len(stored), len(raw), codec)
            )
            self._fh.write(stored)
            self._pos += len(stored)
        self._pending_entries -= n

    def _encode_directory(self) -> bytes:
        out = bytearray()
        out += struct.pack(">I", len(self._trees))
        for tree in self._trees:
            name = tree.name.encode("utf-8")
            out += struct.pack(">H", len(name)) + name
            out += struct.pack(">QI", tree.n_entries, len(tree.branches))
            for bname, meta in tree.branches.items():
                raw_name = bname.encode("utf-8")
                out += struct.pack(">H", len(raw_name)) + raw_name
                out += struct.pack(">BBI", int(meta.dtype), int(meta.shape), len(meta.baskets))
                for basket in meta.baskets:
                    out += basket.pack()
        return bytes(out)

    def close(self) -> None:
        if self._closed:
            return
        if self._current is not None:
            self.end_tree()
        record = _frame_record(self._encode_directory(), Codec.DEFLATE)
        dir_offset = self._pos
        self._fh.write(record)
        file_len = dir_offset + len(record)
        self._fh.seek(0)
        self._fh.write(TreeFileHeader(dir_offset, len(record), file_len).pack())
        self._fh.close()
        self._closed = True

    def __enter__(self) -> "TreeFileWriter":
        return self

    def __exit__(self, *exc) -> None:
        if exc[0] is None:
            self.close()
        else:
            self._fh.close()
            self._closed = True


def _infer_column(data) -> tuple[ColumnChunk, Dtype, Shape]:
    if isinstance(data, ColumnChunk):
        chunk = data
    elif isinstance(data, tuple) and len(data) == 2:
        offsets, values = data
        chunk = ColumnChunk(np.asarray(values), np.asarray(offsets, dtype=np.int64))
    elif isinstance(data, np.ndarray):
        chunk = ColumnChunk(data)
    elif isinstance(data, (list,)) and data and isinstance(data[0], (list, tuple, np.ndarray)):
        sample = next((row for row in data if len(row)), None)
        dt = np.asarray(sample).dtype if sample is not None else np.dtype(np.float64)
        chunk = ColumnChunk.from_lists(data, dt, jagged=True)
    else:
        chunk = ColumnChunk(np.asarray(data))
    key = np.dtype(chunk.values.dtype)
    if key not in _NUMPY_TO_DTYPE:
        raise SchemaError(f"unsupported dtype {key}")
    dtype = _NUMPY_TO_DTYPE[key]
    shape = Shape.JAGGED if chunk.is_jagged else Shape.FLAT
    return chunk, dtype, shape


def write_tree(
    path: str | Path,
    name: str,
    branches: dict,
    *,
    codec: Codec = Codec.DEFLATE,
    basket_entries: int = DEFAULT_BASKET_ENTRIES,
) -> None:
    """One-shot writer for a single tree.

    Branch data may be a 1-D numpy array (flat), an ``(offsets, values)``
    pair or list-of-lists (jagged), or a prepared :class:`ColumnChunk`.
    """
    prepared: dict[str, ColumnChunk] = {}
    schema: dict[str, tuple[Dtype, Shape]] = {}
    n_entries = None
    for bname, data in branches.items():
        chunk, dtype, shape = _infer_column(data)
        prepared[bname] = chunk
        schema[bname] = (dtype, shape)
        if n_entries is None:
            n_entries = chunk.n_entries
        elif chunk.n_entries != n_entries:
            raise SchemaError(
                f"branch {bname!r} has {chunk.n_entries} entries, expected {n_entries}"
            )
    with TreeFileWriter(path, codec=codec, basket_entries=basket_entries) as writer:
        writer.begin_tree(name, schema)
        if prepared:
            writer.extend(prepared)
        writer.end_tree()


# ---------------------------------------------------------------------------
# reader


class _Cursor:
    """Bounds-checked sequential reads over the decoded directory payload."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFileError(
                f"directory truncated at byte {self.pos}: need {n} more bytes"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))

    def name(self) -> str:
        (length,) = struct.unpack(">H", self.take(2))
        raw = self.take(length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"name is not valid UTF-8: {exc}") from exc


_U32 = struct.Struct(">I")
_U64_U32 = struct.Struct(">QI")
_B_B_U32 = struct.Struct(">BBI")


def _parse_directory(raw: bytes) -> dict[str, TreeMeta]:
    cur = _Cursor(raw)
    (tree_count,) = cur.unpack(_U32)
    trees: dict[str, TreeMeta] = {}
    for _ in range(tree_count):
        tname = cur.name()
        if tname in trees:
            raise CorruptFileError(f"duplicate tree name {tname!r}")
        n_entries, branch_count = cur.unpack(_U64_U32)
        tree = TreeMeta(tname, n_entries)
        for _ in range(branch_count):
            bname = cur.name()
            if bname in tree.branches:
                raise CorruptFileError(f"duplicate branch name {bname!r} in tree {tname!r}")
            dtype_b, shape_b, basket_count = cur.unpack(_B_B_U32)
            try:
                dtype = Dtype(dtype_b)
                shape = Shape(shape_b)
            except ValueError as exc:
                raise CorruptFileError(f"branch {bname!r}: {exc}") from None
            meta = BranchMeta(bname, dtype, shape)
            for _ in range(basket_count):
                fields = cur.unpack(_BASKET_ENTRY)
                codec_b = fields[-1]
                try:
                    codec = Codec(codec_b)
                except ValueError:
                    raise CorruptFileError(f"unknown codec byte {codec_b}") from None
                meta.baskets.append(BasketIndexEntry(*fields[:-1], codec))
            tree.branches[bname] = meta
        trees[tname] = tree
    if cur.pos != len(raw):
        raise CorruptFileError(f"{len(raw) - cur.pos} trailing bytes after directory")
    return trees


class TreeFileReader:
    """Lazy reader: opening parses header + directory only, baskets on demand."""

    def __init__(self, source: ByteSource, *, own_source: bool = True):
        self._source = source
        self._own = own_source
        self.stats = ReadStats()
        header_raw = source.read_at(0, HEADER_LEN)
        self.header = TreeFileHeader.unpack(header_raw)
        size = source.size
        if self.header.file_len != size:
            raise CorruptFileError(
                f"header says {self.header.file_len} bytes but source has {size}"
            )
        if self.header.dir_offset + self.header.dir_len > self.header.file_len:
            raise CorruptFileError("directory extends past end of file")
        if self.header.dir_offset < HEADER_LEN:
            raise CorruptFileError("directory overlaps header")
        dir_record = source.read_at(self.header.dir_offset, self.header.dir_len)
        if len(dir_record) != self.header.dir_len:
            raise CorruptFileError("short read on directory")
        self.trees = _parse_directory(_parse_record(dir_record))
        self._check_index()

    def _check_index(self) -> None:
        for tree in self.trees.values():
            for meta in tree.branches.values():
                expect_first = 0
                for basket in meta.baskets:
                    if basket.first_entry != expect_first:
                        raise CorruptFileError(
                            f"branch {meta.name!r}: basket starts at entry "
                            f"{basket.first_entry}, expected {expect_first}"
                        )
                    if basket.n_entries == 0:
                        raise CorruptFileError(f"branch {meta.name!r}: empty basket")
                    if basket.offset < HEADER_LEN or (
                        basket.offset + basket.stored_len > self.header.dir_offset
                    ):
                        raise CorruptFileError(
                            f"branch {meta.name!r}: basket data outside data region"
                        )
                    expect_first += basket.n_entries
                if expect_first != tree.n_entries:
                    raise CorruptFileError(
                        f"branch {meta.name!r}: baskets cover {expect_first} entries, "
                        f"tree has {tree.n_entries}"
                    )

    def tree(self, name: str | None = None) -> TreeMeta:
        if name is None:
            if len(self.trees) != 1:
                raise SchemaError(
                    f"file has {len(self.trees)} trees, name one of {sorted(self.trees)}"
                )
            return next(iter(self.trees.values()))
        try:
            return self.trees[name]
        except KeyError:
            raise SchemaError(f"no tree named {name!r}") from None

    def read_column(
        self,
        tree: str | None,
        branch: str,
        entry_start: int = 0,
        entry_stop: int | None = None,
    ) -> ColumnChunk:
        """Decode one branch over ``[entry_start, entry_stop)``.

        Only baskets overlapping the range are fetched and decompressed.
        """
        tmeta = self.tree(tree)
        if branch not in tmeta.branches:
            raise SchemaError(f"no branch named {branch!r} in tree {tmeta.name!r}")
        meta = tmeta.branches[branch]
        stop = tmeta.n_entries if entry_stop is None else entry_stop
        if not (0 <= entry_start <= stop <= tmeta.n_entries):
            raise SchemaError(
                f"entry range [{entry_start}, {stop}) invalid for {tmeta.n_entries} entries"
            )
        native = _DTYPE_NATIVE[meta.dtype]
        if entry_start == stop:
            return ColumnChunk.empty(native, jagged=meta.is_jagged)
        pieces: list[ColumnChunk] = []
        for basket in meta.baskets:
            b_start, b_stop = basket.first_entry, basket.first_entry + basket.n_entries
            if b_stop <= entry_start or b_start >= stop:
                continue
            chunk = self._read_basket(basket, meta)
            lo = max(entry_start, b_start) - b_start
            hi = min(stop, b_stop) - b_start
            if lo != 0 or hi != basket.n_entries:
                chunk = chunk.slice(lo, hi)
            pieces.append(chunk)
        return ColumnChunk.concatenate(pieces)

    def _read_basket(self, basket: BasketIndexEntry, meta: BranchMeta) -> ColumnChunk:
        stored = self._source.read_at(basket.offset, basket.stored_len)
        if len(stored) != basket.stored_len:
            raise CorruptFileError(
                f"short read on basket at offset {basket.offset}: "
                f"got {len(stored)} of {basket.stored_len} bytes"
            )
        import time

        t0 = time.perf_counter()
        raw = decompress_record(stored, basket.codec, basket.raw_len)
        chunk = decode_basket(raw, meta.dtype, meta.shape, basket.n_entries)
        self.stats.decompress_time_s += time.perf_counter() - t0
        self.stats.baskets_read += 1
        self.stats.bytes_stored += basket.stored_len
        self.stats.bytes_raw += basket.raw_len
        return chunk

    def validate(self, deep: bool = False) -> None:
        """Re-run structural checks; with ``deep`` decode every basket too."""
        self._check_index()
        if deep:
            for tree in self.trees.values():
                for meta in tree.branches.values():
                    for basket in meta.baskets:
                        self._read_basket(basket, meta)

    def close(self) -> None:
        if self._own:
            self._source.close()

    def __enter__(self) -> "TreeFileReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_file(path_or_source: str | Path | ByteSource) -> TreeFileReader:
    """Open a TreeFile from a path, URL-opened source, or raw bytes source."""
    if isinstance(path_or_source, (str, Path)):
        return TreeFileReader(FileSource(path_or_source), own_source=True)
    return TreeFileReader(path_or_source, own_source=False)


def open_bytes(data: bytes) -> TreeFileReader:
    return TreeFileReader(BytesSource(data), own_source=True)


# ---------------------------------------------------------------------------
# concatenation


def concat_files(
    inputs: Iterable[str | Path],
    output: str | Path,
    *,
    codec: Codec = Codec.DEFLATE,
    basket_entries: int = DEFAULT_BASKET_ENTRIES,
) -> int:
    """Merge single-tree files with identical schemas into one file.

    Entries keep input order. Returns the total entry count.
    """
    paths = list(inputs)
    if not paths:
        raise SchemaError("concat needs at least one input")
    total = 0
    writer: TreeFileWriter | None = None
    schema: dict[str, tuple[Dtype, Shape]] | None = None
    try:
        for path in paths:
            with open_file(path) as reader:
                tmeta = reader.tree()
                this_schema = {
                    name: (meta.dtype, meta.shape) for name, meta in tmeta.branches.items()
                }
                if writer is None:
                    writer = TreeFileWriter(output, codec=codec, basket_entries=basket_entries)
                    writer.begin_tree(tmeta.name, this_schema)
                    schema = this_schema
                elif this_schema != schema:
                    raise SchemaError(f"schema of {path} differs from first input")
                for start in range(0, tmeta.n_entries, basket_entries):
                    stop = min(start + basket_entries, tmeta.n_entries)
                    writer.extend(
                        {
                            name: reader.read_column(None, name, start, stop)
                            for name in tmeta.branches
                        }
                    )
                total += tmeta.n_entries
        assert writer is not None
        writer.end_tree()
        writer.close()
    except BaseException:
        if writer is not None:
            writer._fh.close()
        raise
    return total
