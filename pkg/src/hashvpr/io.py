"""On-disk formats: descriptor files, id sidecars, JSON-lines records, run configs.

Descriptor file layout (little-endian)::

    offset  size  field
    0       4     magic b"SVPR"
    4       4     version (u32, = 1)
    8       4     count   (u32)
    12      4     dim     (u32)
    16      1     dtype   (u8: 0 = float32 rows, 1 = bit-packed rows)
    17      ...   rows: count * dim * 4 bytes, or count * ceil(dim / 8) bytes

Packed rows store bit ``j`` of a code at byte ``j // 8``, bit ``j % 8``.
Ids live beside the file in ``<path>.ids``, one per line.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from .descriptors import n_words

MAGIC = b"SVPR"
VERSION = 1
FLOAT32, PACKED = 0, 1
_HEADER = struct.Struct("<4sIIIB")
HEADER_SIZE = _HEADER.size


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position where reading failed."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset


@dataclass
class DescriptorSet:
    dim: int
    dtype: int
    data: np.ndarray  # float32 (count, dim) or uint64 (count, ceil(dim/64))
    ids: list[str] | None = None

    @property
    def count(self) -> int:
        return self.data.shape[0]


def _row_bytes(dim: int, dtype: int) -> int:
    return dim * 4 if dtype == FLOAT32 else (dim + 7) // 8


def encode(ds: DescriptorSet) -> bytes:
    if ds.dtype == FLOAT32:
        data = np.asarray(ds.data, dtype="<f4")
        if data.ndim != 2 or data.shape[1] != ds.dim:
            raise ValueError(f"float rows of shape {data.shape} do not match dim {ds.dim}")
        body = data.tobytes()
    elif ds.dtype == PACKED:
        words = np.asarray(ds.data, dtype="<u8")
        if words.ndim != 2 or words.shape[1] != n_words(ds.dim):
            raise ValueError(f"packed rows of shape {words.shape} do not match dim {ds.dim}")
        body = np.ascontiguousarray(words).view(np.uint8)[:, :(ds.dim + 7) // 8].tobytes()
    else:
        raise ValueError(f"unknown dtype code {ds.dtype}")
    return _HEADER.pack(MAGIC, VERSION, ds.data.shape[0], ds.dim, ds.dtype) + body


def decode(buf: bytes) -> DescriptorSet:
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"truncated header: {len(buf)} of {HEADER_SIZE} bytes", len(buf))
    magic, version, count, dim, dtype = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype not in (FLOAT32, PACKED):
        raise FormatError(f"unknown dtype code {dtype}", 16)
    if dim == 0:
        raise FormatError("zero dimension", 12)
    row = _row_bytes(dim, dtype)
    expected = HEADER_SIZE + count * row
    if len(buf) < expected:
        complete = (len(buf) - HEADER_SIZE) // row
        raise FormatError(
            f"truncated body: {count} rows declared, {complete} complete",
            HEADER_SIZE + complete * row,
        )
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes", expected)
    body = np.frombuffer(buf, dtype=np.uint8, count=count * row, offset=HEADER_SIZE)
    if dtype == FLOAT32:
        data = body.view("<f4").reshape(count, dim).astype(np.float32)
    else:
        padded = np.zeros((count, n_words(dim) * 8), dtype=np.uint8)
        padded[:, :row] = body.reshape(count, row)
        tail = dim % 8
        if tail and count and np.any(padded[:, row - 1] >> tail):
            bad = int(np.flatnonzero(padded[:, row - 1] >> tail)[0])
            raise FormatError("non-zero padding bits", HEADER_SIZE + bad * row + row - 1)
        data = padded.view("<u8").astype(np.uint64)
    return DescriptorSet(dim, dtype, data)


def ids_path(path) -> Path:
    return Path(str(path) + ".ids")


def write_descriptors(path, ds: DescriptorSet) -> None:
    Path(path).write_bytes(encode(ds))
    if ds.ids is not None:
        if len(ds.ids) != ds.count:
            raise ValueError(f"{len(ds.ids)} ids for {ds.count} rows")
        ids_path(path).write_text("".join(f"{i}\n" for i in ds.ids))


def read_descriptors(path, require_ids: bool = False) -> DescriptorSet:
    ds = decode(Path(path).read_bytes())
    side = ids_path(path)
    if side.exists():
        ids = side.read_text().splitlines()
        if len(ids) != ds.count:
            raise FormatError(f"id sidecar has {len(ids)} lines for {ds.count} rows", 0)
        ds.ids = ids
    elif require_ids:
        raise FileNotFoundError(f"missing id sidecar {side}")
    return ds


def read_jsonl(path) -> Iterator[dict]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.msg}") from None


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# run configuration


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_kv(path) -> dict[str, Any]:
    """``key = value`` lines; ``#`` starts a comment; values parsed as JSON when possible."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip()] = _parse_value(value.strip())
    return out


@dataclass
class RunConfig:
    seed: int = 0
    code_dim: int = 512
    float_dim: int = 2048
    topk: int = 100
    dist_m: float = 25.0
    angle_deg: float = 40.0
    frames: int = 10
    ms_alpha: float = 1.0
    ms_beta: float = 50.0
    ms_gamma: float = 0.5
    lam: float = 0.1
    pair_fraction: float = 0.2
    lr: float = 4e-4
    placement: str = "dense"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(read_kv(path))
