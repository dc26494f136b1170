"""Descriptor math: normalization, cosine similarity, sign hashing, Hamming distance.

Binary codes are stored packed into little-endian ``uint64`` words. Bit ``j`` of
the code lives in word ``j // 64`` at bit position ``j % 64``; a set bit means
+1 and a clear bit means -1. Padding bits past ``dim`` are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WORD_BITS = 64


def n_words(dim: int) -> int:
    return (dim + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array (..., dim) into uint64 words (..., ceil(dim/64))."""
    bits = np.asarray(bits, dtype=bool)
    dim = bits.shape[-1]
    nw = n_words(dim)
    padded = np.zeros(bits.shape[:-1] + (nw * WORD_BITS,), dtype=bool)
    padded[..., :dim] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`."""
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :dim].astype(bool)


@dataclass(frozen=True, eq=False)
class BinaryCode:
    """A ``dim``-bit sign code packed into ``ceil(dim/64)`` words."""

    words: np.ndarray
    dim: int

    def __post_init__(self):
        words = np.array(self.words, dtype=np.uint64).reshape(-1)
        if self.dim <= 0:
            raise ValueError(f"code dimension must be positive, got {self.dim}")
        if words.shape[0] != n_words(self.dim):
            raise ValueError(
                f"expected {n_words(self.dim)} words for dim={self.dim}, got {words.shape[0]}"
            )
        tail = self.dim % WORD_BITS
        if tail and int(words[-1]) >> tail:
            raise ValueError("padding bits beyond dim must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits) -> "BinaryCode":
        bits = np.asarray(bits, dtype=bool).reshape(-1)
        return cls(pack_bits(bits), bits.shape[0])

    @classmethod
    def from_signs(cls, signs) -> "BinaryCode":
        signs = np.asarray(signs)
        if not np.all(np.abs(signs) == 1):
            raise ValueError("sign vector entries must be +1 or -1")
        return cls.from_bits(signs > 0)

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.dim)

    def signs(self) -> np.ndarray:
        """The code as a float vector of +1/-1 entries."""
        return np.where(self.bits(), 1.0, -1.0)

    def __eq__(self, other):
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.dim, self.words.tobytes()))

    def __repr__(self):
        return f"BinaryCode(dim={self.dim}, words={[hex(int(w)) for w in self.words]})"


def _check_finite(v: np.ndarray, what: str) -> None:
    if v.ndim == 0 or v.shape[-1] == 0:
        raise ValueError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} contains non-finite entries")


def l2_normalize(v) -> np.ndarray:
    """Return ``v / ||v||`` as float32. Works row-wise on 2-D input."""
    v = np.asarray(v, dtype=np.float64)
    _check_finite(v, "descriptor")
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def sign_bits(f) -> np.ndarray:
    """Boolean sign bits of ``f`` (True for +1). Zero and -0.0 map to +1."""
    f = np.asarray(f)
    if np.any(np.isnan(f)):
        raise ValueError("cannot hash NaN entries")
    # numeric comparison: -0.0 >= 0 is True
    return f >= 0


def sign_hash(f) -> BinaryCode:
    f = np.asarray(f).reshape(-1)
    if f.size == 0:
        raise ValueError("cannot hash an empty vector")
    return BinaryCode.from_bits(sign_bits(f))


def sign_hash_rows(f) -> np.ndarray:
    """Hash a (n, d) matrix into a packed (n, ceil(d/64)) word matrix."""
    f = np.asarray(f)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {f.shape}")
    return pack_bits(sign_bits(f))


def _check_dims(a: BinaryCode, b: BinaryCode) -> None:
    if a.dim != b.dim:
        raise ValueError(f"code dimension mismatch: {a.dim} vs {b.dim}")


def hamming_distance(a: BinaryCode, b: BinaryCode) -> int:
    _check_dims(a, b)
    return int(np.bitwise_count(a.words ^ b.words).sum())


def binary_cosine(a: BinaryCode, b: BinaryCode) -> float:
    """Cosine of two sign codes, ``<a, b> / d`` computed as ``(d - 2H) / d``."""
    _check_dims(a, b)
    return (a.dim - 2 * hamming_distance(a, b)) / a.dim
