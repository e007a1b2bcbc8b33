"""Random-projection binary codes and Hamming comparison.

Short vectors are projected onto seeded unit-norm Gaussian directions and
thresholded into b-bit codes packed little-endian into 64-bit words, so two
codes compare with XOR plus a population count.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

PROJECTION_MAGIC = b"NBBP"
PROJECTION_VERSION = 1


def words_for_bits(bits: int) -> int:
    if bits < 1:
        raise ValidationError(f"bit width must be positive, got {bits}")
    return (bits + 63) // 64


@dataclass(frozen=True)
class BinaryCode:
    """A b-bit code packed LSB-first into uint64 words; unused high bits are zero."""

    bits: int
    words: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        object.__setattr__(self, "words", w)
        if w.shape != (words_for_bits(self.bits),):
            raise ValidationError(
                f"code with {self.bits} bits needs {words_for_bits(self.bits)} words, "
                f"got shape {w.shape}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self.bits == other.bits and np.array_equal(self.words, other.words)

    def __int__(self) -> int:
        value = 0
        for i, w in enumerate(self.words):
            value |= int(w) << (64 * i)
        return value


def code_from_int(value: int, bits: int) -> BinaryCode:
    if value < 0 or value >> bits:
        raise ValidationError(f"value {value} does not fit in {bits} bits")
    n = words_for_bits(bits)
    words = np.array([(value >> (64 * i)) & 0xFFFFFFFFFFFFFFFF for i in range(n)], dtype=np.uint64)
    return BinaryCode(bits=bits, words=words)


@dataclass(frozen=True)
class ProjectionModel:
    """b unit-norm random projection directions with per-bit thresholds."""

    seed: int
    rows: np.ndarray  # (b, k)
    thresholds: np.ndarray  # (b,)

    @property
    def input_dim(self) -> int:
        return self.rows.shape[1]

    @property
    def bits(self) -> int:
        return self.rows.shape[0]

    def digest(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjectionModel):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.thresholds, other.thresholds)
        )


def train_projection(
    seed: int,
    k: int,
    b: int,
    training: np.ndarray | None = None,
) -> ProjectionModel:
    """Draw b seeded isotropic Gaussian directions, normalized to unit norm.

    With training data the per-bit threshold is the median of the projected
    values, which balances each bit across the training set; without it all
    thresholds are zero.
    """
    if b < 1 or k < 1:
        raise ValidationError(f"need b >= 1 and k >= 1, got b={b}, k={k}")
    if not 0 <= seed < 2**63:
        raise ValidationError(f"seed must be in [0, 2^63), got {seed}")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((b, k))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    if training is None or len(training) == 0:
        thresholds = np.zeros(b)
    else:
        X = np.asarray(training, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != k:
            raise ValidationError(f"training data shape {X.shape} incompatible with k={k}")
        thresholds = np.median(rows @ X.T, axis=1)
    return ProjectionModel(seed=seed, rows=rows, thresholds=thresholds)


def _pack_bits(flags: np.ndarray, bits: int) -> np.ndarray:
    """Pack boolean rows (n, b) LSB-first into (n, words) uint64."""
    n = flags.shape[0]
    packed = np.packbits(flags, axis=1, bitorder="little")
    n_words = words_for_bits(bits)
    padded = np.zeros((n, n_words * 8), dtype=np.uint8)
    padded[:, : packed.shape[1]] = packed
    return padded.view("<u8").reshape(n, n_words)


def encode_many(model: ProjectionModel, vectors: np.ndarray) -> np.ndarray:
    """Encode an n x k batch to an (n, words) uint64 code array."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ValidationError(
            f"vector dimension {X.shape[1]} != projection input dimension {model.input_dim}"
        )
    flags = (X @ model.rows.T) > model.thresholds
    return _pack_bits(flags, model.bits)


def encode(model: ProjectionModel, v: np.ndarray) -> BinaryCode:
    """Encode one k-vector: bit i is set iff row_i . v exceeds threshold_i."""
    return BinaryCode(bits=model.bits, words=encode_many(model, v)[0])


def hamming(a: BinaryCode, b: BinaryCode) -> int:
    """Population count of XOR; both codes must share one bit width."""
    if a.bits != b.bits:
        raise ValidationError(f"bit widths differ: {a.bits} != {b.bits}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


def hamming_many(query_words: np.ndarray, code_matrix: np.ndarray) -> np.ndarray:
    """Hamming distances from one packed code (words,) to each row of (n, words)."""
    return np.bitwise_count(code_matrix ^ query_words).sum(axis=1).astype(np.int64)


def hamming_table(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed code matrices, shape (len(a), len(b))."""
    a = np.atleast_2d(np.asarray(a, dtype=np.uint64))
    b = np.atleast_2d(np.asarray(b, dtype=np.uint64))
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"word counts differ: {a.shape[1]} != {b.shape[1]}")
    return np.bitwise_count(a[:, None, :] ^ b[None, :, :]).sum(axis=2, dtype=np.int64)


def complement(code: BinaryCode) -> BinaryCode:
    words = ~code.words
    tail = code.bits % 64
    if tail:
        mask = np.uint64((1 << tail) - 1)
        words = words.copy()
        words[-1] &= mask
    return BinaryCode(bits=code.bits, words=words)


_PROJ_HEADER = struct.Struct("<4sIqII")


def to_bytes(model: ProjectionModel) -> bytes:
    out = bytearray()
    out += _PROJ_HEADER.pack(
        PROJECTION_MAGIC, PROJECTION_VERSION, model.seed, model.input_dim, model.bits
    )
    out += np.ascontiguousarray(model.thresholds, dtype="<f8").tobytes()
    out += np.ascontiguousarray(model.rows, dtype="<f8").tobytes()
    return bytes(out)


def from_bytes(data: bytes) -> ProjectionModel:
    if len(data) < _PROJ_HEADER.size:
        raise CorruptionError("projection model file truncated in header")
    magic, version, seed, k, b = _PROJ_HEADER.unpack(data[: _PROJ_HEADER.size])
    if magic != PROJECTION_MAGIC:
        raise FormatError(f"bad projection model magic {magic!r}")
    if version != PROJECTION_VERSION:
        raise FormatError(f"unsupported projection model version {version}")
    need = _PROJ_HEADER.size + 8 * (b + b * k)
    if len(data) != need:
        raise CorruptionError(f"projection model file has {len(data)} bytes, expected {need}")
    pos = _PROJ_HEADER.size
    thresholds = np.frombuffer(data, dtype="<f8", count=b, offset=pos).copy()
    pos += 8 * b
    rows = np.frombuffer(data, dtype="<f8", count=b * k, offset=pos).reshape(b, k).copy()
    return ProjectionModel(seed=seed, rows=rows, thresholds=thresholds)


def save_model(model: ProjectionModel, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_model(path: str | Path) -> ProjectionModel:
    return from_bytes(Path(path).read_bytes())
