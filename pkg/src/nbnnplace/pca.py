"""PCA compression of raw descriptors to short vectors.

Trained on database descriptors; the standard output dimensions are 128,
256, and 512.  Training uses a thin SVD of the centered data matrix with a
deterministic sign convention so trained models are byte-for-byte
reproducible.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

PCA_MAGIC = b"NBPC"
PCA_VERSION = 1


@dataclass(frozen=True)
class PCAModel:
    """Affine projection onto the top-k principal directions.

    ``basis`` is d x k with orthonormal columns; ``eigenvalues`` are the
    corresponding sample-covariance eigenvalues, descending.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    rank_deficient: bool = False

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PCAModel):
            return NotImplemented
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.basis, other.basis)
            and np.array_equal(self.eigenvalues, other.eigenvalues)
            and self.rank_deficient == other.rank_deficient
        )


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def train_pca(training: np.ndarray, k: int) -> PCAModel:
    """Fit a k-dimensional PCA model to training vectors (rows).

    Requires at least 2 samples and k <= min(d, n - 1).  When the data rank
    is below k the trailing eigenvalues are clamped to zero, the basis is
    completed with arbitrary orthonormal directions, and the model is
    flagged rank deficient.
    """
    X = np.asarray(training, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"training data must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ValidationError(f"PCA training needs at least 2 samples, got {n}")
    if k < 1 or k > min(d, n - 1):
        raise ValidationError(f"k={k} must be in [1, min(d={d}, n-1={n - 1})]")

    mean = X.mean(axis=0)
    centered = X - mean
    # Thin SVD of the centered matrix: right singular vectors are the
    # covariance eigenvectors, s^2/(n-1) the eigenvalues.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (s[:k] ** 2) / (n - 1)
    basis = _fix_signs(vt[:k].T)

    scale = eigenvalues[0] if eigenvalues.size and eigenvalues[0] > 0 else 1.0
    rank_deficient = bool(np.any(eigenvalues < 1e-12 * scale))
    eigenvalues = np.maximum(eigenvalues, 0.0)
    return PCAModel(
        mean=mean,
        basis=np.ascontiguousarray(basis),
        eigenvalues=eigenvalues,
        rank_deficient=rank_deficient,
    )


def project(model: PCAModel, v: np.ndarray) -> np.ndarray:
    """Project a d-vector (or an n x d batch) to the k-dimensional code space."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] != model.input_dim:
        raise ValidationError(
            f"vector dimension {arr.shape[-1]} != model input dimension {model.input_dim}"
        )
    return (arr - model.mean) @ model.basis


_PCA_HEADER = struct.Struct("<4sIIIB")


def to_bytes(model: PCAModel) -> bytes:
    out = bytearray()
    out += _PCA_HEADER.pack(
        PCA_MAGIC, PCA_VERSION, model.input_dim, model.output_dim, int(model.rank_deficient)
    )
    out += np.ascontiguousarray(model.mean, dtype="<f8").tobytes()
    out += np.ascontiguousarray(model.basis, dtype="<f8").tobytes()
    out += np.ascontiguousarray(model.eigenvalues, dtype="<f8").tobytes()
    return bytes(out)


def from_bytes(data: bytes) -> PCAModel:
    if len(data) < _PCA_HEADER.size:
        raise CorruptionError("PCA model file truncated in header")
    magic, version, d, k, flag = _PCA_HEADER.unpack(data[: _PCA_HEADER.size])
    if magic != PCA_MAGIC:
        raise FormatError(f"bad PCA model magic {magic!r}")
    if version != PCA_VERSION:
        raise FormatError(f"unsupported PCA model version {version}")
    need = _PCA_HEADER.size + 8 * (d + d * k + k)
    if len(data) != need:
        raise CorruptionError(f"PCA model file has {len(data)} bytes, expected {need}")
    pos = _PCA_HEADER.size
    mean = np.frombuffer(data, dtype="<f8", count=d, offset=pos).copy()
    pos += 8 * d
    basis = np.frombuffer(data, dtype="<f8", count=d * k, offset=pos).reshape(d, k).copy()
    pos += 8 * d * k
    eigenvalues = np.frombuffer(data, dtype="<f8", count=k, offset=pos).copy()
    return PCAModel(mean=mean, basis=basis, eigenvalues=eigenvalues, rank_deficient=bool(flag))


def save_model(model: PCAModel, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_model(path: str | Path) -> PCAModel:
    return from_bytes(Path(path).read_bytes())
