"""Keypoint sets, candidate matching, and the fallback corner detector.

View overlap is estimated from local keypoint matches.  Any detector can
produce the keypoint files; a built-in Harris corner detector with
normalized intensity patches keeps the pipeline self-contained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .errors import CorruptionError, FormatError, ValidationError

KEYPOINT_MAGIC = "NBKP"
KEYPOINT_VERSION = 1


@dataclass
class KeypointSet:
    """Keypoints of one image: pixel positions (u, v) and fixed-dim descriptors."""

    image_id: str
    positions: np.ndarray  # (n, 2) float32
    descriptors: np.ndarray  # (n, d) float32
    extent: tuple[float, float] | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float32).reshape(-1, 2)
        n = len(self.positions)
        d = np.asarray(self.descriptors, dtype=np.float32)
        if d.ndim != 2:
            # reshape with -1 cannot infer an axis from a size-0 array
            d = d.reshape(n, -1) if d.size else d.reshape(n, 0)
        if d.shape[0] != n:
            raise ValidationError(
                f"{n} positions but {d.shape[0]} descriptors in set {self.image_id!r}"
            )
        self.descriptors = d

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


@dataclass
class MatchSet:
    """Candidate correspondences with per-pair inlier posteriors.

    Indices are one-to-one per side.  ``converged`` is the consensus
    filter's warning flag; ``objective_trace`` records its per-iteration
    penalized log-likelihood.
    """

    index_a: np.ndarray
    index_b: np.ndarray
    posterior: np.ndarray
    converged: bool = True
    objective_trace: np.ndarray | None = None

    def __post_init__(self):
        self.index_a = np.asarray(self.index_a, dtype=np.int64).reshape(-1)
        self.index_b = np.asarray(self.index_b, dtype=np.int64).reshape(-1)
        self.posterior = np.asarray(self.posterior, dtype=np.float64).reshape(-1)
        if not (len(self.index_a) == len(self.index_b) == len(self.posterior)):
            raise ValidationError("match arrays must have equal length")
        if len(np.unique(self.index_a)) != len(self.index_a):
            raise ValidationError("match indices must be one-to-one on side a")
        if len(np.unique(self.index_b)) != len(self.index_b):
            raise ValidationError("match indices must be one-to-one on side b")

    def __len__(self) -> int:
        return self.index_a.shape[0]

    def inlier_mask(self) -> np.ndarray:
        return self.posterior > 0.5

    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask()))


def empty_match_set() -> MatchSet:
    return MatchSet(
        index_a=np.empty(0, dtype=np.int64),
        index_b=np.empty(0, dtype=np.int64),
        posterior=np.empty(0, dtype=np.float64),
    )


def match_candidates(a: KeypointSet, b: KeypointSet, ratio: float = 0.8) -> MatchSet:
    """Mutual nearest neighbors passing the distance-ratio test.

    A pair (i, j) is kept when j is i's nearest descriptor in b, i is j's
    nearest in a, and the nearest/second-nearest distance ratio on the a
    side is below ``ratio``.  Posteriors start at 1.
    """
    if not (0.0 < ratio <= 1.0):
        raise ValidationError(f"ratio must be in (0, 1], got {ratio}")
    if len(a) == 0 or len(b) == 0:
        return empty_match_set()
    if a.dim != b.dim:
        raise ValidationError(f"descriptor dimensions differ: {a.dim} != {b.dim}")

    dist = cdist(a.descriptors, b.descriptors)
    nn_b = np.argmin(dist, axis=1)
    nn_a = np.argmin(dist, axis=0)
    mutual = nn_a[nn_b] == np.arange(len(a))

    if dist.shape[1] >= 2:
        two = np.partition(dist, 1, axis=1)[:, :2]
        d1, d2 = two[:, 0], two[:, 1]
        passes = (d2 > 0) & (d1 < ratio * d2)
    else:
        passes = np.ones(len(a), dtype=bool)

    keep = np.flatnonzero(mutual & passes)
    return MatchSet(
        index_a=keep,
        index_b=nn_b[keep],
        posterior=np.ones(len(keep)),
    )


def detect_keypoints(
    image: np.ndarray,
    image_id: str = "",
    max_keypoints: int = 500,
    patch_size: int = 11,
    smoothing: float = 1.0,
    k: float = 0.04,
    response_floor: float = 0.005,
) -> KeypointSet:
    """Harris corners with mean/variance-normalized intensity patch descriptors.

    Accepts a 2-D grayscale array (any numeric dtype).  Corners within half
    a patch of the border are dropped so every descriptor patch is full.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"detector expects a 2-D grayscale array, got shape {img.shape}")
    h, w = img.shape
    half = patch_size // 2

    ix = ndimage.sobel(img, axis=1, mode="nearest")
    iy = ndimage.sobel(img, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, smoothing, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, smoothing, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, smoothing, mode="nearest")
    response = sxx * syy - sxy**2 - k * (sxx + syy) ** 2

    local_max = response == ndimage.maximum_filter(response, size=3, mode="nearest")
    peak = response.max()
    if peak <= 0:
        return KeypointSet(image_id, np.empty((0, 2)), np.empty((0, patch_size**2)), (w, h))
    candidates = local_max & (response > response_floor * peak)
    candidates[:half, :] = candidates[-half:, :] = False
    candidates[:, :half] = candidates[:, -half:] = False

    vs, us = np.nonzero(candidates)
    order = np.argsort(-response[vs, us], kind="stable")[:max_keypoints]
    vs, us = vs[order], us[order]

    descriptors = np.empty((len(vs), patch_size**2), dtype=np.float32)
    for i, (v, u) in enumerate(zip(vs, us)):
        patch = img[v - half : v + half + 1, u - half : u + half + 1]
        std = patch.std()
        descriptors[i] = ((patch - patch.mean()) / (std if std > 0 else 1.0)).ravel()
    positions = np.stack([us, vs], axis=1).astype(np.float32)
    return KeypointSet(image_id, positions, descriptors, extent=(float(w), float(h)))


# Keypoint file: one JSON header line, one JSON line per image, then a single
# little-endian float32 payload holding positions then descriptors per image.


def save_keypoint_sets(sets: list[KeypointSet], path: str | Path) -> None:
    dims = {s.dim for s in sets if len(s)}
    if len(dims) > 1:
        raise ValidationError(f"keypoint sets mix descriptor dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0

    header = {
        "magic": KEYPOINT_MAGIC,
        "version": KEYPOINT_VERSION,
        "count": len(sets),
        "descriptor_dim": dim,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    payload = bytearray()
    for s in sets:
        meta = {"image_id": s.image_id, "n_keypoints": len(s)}
        if s.extent is not None:
            meta["extent"] = [float(s.extent[0]), float(s.extent[1])]
        lines.append(json.dumps(meta, separators=(",", ":")))
        payload += np.ascontiguousarray(s.positions, dtype="<f4").tobytes()
        payload += np.ascontiguousarray(s.descriptors, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        fh.write(bytes(payload))


def load_keypoint_sets(path: str | Path) -> list[KeypointSet]:
    data = Path(path).read_bytes()
    pos = data.find(b"\n")
    if pos < 0:
        raise CorruptionError("keypoint file has no header line")
    try:
        header = json.loads(data[:pos])
    except json.JSONDecodeError as exc:
        raise FormatError(f"keypoint file header is not JSON: {exc}") from exc
    if header.get("magic") != KEYPOINT_MAGIC:
        raise FormatError(f"bad keypoint file magic {header.get('magic')!r}")
    if header.get("version") != KEYPOINT_VERSION:
        raise FormatError(f"unsupported keypoint file version {header.get('version')}")
    count, dim = header["count"], header["descriptor_dim"]

    metas = []
    cursor = pos + 1
    for _ in range(count):
        nxt = data.find(b"\n", cursor)
        if nxt < 0:
            raise CorruptionError(f"keypoint file truncated in metadata at offset {cursor}")
        metas.append(json.loads(data[cursor:nxt]))
        cursor = nxt + 1

    sets = []
    for meta in metas:
        n = meta["n_keypoints"]
        need = 4 * n * (2 + dim)
        if cursor + need > len(data):
            raise CorruptionError(
                f"keypoint file truncated in payload at offset {cursor} "
                f"(need {need} bytes)"
            )
        positions = np.frombuffer(data, dtype="<f4", count=2 * n, offset=cursor).reshape(n, 2)
        cursor += 8 * n
        descriptors = np.frombuffer(data, dtype="<f4", count=dim * n, offset=cursor).reshape(n, dim)
        cursor += 4 * dim * n
        extent = tuple(meta["extent"]) if "extent" in meta else None
        sets.append(
            KeypointSet(meta["image_id"], positions.copy(), descriptors.copy(), extent=extent)
        )
    if cursor != len(data):
        raise CorruptionError(f"keypoint file has {len(data) - cursor} trailing bytes")
    return sets
