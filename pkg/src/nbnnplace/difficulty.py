"""View-overlap measurement and difficulty ranking of localization tasks.

Overlap between two images is the number of verified keypoint matches; its
reciprocal is the difficulty index (infinite when nothing matches).  Tasks
are ranked by that index and sliced into percentile bands so benchmarks can
report performance as a function of difficulty.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .consensus import ConsensusParams, consensus_filter
from .errors import ValidationError
from .geometry import LocalizationTask
from .matching import KeypointSet, match_candidates


def _fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Least-squares homography via the normalized direct linear transform."""

    def normalize(pts):
        mean = pts.mean(axis=0)
        centered = pts - mean
        scale = math.sqrt(2.0) / max(np.linalg.norm(centered, axis=1).mean(), 1e-12)
        t = np.array(
            [[scale, 0.0, -scale * mean[0]], [0.0, scale, -scale * mean[1]], [0.0, 0.0, 1.0]]
        )
        return (centered * scale), t

    s, t_src = normalize(src.astype(np.float64))
    d, t_dst = normalize(dst.astype(np.float64))
    n = len(s)
    rows = np.zeros((2 * n, 9))
    rows[0::2, 0:2] = s
    rows[0::2, 2] = 1.0
    rows[0::2, 6:8] = -d[:, 0:1] * s
    rows[0::2, 8] = -d[:, 0]
    rows[1::2, 3:5] = s
    rows[1::2, 5] = 1.0
    rows[1::2, 6:8] = -d[:, 1:2] * s
    rows[1::2, 8] = -d[:, 1]
    try:
        _, _, vt = np.linalg.svd(rows)
    except np.linalg.LinAlgError:
        return None
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) < 1e-12 and abs(np.linalg.det(h)) < 1e-12:
        return None
    return np.linalg.inv(t_dst) @ h @ t_src


def _homography_inliers(h: np.ndarray, src: np.ndarray, dst: np.ndarray, thresh: float) -> np.ndarray:
    ones = np.ones((len(src), 1))
    proj = np.hstack([src, ones]) @ h.T
    w = proj[:, 2]
    ok = np.abs(w) > 1e-12
    err = np.full(len(src), np.inf)
    err[ok] = np.linalg.norm(proj[ok, :2] / w[ok, None] - dst[ok], axis=1)
    return err < thresh


def _ransac_overlap(
    xa: np.ndarray,
    xb: np.ndarray,
    seed: int,
    iters: int = 500,
    thresh: float = 3.0,
) -> int:
    n = len(xa)
    if n < 4:
        return 0
    rng = np.random.default_rng(seed)
    best = 0
    for _ in range(iters):
        pick = rng.choice(n, size=4, replace=False)
        h = _fit_homography(xa[pick], xb[pick])
        if h is None:
            continue
        count = int(_homography_inliers(h, xa, xb, thresh).sum())
        if count > best:
            best = count
    return best


def overlap(
    query: KeypointSet,
    reference: KeypointSet,
    mode: str = "consensus",
    ratio: float = 0.8,
    params: ConsensusParams | None = None,
    ransac_seed: int = 0,
    ransac_iters: int = 500,
    ransac_thresh: float = 3.0,
) -> int:
    """Count verified keypoint matches between two images.

    ``mode`` selects the verifier: ``consensus`` (smooth-field EM, the
    default), ``ransac`` (homography hypotheses with an inlier threshold),
    or ``raw`` (unverified mutual-nearest-neighbor candidates).
    """
    candidates = match_candidates(query, reference, ratio=ratio)
    if len(candidates) == 0:
        return 0
    if mode == "raw":
        return len(candidates)
    if mode == "consensus":
        verified = consensus_filter(candidates, query, reference, params or ConsensusParams())
        return verified.inlier_count()
    if mode == "ransac":
        xa = query.positions[candidates.index_a].astype(np.float64)
        xb = reference.positions[candidates.index_b].astype(np.float64)
        return _ransac_overlap(xa, xb, ransac_seed, ransac_iters, ransac_thresh)
    raise ValidationError(f"unknown overlap mode {mode!r}")


def ldi(overlap_count: int) -> float:
    """Difficulty index: reciprocal of the overlap count, +inf at zero."""
    if overlap_count < 0:
        raise ValidationError(f"overlap count must be non-negative, got {overlap_count}")
    if overlap_count == 0:
        return math.inf
    return 1.0 / overlap_count


def score_task(
    task: LocalizationTask,
    keypoints: dict[str, KeypointSet],
    mode: str = "consensus",
    **kwargs,
) -> LocalizationTask:
    """Attach overlap and difficulty index to a task from its keypoint sets."""
    for image_id in (task.query_id, task.relevant_id):
        if image_id not in keypoints:
            raise ValidationError(f"no keypoints for image {image_id!r}")
    count = overlap(keypoints[task.query_id], keypoints[task.relevant_id], mode=mode, **kwargs)
    return dataclasses.replace(task, overlap=count, ldi=ldi(count))


def rank_and_stratify(
    tasks: list[LocalizationTask],
    rank_range: tuple[float, float] = (0.0, 100.0),
) -> list[LocalizationTask]:
    """Rank tasks by difficulty and keep the requested percentile band.

    Tasks are sorted ascending by difficulty index (ties by query then
    relevant id, infinite difficulty last) and each gets a percentile
    ``100 * position / count``.  The returned band holds tasks whose
    percentile lies in ``(lo, hi]``, in rank order.
    """
    lo, hi = rank_range
    if not (0.0 <= lo < hi <= 100.0):
        raise ValidationError(f"invalid rank range {rank_range!r}")
    if not tasks:
        return []
    for t in tasks:
        if t.ldi is None:
            raise ValidationError(f"task {t.query_id!r} has no difficulty index")

    order = sorted(tasks, key=lambda t: (t.ldi, t.query_id, t.relevant_id))
    n = len(order)
    out = []
    for pos, t in enumerate(order, start=1):
        pct = 100.0 * pos / n
        ranked = dataclasses.replace(t, difficulty_rank_pct=pct)
        if lo < pct <= hi:
            out.append(ranked)
    return out
