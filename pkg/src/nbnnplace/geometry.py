"""Viewing-area geometry, relevant-image selection, and task sampling.

A viewpoint sees an isosceles triangle (apex at the camera, bisected by the
heading).  Localization tasks pair a query with the database image taken from
the nearest viewpoint, plus destructor images guaranteed irrelevant by a
heading difference threshold or a disjoint viewing area.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .scene import Viewpoint, heading_difference

DEFAULT_APEX_ANGLE = math.radians(40.0)
DEFAULT_LEG = 50.0
DEFAULT_N_D = 100
DEFAULT_T_THETA = math.radians(45.0)


@dataclass(frozen=True)
class ViewingTriangle:
    """Triangular viewing area: apex at the camera, two legs of equal length."""

    apex: tuple[float, float]
    heading: float
    apex_angle: float = DEFAULT_APEX_ANGLE
    leg: float = DEFAULT_LEG

    def vertices(self) -> np.ndarray:
        """The three vertices as a (3, 2) array: apex, left leg end, right leg end."""
        ax, ay = self.apex
        half = self.apex_angle / 2.0
        out = np.empty((3, 2), dtype=np.float64)
        out[0] = (ax, ay)
        for i, ang in enumerate((self.heading - half, self.heading + half)):
            out[i + 1] = (ax + self.leg * math.cos(ang), ay + self.leg * math.sin(ang))
        return out


def viewing_triangle(
    v: Viewpoint,
    apex_angle: float = DEFAULT_APEX_ANGLE,
    leg: float = DEFAULT_LEG,
) -> ViewingTriangle:
    """Build the viewing area of a viewpoint."""
    if not (0.0 < apex_angle < math.pi):
        raise ValidationError(f"apex angle must be in (0, pi), got {apex_angle}")
    if leg <= 0.0:
        raise ValidationError(f"leg must be positive, got {leg}")
    return ViewingTriangle(apex=(v.x, v.y), heading=v.heading, apex_angle=apex_angle, leg=leg)


def _projection_overlaps(pa: np.ndarray, pb: np.ndarray, axes: np.ndarray) -> bool:
    """True if on every axis the two projected intervals overlap with positive length."""
    qa = pa @ axes.T
    qb = pb @ axes.T
    lo = np.maximum(qa.min(axis=0), qb.min(axis=0))
    hi = np.minimum(qa.max(axis=0), qb.max(axis=0))
    return bool(np.all(lo < hi))


def triangles_overlap(a: ViewingTriangle, b: ViewingTriangle) -> bool:
    """True iff the triangle interiors intersect with positive area.

    Shared boundary points (a common apex or edge contact) do not count.
    Uses the separating-axis test over both triangles' edge normals: convex
    interiors intersect exactly when no candidate axis separates them, and a
    zero-length projection overlap on any axis means at most boundary contact.
    """
    pa, pb = a.vertices(), b.vertices()
    # Bounding-circle reject: every vertex lies within one leg of its apex.
    dx = pa[0] - pb[0]
    if dx @ dx > (a.leg + b.leg) ** 2:
        return False
    edges = np.vstack([np.roll(pa, -1, axis=0) - pa, np.roll(pb, -1, axis=0) - pb])
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    return _projection_overlaps(pa, pb, normals)


def select_relevant(query: Viewpoint, database: list[tuple[str, Viewpoint]]) -> str:
    """Pick the database image viewed from the nearest viewpoint.

    Ties on position distance break by smallest absolute heading difference,
    then by smallest id.
    """
    if not database:
        raise ValidationError("cannot select a relevant image from an empty database")
    qx, qy = query.x, query.y
    best = None
    for image_id, vp in database:
        key = (
            math.hypot(vp.x - qx, vp.y - qy),
            heading_difference(vp.heading, query.heading),
            image_id,
        )
        if best is None or key < best[0]:
            best = (key, image_id)
    return best[1]


@dataclass(frozen=True)
class LocalizationTask:
    """One retrieval task: a query, its relevant image, and destructors.

    ``overlap`` and ``ldi`` stay unset until the view-overlap stage fills
    them; ``difficulty_rank_pct`` is assigned by rank stratification.
    """

    query_id: str
    relevant_id: str
    destructor_ids: tuple[str, ...]
    overlap: int | None = None
    ldi: float | None = None
    difficulty_rank_pct: float | None = None

    def __post_init__(self):
        ids = set(self.destructor_ids)
        if len(ids) != len(self.destructor_ids):
            raise ValidationError("destructor ids must be distinct")
        if self.query_id in ids or self.relevant_id in ids:
            raise ValidationError("query and relevant ids must not appear among destructors")
        if self.query_id == self.relevant_id:
            raise ValidationError("query and relevant ids must differ")

    @property
    def database_ids(self) -> tuple[str, ...]:
        """The task's retrieval pool: relevant image plus destructors."""
        return (self.relevant_id,) + self.destructor_ids


@dataclass(frozen=True)
class TaskParams:
    n_d: int = DEFAULT_N_D
    t_theta: float = DEFAULT_T_THETA
    apex_angle: float = DEFAULT_APEX_ANGLE
    leg: float = DEFAULT_LEG


def destructor_eligible(query: Viewpoint, candidate: Viewpoint, params: TaskParams) -> bool:
    """A destructor must differ in heading by at least t_theta or view disjoint scenery."""
    if heading_difference(candidate.heading, query.heading) >= params.t_theta:
        return True
    tq = viewing_triangle(query, params.apex_angle, params.leg)
    tc = viewing_triangle(candidate, params.apex_angle, params.leg)
    return not triangles_overlap(tq, tc)


def sample_task(
    query_id: str,
    database: list[tuple[str, Viewpoint]],
    rng_seed: int,
    params: TaskParams = TaskParams(),
) -> LocalizationTask:
    """Build a localization task around one query image.

    The relevant image is the nearest other viewpoint; the remaining
    ``n_d - 1`` slots are drawn uniformly without replacement (seeded) from
    the candidates satisfying the destructor predicate.
    """
    by_id = dict(database)
    if query_id not in by_id:
        raise ValidationError(f"query id {query_id!r} not in database")
    query_vp = by_id[query_id]
    others = [(i, vp) for i, vp in database if i != query_id]
    relevant_id = select_relevant(query_vp, others)

    eligible = [
        i
        for i, vp in others
        if i != relevant_id and destructor_eligible(query_vp, vp, params)
    ]
    needed = params.n_d - 1
    if len(eligible) < needed:
        raise InsufficientDataError(
            f"need {needed} destructors for query {query_id!r}, "
            f"only {len(eligible)} eligible",
            eligible=len(eligible),
        )
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(eligible), size=needed, replace=False)
    return LocalizationTask(
        query_id=query_id,
        relevant_id=relevant_id,
        destructor_ids=tuple(eligible[i] for i in picks),
    )


def _ldi_to_json(value: float | None):
    if value is None:
        return None
    return "inf" if math.isinf(value) else value


def _ldi_from_json(value) -> float | None:
    if value is None:
        return None
    return math.inf if value == "inf" else float(value)


def save_tasks(tasks: list[LocalizationTask], path: str | Path) -> None:
    """Write tasks as JSON lines, one task per line."""
    with open(path, "w") as fh:
        for t in tasks:
            fh.write(
                json.dumps(
                    {
                        "query_id": t.query_id,
                        "relevant_id": t.relevant_id,
                        "destructor_ids": list(t.destructor_ids),
                        "overlap": t.overlap,
                        "ldi": _ldi_to_json(t.ldi),
                        "difficulty_rank_pct": t.difficulty_rank_pct,
                    },
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def load_tasks(path: str | Path) -> list[LocalizationTask]:
    tasks = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            tasks.append(
                LocalizationTask(
                    query_id=rec["query_id"],
                    relevant_id=rec["relevant_id"],
                    destructor_ids=tuple(rec["destructor_ids"]),
                    overlap=rec.get("overlap"),
                    ldi=_ldi_from_json(rec.get("ldi")),
                    difficulty_rank_pct=rec.get("difficulty_rank_pct"),
                )
            )
    return tasks


def with_overlap(task: LocalizationTask, overlap: int, ldi: float) -> LocalizationTask:
    return replace(task, overlap=overlap, ldi=ldi)
