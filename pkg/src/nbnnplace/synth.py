"""Synthetic worlds with ground truth for end-to-end benchmarking.

A world is a plane scattered with landmarks, each carrying a latent part
descriptor, a latent keypoint descriptor, and a salience score.  A camera
path visits viewpoints; each image sees the landmarks inside its viewing
triangle.  Scene models are assembled from the most salient visible
landmarks (so nearby views share parts), keypoints are the projected
visible landmarks (so view overlap is measurable from planted
correspondences), and an optional per-region "atmosphere" bias gives
images from the same area a shared descriptor component even when their
views share nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_APEX_ANGLE, DEFAULT_LEG, viewing_triangle
from .matching import KeypointSet, save_keypoint_sets
from .scene import (
    IMAGE_LEVEL,
    PART_LEVEL,
    PartDescriptor,
    SceneModel,
    Viewpoint,
    save_pack,
    save_poses,
    wrap_angle,
)


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic world generator."""

    n_images: int = 300
    dim: int = 64
    parts_per_image: int = 20
    n_landmarks: int = 4000
    world_size: float = 400.0
    step: float = 6.0
    extent: tuple[int, int] = (640, 480)
    apex_angle: float = DEFAULT_APEX_ANGLE
    leg: float = DEFAULT_LEG
    noise: float = 0.05
    atmosphere_bias: float = 0.0
    atmosphere_grid: int = 4
    opposed_headings: bool = False
    keypoint_dim: int = 16
    keypoint_descriptor_noise: float = 0.05
    keypoint_position_noise: float = 1.0
    seed: int = 0


@dataclass
class SyntheticDataset:
    """Scene models with ground-truth poses plus per-image keypoint sets."""

    scenes: list[SceneModel]
    keypoints: dict[str, KeypointSet]
    params: SynthParams = field(default_factory=SynthParams)

    def save(self, directory: str | Path) -> dict[str, Path]:
        """Write pack, keypoint, and pose files under a directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "pack": directory / "scenes.nbnp",
            "keypoints": directory / "keypoints.nbkp",
            "poses": directory / "poses.csv",
        }
        save_pack(self.scenes, paths["pack"], extent=self.params.extent)
        save_keypoint_sets([self.keypoints[s.image_id] for s in self.scenes], paths["keypoints"])
        save_poses([(s.image_id, s.viewpoint) for s in self.scenes], paths["poses"])
        return paths


def _points_in_triangle(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside (or on) a triangle, vectorized."""
    a, b, c = tri

    def side(p, q):
        return (q[0] - p[0]) * (points[:, 1] - p[1]) - (q[1] - p[1]) * (points[:, 0] - p[0])

    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    has_neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    has_pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(has_neg & has_pos)


def _wander_path(rng: np.random.Generator, n: int, params: SynthParams) -> list[Viewpoint]:
    """A smooth random walk kept inside the world, steered back from edges."""
    margin = params.leg
    lo, hi = margin, params.world_size - margin
    center = params.world_size / 2.0
    pos = np.array([center, center])
    heading = float(rng.uniform(-math.pi, math.pi))
    out = []
    for _ in range(n):
        out.append(Viewpoint(float(pos[0]), float(pos[1]), heading))
        drift = heading + float(rng.normal(0.0, 0.3))
        edge = max(abs(pos[0] - center), abs(pos[1] - center)) / max(center - margin, 1e-9)
        pull = min(max((edge - 0.7) / 0.3, 0.0), 1.0)
        to_center = math.atan2(center - pos[1], center - pos[0])
        heading = math.atan2(
            (1 - pull) * math.sin(drift) + pull * math.sin(to_center),
            (1 - pull) * math.cos(drift) + pull * math.cos(to_center),
        )
        pos = pos + params.step * np.array([math.cos(heading), math.sin(heading)])
        pos = np.clip(pos, lo, hi)
    return out


def _opposed_path(rng: np.random.Generator, n: int, params: SynthParams) -> list[Viewpoint]:
    """Pairs of co-located viewpoints facing opposite ways (zero view overlap)."""
    base = _wander_path(rng, (n + 1) // 2, params)
    out = []
    for vp in base:
        out.append(vp)
        jitter = rng.normal(0.0, 0.5, size=2)
        out.append(
            Viewpoint(
                vp.x + float(jitter[0]),
                vp.y + float(jitter[1]),
                wrap_angle(vp.heading + math.pi + float(rng.normal(0.0, 0.05))),
            )
        )
    return out[:n]


def _project(vp: Viewpoint, landmarks: np.ndarray, params: SynthParams) -> np.ndarray:
    """Pixel positions of landmarks as seen from a viewpoint.

    Horizontal position follows the bearing relative to the heading,
    vertical position the distance (near is low in the frame).
    """
    rel = landmarks - np.array([vp.x, vp.y])
    dist = np.linalg.norm(rel, axis=1)
    bearing = np.arctan2(rel[:, 1], rel[:, 0])
    rel_bearing = np.array([wrap_angle(b - vp.heading) for b in bearing])
    width, height = params.extent
    u = width * (0.5 + rel_bearing / params.apex_angle)
    v = height * (1.0 - dist / params.leg)
    return np.stack([u, v], axis=1)


def _clipped_box(u: float, v: float, half: float, extent: tuple[int, int]) -> tuple[float, float, float, float]:
    # Boxes are persisted as float32; quantize here and nudge the corner down
    # so the stored values still satisfy left + size <= width exactly.
    width, height = extent
    size = float(np.float32(2.0 * half))
    left = float(np.float32(min(max(u - half, 0.0), width - size)))
    top = float(np.float32(min(max(v - half, 0.0), height - size)))
    while left + size > width:
        left = float(np.nextafter(np.float32(left), np.float32(0.0)))
    while top + size > height:
        top = float(np.nextafter(np.float32(top), np.float32(0.0)))
    return (left, top, size, size)


def generate_world(params: SynthParams = SynthParams()) -> SyntheticDataset:
    """Generate a deterministic synthetic dataset from the given parameters."""
    rng = np.random.default_rng(params.seed)
    d = params.dim
    scale = 1.0 / math.sqrt(d)

    landmarks = rng.uniform(0.0, params.world_size, size=(params.n_landmarks, 2))
    latents = rng.normal(0.0, scale, size=(params.n_landmarks, d))
    kp_latents = rng.normal(0.0, 1.0, size=(params.n_landmarks, params.keypoint_dim))
    salience = rng.uniform(0.0, 1.0, size=params.n_landmarks)

    grid = params.atmosphere_grid
    cell_bias = rng.normal(0.0, scale, size=(grid, grid, d)) * params.atmosphere_bias

    if params.opposed_headings:
        path = _opposed_path(rng, params.n_images, params)
    else:
        path = _wander_path(rng, params.n_images, params)

    cell_size = params.world_size / grid
    width, height = params.extent
    scenes: list[SceneModel] = []
    keypoints: dict[str, KeypointSet] = {}
    for i, vp in enumerate(path):
        image_id = f"img{i:04d}"
        tri = viewing_triangle(vp, params.apex_angle, params.leg).vertices()
        visible = np.flatnonzero(_points_in_triangle(landmarks, tri))

        gx = min(int(vp.x / cell_size), grid - 1)
        gy = min(int(vp.y / cell_size), grid - 1)
        bias = cell_bias[gx, gy]

        if len(visible) > 0:
            image_vec = latents[visible].mean(axis=0)
        else:
            image_vec = np.zeros(d)
        image_vec = image_vec + bias + rng.normal(0.0, params.noise * scale, size=d)
        parts = [
            PartDescriptor(box=(0.0, 0.0, float(width), float(height)), level=IMAGE_LEVEL, vector=image_vec)
        ]

        order = visible[np.lexsort((visible, -salience[visible]))]
        chosen = order[: params.parts_per_image]
        proj = _project(vp, landmarks[chosen], params) if len(chosen) else np.zeros((0, 2))
        dists = (
            np.linalg.norm(landmarks[chosen] - np.array([vp.x, vp.y]), axis=1)
            if len(chosen)
            else np.zeros(0)
        )
        for j, lm in enumerate(chosen):
            half = min(max(8.0, 600.0 / max(dists[j], 1.0)), 60.0)
            vec = latents[lm] + bias + rng.normal(0.0, params.noise * scale, size=d)
            parts.append(
                PartDescriptor(
                    box=_clipped_box(proj[j, 0], proj[j, 1], half, params.extent),
                    level=PART_LEVEL,
                    vector=vec,
                )
            )
        for _ in range(params.parts_per_image - len(chosen)):
            vec = rng.normal(0.0, scale, size=d) + bias
            parts.append(
                PartDescriptor(
                    box=_clipped_box(
                        float(rng.uniform(60, width - 60)),
                        float(rng.uniform(60, height - 60)),
                        40.0,
                        params.extent,
                    ),
                    level=PART_LEVEL,
                    vector=vec,
                )
            )
        scenes.append(SceneModel(image_id=image_id, parts=parts, viewpoint=vp))

        kp_pos = _project(vp, landmarks[visible], params) if len(visible) else np.zeros((0, 2))
        kp_pos = kp_pos + rng.normal(0.0, params.keypoint_position_noise, size=kp_pos.shape)
        kp_desc = kp_latents[visible] + rng.normal(
            0.0, params.keypoint_descriptor_noise, size=(len(visible), params.keypoint_dim)
        )
        keypoints[image_id] = KeypointSet(
            image_id=image_id,
            positions=kp_pos.astype(np.float32),
            descriptors=kp_desc.astype(np.float32),
            extent=params.extent,
        )

    return SyntheticDataset(scenes=scenes, keypoints=keypoints, params=params)
