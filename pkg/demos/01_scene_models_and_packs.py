"""
Scene models and descriptor packs
=================================

A scene model is the unit everything else consumes: one whole-image
descriptor plus a bag of part descriptors, each part tagged with the
pixel box it was cut from.  This walkthrough builds a few models by
hand, validates them, and round-trips them through the on-disk pack
format.
"""

import tempfile
from pathlib import Path

import numpy as np

from nbnnplace import (
    IMAGE_LEVEL,
    PART_LEVEL,
    PartDescriptor,
    SceneModel,
    Viewpoint,
    load_pack,
    load_poses,
    read_pack_info,
    save_pack,
    save_poses,
    validate_scene_model,
)

rng = np.random.default_rng(0)
WIDTH, HEIGHT = 640, 480
DIM = 32

# ---------------------------------------------------------------------------
# 1. Building a scene model
# ---------------------------------------------------------------------------
# Every model carries exactly one image-level part whose box is the full
# frame, plus any number of smaller parts.  Descriptors are plain float32
# vectors of one shared dimension.

def make_scene(image_id: str) -> SceneModel:
    parts = [
        PartDescriptor(
            box=(0.0, 0.0, float(WIDTH), float(HEIGHT)),
            level=IMAGE_LEVEL,
            vector=rng.normal(size=DIM).astype(np.float32),
        )
    ]
    for _ in range(5):
        w, h = rng.uniform(20, 120, size=2)
        left = rng.uniform(0, WIDTH - w)
        top = rng.uniform(0, HEIGHT - h)
        parts.append(
            PartDescriptor(
                box=(float(left), float(top), float(w), float(h)),
                level=PART_LEVEL,
                vector=rng.normal(size=DIM).astype(np.float32),
            )
        )
    return SceneModel(image_id, parts)


scenes = [make_scene(f"frame_{i:03d}") for i in range(8)]
print(f"built {len(scenes)} scene models, "
      f"{len(scenes[0].parts)} parts each, dim {DIM}")

# vectors() stacks every descriptor (image-level row first) — this is the
# matrix the compression and retrieval stages operate on.
print("descriptor matrix of one scene:", scenes[0].vectors().shape)

# ---------------------------------------------------------------------------
# 2. Validation catches malformed models early
# ---------------------------------------------------------------------------
# A part box must lie inside the frame, and dimensions must agree.  The
# validators raise instead of letting bad geometry reach the index.

from nbnnplace import ValidationError

bad = SceneModel(
    "broken",
    [
        PartDescriptor((0.0, 0.0, WIDTH, HEIGHT), IMAGE_LEVEL,
                       rng.normal(size=DIM).astype(np.float32)),
        PartDescriptor((600.0, 400.0, 100.0, 100.0), PART_LEVEL,
                       rng.normal(size=DIM).astype(np.float32)),
    ],
)
try:
    validate_scene_model(bad, extent=(WIDTH, HEIGHT))
except ValidationError as e:
    print("rejected:", e)

# ---------------------------------------------------------------------------
# 3. Packs: the on-disk container
# ---------------------------------------------------------------------------
# A pack file stores many scene models plus the frame extent.  Viewpoints
# (x, y, heading) travel with the scenes when present; a pose table can
# also be written as plain CSV.

workdir = Path(tempfile.mkdtemp(prefix="packs-"))
pack_path = workdir / "frames.nbnp"

posed = [
    SceneModel(s.image_id, s.parts,
               viewpoint=Viewpoint(float(10 * i), 5.0, 0.3 * i))
    for i, s in enumerate(scenes)
]
save_pack(posed, pack_path, extent=(WIDTH, HEIGHT))
print(f"\nwrote {pack_path.stat().st_size} bytes to {pack_path}")

# Header inspection does not load the descriptors:
info = read_pack_info(pack_path)
print(f"pack holds {info.count} models, dim {info.dim}, extent {info.extent}")

# Full load restores everything bit-for-bit:
restored = load_pack(pack_path)
assert len(restored) == len(posed)
assert np.array_equal(restored[3].vectors(), posed[3].vectors())
assert restored[3].viewpoint == posed[3].viewpoint
print("round trip exact:", restored[3].image_id, restored[3].viewpoint)

# The pose table alone, as CSV:
poses_path = workdir / "poses.csv"
save_poses([(s.image_id, s.viewpoint) for s in posed], poses_path)
poses = load_poses(poses_path)
print(f"pose CSV: {len(poses)} rows, first = {poses[0]}")
