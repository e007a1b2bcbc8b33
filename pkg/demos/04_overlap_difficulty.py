"""
View overlap and task difficulty
================================

Whether a retrieval task is easy or hopeless depends on how much the
query and its relevant image actually saw of the same scene.  Two
complementary measures capture this: a fast geometric one (do the two
viewing triangles intersect?) and an appearance one (how many keypoint
matches survive a smoothness-consensus filter?).  The reciprocal of the
verified match count is the difficulty index used to stratify benchmarks.
"""

import math

import numpy as np

from nbnnplace import (
    ConsensusParams,
    KeypointSet,
    MatchSet,
    TaskParams,
    Viewpoint,
    consensus_filter,
    ldi,
    match_candidates,
    overlap,
    rank_and_stratify,
    sample_task,
    select_relevant,
    triangles_overlap,
    viewing_triangle,
    with_overlap,
)

rng = np.random.default_rng(21)

# ---------------------------------------------------------------------------
# 1. Viewing triangles
# ---------------------------------------------------------------------------
# Each camera pose spans an isoceles triangle (apex at the camera, legs
# along the heading).  Overlapping triangles mean the views could share
# scene content; opposite headings from the same spot share nothing.

here = Viewpoint(0.0, 0.0, 0.0)
nearby_same = Viewpoint(8.0, 2.0, 0.1)
back_to_back = Viewpoint(0.0, 0.0, math.pi)  # shares only the camera point
far_away = Viewpoint(200.0, 0.0, 0.0)

for label, other in [("nearby, same heading", nearby_same),
                     ("back to back, same spot", back_to_back),
                     ("200 m away", far_away)]:
    hit = triangles_overlap(viewing_triangle(here), viewing_triangle(other))
    print(f"{label:26s} -> triangles overlap: {hit}")

# ---------------------------------------------------------------------------
# 2. Sampling retrieval tasks from a pose table
# ---------------------------------------------------------------------------
# A task = query + its geometrically nearest image (the "relevant" one)
# + destructors whose triangles do NOT overlap the query's, so exactly
# one database member is correct.

poses = [(f"node_{i:03d}",
          Viewpoint(float(rng.uniform(0, 400)), float(rng.uniform(0, 400)),
                    float(rng.uniform(-math.pi, math.pi))))
         for i in range(120)]

query_id, query_pose = poses[0]
relevant = select_relevant(query_pose, poses[1:])
print(f"\nnearest view to {query_id}: {relevant}")

task = sample_task(query_id, poses, rng_seed=99, params=TaskParams(n_d=10))
print(f"task: query={task.query_id} relevant={task.relevant_id} "
      f"destructors={len(task.destructor_ids)} "
      f"(pool of {len(task.database_ids)})")

# ---------------------------------------------------------------------------
# 3. Appearance overlap via consensus filtering
# ---------------------------------------------------------------------------
# Candidate matches between two views are mutual nearest neighbors with a
# ratio test; the consensus filter then keeps the subset explained by one
# smooth displacement field.  Here: 35 true correspondences under a smooth
# warp, plus 15 impostors with random geometry.

n_true, n_junk = 35, 15
pos_a = rng.uniform(60, 580, size=(n_true + n_junk, 2)).astype(np.float32)
warp = np.column_stack([
    24.0 + 10.0 * np.sin(pos_a[:n_true, 0] / 150.0),
    -14.0 + 8.0 * np.cos(pos_a[:n_true, 1] / 120.0),
])
pos_b = pos_a.copy()
pos_b[:n_true] += warp + rng.normal(0, 0.8, size=(n_true, 2))
pos_b[n_true:] = rng.uniform(0, 640, size=(n_junk, 2))

desc = rng.normal(size=(n_true + n_junk, 24)).astype(np.float32)
view_a = KeypointSet("view_a", pos_a, desc, extent=(640.0, 480.0))
view_b = KeypointSet("view_b", pos_b + rng.normal(0, 0.01, (n_true + n_junk, 2)).astype(np.float32),
                     desc + rng.normal(0, 0.02, desc.shape).astype(np.float32),
                     extent=(640.0, 480.0))

candidates = match_candidates(view_a, view_b, ratio=0.9)
print(f"\nmutual-NN candidates: {len(candidates)}")

verified = consensus_filter(candidates, view_a, view_b, ConsensusParams())
mask = verified.inlier_mask()
true_kept = int(np.count_nonzero(mask & (verified.index_a < n_true)))
junk_kept = int(np.count_nonzero(mask & (verified.index_a >= n_true)))
print(f"consensus kept {verified.inlier_count()} matches "
      f"({true_kept} genuine, {junk_kept} impostors)")

# The one-call form: verified overlap count between two keypoint sets.
count = overlap(view_a, view_b)
print(f"overlap(view_a, view_b) = {count},  difficulty index = {ldi(count):.4f}")
print(f"zero overlap maps to infinite difficulty: ldi(0) = {ldi(0)}")

# ---------------------------------------------------------------------------
# 4. Difficulty stratification
# ---------------------------------------------------------------------------
# Scored tasks sort by difficulty index; percentile bands select slices.
# (0, 50] is the easier half, (80, 100] the hardest fifth.

tasks = []
for i in range(40):
    t = sample_task(poses[i][0], poses, rng_seed=1000 + i,
                    params=TaskParams(n_d=10))
    count = int(rng.integers(0, 30))
    tasks.append(with_overlap(t, count, ldi(count)))

for band in ((0, 50), (50, 100), (80, 100)):
    got = rank_and_stratify(tasks, band)
    counts = [t.overlap for t in got]
    print(f"band {band}: {len(got):2d} tasks, "
          f"overlap counts {max(counts)} down to {min(counts)}")
