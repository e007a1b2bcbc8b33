import math

import numpy as np
import pytest

from nbnnplace import (
    KeypointSet,
    LocalizationTask,
    ValidationError,
    ldi,
    overlap,
    rank_and_stratify,
    score_task,
)

EXTENT = (640.0, 480.0)


def random_set(image_id, rng, n=40, dim=64):
    positions = np.column_stack([
        rng.uniform(20, 620, size=n),
        rng.uniform(20, 460, size=n),
    ]).astype(np.float32)
    descriptors = rng.normal(size=(n, dim)).astype(np.float32)
    return KeypointSet(image_id, positions, descriptors, extent=EXTENT)


def shifted_copy(src, image_id, rng, shift=(25.0, -10.0), noise=0.5):
    positions = src.positions + np.asarray(shift, dtype=np.float32)
    positions = positions + rng.normal(0, noise, size=positions.shape).astype(np.float32)
    descriptors = src.descriptors + 0.01 * rng.normal(size=src.descriptors.shape).astype(np.float32)
    return KeypointSet(image_id, positions, descriptors, extent=EXTENT)


# ---------------------------------------------------------------- overlap


@pytest.mark.parametrize("mode", ["consensus", "ransac", "raw"])
def test_identical_images_full_overlap(mode, rng):
    a = random_set("a", rng, n=40)
    b = KeypointSet("b", a.positions.copy(), a.descriptors.copy(), extent=EXTENT)
    assert overlap(a, b, mode=mode) == 40


@pytest.mark.parametrize("mode", ["consensus", "ransac"])
def test_disjoint_random_images_near_zero(mode):
    counts = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = random_set("a", rng, n=40)
        b = random_set("b", rng, n=40)
        counts.append(overlap(a, b, mode=mode))
    assert max(counts) <= 2


def test_planted_half_overlap_within_tolerance():
    """Half the keypoints correspond; the verified count lands within 20%."""
    estimates = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        src = random_set("src", rng, n=30)
        extra_a = random_set("xa", rng, n=30)
        extra_b = random_set("xb", rng, n=30)
        a = KeypointSet("a", np.vstack([src.positions, extra_a.positions]),
                        np.vstack([src.descriptors, extra_a.descriptors]), extent=EXTENT)
        moved = shifted_copy(src, "m", rng)
        b = KeypointSet("b", np.vstack([moved.positions, extra_b.positions]),
                        np.vstack([moved.descriptors, extra_b.descriptors]), extent=EXTENT)
        estimates.append(overlap(a, b, mode="consensus"))
    assert 30 * 0.8 <= np.mean(estimates) <= 30 * 1.2


def test_raw_mode_counts_candidates(rng):
    a = random_set("a", rng, n=25)
    b = KeypointSet("b", a.positions.copy(), a.descriptors.copy(), extent=EXTENT)
    assert overlap(a, b, mode="raw") == 25


def test_no_candidates_gives_zero():
    a = KeypointSet("a", np.empty((0, 2)), np.empty((0, 12)), extent=EXTENT)
    b = KeypointSet("b", [[1.0, 1.0]], np.ones((1, 12)), extent=EXTENT)
    assert overlap(a, b) == 0


def test_unknown_mode_rejected(rng):
    a = random_set("a", rng, n=5)
    with pytest.raises(ValidationError):
        overlap(a, a, mode="vote")


# ---------------------------------------------------------------- difficulty index


def test_ldi_values():
    assert ldi(1) == 1.0
    assert ldi(4) == 0.25
    assert ldi(0) == math.inf
    with pytest.raises(ValidationError):
        ldi(-1)


def test_score_task_attaches_index(rng):
    src = random_set("q", rng, n=30)
    keypoints = {
        "q": src,
        "r": shifted_copy(src, "r", rng),
        "d1": random_set("d1", rng),
        "d2": random_set("d2", rng),
    }
    task = LocalizationTask("q", "r", ("d1", "d2"))
    scored = score_task(task, keypoints)
    assert scored.overlap >= 25
    assert scored.ldi == pytest.approx(1.0 / scored.overlap)
    # original untouched
    assert task.overlap is None


def test_score_task_missing_keypoints(rng):
    task = LocalizationTask("q", "r", ("d1",))
    with pytest.raises(ValidationError):
        score_task(task, {"q": random_set("q", rng)})


# ---------------------------------------------------------------- stratification


def make_task(i, ldi_value):
    t = LocalizationTask(f"q{i:03d}", f"r{i:03d}", (f"d{i:03d}",))
    import dataclasses

    return dataclasses.replace(t, overlap=None, ldi=ldi_value)


def test_stratify_band_sizes():
    tasks = [make_task(i, 0.01 * (i + 1)) for i in range(100)]
    assert len(rank_and_stratify(tasks, (0, 20))) == 20
    assert len(rank_and_stratify(tasks, (0, 50))) == 50
    assert len(rank_and_stratify(tasks, (0, 100))) == 100
    assert len(rank_and_stratify(tasks, (50, 100))) == 50
    assert len(rank_and_stratify(tasks, (80, 100))) == 20


def test_stratify_orders_by_difficulty():
    rng = np.random.default_rng(0)
    values = rng.permutation(50) + 1.0
    tasks = [make_task(i, 1.0 / v) for i, v in enumerate(values)]
    easy = rank_and_stratify(tasks, (0, 40))
    hard = rank_and_stratify(tasks, (60, 100))
    assert max(t.ldi for t in easy) < min(t.ldi for t in hard)
    ranked = rank_and_stratify(tasks, (0, 100))
    assert [t.ldi for t in ranked] == sorted(t.ldi for t in ranked)
    assert all(t.difficulty_rank_pct is not None for t in ranked)


def test_stratify_infinite_difficulty_last():
    tasks = [make_task(0, math.inf), make_task(1, 0.5), make_task(2, math.inf)]
    ranked = rank_and_stratify(tasks)
    assert ranked[0].ldi == 0.5
    assert ranked[1].ldi == math.inf
    # inf ties break by query id
    assert [t.query_id for t in ranked[1:]] == ["q000", "q002"]


def test_stratify_bounds_are_half_open():
    tasks = [make_task(i, 0.1 * (i + 1)) for i in range(10)]
    low = rank_and_stratify(tasks, (0, 30))
    high = rank_and_stratify(tasks, (30, 100))
    assert len(low) == 3 and len(high) == 7
    assert {t.query_id for t in low} | {t.query_id for t in high} == {t.query_id for t in tasks}
    assert not ({t.query_id for t in low} & {t.query_id for t in high})


def test_stratify_validates_input():
    with pytest.raises(ValidationError):
        rank_and_stratify([make_task(0, 0.5)], (50, 50))
    with pytest.raises(ValidationError):
        rank_and_stratify([make_task(0, 0.5)], (-1, 50))
    with pytest.raises(ValidationError):
        rank_and_stratify([LocalizationTask("q", "r", ("d",))])
    assert rank_and_stratify([]) == []
