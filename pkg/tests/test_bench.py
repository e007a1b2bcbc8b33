import json
import math

import numpy as np
import pytest

from nbnnplace import (
    BenchConfig,
    LocalizationTask,
    SynthParams,
    TaskParams,
    ValidationError,
    generate_world,
    run_bench,
    sample_task,
    score_task,
)
from nbnnplace import bench as bench_mod


@pytest.fixture(scope="module")
def bench_world():
    params = SynthParams(n_images=60, dim=32, parts_per_image=6, n_landmarks=1000,
                         world_size=260.0, seed=4)
    return generate_world(params)


@pytest.fixture(scope="module")
def scored_tasks(bench_world):
    poses = [(s.image_id, s.viewpoint) for s in bench_world.scenes]
    tasks = []
    task_params = TaskParams(n_d=20)
    rng = np.random.default_rng(0)
    for image_id, _ in poses:
        try:
            t = sample_task(image_id, poses, rng_seed=int(rng.integers(2**62)),
                            params=task_params)
        except Exception:
            continue
        tasks.append(score_task(t, bench_world.keypoints))
        if len(tasks) == 25:
            break
    assert len(tasks) == 25
    return tasks


# ---------------------------------------------------------------- pieces


def test_task_result_norm_rank():
    t = LocalizationTask("q", "r", ("d",))
    first = bench_mod.TaskResult(task=t, rank=1, n_candidates=21)
    last = bench_mod.TaskResult(task=t, rank=21, n_candidates=21)
    assert first.norm_rank == 0.0
    assert last.norm_rank == 1.0


def test_recognition_curve_monotone_and_bounded():
    t = LocalizationTask("q", "r", ("d",))
    results = [
        bench_mod.TaskResult(task=t, rank=r, n_candidates=10)
        for r in (1, 1, 3, 5, 10)
    ]
    x, y = bench_mod.recognition_curve(results)
    assert x[0] == 1 and x[-1] == 10
    assert y[0] == pytest.approx(0.4)  # two of five at rank 1
    assert y[-1] == pytest.approx(1.0)
    assert np.all(np.diff(y) >= 0)
    auc = bench_mod.area_under_curve(x, y)
    assert 0.0 <= auc <= 1.0


def test_rank_random_is_uniform():
    t = LocalizationTask("q", "r", tuple(f"d{i}" for i in range(19)))
    results = bench_mod.rank_random([t] * 4000, seed=1)
    ranks = np.array([r.rank for r in results])
    assert ranks.min() >= 1 and ranks.max() <= 20
    # chi-square against uniform over 20 bins, 3-sigma style slack
    counts = np.bincount(ranks, minlength=21)[1:]
    expected = 4000 / 20
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 45.0  # 19 dof, p ~ 0.0007 cap


# ---------------------------------------------------------------- full runs


def test_bench_end_to_end(bench_world, scored_tasks, tmp_path):
    config = BenchConfig(methods=("bodw12", "pca128"), seed=3)
    report = run_bench(bench_world.scenes, scored_tasks, config)
    summary = report.summary()
    assert summary["task_count"] == len(scored_tasks)
    assert set(summary["methods"]) == {"bodw12", "pca128", "chance"}
    for stats in summary["methods"].values():
        assert 0.0 <= stats["mean_norm_rank"] <= 1.0
        assert 0.0 <= stats["recall_at_1"] <= stats["recall_at_10"] <= 1.0

    # retrieval methods must beat the chance baseline on this easy world
    chance = summary["methods"]["chance"]["mean_norm_rank"]
    assert summary["methods"]["bodw12"]["mean_norm_rank"] < chance
    assert summary["methods"]["pca128"]["mean_norm_rank"] < chance

    files = report.write(tmp_path)
    assert (tmp_path / "summary.json").exists()
    written = json.loads((tmp_path / "summary.json").read_text())
    assert written["methods"].keys() == summary["methods"].keys()
    curve_files = [p for name, p in files.items() if name.startswith("curve_")]
    assert curve_files
    for p in curve_files:
        rows = p.read_text().strip().splitlines()
        assert rows[0] == "x,y"
        assert len(rows) > 1
    assert (tmp_path / "difficulty.csv").exists()


def test_bench_deterministic(bench_world, scored_tasks):
    config = BenchConfig(methods=("bodw12",), seed=9)
    a = run_bench(bench_world.scenes, scored_tasks, config)
    b = run_bench(bench_world.scenes, scored_tasks, config)
    sa, sb = a.summary(), b.summary()
    sa["methods"]["bodw12"].pop("elapsed_s")
    sb["methods"]["bodw12"].pop("elapsed_s")
    sa["methods"]["chance"].pop("elapsed_s")
    sb["methods"]["chance"].pop("elapsed_s")
    assert sa == sb


def test_bench_threaded_matches_serial(bench_world, scored_tasks):
    serial = run_bench(bench_world.scenes, scored_tasks,
                       BenchConfig(methods=("bodw12",), seed=1, n_threads=1))
    threaded = run_bench(bench_world.scenes, scored_tasks,
                         BenchConfig(methods=("bodw12",), seed=1, n_threads=4))
    ranks_s = [r.rank for r in serial.results["bodw12"]]
    ranks_t = [r.rank for r in threaded.results["bodw12"]]
    assert ranks_s == ranks_t


def test_bench_validates_input(bench_world, scored_tasks):
    unscored = [LocalizationTask("a", "b", ("c",))]
    with pytest.raises(ValidationError):
        run_bench(bench_world.scenes, unscored, BenchConfig(methods=("bodw12",)))
    with pytest.raises(ValidationError):
        run_bench(bench_world.scenes, scored_tasks, BenchConfig(methods=("nope",)))
    with pytest.raises(ValidationError):
        run_bench(bench_world.scenes, scored_tasks + scored_tasks[:1],
                  BenchConfig(methods=("bodw12",)))


def test_difficulty_rows_bucket_by_overlap(bench_world, scored_tasks):
    report = run_bench(bench_world.scenes, scored_tasks, BenchConfig(methods=("bodw12",)))
    rows = bench_mod.difficulty_rows(report.results["bodw12"])
    assert rows
    total = sum(r["count"] for r in rows)
    assert total == len(scored_tasks)
    for r in rows:
        assert r["overlap_lo"] < r["overlap_hi"]
        if r["count"]:
            assert sum(r["deciles"]) == pytest.approx(1.0)
        else:
            assert sum(r["deciles"]) == 0.0


def test_method_table_covers_the_standard_variants():
    expected = {"dcnn", "pca512", "pca256", "pca128",
                "bin20", "bin16", "bin12",
                "bodw20", "bodw16", "bodw12", "bodf"}
    assert expected <= set(bench_mod.METHODS)
    for name in ("bodw20", "bodw16", "bodw12", "bodf"):
        assert bench_mod.METHODS[name].parts
    for name in ("dcnn", "pca512", "pca256", "pca128", "bin20", "bin16", "bin12"):
        assert not bench_mod.METHODS[name].parts
    assert bench_mod.METHODS["bin20"].bits == 20
    assert bench_mod.METHODS["bodw12"].bits == 12
    assert bench_mod.METHODS["pca256"].reduce_dim == 256
    assert bench_mod.METHODS["dcnn"].reduce_dim is None
