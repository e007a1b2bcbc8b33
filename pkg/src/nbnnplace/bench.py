"""Difficulty-stratified retrieval benchmark over localization tasks.

Each method is a retrieval configuration (raw vectors, reduced vectors,
or binary codes; whole-image or bag-of-parts).  The harness indexes the
database once per method, ranks every task's candidate set, and reports
recognition curves per difficulty band, a rank-distribution table per
view-overlap bucket, and a machine-readable summary.  A seeded uniform
random ranker is included as the chance floor.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .difficulty import rank_and_stratify
from .errors import ValidationError
from .geometry import LocalizationTask
from .index import ExperienceIndex, FeaturePipeline, ImplicitLibrary, build_index
from .binhash import train_projection
from .pca import project, train_pca
from .scene import SceneModel

REPORT_VERSION = 1

DEFAULT_RANGES: tuple[tuple[float, float], ...] = (
    (0.0, 20.0),
    (0.0, 50.0),
    (0.0, 100.0),
    (50.0, 100.0),
    (80.0, 100.0),
)

OVERLAP_EDGES: tuple[float, ...] = (0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0, math.inf)

CHANCE = "chance"


@dataclass(frozen=True)
class MethodConfig:
    """One retrieval configuration.

    ``reduce_dim`` is the target of the linear reduction (capped by the
    training data), ``bits`` enables binary codes, ``parts`` switches from
    whole-image ranking to bag-of-parts ranking, and ``n_p`` is the number
    of vocabulary features mined per descriptor.
    """

    name: str
    reduce_dim: int | None = None
    bits: int | None = None
    parts: bool = False
    n_p: int = 1


METHODS: dict[str, MethodConfig] = {
    m.name: m
    for m in (
        MethodConfig("dcnn"),
        MethodConfig("pca512", reduce_dim=512),
        MethodConfig("pca256", reduce_dim=256),
        MethodConfig("pca128", reduce_dim=128),
        MethodConfig("bin20", reduce_dim=128, bits=20),
        MethodConfig("bin16", reduce_dim=128, bits=16),
        MethodConfig("bin12", reduce_dim=128, bits=12),
        MethodConfig("bodw20", reduce_dim=128, bits=20, parts=True),
        MethodConfig("bodw16", reduce_dim=128, bits=16, parts=True),
        MethodConfig("bodw12", reduce_dim=128, bits=12, parts=True),
        MethodConfig("bodf", reduce_dim=128, parts=True),
    )
}


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple[str, ...] = ("bodw20",)
    ranges: tuple[tuple[float, float], ...] = DEFAULT_RANGES
    seed: int = 0
    n_threads: int = 1
    include_chance: bool = True


@dataclass(frozen=True)
class TaskResult:
    task: LocalizationTask
    rank: int
    n_candidates: int

    @property
    def norm_rank(self) -> float:
        """Rank scaled to [0, 1]: 0 is best, 1 is last."""
        if self.n_candidates < 2:
            return 0.0
        return (self.rank - 1) / (self.n_candidates - 1)


def training_matrix(scenes: list[SceneModel]) -> np.ndarray:
    return np.vstack([s.vectors() for s in scenes]).astype(np.float64)


def build_method_index(
    db_scenes: list[SceneModel],
    method: MethodConfig,
    seed: int = 0,
    train_scenes: list[SceneModel] | None = None,
) -> ExperienceIndex:
    """Train the method's models on the training scenes and index the database."""
    train = train_scenes if train_scenes is not None else db_scenes
    X = training_matrix(train)
    pca_model = None
    if method.reduce_dim is not None:
        k = min(method.reduce_dim, X.shape[1], len(X) - 1)
        pca_model = train_pca(X, k)
        X = project(pca_model, X)
    projection = None
    library = None
    if method.bits is not None:
        projection = train_projection(seed, X.shape[1], method.bits, training=X)
        library = ImplicitLibrary(bits=method.bits)
    pipeline = FeaturePipeline(pca=pca_model, projection=projection)
    return build_index(db_scenes, pipeline, library=library, n_p=method.n_p)


def rank_with_index(
    index: ExperienceIndex,
    scenes_by_id: dict[str, SceneModel],
    tasks: list[LocalizationTask],
    use_parts: bool,
    n_threads: int = 1,
) -> list[TaskResult]:
    """Rank each task's candidates; results come back in task order."""

    def one(task: LocalizationTask) -> TaskResult:
        scene = scenes_by_id[task.query_id]
        ranking = index.query_nbnn(scene) if use_parts else index.query_global(scene)
        candidates = ranking.restrict(task.database_ids)
        return TaskResult(task, candidates.rank_of(task.relevant_id), len(candidates))

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


def rank_random(tasks: list[LocalizationTask], seed: int = 0) -> list[TaskResult]:
    """Chance floor: each task's rank is uniform over its candidate set."""
    rng = np.random.default_rng(seed)
    out = []
    for t in tasks:
        n = len(t.database_ids)
        out.append(TaskResult(t, int(rng.integers(1, n + 1)), n))
    return out


def recognition_curve(results: list[TaskResult]) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of tasks solved within the top x candidates, for x = 1..N."""
    if not results:
        raise ValidationError("cannot compute a curve from zero results")
    n = max(r.n_candidates for r in results)
    ranks = np.sort(np.asarray([r.rank for r in results]))
    x = np.arange(1, n + 1)
    y = np.searchsorted(ranks, x, side="right") / len(ranks)
    return x.astype(np.float64), y


def area_under_curve(x: np.ndarray, y: np.ndarray) -> float:
    """Mean recognition rate over the rank axis (1.0 = solved at rank 1)."""
    return float(np.mean(y))


def difficulty_rows(results: list[TaskResult]) -> list[dict]:
    """Rank-decile histograms per view-overlap bucket."""
    rows = []
    for lo, hi in zip(OVERLAP_EDGES[:-1], OVERLAP_EDGES[1:]):
        bucket = [r for r in results if lo <= (r.task.overlap or 0) < hi]
        deciles = np.zeros(10)
        if bucket:
            idx = [min(int(r.norm_rank * 10), 9) for r in bucket]
            deciles = np.bincount(idx, minlength=10) / len(bucket)
        rows.append(
            {
                "overlap_lo": lo,
                "overlap_hi": hi,
                "count": len(bucket),
                "deciles": deciles.tolist(),
            }
        )
    return rows


def _range_label(rank_range: tuple[float, float]) -> str:
    return f"{rank_range[0]:g}-{rank_range[1]:g}"


@dataclass
class BenchReport:
    config: BenchConfig
    task_count: int
    results: dict[str, list[TaskResult]] = field(default_factory=dict)
    curves: dict[str, dict[str, tuple[np.ndarray, np.ndarray]]] = field(default_factory=dict)
    difficulty: dict[str, list[dict]] = field(default_factory=dict)
    elapsed: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        methods = {}
        for name, res in self.results.items():
            ranks = np.asarray([r.rank for r in res])
            norm = np.asarray([r.norm_rank for r in res])
            per_range = {
                label: area_under_curve(*xy) for label, xy in self.curves[name].items()
            }
            methods[name] = {
                "mean_norm_rank": float(norm.mean()),
                "recall_at_1": float((ranks == 1).mean()),
                "recall_at_10": float((ranks <= 10).mean()),
                "auc": per_range,
                "elapsed_s": round(self.elapsed.get(name, 0.0), 3),
            }
        return {
            "version": REPORT_VERSION,
            "task_count": self.task_count,
            "seed": self.config.seed,
            "ranges": [list(r) for r in self.config.ranges],
            "methods": methods,
        }

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write per-method curve CSVs, the difficulty table, and summary.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths: dict[str, Path] = {}
        for name, by_range in self.curves.items():
            for label, (x, y) in by_range.items():
                p = directory / f"curve_{name}_{label}.csv"
                with open(p, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["x", "y"])
                    for xi, yi in zip(x, y):
                        writer.writerow([int(xi), repr(float(yi))])
                paths[f"curve_{name}_{label}"] = p
        table = directory / "difficulty.csv"
        with open(table, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["method", "overlap_lo", "overlap_hi", "count"] + [f"decile_{i}" for i in range(10)]
            )
            for name, rows in self.difficulty.items():
                for row in rows:
                    writer.writerow(
                        [name, row["overlap_lo"], row["overlap_hi"], row["count"]]
                        + [repr(v) for v in row["deciles"]]
                    )
        paths["difficulty"] = table
        summary = directory / "summary.json"
        summary.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        paths["summary"] = summary
        return paths


def run_bench(
    scenes: list[SceneModel],
    tasks: list[LocalizationTask],
    config: BenchConfig = BenchConfig(),
    train_scenes: list[SceneModel] | None = None,
) -> BenchReport:
    """Run every configured method over the scored tasks."""
    for t in tasks:
        if t.ldi is None:
            raise ValidationError(f"task {t.query_id!r} has no difficulty index; score tasks first")
    pairs = [(t.query_id, t.relevant_id) for t in tasks]
    if len(set(pairs)) != len(pairs):
        raise ValidationError("tasks must be unique per (query, relevant) pair")
    unknown = [m for m in config.methods if m not in METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")

    scenes_by_id = {s.image_id: s for s in scenes}
    report = BenchReport(config=config, task_count=len(tasks))

    bands = {
        _range_label(r): {
            (t.query_id, t.relevant_id) for t in rank_and_stratify(tasks, r)
        }
        for r in config.ranges
    }

    method_names = list(config.methods)
    if config.include_chance and CHANCE not in method_names:
        method_names.append(CHANCE)

    for name in method_names:
        start = time.perf_counter()
        if name == CHANCE:
            results = rank_random(tasks, seed=config.seed)
        else:
            method = METHODS[name]
            index = build_method_index(
                scenes, method, seed=config.seed, train_scenes=train_scenes
            )
            results = rank_with_index(
                index, scenes_by_id, tasks, method.parts, n_threads=config.n_threads
            )
        report.elapsed[name] = time.perf_counter() - start
        report.results[name] = results
        report.curves[name] = {}
        for label, keep in bands.items():
            subset = [r for r in results if (r.task.query_id, r.task.relevant_id) in keep]
            if subset:
                report.curves[name][label] = recognition_curve(subset)
        report.difficulty[name] = difficulty_rows(results)
    return report


def format_report(summary: dict) -> str:
    """Text table for a benchmark summary."""
    lines = [
        f"benchmark report v{summary['version']}  tasks={summary['task_count']}  seed={summary['seed']}",
        "",
    ]
    labels = [_range_label(tuple(r)) for r in summary["ranges"]]
    header = f"{'method':>8} {'mean-nr':>8} {'rec@1':>7} {'rec@10':>7}" + "".join(
        f" auc[{label}]" for label in labels
    )
    lines.append(header)
    for name in sorted(summary["methods"]):
        stats = summary["methods"][name]
        row = (
            f"{name:>8} {stats['mean_norm_rank']:>8.3f} "
            f"{stats['recall_at_1']:>7.3f} {stats['recall_at_10']:>7.3f}"
        )
        for label in labels:
            auc = stats["auc"].get(label)
            width = len(f" auc[{label}]")
            cell = f"{auc:.3f}" if auc is not None else "-"
            row += cell.rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"
