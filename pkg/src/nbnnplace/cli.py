"""Command-line interface to the place-recognition toolkit.

Subcommands cover the whole pipeline: model training (``pca-train``,
``proj-train``), library and index construction (``lib-build``, ``index``),
retrieval (``query``), task preparation and difficulty scoring (``tasks``,
``ldi``), benchmarking (``bench``, ``report``), and synthetic data
(``synth``).

Tunable options resolve in precedence order: explicit flag, then an
``NBNN_``-prefixed environment variable (e.g. ``NBNN_SEED``), then a
``key = value`` line in the file named by ``--config``, then the built-in
default.  Exit codes: 0 on success, 1 on usage errors, 2 on data errors
(missing or malformed files, invariant violations).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import binhash, pca
from .difficulty import rank_and_stratify, score_task
from .errors import FormatError, ValidationError
from .geometry import TaskParams, load_tasks, sample_task, save_tasks
from .index import (
    ExperienceIndex,
    FeaturePipeline,
    ImplicitLibrary,
    build_library,
    load_index,
    save_index,
)
from .matching import load_keypoint_sets
from .scene import load_pack, load_poses
from .synth import SynthParams, generate_world

ENV_PREFIX = "NBNN_"

_DATA_ERRORS = (ValueError, OSError)  # package errors are ValueErrors


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class _Settings:
    """Flag > environment > config file > default resolution for one run."""

    def __init__(self, config_path: str | None):
        self.file = _parse_config_file(config_path) if config_path else {}

    def get(self, args: argparse.Namespace, name: str, default=None, cast=str):
        attr = name.replace("-", "_")
        value = getattr(args, attr, None)
        if value is not None:
            return value
        env = os.environ.get(ENV_PREFIX + attr.upper())
        if env is not None:
            return cast(env)
        if attr in self.file:
            return cast(self.file[attr])
        return default


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage errors exit with status 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_ranges(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for piece in text.split(","):
        piece = piece.strip()
        lo, sep, hi = piece.partition("-")
        if not sep:
            raise ValidationError(f"range {piece!r} must look like 'lo-hi'")
        out.append((float(lo), float(hi)))
    return tuple(out)


# ------------------------------------------------------------------ handlers


def _cmd_pca_train(args, settings: _Settings) -> int:
    scenes = load_pack(args.pack)
    matrix = bench_mod.training_matrix(scenes)
    dim = settings.get(args, "dim", default=128, cast=int)
    model = pca.train_pca(matrix, dim)
    pca.save_model(model, args.out)
    note = " (rank deficient)" if model.rank_deficient else ""
    print(
        f"reduction {model.input_dim}->{model.output_dim} trained on {len(matrix)} vectors"
        f"{note}; digest {model.digest()}; wrote {args.out}"
    )
    return 0


def _cmd_proj_train(args, settings: _Settings) -> int:
    scenes = load_pack(args.pack)
    matrix = bench_mod.training_matrix(scenes)
    if args.pca:
        matrix = pca.project(pca.load_model(args.pca), matrix)
    bits = settings.get(args, "bits", default=20, cast=int)
    seed = settings.get(args, "seed", default=0, cast=int)
    model = binhash.train_projection(seed, matrix.shape[1], bits, training=matrix)
    binhash.save_model(model, args.out)
    print(
        f"projection {model.input_dim}->{model.bits} bits (seed {seed}) trained on "
        f"{len(matrix)} vectors; digest {model.digest()}; wrote {args.out}"
    )
    return 0


def _load_pipeline(pca_path: str | None, proj_path: str | None) -> FeaturePipeline:
    return FeaturePipeline(
        pca=pca.load_model(pca_path) if pca_path else None,
        projection=binhash.load_model(proj_path) if proj_path else None,
    )


def _cmd_lib_build(args, settings: _Settings) -> int:
    pipeline = _load_pipeline(args.pca, args.proj)
    if not pipeline.binary:
        raise ValidationError("lib-build requires a binary projection (--proj)")
    n_p = settings.get(args, "n_p", default=1, cast=int)
    if args.implicit:
        library = ImplicitLibrary(bits=pipeline.projection.bits)
        desc = f"implicit library of 2^{library.bits} codes"
    else:
        if not args.pack:
            raise ValidationError("lib-build needs --pack for an explicit library (or --implicit)")
        library = build_library(load_pack(args.pack), pipeline)
        desc = f"explicit library of {library.size} features ({library.bits} bits)"
    index = ExperienceIndex(pipeline, library=library, n_p=n_p)
    save_index(index, args.out)
    print(f"{desc}; n_p={n_p}; wrote {args.out}")
    return 0


def _cmd_index(args, settings: _Settings) -> int:
    if args.base:
        index = load_index(args.base)
    else:
        pipeline = _load_pipeline(args.pca, args.proj)
        library = ImplicitLibrary(bits=pipeline.projection.bits) if pipeline.binary else None
        n_p = settings.get(args, "n_p", default=1, cast=int)
        index = ExperienceIndex(pipeline, library=library, n_p=n_p)
    if args.pack:
        index.extend(load_pack(args.pack))
    for image_id in args.remove or ():
        index.delete(image_id)
    save_index(index, args.out)
    kind = "binary" if index.binary else "vector"
    print(f"{kind} index over {len(index)} images; wrote {args.out}")
    return 0


def _cmd_query(args, settings: _Settings) -> int:
    index = load_index(args.index)
    scenes = load_pack(args.pack)
    mode = settings.get(args, "mode", default="exact")
    radius = settings.get(args, "radius", cast=int)
    top = settings.get(args, "top", default=10, cast=int)
    lines = []
    for scene in scenes:
        if args.global_level:
            ranking = index.query_global(scene)
        else:
            ranking = index.query_nbnn(scene, mode=mode, radius=radius)
        for rank, (image_id, distance) in enumerate(ranking.top(top), start=1):
            lines.append(f"{scene.image_id}\t{rank}\t{image_id}\t{distance:.17g}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines)} result rows for {len(scenes)} queries to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_tasks(args, settings: _Settings) -> int:
    poses = load_poses(args.poses)
    seed = settings.get(args, "seed", default=0, cast=int)
    n_d = settings.get(args, "n_d", default=100, cast=int)
    t_theta_deg = settings.get(args, "t_theta_deg", default=45.0, cast=float)
    n_tasks = settings.get(args, "n_tasks", cast=int)
    params = TaskParams(n_d=n_d, t_theta=math.radians(t_theta_deg))

    rng = np.random.default_rng(seed)
    ids = [image_id for image_id, _ in poses]
    if n_tasks is not None and n_tasks < len(ids):
        picks = rng.choice(len(ids), size=n_tasks, replace=False)
        queries = [ids[i] for i in sorted(picks)]
    else:
        queries = ids
    task_seeds = rng.integers(0, 2**63, size=len(queries))
    tasks = [
        sample_task(query_id, poses, int(task_seed), params)
        for query_id, task_seed in zip(queries, task_seeds)
    ]
    save_tasks(tasks, args.out)
    print(f"sampled {len(tasks)} tasks (n_d={n_d}, seed={seed}); wrote {args.out}")
    return 0


def _cmd_ldi(args, settings: _Settings) -> int:
    tasks = load_tasks(args.tasks)
    sets = load_keypoint_sets(args.keypoints)
    by_id = {s.image_id: s for s in sets}
    mode = settings.get(args, "mode", default="consensus")
    ratio = settings.get(args, "ratio", default=0.8, cast=float)
    scored = [score_task(t, by_id, mode=mode, ratio=ratio) for t in tasks]
    save_tasks(scored, args.out)
    finite = sum(1 for t in scored if math.isfinite(t.ldi))
    print(
        f"scored {len(scored)} tasks with {mode} overlap; "
        f"{finite} finite, {len(scored) - finite} without overlap; wrote {args.out}"
    )
    return 0


def _cmd_bench(args, settings: _Settings) -> int:
    scenes = load_pack(args.pack)
    tasks = load_tasks(args.tasks)
    methods = settings.get(args, "methods", default="bodw20")
    ranges = settings.get(args, "ranges")
    config = bench_mod.BenchConfig(
        methods=tuple(m.strip() for m in methods.split(",") if m.strip()),
        ranges=_parse_ranges(ranges) if ranges else bench_mod.DEFAULT_RANGES,
        seed=settings.get(args, "seed", default=0, cast=int),
        n_threads=settings.get(args, "threads", default=1, cast=int),
        include_chance=not args.no_chance,
    )
    train = load_pack(args.train_pack) if args.train_pack else None
    report = bench_mod.run_bench(scenes, tasks, config, train_scenes=train)
    paths = report.write(args.out)
    sys.stdout.write(bench_mod.format_report(report.summary()))
    print(f"wrote {len(paths)} files under {args.out}")
    return 0


def _cmd_report(args, settings: _Settings) -> int:
    path = Path(args.summary)
    if path.is_dir():
        path = path / "summary.json"
    summary = json.loads(path.read_text())
    sys.stdout.write(bench_mod.format_report(summary))
    return 0


def _cmd_synth(args, settings: _Settings) -> int:
    params = SynthParams(
        n_images=settings.get(args, "images", default=300, cast=int),
        dim=settings.get(args, "dim", default=64, cast=int),
        parts_per_image=settings.get(args, "parts", default=20, cast=int),
        n_landmarks=settings.get(args, "landmarks", default=4000, cast=int),
        world_size=settings.get(args, "world", default=400.0, cast=float),
        atmosphere_bias=settings.get(args, "atmosphere", default=0.0, cast=float),
        opposed_headings=settings.get(args, "opposed", default=False, cast=_parse_bool),
        seed=settings.get(args, "seed", default=0, cast=int),
    )
    dataset = generate_world(params)
    paths = dataset.save(args.out)
    print(
        f"generated {len(dataset.scenes)} scenes "
        f"({params.dim}-dim, {params.parts_per_image} parts, seed {params.seed}); "
        f"wrote {', '.join(str(p) for p in paths.values())}"
    )
    return 0


def _cmd_stratify(args, settings: _Settings) -> int:
    tasks = load_tasks(args.tasks)
    lo, hi = _parse_ranges(settings.get(args, "range", default="0-100"))[0]
    band = rank_and_stratify(tasks, (lo, hi))
    save_tasks(band, args.out)
    print(f"kept {len(band)}/{len(tasks)} tasks in rank band ({lo:g}, {hi:g}]; wrote {args.out}")
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nbnnplace", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="key = value settings file")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("pca-train", help="train a linear descriptor reduction")
    p.add_argument("--pack", required=True, help="training descriptor pack")
    p.add_argument("--dim", type=int, help="output dimension (default 128)")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(handler=_cmd_pca_train)

    p = sub.add_parser("proj-train", help="train a binary projection")
    p.add_argument("--pack", required=True, help="training descriptor pack")
    p.add_argument("--pca", help="reduction model applied before projection")
    p.add_argument("--bits", type=int, help="code width in bits (default 20)")
    p.add_argument("--seed", type=int, help="projection seed (default 0)")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(handler=_cmd_proj_train)

    p = sub.add_parser("lib-build", help="build a feature library (empty index shell)")
    p.add_argument("--pca", help="reduction model")
    p.add_argument("--proj", required=True, help="binary projection model")
    p.add_argument("--pack", help="descriptor pack for an explicit library")
    p.add_argument("--implicit", action="store_true", help="use the full code space")
    p.add_argument("--n-p", type=int, help="library features mined per descriptor (default 1)")
    p.add_argument("--out", required=True, help="index file to write")
    p.set_defaults(handler=_cmd_lib_build)

    p = sub.add_parser("index", help="insert or remove images in an index")
    p.add_argument("--base", help="existing index to start from")
    p.add_argument("--pca", help="reduction model (when no --base)")
    p.add_argument("--proj", help="binary projection model (when no --base)")
    p.add_argument("--n-p", type=int, help="library features mined per descriptor")
    p.add_argument("--pack", help="descriptor pack to insert")
    p.add_argument("--remove", action="append", metavar="IMAGE_ID", help="image to delete")
    p.add_argument("--out", required=True, help="index file to write")
    p.set_defaults(handler=_cmd_index)

    p = sub.add_parser("query", help="rank indexed images for query scenes")
    p.add_argument("--index", required=True, help="index file")
    p.add_argument("--pack", required=True, help="query descriptor pack")
    p.add_argument("--mode", choices=("exact", "probe"), help="search mode (default exact)")
    p.add_argument("--radius", type=int, help="probe radius in bits")
    p.add_argument("--global", dest="global_level", action="store_true",
                   help="rank by image-level descriptors only")
    p.add_argument("--top", type=int, help="rows per query (default 10)")
    p.add_argument("--out", help="write results here instead of stdout")
    p.set_defaults(handler=_cmd_query)

    p = sub.add_parser("tasks", help="sample localization tasks from poses")
    p.add_argument("--poses", required=True, help="poses CSV")
    p.add_argument("--n-tasks", type=int, help="number of queries (default: all images)")
    p.add_argument("--n-d", type=int, help="candidate set size per task (default 100)")
    p.add_argument("--t-theta-deg", type=float, help="destructor heading threshold (default 45)")
    p.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p.add_argument("--out", required=True, help="tasks file to write (JSON lines)")
    p.set_defaults(handler=_cmd_tasks)

    p = sub.add_parser("ldi", help="score task difficulty from keypoint overlap")
    p.add_argument("--tasks", required=True, help="tasks file")
    p.add_argument("--keypoints", required=True, help="keypoint sets file")
    p.add_argument("--mode", choices=("consensus", "ransac", "raw"),
                   help="overlap verifier (default consensus)")
    p.add_argument("--ratio", type=float, help="match ratio-test threshold (default 0.8)")
    p.add_argument("--out", required=True, help="scored tasks file to write")
    p.set_defaults(handler=_cmd_ldi)

    p = sub.add_parser("stratify", help="keep tasks in a difficulty rank band")
    p.add_argument("--tasks", required=True, help="scored tasks file")
    p.add_argument("--range", help="percent band 'lo-hi' (default 0-100)")
    p.add_argument("--out", required=True, help="tasks file to write")
    p.set_defaults(handler=_cmd_stratify)

    p = sub.add_parser("bench", help="run the retrieval benchmark")
    p.add_argument("--pack", required=True, help="database descriptor pack")
    p.add_argument("--tasks", required=True, help="scored tasks file")
    p.add_argument("--train-pack", help="separate training pack for the models")
    p.add_argument("--methods", help="comma-separated method names (default bodw20)")
    p.add_argument("--ranges", help="difficulty bands, e.g. '0-20,0-50,0-100'")
    p.add_argument("--seed", type=int, help="model/chance seed (default 0)")
    p.add_argument("--threads", type=int, help="ranking threads (default 1)")
    p.add_argument("--no-chance", action="store_true", help="skip the chance baseline")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("report", help="print a benchmark summary as text")
    p.add_argument("--summary", required=True, help="summary.json file or report directory")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--images", type=int, help="number of images (default 300)")
    p.add_argument("--dim", type=int, help="descriptor dimension (default 64)")
    p.add_argument("--parts", type=int, help="parts per image (default 20)")
    p.add_argument("--landmarks", type=int, help="landmark count (default 4000)")
    p.add_argument("--world", type=float, help="world side length in meters (default 400)")
    p.add_argument("--atmosphere", type=float, help="regional bias strength (default 0)")
    p.add_argument("--opposed", action="store_true", default=None,
                   help="co-located image pairs facing opposite ways")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.set_defaults(handler=_cmd_synth)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        settings = _Settings(args.config)
        return args.handler(args, settings)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(run())
