"""The ``extract`` command: image directory in, descriptor pack out."""

import argparse
import sys

from .backends import extract_descriptors, load_backend
from .errors import BackendUnavailableError, ExtractError, ImageDecodeError
from .imageio import decode_image, list_images
from .keypoints import extract_keypoints
from .packio import ExtractedKeypoints, ExtractedScene, write_keypoint_file, write_pack
from .proposals import ProposalParams, extract_parts


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="extract",
        description="Extract whole-image and part descriptors from images "
        "into a descriptor pack, optionally with a keypoint file.",
    )
    parser.add_argument("--images", required=True, help="directory of image files")
    parser.add_argument("--out", required=True, help="descriptor pack to write")
    parser.add_argument("--parts", type=int, default=20, metavar="K",
                        help="part boxes kept per image (default 20)")
    parser.add_argument("--candidates", type=int, default=100,
                        help="proposal pool size before reranking (default 100)")
    parser.add_argument("--keypoints", nargs="?", const="", default=None,
                        metavar="PATH",
                        help="also write a keypoint file (default: pack path "
                        "with a .nbkp suffix)")
    parser.add_argument("--backend", choices=("pretrained", "seeded"),
                        default="pretrained",
                        help="descriptor network weights (default pretrained)")
    parser.add_argument("--seed", type=int, default=0,
                        help="weight seed for the seeded backend (default 0)")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _extract(args)
    except (ExtractError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def _extract(args) -> int:
    params = ProposalParams(candidates=args.candidates, keep=args.parts)
    paths = list_images(args.images)
    if not paths:
        raise ExtractError(f"no image files under {args.images}")
    backend = load_backend(args.backend, seed=args.seed)

    scenes: list[ExtractedScene] = []
    keypoint_sets: list[ExtractedKeypoints] = []
    skipped = 0
    for path in paths:
        try:
            image = decode_image(path)
        except ImageDecodeError as e:
            print(f"warning: skipping {path.name}: {e}", file=sys.stderr)
            skipped += 1
            continue
        height, width = image.shape[:2]
        boxes = extract_parts(image, params)
        vectors = extract_descriptors(image, boxes, backend)
        scenes.append(ExtractedScene(path.stem, (width, height), boxes, vectors))
        if args.keypoints is not None:
            positions, descriptors = extract_keypoints(image)
            keypoint_sets.append(
                ExtractedKeypoints(path.stem, (width, height), positions, descriptors)
            )

    if not scenes:
        raise ExtractError(f"all {skipped} images under {args.images} failed to decode")

    width, height = write_pack(scenes, args.out)
    dim = scenes[0].vectors.shape[1]
    print(f"extracted {len(scenes)} images ({skipped} skipped) with the "
          f"{backend.name} backend; wrote {args.out} "
          f"({dim}-dim, extent {width}x{height})")

    if args.keypoints is not None:
        kp_path = args.keypoints or _default_keypoint_path(args.out)
        write_keypoint_file(keypoint_sets, kp_path)
        total = sum(len(s.positions) for s in keypoint_sets)
        print(f"wrote {total} keypoints across {len(keypoint_sets)} images to {kp_path}")
    return 0


def _default_keypoint_path(pack_path: str) -> str:
    root, dot, _ = pack_path.rpartition(".")
    return f"{root}.nbkp" if dot else f"{pack_path}.nbkp"


if __name__ == "__main__":
    sys.exit(run())
