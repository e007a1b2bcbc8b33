"""Part proposals: candidate boxes scored by objectness, reranked by area.

Candidates come from graph-based segmentation at several granularities;
each segment's bounding box is scored by the image-gradient contrast it
encloses relative to its surroundings.  The highest-scoring candidates
are then reranked by box area (descending) and the top K kept.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import find_objects
from skimage.color import rgb2gray
from skimage.filters import sobel
from skimage.segmentation import felzenszwalb

from .errors import ParameterError

Box = tuple[float, float, float, float]  # left, top, width, height

_SEGMENTATION_SCALES = (60.0, 180.0, 500.0)
_MIN_SIDE = 4  # discard slivers narrower than this


@dataclass(frozen=True)
class ProposalParams:
    """Candidate pool size and how many reranked boxes to keep."""

    candidates: int = 100
    keep: int = 20

    def __post_init__(self):
        if self.candidates < 0 or self.keep < 0:
            raise ParameterError(
                f"counts must be non-negative: candidates={self.candidates}, keep={self.keep}"
            )
        if self.keep > self.candidates:
            raise ParameterError(
                f"cannot keep {self.keep} of {self.candidates} candidates"
            )


def _candidate_boxes(image: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Bounding boxes of segments at several granularities, deduplicated."""
    seen: set[tuple[int, int, int, int]] = set()
    boxes = []
    for scale in _SEGMENTATION_SCALES:
        labels = felzenszwalb(image, scale=scale, sigma=0.8, min_size=25)
        for slices in find_objects(labels + 1):
            if slices is None:
                continue
            rows, cols = slices
            box = (cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start)
            if box[2] < _MIN_SIDE or box[3] < _MIN_SIDE:
                continue
            if box not in seen:
                seen.add(box)
                boxes.append(box)
    return boxes


def _objectness(gradient: np.ndarray, box: tuple[int, int, int, int]) -> float:
    """Contrast score: gradient energy inside the box, per unit boundary.

    Object-like windows enclose their own edges; windows cutting through
    homogeneous regions score low.  Normalizing by the perimeter rather
    than the area avoids the bias toward tiny high-contrast specks.
    """
    left, top, w, h = box
    inside = float(gradient[top : top + h, left : left + w].sum())
    return inside / (2.0 * (w + h))


def extract_parts(image: np.ndarray, params: ProposalParams = ProposalParams()) -> list[Box]:
    """Top-K part boxes for one image, areas non-increasing.

    Candidates are scored by objectness, the best ``params.candidates``
    survive, and those are reranked by area (descending, ties broken by
    score then position for determinism).  Every returned box lies within
    the image bounds.
    """
    if params.keep == 0:
        return []
    if image.ndim != 3 or image.shape[2] != 3:
        raise ParameterError(f"expected an (H, W, 3) image, got shape {image.shape}")

    gradient = sobel(rgb2gray(image))
    candidates = _candidate_boxes(image)
    scored = sorted(
        ((_objectness(gradient, b), b) for b in candidates),
        key=lambda sb: (-sb[0], sb[1]),
    )[: params.candidates]

    reranked = sorted(scored, key=lambda sb: (-(sb[1][2] * sb[1][3]), -sb[0], sb[1]))
    return [
        (float(left), float(top), float(w), float(h))
        for _, (left, top, w, h) in reranked[: params.keep]
    ]
