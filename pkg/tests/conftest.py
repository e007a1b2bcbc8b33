import numpy as np
import pytest

from nbnnplace import PartDescriptor, SceneModel, Viewpoint
from nbnnplace.scene import IMAGE_LEVEL, PART_LEVEL

# One line per acceptance criterion, printed after the run regardless of
# output capturing.  test_acceptance.py appends (name, passed, detail).
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {detail}")


def make_scene(image_id, rng, dim=16, n_parts=5, extent=(640, 480), viewpoint=None):
    """Random but well-formed scene model for round-trip and index tests."""
    width, height = extent
    parts = [
        PartDescriptor(
            box=(0.0, 0.0, float(width), float(height)),
            level=IMAGE_LEVEL,
            vector=rng.normal(size=dim).astype(np.float32),
        )
    ]
    for _ in range(n_parts):
        w = float(rng.uniform(8, 64))
        h = float(rng.uniform(8, 64))
        left = float(rng.uniform(0, width - w))
        top = float(rng.uniform(0, height - h))
        parts.append(
            PartDescriptor(
                box=(left, top, w, h),
                level=PART_LEVEL,
                vector=rng.normal(size=dim).astype(np.float32),
            )
        )
    return SceneModel(image_id=image_id, parts=parts, viewpoint=viewpoint)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scenes(rng):
    return [make_scene(f"img{i:03d}", rng) for i in range(12)]


@pytest.fixture
def posed_scenes(rng):
    out = []
    for i in range(12):
        vp = Viewpoint(
            x=float(rng.uniform(0, 200)),
            y=float(rng.uniform(0, 200)),
            heading=float(rng.uniform(-np.pi, np.pi)),
        )
        out.append(make_scene(f"img{i:03d}", rng, viewpoint=vp))
    return out
