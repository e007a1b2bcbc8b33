import numpy as np
import pytest
from PIL import Image

from nbnnextract import load_backend


def textured_image(seed: int, size: tuple[int, int] = (320, 240)) -> np.ndarray:
    """A synthetic photo stand-in: colored blocks over a noisy gradient.

    High-contrast block edges give the proposal generator and the keypoint
    detector something real to find.
    """
    width, height = size
    rng = np.random.default_rng(seed)
    img = np.empty((height, width, 3), np.uint8)
    img[:, :, 0] = np.linspace(30, 210, width)[None, :]
    img[:, :, 1] = np.linspace(200, 60, height)[:, None]
    img[:, :, 2] = 120
    for _ in range(7):
        w = int(rng.integers(24, width // 3))
        h = int(rng.integers(24, height // 3))
        left = int(rng.integers(0, width - w))
        top = int(rng.integers(0, height - h))
        img[top : top + h, left : left + w] = rng.integers(0, 256, 3)
    noise = rng.integers(-12, 13, img.shape)
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    Image.fromarray(image).save(path)


@pytest.fixture(scope="session")
def seeded_backend():
    return load_backend("seeded", seed=0)


@pytest.fixture()
def images_dir(tmp_path):
    directory = tmp_path / "imgs"
    directory.mkdir()
    for i in range(3):
        write_png(directory / f"view_{i}.png", textured_image(seed=10 + i))
    return directory


# One line per cross-package contract clause, printed after the run.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("extractor contract")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {detail}")
