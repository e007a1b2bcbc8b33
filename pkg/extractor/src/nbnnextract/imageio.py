"""Image decoding and directory listing."""

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


def decode_image(path: str | Path) -> np.ndarray:
    """Decode one image file to an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageDecodeError(f"cannot decode {path}: {e}") from e


def list_images(directory: str | Path) -> list[Path]:
    """Image files directly under a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"not a directory: {directory}")
    return sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
