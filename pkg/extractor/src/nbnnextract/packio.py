"""Writers for the descriptor-pack and keypoint-set file formats.

These emit exactly the byte layouts that ``nbnnplace`` reads — the
formats are the contract between the two tools.  Descriptor packs
("NBNP") are little-endian binary; keypoint files ("NBKP") are a JSON
header block followed by packed float32 payloads.  All output files are
written atomically (temp file + rename).

Pack layout, little-endian:
  header: 4s magic, u32 version, u32 image count, u32 dim, u32 width,
          u32 height, u32 flags
  per image: u32 id length, id bytes (utf-8),
             u8 viewpoint flag (always 0 here),
             u32 part count,
             per part: 4*f32 box, u8 level (0 image / 1 part), dim*f32 vector
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .proposals import Box

PACK_MAGIC = b"NBNP"
PACK_VERSION = 1

KEYPOINT_MAGIC = "NBKP"
KEYPOINT_VERSION = 1

_PACK_HEADER = struct.Struct("<4sIIIIII")


@dataclass(frozen=True)
class ExtractedScene:
    """One image's extraction result: 1 + K descriptors and the K boxes."""

    image_id: str
    extent: tuple[int, int]  # this image's width, height
    boxes: list[Box]  # part boxes; the image-level box is implicit
    vectors: np.ndarray  # (1 + len(boxes), dim) float32, image row first

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] != 1 + len(self.boxes):
            raise ParameterError(
                f"{self.image_id!r}: need {1 + len(self.boxes)} descriptor rows, "
                f"got array of shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ParameterError(f"{self.image_id!r}: non-finite descriptor values")
        object.__setattr__(self, "vectors", v)


@dataclass(frozen=True)
class ExtractedKeypoints:
    """One image's keypoints: positions, descriptors, and the image extent."""

    image_id: str
    extent: tuple[int, int]
    positions: np.ndarray  # (n, 2) float32
    descriptors: np.ndarray  # (n, d) float32


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_pack(scenes: list[ExtractedScene], path: str | Path) -> tuple[int, int]:
    """Write scenes as a descriptor pack; returns the pack extent.

    The pack extent is the maximum image width and height over the batch,
    so every box — and every image-level frame — fits inside it.
    """
    path = Path(path)
    dims = {s.vectors.shape[1] for s in scenes}
    if len(dims) > 1:
        raise ParameterError(f"scenes mix descriptor dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    width = max((s.extent[0] for s in scenes), default=0)
    height = max((s.extent[1] for s in scenes), default=0)

    out = bytearray()
    out += _PACK_HEADER.pack(PACK_MAGIC, PACK_VERSION, len(scenes), dim, width, height, 0)
    for s in scenes:
        img_w, img_h = s.extent
        boxes32 = [tuple(float(np.float32(v)) for v in box) for box in s.boxes]
        for left, top, w, h in boxes32:
            # bounds are checked on the float32 values the file will hold
            if w <= 0 or h <= 0 or left < 0 or top < 0 or left + w > img_w or top + h > img_h:
                raise ParameterError(
                    f"{s.image_id!r}: box {(left, top, w, h)} outside {img_w}x{img_h} image"
                )
        ident = s.image_id.encode("utf-8")
        out += struct.pack("<I", len(ident))
        out += ident
        out += struct.pack("<B", 0)  # no viewpoint: extraction knows no poses
        out += struct.pack("<I", 1 + len(s.boxes))
        out += struct.pack("<4fB", 0.0, 0.0, float(img_w), float(img_h), 0)
        out += s.vectors[0].tobytes()
        for box, vector in zip(boxes32, s.vectors[1:]):
            out += struct.pack("<4fB", *box, 1)
            out += vector.tobytes()
    _atomic_write(path, bytes(out))
    return width, height


def write_keypoint_file(sets: list[ExtractedKeypoints], path: str | Path) -> None:
    """Write keypoint sets in the NBKP layout."""
    path = Path(path)
    dims = {s.descriptors.shape[1] for s in sets if len(s.positions)}
    if len(dims) > 1:
        raise ParameterError(f"keypoint sets mix descriptor dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0

    header = {
        "magic": KEYPOINT_MAGIC,
        "version": KEYPOINT_VERSION,
        "count": len(sets),
        "descriptor_dim": dim,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    payload = bytearray()
    for s in sets:
        n = len(s.positions)
        meta = {
            "image_id": s.image_id,
            "n_keypoints": n,
            "extent": [float(s.extent[0]), float(s.extent[1])],
        }
        lines.append(json.dumps(meta, separators=(",", ":")))
        payload += np.ascontiguousarray(s.positions, dtype="<f4").tobytes()
        payload += np.ascontiguousarray(s.descriptors, dtype="<f4").tobytes()
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8") + bytes(payload))
