"""Scene models and the descriptor pack file format.

A scene model is the unit of both query and database: one image-level
descriptor plus K part-level descriptors for a single image.  Packs store
sequences of scene models in a deterministic little-endian binary layout
(magic ``NBNP``) so that independently written files are byte-identical
for identical input.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

PACK_MAGIC = b"NBNP"
PACK_VERSION = 1

IMAGE_LEVEL = "image"
PART_LEVEL = "part"

DEFAULT_EXTENT = (640, 480)

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, _TWO_PI)
    if wrapped < 0.0:
        wrapped += _TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Viewpoint:
    """Ground-truth camera pose in the plane: position in meters, heading in radians."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"viewpoint position must be finite, got ({self.x}, {self.y})")
        if not math.isfinite(self.heading):
            raise ValidationError(f"viewpoint heading must be finite, got {self.heading}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def heading_difference(a: float, b: float) -> float:
    """Absolute angular difference between two headings, in [0, pi]."""
    return abs(wrap_angle(a - b))


@dataclass
class PartDescriptor:
    """One descriptor: its source box in pixels and the feature vector.

    ``level`` distinguishes the single whole-image descriptor from the
    part-level descriptors extracted from proposal boxes.
    """

    box: tuple[float, float, float, float]  # left, top, width, height
    level: str
    vector: np.ndarray

    def __post_init__(self):
        if self.level not in (IMAGE_LEVEL, PART_LEVEL):
            raise ValidationError(f"descriptor level must be 'image' or 'part', got {self.level!r}")
        self.vector = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        self.box = tuple(float(v) for v in self.box)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartDescriptor):
            return NotImplemented
        return (
            self.box == other.box
            and self.level == other.level
            and np.array_equal(self.vector, other.vector)
        )


@dataclass
class SceneModel:
    """All descriptors of one image, with an optional ground-truth viewpoint."""

    image_id: str
    parts: list[PartDescriptor]
    viewpoint: Viewpoint | None = None

    @property
    def dim(self) -> int:
        return self.parts[0].dim if self.parts else 0

    @property
    def image_descriptor(self) -> PartDescriptor:
        for p in self.parts:
            if p.level == IMAGE_LEVEL:
                return p
        raise ValidationError(f"scene {self.image_id!r} has no image-level descriptor")

    def vectors(self) -> np.ndarray:
        """All descriptor vectors stacked, image-level first, parts in stored order."""
        ordered = [self.image_descriptor] + [p for p in self.parts if p.level == PART_LEVEL]
        return np.stack([p.vector for p in ordered])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneModel):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.viewpoint == other.viewpoint
            and self.parts == other.parts
        )


def validate_scene_model(model: SceneModel, extent: tuple[int, int], dim: int | None = None) -> None:
    """Check the scene model invariants, raising ValidationError on the first breach."""
    if not model.parts:
        raise ValidationError(f"scene {model.image_id!r} has no descriptors")
    image_levels = sum(1 for p in model.parts if p.level == IMAGE_LEVEL)
    if image_levels != 1:
        raise ValidationError(
            f"scene {model.image_id!r} must have exactly one image-level descriptor, "
            f"found {image_levels}"
        )
    width, height = extent
    d = model.parts[0].dim if dim is None else dim
    for p in model.parts:
        if p.dim != d:
            raise ValidationError(
                f"scene {model.image_id!r}: descriptor dimension {p.dim} != {d}"
            )
        left, top, w, h = p.box
        if w <= 0 or h <= 0:
            raise ValidationError(f"scene {model.image_id!r}: box {p.box} has non-positive size")
        if left < 0 or top < 0 or left + w > width or top + h > height:
            raise ValidationError(
                f"scene {model.image_id!r}: box {p.box} outside extent {extent}"
            )
        if not np.all(np.isfinite(p.vector)):
            raise ValidationError(f"scene {model.image_id!r}: descriptor has non-finite values")


# Pack layout, all little-endian:
#   header: 4s magic, u32 version, u32 image count, u32 dim, u32 width, u32 height, u32 flags
#   per image: u32 id length, id bytes (utf-8),
#              u8 viewpoint flag, [f64 x, f64 y, f64 heading],
#              u32 part count,
#              per part: 4*f32 box, u8 level (0 image / 1 part), dim*f32 vector

_HEADER = struct.Struct("<4sIIIIII")
_FLAG_L2_NORMALIZED = 0x1


@dataclass(frozen=True)
class PackInfo:
    """Header of a descriptor pack file."""

    version: int
    count: int
    dim: int
    extent: tuple[int, int]
    l2_normalized: bool = False


def save_pack(
    models: list[SceneModel],
    path: str | Path,
    extent: tuple[int, int] = DEFAULT_EXTENT,
    l2_normalized: bool = False,
) -> None:
    """Write scene models to a descriptor pack.

    All models must share one descriptor dimension and satisfy the scene
    invariants; the byte layout is a pure function of the input.
    """
    dim = models[0].dim if models else 0
    for m in models:
        validate_scene_model(m, extent, dim)

    out = bytearray()
    flags = _FLAG_L2_NORMALIZED if l2_normalized else 0
    out += _HEADER.pack(PACK_MAGIC, PACK_VERSION, len(models), dim, extent[0], extent[1], flags)
    for m in models:
        ident = m.image_id.encode("utf-8")
        out += struct.pack("<I", len(ident))
        out += ident
        if m.viewpoint is None:
            out += struct.pack("<B", 0)
        else:
            vp = m.viewpoint
            out += struct.pack("<Bddd", 1, vp.x, vp.y, vp.heading)
        out += struct.pack("<I", len(m.parts))
        for p in m.parts:
            out += struct.pack("<4fB", *p.box, 0 if p.level == IMAGE_LEVEL else 1)
            out += np.ascontiguousarray(p.vector, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, label: str = "pack"):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(
                f"{self.label} truncated: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))


def read_pack_info(path: str | Path) -> PackInfo:
    """Read and validate only the pack header."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
    return _parse_header(header, len(header))


def _parse_header(header: bytes, available: int) -> PackInfo:
    if available < _HEADER.size:
        raise CorruptionError(f"pack truncated: header needs {_HEADER.size} bytes, file has {available}")
    magic, version, count, dim, width, height, flags = _HEADER.unpack(header[: _HEADER.size])
    if magic != PACK_MAGIC:
        raise FormatError(f"bad pack magic {magic!r}, expected {PACK_MAGIC!r}")
    if version != PACK_VERSION:
        raise FormatError(f"unsupported pack version {version}")
    return PackInfo(
        version=version,
        count=count,
        dim=dim,
        extent=(width, height),
        l2_normalized=bool(flags & _FLAG_L2_NORMALIZED),
    )


def load_pack(path: str | Path) -> list[SceneModel]:
    """Load every scene model from a pack, preserving file order.

    Raises FormatError on a bad magic or version, CorruptionError (with the
    byte offset) on truncation, and ValidationError (naming the image) on
    invariant breaches such as non-finite values.
    """
    data = Path(path).read_bytes()
    info = _parse_header(data, len(data))
    reader = _Reader(data)
    reader.pos = _HEADER.size

    u32 = struct.Struct("<I")
    u8 = struct.Struct("<B")
    pose = struct.Struct("<ddd")
    part_head = struct.Struct("<4fB")
    vec_bytes = 4 * info.dim

    models: list[SceneModel] = []
    for _ in range(info.count):
        (id_len,) = reader.unpack(u32)
        image_id = reader.take(id_len).decode("utf-8")
        (has_vp,) = reader.unpack(u8)
        viewpoint = None
        if has_vp:
            x, y, heading = reader.unpack(pose)
            if not all(math.isfinite(v) for v in (x, y, heading)):
                raise ValidationError(f"scene {image_id!r}: non-finite viewpoint")
            viewpoint = Viewpoint(x, y, heading)
        (n_parts,) = reader.unpack(u32)
        parts = []
        for _ in range(n_parts):
            left, top, w, h, level = reader.unpack(part_head)
            vector = np.frombuffer(reader.take(vec_bytes), dtype="<f4")
            parts.append(
                PartDescriptor(
                    box=(left, top, w, h),
                    level=IMAGE_LEVEL if level == 0 else PART_LEVEL,
                    vector=vector.copy(),
                )
            )
        model = SceneModel(image_id=image_id, parts=parts, viewpoint=viewpoint)
        validate_scene_model(model, info.extent, info.dim)
        models.append(model)
    if reader.pos != len(data):
        raise CorruptionError(
            f"pack has {len(data) - reader.pos} trailing bytes at offset {reader.pos}"
        )
    return models


def save_poses(poses: list[tuple[str, Viewpoint]], path: str | Path) -> None:
    """Write a poses CSV with columns image_id, x, y, heading."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "x", "y", "heading"])
        for image_id, vp in poses:
            writer.writerow([image_id, repr(vp.x), repr(vp.y), repr(vp.heading)])


def load_poses(path: str | Path) -> list[tuple[str, Viewpoint]]:
    """Read a poses CSV (header row optional)."""
    poses: list[tuple[str, Viewpoint]] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "image_id":
                continue
            if len(row) != 4:
                raise FormatError(f"poses row must have 4 columns, got {row!r}")
            image_id, x, y, heading = row
            poses.append((image_id, Viewpoint(float(x), float(y), float(heading))))
    return poses
