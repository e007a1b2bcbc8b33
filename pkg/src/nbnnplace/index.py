"""Experience vocabulary, place classes, and image-to-class retrieval.

Every database image becomes a *place class*: the set of vocabulary feature
ids nearest to its descriptors.  A query image is scored against each class
by summing, over its descriptors, the distance to the closest class member
— descriptors on the query side stay raw while the database side is
quantized, so comparison cost does not grow with database size.

Two metrics are supported.  Binary indexes quantize b-bit codes against a
feature library (either an explicit set of codes or the implicit full code
space, where a feature's id *is* its code value) and compare by Hamming
distance; an inverted file from feature id to image ids answers bounded
"probe" queries.  Vector indexes keep each image's reduced descriptors as
its own class and compare by squared Euclidean distance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import binhash, pca
from .binhash import ProjectionModel, hamming_table, words_for_bits
from .errors import CorruptionError, FormatError, ValidationError
from .pca import PCAModel
from .scene import SceneModel

INDEX_MAGIC = b"NBIX"
INDEX_VERSION = 1

MAX_IMPLICIT_BITS = 24


@dataclass(frozen=True)
class ImplicitLibrary:
    """The full b-bit code space as a feature library: id(code) = int(code)."""

    bits: int

    def __post_init__(self):
        if not (1 <= self.bits <= MAX_IMPLICIT_BITS):
            raise ValidationError(
                f"implicit library supports 1..{MAX_IMPLICIT_BITS} bits, got {self.bits}"
            )

    @property
    def size(self) -> int:
        return 1 << self.bits


@dataclass(frozen=True)
class ExplicitLibrary:
    """A finite library of b-bit codes; feature ids are row positions."""

    bits: int
    codes: np.ndarray  # (m, words) uint64

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint64)
        object.__setattr__(self, "codes", codes)
        if codes.ndim != 2 or codes.shape[1] != words_for_bits(self.bits):
            raise ValidationError(
                f"library codes shape {codes.shape} incompatible with {self.bits} bits"
            )
        if len(codes) == 0:
            raise ValidationError("library must contain at least one feature")

    @property
    def size(self) -> int:
        return len(self.codes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExplicitLibrary):
            return NotImplemented
        return self.bits == other.bits and np.array_equal(self.codes, other.codes)


Library = ImplicitLibrary | ExplicitLibrary


def build_library(scenes: list[SceneModel], pipeline: "FeaturePipeline") -> ExplicitLibrary:
    """Collect the codes of every descriptor in the given scenes as a library."""
    if not scenes:
        raise ValidationError("cannot build a library from zero scenes")
    if not pipeline.binary:
        raise ValidationError("feature libraries apply to binary pipelines only")
    codes = np.vstack([pipeline.encode(s.vectors()) for s in scenes])
    return ExplicitLibrary(bits=pipeline.projection.bits, codes=codes)


@dataclass(frozen=True)
class FeaturePipeline:
    """Descriptor reduction applied identically on both sides of the index.

    Raw descriptors are optionally projected by a trained linear reduction
    and, for binary indexes, thresholded into codes.
    """

    pca: PCAModel | None = None
    projection: ProjectionModel | None = None

    def __post_init__(self):
        if self.pca is not None and self.projection is not None:
            if self.projection.input_dim != self.pca.output_dim:
                raise ValidationError(
                    f"projection expects {self.projection.input_dim}-dim input, "
                    f"reduction outputs {self.pca.output_dim}"
                )

    @property
    def binary(self) -> bool:
        return self.projection is not None

    @property
    def input_dim(self) -> int | None:
        if self.pca is not None:
            return self.pca.input_dim
        if self.projection is not None:
            return self.projection.input_dim
        return None

    def reduce(self, vectors: np.ndarray) -> np.ndarray:
        X = np.asarray(vectors, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.pca is not None:
            return pca.project(self.pca, X)
        return X

    def encode(self, vectors: np.ndarray) -> np.ndarray:
        if not self.binary:
            raise ValidationError("pipeline has no binary projection")
        return binhash.encode_many(self.projection, self.reduce(vectors))


@dataclass
class PlaceClass:
    """The model of one database image: its set of vocabulary members.

    Binary classes hold sorted member feature ids (with the subset mined
    from the image-level descriptor kept separately); vector classes hold
    the reduced descriptors themselves, image-level row first.
    """

    image_id: str
    member_ids: np.ndarray | None = None
    image_member_ids: np.ndarray | None = None
    vectors: np.ndarray | None = None

    def __post_init__(self):
        if self.member_ids is not None:
            self.member_ids = np.ascontiguousarray(self.member_ids, dtype=np.int64)
            self.image_member_ids = np.ascontiguousarray(self.image_member_ids, dtype=np.int64)
        if self.vectors is not None:
            self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PlaceClass):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and np.array_equal(self.member_ids, other.member_ids)
            and np.array_equal(self.image_member_ids, other.image_member_ids)
            and np.array_equal(self.vectors, other.vectors)
        )


def _ball_layer(value: int, bits: int, radius: int) -> list[int]:
    """All code values at exactly ``radius`` Hamming distance, ascending."""
    if radius == 0:
        return [value]
    layer = [value ^ sum(1 << i for i in flips) for flips in combinations(range(bits), radius)]
    layer.sort()
    return layer


def _mine_ids(code_words: np.ndarray, library: Library, n_p: int) -> np.ndarray:
    """Ids of the n_p library features nearest one code, ties to smaller id."""
    if isinstance(library, ImplicitLibrary):
        value = int(code_words[0])
        out: list[int] = []
        radius = 0
        while len(out) < n_p:
            layer = _ball_layer(value, library.bits, radius)
            out.extend(layer[: n_p - len(out)])
            radius += 1
        return np.asarray(out, dtype=np.int64)
    dists = binhash.hamming_many(code_words, library.codes)
    order = np.lexsort((np.arange(len(dists)), dists))
    return order[:n_p].astype(np.int64)


def mine_place_class(
    image_id: str,
    code_words: np.ndarray,
    library: Library,
    n_p: int = 1,
) -> PlaceClass:
    """Build a binary place class from an image's codes (image-level row first).

    Each descriptor contributes its ``n_p`` nearest library features; the
    class is the union.
    """
    codes = np.atleast_2d(np.asarray(code_words, dtype=np.uint64))
    if len(codes) == 0:
        raise ValidationError(f"image {image_id!r} has no codes to mine from")
    if not (1 <= n_p <= library.size):
        raise ValidationError(f"n_p={n_p} out of range for library of size {library.size}")
    if isinstance(library, ImplicitLibrary) and n_p == 1:
        per_code = codes[:, 0].astype(np.int64)[:, None]
    else:
        per_code = np.stack([_mine_ids(row, library, n_p) for row in codes])
    return PlaceClass(
        image_id=image_id,
        member_ids=np.unique(per_code),
        image_member_ids=np.unique(per_code[0]),
    )


@dataclass(frozen=True)
class RankedList:
    """Query result: (image_id, distance) pairs, ascending, ties by id."""

    entries: tuple[tuple[str, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def rank_of(self, image_id: str) -> int:
        """1-based position of an image in the ranking."""
        for pos, (ident, _) in enumerate(self.entries, start=1):
            if ident == image_id:
                return pos
        raise ValidationError(f"image {image_id!r} not in ranking")

    def restrict(self, image_ids) -> "RankedList":
        """Sub-ranking over a subset of images, order preserved."""
        keep = set(image_ids)
        return RankedList(tuple(e for e in self.entries if e[0] in keep))

    def top(self, k: int) -> "RankedList":
        return RankedList(self.entries[:k])


class _State(NamedTuple):
    classes: dict[str, PlaceClass]
    postings: dict[int, tuple[str, ...]]


class _Stacked(NamedTuple):
    class_ids: list[str]
    members: np.ndarray  # binary: (T, words) uint64; vector: (T, k) float64
    offsets: np.ndarray
    image_members: np.ndarray
    image_offsets: np.ndarray
    value_map: dict[int, np.ndarray] | None


class ExperienceIndex:
    """Mutable retrieval index over place classes.

    Mutations build a fresh snapshot and swap it in atomically, so a reader
    that grabbed the previous snapshot always sees a consistent index, and
    any sequence of inserts and deletes leaves the index structurally equal
    to one rebuilt from scratch over the surviving images.
    """

    def __init__(self, pipeline: FeaturePipeline, library: Library | None = None, n_p: int = 1):
        if pipeline.binary:
            if library is None:
                raise ValidationError("binary index requires a feature library")
            if library.bits != pipeline.projection.bits:
                raise ValidationError(
                    f"library bit width {library.bits} != projection bits {pipeline.projection.bits}"
                )
            if not (1 <= n_p <= library.size):
                raise ValidationError(f"n_p={n_p} out of range for library of size {library.size}")
        elif library is not None:
            raise ValidationError("vector index takes no feature library")
        self.pipeline = pipeline
        self.library = library
        self.n_p = n_p
        self._state = _State(classes={}, postings={})
        self._cache: tuple[_State, _Stacked] | None = None

    # ------------------------------------------------------------------ basic

    def __len__(self) -> int:
        return len(self._state.classes)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._state.classes

    @property
    def image_ids(self) -> list[str]:
        return sorted(self._state.classes)

    @property
    def binary(self) -> bool:
        return self.pipeline.binary

    def place_class(self, image_id: str) -> PlaceClass:
        try:
            return self._state.classes[image_id]
        except KeyError:
            raise ValidationError(f"image {image_id!r} not in index") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExperienceIndex):
            return NotImplemented
        return (
            self.pipeline == other.pipeline
            and self.library == other.library
            and self.n_p == other.n_p
            and self._state.classes == other._state.classes
            and self._state.postings == other._state.postings
        )

    # -------------------------------------------------------------- mutation

    def insert(self, scene: SceneModel) -> None:
        """Add one image's place class; duplicate ids are rejected."""
        state = self._state
        if scene.image_id in state.classes:
            raise ValidationError(f"image {scene.image_id!r} already indexed")
        if self.binary:
            codes = self.pipeline.encode(scene.vectors())
            place = mine_place_class(scene.image_id, codes, self.library, self.n_p)
            postings = dict(state.postings)
            for fid in place.member_ids.tolist():
                current = postings.get(fid, ())
                postings[fid] = tuple(sorted((*current, scene.image_id)))
        else:
            vectors = self.pipeline.reduce(scene.vectors()).astype(np.float32)
            place = PlaceClass(image_id=scene.image_id, vectors=vectors)
            postings = state.postings
        classes = dict(state.classes)
        classes[scene.image_id] = place
        self._state = _State(classes=classes, postings=postings)

    def extend(self, scenes) -> None:
        for scene in scenes:
            self.insert(scene)

    def delete(self, image_id: str) -> None:
        """Remove one image's place class and its inverted-file entries."""
        state = self._state
        if image_id not in state.classes:
            raise ValidationError(f"image {image_id!r} not in index")
        classes = dict(state.classes)
        place = classes.pop(image_id)
        if self.binary:
            postings = dict(state.postings)
            for fid in place.member_ids.tolist():
                remaining = tuple(i for i in postings[fid] if i != image_id)
                if remaining:
                    postings[fid] = remaining
                else:
                    del postings[fid]
        else:
            postings = state.postings
        self._state = _State(classes=classes, postings=postings)

    # --------------------------------------------------------------- queries

    def _stacked(self, state: _State) -> _Stacked:
        if self._cache is not None and self._cache[0] is state:
            return self._cache[1]
        class_ids = sorted(state.classes)
        if self.binary:
            lib = self.library

            def codes_of(ids: np.ndarray) -> np.ndarray:
                if isinstance(lib, ImplicitLibrary):
                    return ids.astype(np.uint64)[:, None]
                return lib.codes[ids]

            member_blocks, image_blocks = [], []
            offsets, image_offsets = [0], [0]
            for ident in class_ids:
                place = state.classes[ident]
                member_blocks.append(codes_of(place.member_ids))
                image_blocks.append(codes_of(place.image_member_ids))
                offsets.append(offsets[-1] + len(place.member_ids))
                image_offsets.append(image_offsets[-1] + len(place.image_member_ids))
            words = words_for_bits(lib.bits)
            members = (
                np.vstack(member_blocks) if member_blocks else np.zeros((0, words), np.uint64)
            )
            image_members = (
                np.vstack(image_blocks) if image_blocks else np.zeros((0, words), np.uint64)
            )
            value_map = None
            if isinstance(lib, ExplicitLibrary) and words == 1:
                value_map = {}
                for fid in state.postings:
                    value = int(lib.codes[fid, 0])
                    value_map.setdefault(value, []).append(fid)
                value_map = {v: np.asarray(sorted(f), dtype=np.int64) for v, f in value_map.items()}
        else:
            member_blocks, image_blocks = [], []
            offsets, image_offsets = [0], [0]
            for ident in class_ids:
                place = state.classes[ident]
                member_blocks.append(place.vectors.astype(np.float64))
                image_blocks.append(place.vectors[:1].astype(np.float64))
                offsets.append(offsets[-1] + len(place.vectors))
                image_offsets.append(image_offsets[-1] + 1)
            k = member_blocks[0].shape[1] if member_blocks else 0
            members = np.vstack(member_blocks) if member_blocks else np.zeros((0, k))
            image_members = np.vstack(image_blocks) if image_blocks else np.zeros((0, k))
            value_map = None
        stacked = _Stacked(
            class_ids=class_ids,
            members=members,
            offsets=np.asarray(offsets[:-1], dtype=np.intp),
            image_members=image_members,
            image_offsets=np.asarray(image_offsets[:-1], dtype=np.intp),
            value_map=value_map,
        )
        self._cache = (state, stacked)
        return stacked

    def _min_table(self, queries: np.ndarray, members: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Per (query feature, class) distance to the closest class member."""
        if self.binary:
            table = hamming_table(queries, members).astype(np.float64)
        else:
            diff2 = (
                (queries**2).sum(axis=1)[:, None]
                - 2.0 * queries @ members.T
                + (members**2).sum(axis=1)[None, :]
            )
            table = np.maximum(diff2, 0.0)
        return np.minimum.reduceat(table, offsets, axis=1)

    def _rank(self, class_ids: list[str], distances: np.ndarray) -> RankedList:
        order = sorted(zip(class_ids, distances.tolist()), key=lambda e: (e[1], e[0]))
        return RankedList(tuple((ident, float(d)) for ident, d in order))

    def _query_features(self, scene: SceneModel) -> np.ndarray:
        if self.binary:
            return self.pipeline.encode(scene.vectors())
        return self.pipeline.reduce(scene.vectors())

    def query_nbnn(self, scene: SceneModel, mode: str = "exact", radius: int | None = None) -> RankedList:
        """Rank all database images by image-to-class distance to the query.

        ``exact`` sums, per query descriptor, the distance to the nearest
        class member.  ``probe`` (binary only) searches a Hamming ball of
        the given radius through the inverted file, charging ``bits + 1``
        for descriptors with no member in the ball; at ``radius = bits`` it
        equals the exact ranking.
        """
        state = self._state
        if not state.classes:
            raise ValidationError("index is empty")
        stacked = self._stacked(state)
        queries = self._query_features(scene)

        if mode == "exact":
            if radius is not None:
                raise ValidationError("radius applies to probe mode only")
            per_class = self._min_table(queries, stacked.members, stacked.offsets)
            return self._rank(stacked.class_ids, per_class.sum(axis=0))
        if mode == "probe":
            return self._probe(queries, stacked, state, radius)
        raise ValidationError(f"unknown query mode {mode!r}")

    def query_global(self, scene: SceneModel) -> RankedList:
        """Rank by image-level descriptors only, ignoring parts on both sides."""
        state = self._state
        if not state.classes:
            raise ValidationError("index is empty")
        stacked = self._stacked(state)
        queries = self._query_features(scene)[:1]
        per_class = self._min_table(queries, stacked.image_members, stacked.image_offsets)
        return self._rank(stacked.class_ids, per_class.sum(axis=0))

    def _probe(
        self,
        queries: np.ndarray,
        stacked: _Stacked,
        state: _State,
        radius: int | None,
    ) -> RankedList:
        if not self.binary:
            raise ValidationError("probe mode applies to binary indexes only")
        bits = self.library.bits
        if radius is None:
            raise ValidationError("probe mode requires a radius")
        if not (0 <= radius <= bits):
            raise ValidationError(f"probe radius must be in 0..{bits}, got {radius}")

        walkable = words_for_bits(bits) == 1 and (
            isinstance(self.library, ImplicitLibrary) or stacked.value_map is not None
        )
        if not walkable:
            per_class = self._min_table(queries, stacked.members, stacked.offsets)
            clipped = np.where(per_class <= radius, per_class, float(bits + 1))
            return self._rank(stacked.class_ids, clipped.sum(axis=0))

        class_pos = {ident: i for i, ident in enumerate(stacked.class_ids)}
        n_classes = len(stacked.class_ids)
        best = np.full((len(queries), n_classes), bits + 1, dtype=np.int64)
        implicit = isinstance(self.library, ImplicitLibrary)
        postings = state.postings
        for qi in range(len(queries)):
            value = int(queries[qi, 0])
            remaining = n_classes
            for r in range(radius + 1):
                if remaining == 0:
                    break
                for candidate in _ball_layer(value, bits, r):
                    if implicit:
                        hit_lists = (postings.get(candidate, ()),)
                    else:
                        fids = stacked.value_map.get(candidate)
                        if fids is None:
                            continue
                        hit_lists = tuple(postings[fid] for fid in fids.tolist())
                    for images in hit_lists:
                        for ident in images:
                            pos = class_pos[ident]
                            if best[qi, pos] > r:
                                best[qi, pos] = r
                                remaining -= 1
        return self._rank(stacked.class_ids, best.sum(axis=0).astype(np.float64))


def build_index(
    scenes,
    pipeline: FeaturePipeline,
    library: Library | None = None,
    n_p: int = 1,
) -> ExperienceIndex:
    """Index a batch of scenes in one go."""
    idx = ExperienceIndex(pipeline, library=library, n_p=n_p)
    idx.extend(scenes)
    return idx


# -------------------------------------------------------------- serialization
#
# Index file layout, all little-endian (magic NBIX):
#   4s magic, u32 version, u8 metric (0 binary / 1 vector), u32 n_p,
#   u8 library kind (0 none / 1 implicit / 2 explicit), u8 has-reduction,
#   u8 has-projection; then the embedded model blobs (u64 length + bytes),
#   the library (u32 bits [, u64 count, codes]), the place classes sorted by
#   image id, and the inverted file with image ids as indexes into that
#   sorted class list.

_IX_HEADER = struct.Struct("<4sIBIBBB")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")


def _blob(data: bytes) -> bytes:
    return _U64.pack(len(data)) + data


def to_bytes(index: ExperienceIndex) -> bytes:
    state = index._state
    lib = index.library
    lib_kind = 0 if lib is None else (1 if isinstance(lib, ImplicitLibrary) else 2)
    out = bytearray()
    out += _IX_HEADER.pack(
        INDEX_MAGIC,
        INDEX_VERSION,
        0 if index.binary else 1,
        index.n_p,
        lib_kind,
        int(index.pipeline.pca is not None),
        int(index.pipeline.projection is not None),
    )
    if index.pipeline.pca is not None:
        out += _blob(pca.to_bytes(index.pipeline.pca))
    if index.pipeline.projection is not None:
        out += _blob(binhash.to_bytes(index.pipeline.projection))
    if lib_kind:
        out += _U32.pack(lib.bits)
    if lib_kind == 2:
        out += _U64.pack(len(lib.codes))
        out += np.ascontiguousarray(lib.codes, dtype="<u8").tobytes()

    class_ids = sorted(state.classes)
    out += _U32.pack(len(class_ids))
    for ident in class_ids:
        raw = ident.encode("utf-8")
        out += _U32.pack(len(raw)) + raw
        place = state.classes[ident]
        if index.binary:
            for ids in (place.member_ids, place.image_member_ids):
                out += _U64.pack(len(ids))
                out += np.ascontiguousarray(ids, dtype="<i8").tobytes()
        else:
            rows, k = place.vectors.shape
            out += _U32.pack(rows) + _U32.pack(k)
            out += np.ascontiguousarray(place.vectors, dtype="<f4").tobytes()

    if index.binary:
        pos = {ident: i for i, ident in enumerate(class_ids)}
        out += _U64.pack(len(state.postings))
        for fid in sorted(state.postings):
            images = state.postings[fid]
            out += _I64.pack(fid) + _U32.pack(len(images))
            out += np.asarray([pos[i] for i in images], dtype="<u4").tobytes()
    return bytes(out)


def from_bytes(data: bytes) -> ExperienceIndex:
    from .scene import _Reader  # shared bounds-checked cursor

    reader = _Reader(data, label="index")
    magic, version, metric, n_p, lib_kind, has_pca, has_proj = reader.unpack(_IX_HEADER)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad index magic {magic!r}, expected {INDEX_MAGIC!r}")
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")
    if metric not in (0, 1):
        raise CorruptionError(f"invalid metric tag {metric}")

    pca_model = None
    if has_pca:
        (size,) = reader.unpack(_U64)
        pca_model = pca.from_bytes(reader.take(size))
    proj_model = None
    if has_proj:
        (size,) = reader.unpack(_U64)
        proj_model = binhash.from_bytes(reader.take(size))
    pipeline = FeaturePipeline(pca=pca_model, projection=proj_model)

    library: Library | None = None
    if lib_kind == 1:
        (bits,) = reader.unpack(_U32)
        library = ImplicitLibrary(bits=bits)
    elif lib_kind == 2:
        (bits,) = reader.unpack(_U32)
        (count,) = reader.unpack(_U64)
        words = words_for_bits(bits)
        codes = np.frombuffer(reader.take(8 * count * words), dtype="<u8").reshape(count, words)
        library = ExplicitLibrary(bits=bits, codes=codes.copy())
    elif lib_kind != 0:
        raise CorruptionError(f"invalid library kind {lib_kind}")

    index = ExperienceIndex(pipeline, library=library, n_p=n_p)

    (n_classes,) = reader.unpack(_U32)
    class_ids: list[str] = []
    classes: dict[str, PlaceClass] = {}
    for _ in range(n_classes):
        (id_len,) = reader.unpack(_U32)
        ident = reader.take(id_len).decode("utf-8")
        class_ids.append(ident)
        if metric == 0:
            arrays = []
            for _ in range(2):
                (count,) = reader.unpack(_U64)
                arrays.append(np.frombuffer(reader.take(8 * count), dtype="<i8").copy())
            classes[ident] = PlaceClass(
                image_id=ident, member_ids=arrays[0], image_member_ids=arrays[1]
            )
        else:
            (rows,) = reader.unpack(_U32)
            (k,) = reader.unpack(_U32)
            vecs = np.frombuffer(reader.take(4 * rows * k), dtype="<f4").reshape(rows, k)
            classes[ident] = PlaceClass(image_id=ident, vectors=vecs.copy())

    postings: dict[int, tuple[str, ...]] = {}
    if metric == 0:
        (n_postings,) = reader.unpack(_U64)
        for _ in range(n_postings):
            (fid,) = reader.unpack(_I64)
            (count,) = reader.unpack(_U32)
            positions = np.frombuffer(reader.take(4 * count), dtype="<u4")
            try:
                postings[fid] = tuple(class_ids[p] for p in positions)
            except IndexError:
                raise CorruptionError(f"inverted file references unknown class {positions.max()}")
    if reader.pos != len(data):
        raise CorruptionError(f"index has {len(data) - reader.pos} trailing bytes at offset {reader.pos}")

    index._state = _State(classes=classes, postings=postings)
    return index


def save_index(index: ExperienceIndex, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(index))


def load_index(path: str | Path) -> ExperienceIndex:
    return from_bytes(Path(path).read_bytes())
