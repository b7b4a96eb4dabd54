"""Per-image local descriptor sets and their binary interchange format.

Feature extraction happens upstream; this module only ingests, stores and
subsamples descriptors. The on-disk format (magic ``GMDS``) is little-endian:

    "GMDS" | u32 version=1 | u32 image_count
    per image: u32 image_id | u32 feature_count | u32 dim | feature_count*dim f32

All images in one file must share ``dim``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .parallel import seed_key

MAGIC = b"GMDS"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_IMAGE_HEADER = struct.Struct("<III")


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Local feature descriptors of a single image, one row per feature."""

    image_id: int
    dim: int
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.image_id < 0:
            raise ValueError(f"image_id must be non-negative, got {self.image_id}")
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise ValueError(
                f"descriptor rows must have shape (*, {self.dim}), got {self.rows.shape}"
            )
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValueError(f"non-finite descriptor value in image {self.image_id}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def feature_count(self) -> int:
        return self.rows.shape[0]


class Collection:
    """Ordered, immutable set of descriptor sets with unique dense image ids."""

    def __init__(self, images: list[DescriptorSet]):
        if not images:
            raise ValueError("collection must contain at least one image")
        dims = {d.dim for d in images}
        if len(dims) != 1:
            raise ValueError(f"all images must share one descriptor dim, got {sorted(dims)}")
        ids = [d.image_id for d in images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image_id in collection")
        if set(ids) != set(range(len(images))):
            raise ValueError(f"image ids must be dense in [0, {len(images)}), got {sorted(ids)}")
        self.images: tuple[DescriptorSet, ...] = tuple(images)
        self._by_id = {d.image_id: d for d in images}

    @property
    def n(self) -> int:
        return len(self.images)

    @property
    def dim(self) -> int:
        return self.images[0].dim

    def by_id(self, image_id: int) -> DescriptorSet:
        return self._by_id[image_id]

    def feature_counts(self) -> np.ndarray:
        """Feature count per image, indexed by image_id."""
        counts = np.zeros(self.n, dtype=np.int64)
        for d in self.images:
            counts[d.image_id] = d.feature_count
        return counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, Collection):
            return NotImplemented
        return len(self.images) == len(other.images) and all(
            a.image_id == b.image_id and a.dim == b.dim and np.array_equal(a.rows, b.rows)
            for a, b in zip(self.images, other.images)
        )


def write_collection(collection: Collection, path) -> None:
    """Serialize a collection; load_collection inverts this bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, collection.n))
        for d in collection.images:
            fh.write(_IMAGE_HEADER.pack(d.image_id, d.feature_count, d.dim))
            fh.write(d.rows.astype("<f4", copy=False).tobytes())


def load_collection(path) -> Collection:
    """Read a GMDS file, reporting the byte offset of the first defect."""
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < _HEADER.size:
        raise FormatError("truncated or empty header", offset=0)
    magic, version, image_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)

    offset = _HEADER.size
    images: list[DescriptorSet] = []
    seen_ids: set[int] = set()
    for _ in range(image_count):
        if len(data) < offset + _IMAGE_HEADER.size:
            raise FormatError("truncated image header", offset=offset)
        image_id, feature_count, dim = _IMAGE_HEADER.unpack_from(data, offset)
        if image_id in seen_ids:
            raise FormatError(f"duplicate image_id {image_id}", offset=offset)
        seen_ids.add(image_id)
        if dim < 1:
            raise FormatError(f"dim must be positive, got {dim}", offset=offset + 8)
        payload = offset + _IMAGE_HEADER.size
        nbytes = feature_count * dim * 4
        if len(data) < payload + nbytes:
            raise FormatError(
                f"truncated payload for image {image_id}: "
                f"need {nbytes} bytes, have {len(data) - payload}",
                offset=payload,
            )
        rows = np.frombuffer(data, dtype="<f4", count=feature_count * dim, offset=payload)
        rows = rows.reshape(feature_count, dim)
        if rows.size and not np.all(np.isfinite(rows)):
            bad = int(np.flatnonzero(~np.isfinite(rows.ravel()))[0])
            raise FormatError(
                f"non-finite value in image {image_id}", offset=payload + bad * 4
            )
        images.append(DescriptorSet(image_id=image_id, dim=dim, rows=rows.copy()))
        offset = payload + nbytes

    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last image", offset=offset)
    if not images:
        raise FormatError("file contains no images", offset=8)
    return Collection(images)


def sample_features(collection: Collection, per_image: int, seed: int) -> np.ndarray:
    """Draw up to per_image rows per image without replacement.

    Rows keep their within-image order; images contribute in collection order,
    so the output is fully determined by (collection, per_image, seed).
    """
    if per_image < 1:
        raise ValueError(f"per_image must be >= 1, got {per_image}")
    rng = np.random.default_rng(seed_key(seed))
    parts = []
    for d in collection.images:
        take = min(per_image, d.feature_count)
        if take == 0:
            continue
        if take == d.feature_count:
            parts.append(d.rows)
        else:
            idx = np.sort(rng.choice(d.feature_count, size=take, replace=False))
            parts.append(d.rows[idx])
    if not parts:
        return np.empty((0, collection.dim), dtype=np.float32)
    return np.concatenate(parts, axis=0)
