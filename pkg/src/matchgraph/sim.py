"""Synthetic worlds: a ground-truth matching graph with correlated
descriptor sets, so discovery claims can be tested at desk scale.

Images sit in a latent 2-D plane, grouped around cluster centers; a true
edge exists exactly when two images are within link_radius of each other,
mirroring the spatial coherence of photo capture. Each image's descriptors
are drawn around a per-image appearance vector, a fixed random linear lift
of its position, plus isotropic noise, so encoded-vector distance correlates
with edge presence.

A world bundle directory holds:

    collection.gmds   descriptor sets (GMDS format)
    truth_edges.txt   "# N <n>" header then "<i> <j>" per true edge
    world.json        config echo plus the measured density
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .descriptors import Collection, DescriptorSet, load_collection, write_collection
from .errors import FormatError
from .graph import load_edge_list
from .parallel import seed_key

COLLECTION_FILE = "collection.gmds"
TRUTH_FILE = "truth_edges.txt"
WORLD_FILE = "world.json"


@dataclass(frozen=True)
class WorldConfig:
    n: int = 500
    clusters: int = 10
    cluster_spread: float = 0.05
    link_radius: float = 0.045
    descriptor_dim: int = 16
    features_per_image: int = 48
    descriptor_noise: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"world needs at least 2 images, got {self.n}")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if self.cluster_spread < 0 or self.link_radius < 0 or self.descriptor_noise < 0:
            raise ValueError("spreads, radius and noise must be non-negative")
        if self.descriptor_dim < 1 or self.features_per_image < 1:
            raise ValueError("descriptor_dim and features_per_image must be positive")


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    config: WorldConfig
    truth_edges: frozenset[tuple[int, int]]
    positions: np.ndarray  # (n, 2) latent placements
    collection: Collection

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def density(self) -> float:
        return world_density(self)


def generate_world(cfg: WorldConfig) -> SyntheticWorld:
    """Build a world deterministically from its config."""
    rng = np.random.default_rng(seed_key(cfg.seed))
    centers = rng.random((cfg.clusters, 2))
    assignment = np.arange(cfg.n) % cfg.clusters
    positions = centers[assignment] + rng.normal(0.0, cfg.cluster_spread, size=(cfg.n, 2))

    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    close = dist <= cfg.link_radius
    iu, ju = np.triu_indices(cfg.n, k=1)
    truth = frozenset(
        (int(i), int(j)) for i, j in zip(iu[close[iu, ju]], ju[close[iu, ju]])
    )

    lift = rng.normal(0.0, 1.0, size=(2, cfg.descriptor_dim))
    appearance = positions @ lift
    images = []
    for i in range(cfg.n):
        noise = rng.normal(0.0, cfg.descriptor_noise, size=(cfg.features_per_image, cfg.descriptor_dim))
        rows = (appearance[i][None, :] + noise).astype(np.float32)
        images.append(DescriptorSet(image_id=i, dim=cfg.descriptor_dim, rows=rows))

    return SyntheticWorld(
        config=cfg,
        truth_edges=truth,
        positions=positions,
        collection=Collection(images),
    )


def world_density(world: SyntheticWorld) -> float:
    """Fraction of all unordered pairs that are true edges."""
    return len(world.truth_edges) / math.comb(world.n, 2)


def save_world(world: SyntheticWorld, out_dir) -> dict[str, str]:
    """Write the bundle; returns the file paths keyed by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    collection_path = out / COLLECTION_FILE
    truth_path = out / TRUTH_FILE
    world_path = out / WORLD_FILE

    write_collection(world.collection, collection_path)
    with open(truth_path, "w") as fh:
        fh.write(f"# N {world.n}\n")
        for i, j in sorted(world.truth_edges):
            fh.write(f"{i} {j}\n")
    doc = {"config": asdict(world.config), "n": world.n, "density": world.density}
    with open(world_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {
        "collection": str(collection_path),
        "truth_edges": str(truth_path),
        "world": str(world_path),
    }


def load_world_truth(world_dir) -> tuple[int, frozenset[tuple[int, int]]]:
    """Read (n, truth edge set) from a bundle directory."""
    truth_path = Path(world_dir) / TRUTH_FILE
    n, rows = load_edge_list(truth_path, expect_inliers=False)
    if n is None:
        raise FormatError(f"{truth_path}: missing '# N' header")
    return n, frozenset((min(i, j), max(i, j)) for i, j in rows)


def load_world_collection(world_dir) -> Collection:
    return load_collection(Path(world_dir) / COLLECTION_FILE)


def load_world_config(world_dir) -> WorldConfig:
    path = Path(world_dir) / WORLD_FILE
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid world file {path}: {exc}") from exc
    if "config" not in doc:
        raise FormatError(f"world file {path} missing 'config'")
    return WorldConfig(**doc["config"])
