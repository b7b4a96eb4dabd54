"""Request/response models for the discovery service.

Requests carry file-system paths plus parameters; the heavy data stays on
disk where the service runs. Field names mirror the CLI flags.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SimulateRequest(BaseModel):
    out: str
    n: int = 500
    clusters: int = 10
    cluster_spread: float = 0.05
    link_radius: float = 0.045
    descriptor_dim: int = 16
    features_per_image: int = 48
    descriptor_noise: float = 0.35
    seed: int = 0


class SimulateResponse(BaseModel):
    out_dir: str
    n: int
    truth_edges: int
    density: float
    files: dict[str, str]


class PreprocessRequest(BaseModel):
    out: str
    collection: Optional[str] = None
    world: Optional[str] = None
    encoder: Literal["fisher", "vlad"] = "fisher"
    gmm_components: int = 16
    sample_per_image: int = 1000
    em_max_iters: int = 100
    em_tol: float = 1e-5
    seed: int = 0
    threads: int = 1


class PreprocessResponse(BaseModel):
    out_dir: str
    n: int
    encoder: str
    vector_dim: int
    files: dict[str, str]


class VerifierParams(BaseModel):
    kind: Literal["synthetic", "descriptor_overlap", "external"] = "synthetic"
    min_matches: int = 30
    ratio_threshold: float = 0.8
    flip_noise: float = 0.0
    command: Optional[str] = None
    cost_per_test: float = 1.0


class DiscoverRequest(BaseModel):
    out: str
    strategy: Literal["graphmatch", "brute_force", "random", "query_expansion"] = "graphmatch"
    world: Optional[str] = None
    collection: Optional[str] = None
    vectors: Optional[str] = None
    verifier: VerifierParams = Field(default_factory=VerifierParams)
    seed: int = 0
    threads: int = 1

    # engine parameters; None means the scaled default for the collection size
    number_sample_iterations: Optional[int] = None
    max_num_neighbors: Optional[int] = None
    num_to_propagate: Optional[int] = None
    max_tests_for_sampling: Optional[int] = None
    triplet_ranking: Literal["fisher_distance", "inlier_ratio"] = "fisher_distance"
    disable_sampling: bool = False
    disable_propagation: bool = False

    # baseline parameters
    budget: Optional[int] = None
    retrieval_k: int = 40
    expansion_rounds: int = 4


class DiscoverResponse(BaseModel):
    strategy: str
    out_dir: str
    tested: int
    matched: int
    edges: int
    efficiency: Optional[float]
    sim_time: float
    stage_efficiency: dict[str, Optional[float]]
    files: dict[str, str]


class ReportRequest(BaseModel):
    metrics: list[str]
    out: Optional[str] = None
    world: Optional[str] = None
    vectors: Optional[str] = None


class RunSummary(BaseModel):
    run: str
    tested: int
    matched: int
    efficiency: float
    sampling_efficiency: Optional[float]
    propagation_efficiency: Optional[float]
    discovered_fraction: Optional[float]


class PriorSummary(BaseModel):
    auc: float
    truth_empty: bool
    pdf_csv: Optional[str] = None
    roc_csv: Optional[str] = None


class ReportResponse(BaseModel):
    runs: list[RunSummary]
    curve_files: dict[str, str]
    prior: Optional[PriorSummary] = None


class ErrorBody(BaseModel):
    kind: Literal["usage", "data"]
    message: str
