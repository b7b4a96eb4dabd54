"""HTTP face of the pipeline: one endpoint per command.

Endpoints execute synchronously in the server's worker pool and return the
same summaries the pipeline functions produce. Usage problems map to 400,
data/format/protocol problems to 422, both with a structured body the CLI
turns back into exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..baselines import BaselineConfig
from ..errors import DataError, UsageError
from ..pipeline import cmd_discover, cmd_preprocess, cmd_report, cmd_simulate
from ..sim import WorldConfig
from ..verify import VerifierConfig
from .schemas import (
    DiscoverRequest,
    DiscoverResponse,
    PreprocessRequest,
    PreprocessResponse,
    ReportRequest,
    ReportResponse,
    SimulateRequest,
    SimulateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="matchgraph", version=__version__)

    @app.exception_handler(UsageError)
    async def usage_error(request: Request, exc: UsageError):
        return JSONResponse(status_code=400, content={"kind": "usage", "message": str(exc)})

    @app.exception_handler(DataError)
    async def data_error(request: Request, exc: DataError):
        return JSONResponse(status_code=422, content={"kind": "data", "message": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"kind": "data", "message": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=422, content={"kind": "data", "message": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        cfg = WorldConfig(
            n=req.n,
            clusters=req.clusters,
            cluster_spread=req.cluster_spread,
            link_radius=req.link_radius,
            descriptor_dim=req.descriptor_dim,
            features_per_image=req.features_per_image,
            descriptor_noise=req.descriptor_noise,
            seed=req.seed,
        )
        return SimulateResponse(**cmd_simulate(cfg, req.out))

    @app.post("/preprocess", response_model=PreprocessResponse)
    def preprocess(req: PreprocessRequest) -> PreprocessResponse:
        return PreprocessResponse(
            **cmd_preprocess(
                req.out,
                collection_path=req.collection,
                world_dir=req.world,
                encoder=req.encoder,
                gmm_components=req.gmm_components,
                sample_per_image=req.sample_per_image,
                em_max_iters=req.em_max_iters,
                em_tol=req.em_tol,
                seed=req.seed,
                threads=req.threads,
            )
        )

    @app.post("/discover", response_model=DiscoverResponse)
    def discover(req: DiscoverRequest) -> DiscoverResponse:
        verifier_cfg = VerifierConfig(
            kind=req.verifier.kind,
            min_matches=req.verifier.min_matches,
            ratio_threshold=req.verifier.ratio_threshold,
            flip_noise=req.verifier.flip_noise,
            command=req.verifier.command,
            cost_per_test=req.verifier.cost_per_test,
            seed=req.seed,
        )
        engine_overrides = {
            "number_sample_iterations": req.number_sample_iterations,
            "max_num_neighbors": req.max_num_neighbors,
            "num_to_propagate": req.num_to_propagate,
            "max_tests_for_sampling": req.max_tests_for_sampling,
            "triplet_ranking": req.triplet_ranking,
            "enable_sampling": not req.disable_sampling,
            "enable_propagation": not req.disable_propagation,
        }

        baseline_cfg = None
        if req.strategy == "random":
            if req.budget is None:
                raise UsageError("the random strategy requires a budget")
            baseline_cfg = BaselineConfig(kind="random", budget=req.budget, seed=req.seed)
        elif req.strategy == "query_expansion":
            baseline_cfg = BaselineConfig(
                kind="query_expansion",
                retrieval_k=req.retrieval_k,
                expansion_rounds=req.expansion_rounds,
                seed=req.seed,
            )

        return DiscoverResponse(
            **cmd_discover(
                req.out,
                strategy=req.strategy,
                verifier_cfg=verifier_cfg,
                world_dir=req.world,
                collection_path=req.collection,
                vectors_path=req.vectors,
                engine_overrides=engine_overrides,
                baseline_cfg=baseline_cfg,
                threads=req.threads,
                seed=req.seed,
            )
        )

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest) -> ReportResponse:
        return ReportResponse(
            **cmd_report(
                req.metrics,
                out_dir=req.out,
                world_dir=req.world,
                vectors_path=req.vectors,
            )
        )

    return app
