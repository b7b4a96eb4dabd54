"""File-level orchestration of the four pipeline commands.

Each command writes its outputs plus a run manifest and returns a JSON-able
summary. The manifest echoes every semantic parameter and seed along with
input digests, which is enough to reproduce the outputs bit-exactly; worker
count and wall time are deliberately excluded because they must not affect
any persisted byte. Output files are recorded by name, relative to the
manifest's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from . import baselines, engine, fisher, gmm, prior, sim, verify
from .descriptors import Collection, load_collection, sample_features
from .errors import UsageError
from .graph import MatchGraph, load_graph, save_graph
from .parallel import ordered_map

MANIFEST_FILE = "manifest.json"
GMM_FILE = "gmm.json"
VECTORS_FILE = "vectors.gmfv"
GRAPH_FILE = "graph.txt"
NONEDGES_FILE = "tested_nonedges.txt"
METRICS_FILE = "metrics.csv"

STRATEGIES = ("graphmatch", "brute_force", "random", "query_expansion")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command: str, params: dict, inputs: dict, outputs: list[str]) -> str:
    doc = {
        "command": command,
        "params": params,
        "inputs": {name: file_digest(path) for name, path in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }
    path = Path(out_dir) / MANIFEST_FILE
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def cmd_simulate(cfg: sim.WorldConfig, out_dir) -> dict:
    """Generate a world bundle."""
    world = sim.generate_world(cfg)
    paths = sim.save_world(world, out_dir)
    manifest = write_manifest(
        out_dir,
        "simulate",
        params=asdict(cfg),
        inputs={},
        outputs=[Path(p).name for p in paths.values()],
    )
    return {
        "out_dir": str(out_dir),
        "n": world.n,
        "truth_edges": len(world.truth_edges),
        "density": world.density,
        "files": {**paths, "manifest": manifest},
    }


def _load_input_collection(collection_path, world_dir) -> tuple[Collection, str]:
    if collection_path is None and world_dir is None:
        raise UsageError("either a collection file or a world directory is required")
    if collection_path is None:
        collection_path = Path(world_dir) / sim.COLLECTION_FILE
    return load_collection(collection_path), str(collection_path)


def cmd_preprocess(
    out_dir,
    collection_path=None,
    world_dir=None,
    encoder: str = "fisher",
    gmm_components: int = 16,
    sample_per_image: int = 1000,
    em_max_iters: int = 100,
    em_tol: float = 1e-5,
    seed: int = 0,
    threads: int = 1,
) -> dict:
    """Train the GMM, encode one vector per image and write model + vectors."""
    if encoder not in ("fisher", "vlad"):
        raise UsageError(f"unknown encoder {encoder!r}")
    collection, collection_path = _load_input_collection(collection_path, world_dir)
    if collection.n < 2:
        raise UsageError(f"preprocessing needs at least 2 images, got {collection.n}")

    training = sample_features(collection, sample_per_image, seed=seed)
    model = gmm.train_gmm(
        training,
        gmm.EmConfig(n_components=gmm_components, max_iters=em_max_iters, tol=em_tol, seed=seed),
    )
    encode = fisher.encode_fisher if encoder == "fisher" else fisher.encode_vlad
    encoded = ordered_map(lambda d: encode(model, d), collection.images, threads)
    vectors = sorted(encoded, key=lambda v: v.image_id)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gmm_path = out / GMM_FILE
    vectors_path = out / VECTORS_FILE
    gmm.save_model(model, gmm_path)
    fisher.write_vectors(vectors, vectors_path)

    manifest = write_manifest(
        out,
        "preprocess",
        params={
            "encoder": encoder,
            "gmm_components": gmm_components,
            "sample_per_image": sample_per_image,
            "em_max_iters": em_max_iters,
            "em_tol": em_tol,
            "seed": seed,
        },
        inputs={"collection": collection_path},
        outputs=[GMM_FILE, VECTORS_FILE],
    )
    return {
        "out_dir": str(out),
        "n": collection.n,
        "encoder": encoder,
        "vector_dim": int(vectors[0].values.shape[0]),
        "files": {"gmm": str(gmm_path), "vectors": str(vectors_path), "manifest": manifest},
    }


def _discover_summary(graph: MatchGraph, metrics: engine.RunMetrics) -> dict:
    summary = {
        "tested": metrics.cum_tested,
        "matched": metrics.cum_matched,
        "efficiency": metrics.overall_efficiency() if metrics.cum_tested else None,
        "sim_time": metrics.records[-1].sim_time if metrics.records else 0.0,
        "stage_efficiency": {
            stage: metrics.stage_efficiency(stage) for stage in metrics.stages()
        },
        "edges": graph.edge_count,
    }
    return summary


def cmd_discover(
    out_dir,
    strategy: str,
    verifier_cfg: verify.VerifierConfig,
    world_dir=None,
    collection_path=None,
    vectors_path=None,
    engine_cfg: engine.EngineConfig | None = None,
    engine_overrides: dict | None = None,
    baseline_cfg: baselines.BaselineConfig | None = None,
    threads: int = 1,
    seed: int = 0,
) -> dict:
    """Run one discovery strategy and persist graph, non-edges and metrics.

    engine_cfg wins when given; otherwise the scaled default for the
    collection size is built and engine_overrides (a dict of EngineConfig
    field names, None values ignored) is applied on top.
    """
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    collection, collection_path = _load_input_collection(collection_path, world_dir)
    n = collection.n
    if n < 2:
        raise UsageError(f"discovery needs at least 2 images, got {n}")

    inputs = {"collection": collection_path}
    truth = None
    if verifier_cfg.kind == "synthetic":
        if world_dir is None:
            raise UsageError("the synthetic verifier needs a world directory for ground truth")
        truth_n, truth = sim.load_world_truth(world_dir)
        if truth_n != n:
            raise UsageError(f"truth graph has N={truth_n} but collection has N={n}")
        inputs["truth_edges"] = str(Path(world_dir) / sim.TRUTH_FILE)

    index = None
    if strategy in ("graphmatch", "query_expansion"):
        if vectors_path is None:
            raise UsageError(f"strategy {strategy!r} requires preprocessed vectors")
        vectors = fisher.load_vectors(vectors_path)
        if len(vectors) != n:
            raise UsageError(f"vector file has {len(vectors)} entries but collection has {n}")
        index = prior.build_prior_index(vectors)
        inputs["vectors"] = str(vectors_path)

    verifier = verify.make_verifier(verifier_cfg, collection=collection, truth_edges=truth, threads=threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params: dict = {"strategy": strategy, "seed": seed, "verifier": asdict(verifier_cfg)}
    try:
        if strategy == "graphmatch":
            if engine_cfg is not None:
                cfg = engine_cfg
            else:
                cfg = engine.config_with_overrides(n, seed, engine_overrides or {})
            params["engine"] = asdict(cfg)
            graph, metrics = engine.run(
                index, verifier, cfg, feature_counts=collection.feature_counts(), threads=threads
            )
        elif strategy == "brute_force":
            graph, metrics = baselines.run_brute_force(n, verifier, threads=threads)
        elif strategy == "random":
            cfg = baseline_cfg if baseline_cfg is not None else baselines.BaselineConfig(
                kind="random", budget=0, seed=seed
            )
            params["baseline"] = asdict(cfg)
            graph, metrics = baselines.run_random(n, verifier, cfg, threads=threads)
        else:
            cfg = baseline_cfg if baseline_cfg is not None else baselines.BaselineConfig(
                kind="query_expansion", seed=seed
            )
            params["baseline"] = asdict(cfg)
            graph, metrics = baselines.run_query_expansion(index, verifier, cfg, threads=threads)
    finally:
        if hasattr(verifier, "close"):
            verifier.close()

    save_graph(graph, out / GRAPH_FILE, out / NONEDGES_FILE)
    metrics.save_csv(out / METRICS_FILE)
    manifest = write_manifest(
        out, "discover", params=params, inputs=inputs,
        outputs=[GRAPH_FILE, NONEDGES_FILE, METRICS_FILE],
    )
    summary = _discover_summary(graph, metrics)
    summary["strategy"] = strategy
    summary["out_dir"] = str(out)
    summary["files"] = {
        "graph": str(out / GRAPH_FILE),
        "tested_nonedges": str(out / NONEDGES_FILE),
        "metrics": str(out / METRICS_FILE),
        "manifest": manifest,
    }
    return summary


def _crosscheck_with_graph(metrics: engine.RunMetrics, metrics_path: Path) -> None:
    """Metrics must be recomputable from the persisted graph files."""
    graph_path = metrics_path.parent / GRAPH_FILE
    nonedges_path = metrics_path.parent / NONEDGES_FILE
    if not graph_path.exists() or not nonedges_path.exists():
        return
    graph = load_graph(graph_path, nonedges_path)
    if graph.edge_count != metrics.cum_matched or graph.tested_count != metrics.cum_tested:
        raise ValueError(
            f"{metrics_path}: metrics say {metrics.cum_matched}/{metrics.cum_tested} "
            f"but graph files hold {graph.edge_count}/{graph.tested_count}"
        )


def cmd_report(
    metrics_paths: list,
    out_dir=None,
    world_dir=None,
    vectors_path=None,
) -> dict:
    """Summarize one or more runs; emit plot-ready curve CSVs when out_dir given.

    The discovered-fraction curve is normalized by the truth edge count when
    a world bundle is supplied, otherwise by each run's own final match count.
    Metrics are cross-checked against graph files sitting beside them.
    """
    if not metrics_paths:
        raise UsageError("at least one metrics CSV is required")

    truth_count = None
    if world_dir is not None:
        _, truth = sim.load_world_truth(world_dir)
        truth_count = len(truth)

    rows = []
    curves = {}
    for path in metrics_paths:
        path = Path(path)
        metrics = engine.RunMetrics.load_csv(path)
        if metrics.cum_tested == 0:
            raise ValueError(f"{path}: no tested pairs; nothing to report")
        _crosscheck_with_graph(metrics, path)
        denom = truth_count if truth_count else metrics.cum_matched
        rows.append(
            {
                "run": str(path),
                "tested": metrics.cum_tested,
                "matched": metrics.cum_matched,
                "efficiency": metrics.overall_efficiency(),
                "sampling_efficiency": metrics.stage_efficiency("sampling"),
                "propagation_efficiency": metrics.stage_efficiency("propagation"),
                "discovered_fraction": (metrics.cum_matched / denom) if denom else None,
            }
        )
        curves[str(path)] = [
            {
                "sim_time": r.sim_time,
                "cum_tested": r.cum_tested,
                "cum_matched": r.cum_matched,
                "fraction": (r.cum_matched / denom) if denom else None,
            }
            for r in metrics.records
        ]
    rows.sort(key=lambda r: -r["efficiency"])

    written = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for idx, (name, points) in enumerate(curves.items()):
            curve_path = out / f"curve_{idx}.csv"
            with open(curve_path, "w") as fh:
                fh.write("sim_time,cum_tested,cum_matched,fraction\n")
                for p in points:
                    frac = "" if p["fraction"] is None else repr(p["fraction"])
                    fh.write(f"{p['sim_time']!r},{p['cum_tested']},{p['cum_matched']},{frac}\n")
            written[name] = str(curve_path)

    result = {"runs": rows, "curve_files": written}

    if world_dir is not None and vectors_path is not None:
        vectors = fisher.load_vectors(vectors_path)
        index = prior.build_prior_index(vectors)
        _, truth = sim.load_world_truth(world_dir)
        stats = prior.compute_prior_stats(index, truth)
        result["prior"] = {"auc": stats.auc, "truth_empty": stats.truth_empty}
        if out_dir is not None:
            out = Path(out_dir)
            prior.write_pdf_csv(stats, out / "prior_pdf.csv")
            prior.write_roc_csv(stats, out / "prior_roc.csv")
            result["prior"]["pdf_csv"] = str(out / "prior_pdf.csv")
            result["prior"]["roc_csv"] = str(out / "prior_roc.csv")
    return result
