"""Command-line client for the discovery service.

Subcommands: simulate, preprocess, discover, report (and serve, which runs
the HTTP service). By default each command is dispatched to an in-process
instance of the service; pass --server to target a running one instead.

Option precedence: built-in defaults < config file < command-line flags.
The config file is flat JSON whose keys mirror the flag names (dashes or
underscores both accepted).

Exit codes: 0 success, 1 usage error, 2 data or protocol error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(p: _Parser):
    p.add_argument("--config", help="flat JSON config file; keys mirror flag names")
    p.add_argument("--server", help="base URL of a running service; default is in-process")
    p.add_argument("--json", action="store_true", help="print the raw response as JSON")


def build_parser() -> _Parser:
    parser = _Parser(prog="matchgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate a synthetic world bundle")
    _add_common(p)
    p.add_argument("--out", required=True, help="world bundle directory")
    p.add_argument("--n", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--cluster-spread", type=float)
    p.add_argument("--link-radius", type=float)
    p.add_argument("--descriptor-dim", type=int)
    p.add_argument("--features-per-image", type=int)
    p.add_argument("--descriptor-noise", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("preprocess", help="train the GMM, encode vectors, build prior inputs")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--collection", help="GMDS descriptor file")
    p.add_argument("--world", help="world bundle directory (uses its collection)")
    p.add_argument("--encoder", choices=["fisher", "vlad"])
    p.add_argument("--gmm-components", type=int)
    p.add_argument("--sample-per-image", type=int)
    p.add_argument("--em-max-iters", type=int)
    p.add_argument("--em-tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("discover", help="run a discovery strategy")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--strategy", choices=["graphmatch", "brute_force", "random", "query_expansion"]
    )
    p.add_argument("--world")
    p.add_argument("--collection")
    p.add_argument("--vectors", help="GMFV file from preprocess")
    p.add_argument("--verifier", choices=["synthetic", "descriptor_overlap", "external"])
    p.add_argument("--min-matches", type=int)
    p.add_argument("--ratio-threshold", type=float)
    p.add_argument("--flip-noise", type=float)
    p.add_argument("--verifier-command")
    p.add_argument("--cost-per-test", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--number-sample-iterations", type=int)
    p.add_argument("--max-num-neighbors", type=int)
    p.add_argument("--num-to-propagate", type=int)
    p.add_argument("--max-tests-for-sampling", type=int)
    p.add_argument("--triplet-ranking", choices=["fisher_distance", "inlier_ratio"])
    p.add_argument("--disable-sampling", action="store_true", default=None)
    p.add_argument("--disable-propagation", action="store_true", default=None)
    p.add_argument("--budget", type=int, help="pair budget for the random strategy")
    p.add_argument("--retrieval-k", type=int)
    p.add_argument("--rounds", type=int, help="query-expansion rounds")

    p = sub.add_parser("report", help="summarize metrics CSVs and emit curve data")
    _add_common(p)
    p.add_argument("metrics", nargs="+", help="metrics CSV files")
    p.add_argument("--out", help="directory for curve and prior-stat CSVs")
    p.add_argument("--world", help="world bundle; enables truth-normalized fractions")
    p.add_argument("--vectors", help="GMFV file; enables prior separation stats")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    return parser


# payload field names per command; CLI dest -> request field
_FIELDS = {
    "simulate": [
        "out", "n", "clusters", "cluster_spread", "link_radius",
        "descriptor_dim", "features_per_image", "descriptor_noise", "seed",
    ],
    "preprocess": [
        "out", "collection", "world", "encoder", "gmm_components",
        "sample_per_image", "em_max_iters", "em_tol", "seed", "threads",
    ],
    "discover": [
        "out", "strategy", "world", "collection", "vectors", "seed", "threads",
        "number_sample_iterations", "max_num_neighbors", "num_to_propagate",
        "max_tests_for_sampling", "triplet_ranking", "disable_sampling",
        "disable_propagation", "budget", "retrieval_k",
    ],
    "report": ["metrics", "out", "world", "vectors"],
}

_VERIFIER_FIELDS = {
    "verifier": "kind",
    "min_matches": "min_matches",
    "ratio_threshold": "ratio_threshold",
    "flip_noise": "flip_noise",
    "verifier_command": "command",
    "cost_per_test": "cost_per_test",
}


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise SystemExit(_fail(EXIT_USAGE, f"config file not found: {path}"))
    except json.JSONDecodeError as exc:
        raise SystemExit(_fail(EXIT_USAGE, f"invalid config file {path}: {exc}"))
    if not isinstance(doc, dict):
        raise SystemExit(_fail(EXIT_USAGE, f"config file {path} must hold a JSON object"))
    return {str(k).replace("-", "_"): v for k, v in doc.items()}


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _pick(args: argparse.Namespace, config: dict, dest: str):
    value = getattr(args, dest, None)
    if value is not None:
        return value
    return config.get(dest)


def build_payload(command: str, args: argparse.Namespace, config: dict) -> dict:
    """Merge config-file values under explicit flags; unset fields stay absent
    so the service applies its own defaults."""
    payload = {}
    for dest in _FIELDS[command]:
        value = _pick(args, config, dest)
        if value is not None:
            payload[dest] = value
    if command == "discover":
        rounds = _pick(args, config, "rounds")
        if rounds is not None:
            payload["expansion_rounds"] = rounds
        verifier = {}
        for dest, field in _VERIFIER_FIELDS.items():
            value = _pick(args, config, dest)
            if value is not None:
                verifier[field] = value
        if verifier:
            payload["verifier"] = verifier
    return payload


def dispatch(server: str | None, path: str, payload: dict) -> tuple[int, dict]:
    """POST the request either to a remote server or an in-process app."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
            return response.status_code, response.json()

    from .service import create_app

    async def _run():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://matchgraph.internal", timeout=None
        ) as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()

    return asyncio.run(_run())


def _print_summary(command: str, body: dict) -> None:
    if command == "simulate":
        print(
            f"world written to {body['out_dir']}: N={body['n']} "
            f"truth_edges={body['truth_edges']} density={body['density']:.6f}"
        )
    elif command == "preprocess":
        print(
            f"preprocessed {body['n']} images with the {body['encoder']} encoder: "
            f"vector_dim={body['vector_dim']}"
        )
        for role, path in body["files"].items():
            print(f"  {role}: {path}")
    elif command == "discover":
        eff = body["efficiency"]
        if eff is None:
            print(f"{body['strategy']}: no pairs tested")
        else:
            print(
                f"{body['strategy']}: tested={body['tested']} matched={body['matched']} "
                f"efficiency={eff:.4f}"
            )
        for stage, value in body["stage_efficiency"].items():
            if value is not None:
                print(f"  {stage} efficiency: {value:.4f}")
        for role, path in body["files"].items():
            print(f"  {role}: {path}")
    elif command == "report":
        header = f"{'run':<40} {'tested':>8} {'matched':>8} {'eff':>8} {'sampling':>9} {'propagation':>12}"
        print(header)
        for row in body["runs"]:
            samp = f"{row['sampling_efficiency']:.4f}" if row["sampling_efficiency"] is not None else "-"
            prop = (
                f"{row['propagation_efficiency']:.4f}"
                if row["propagation_efficiency"] is not None
                else "-"
            )
            print(
                f"{row['run']:<40} {row['tested']:>8} {row['matched']:>8} "
                f"{row['efficiency']:>8.4f} {samp:>9} {prop:>12}"
            )
        if body.get("prior"):
            print(f"prior separation AUC: {body['prior']['auc']:.4f}")
        for name, path in body.get("curve_files", {}).items():
            print(f"  curve[{name}]: {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    config = _load_config(args.config) if args.config else {}
    payload = build_payload(args.command, args, config)

    started = time.perf_counter()
    try:
        status, body = dispatch(args.server, f"/{args.command}", payload)
    except httpx.HTTPError as exc:
        return _fail(EXIT_DATA, f"request failed: {exc}")
    elapsed = time.perf_counter() - started

    if status == 200:
        if args.json:
            print(json.dumps(body, indent=2))
        else:
            _print_summary(args.command, body)
        print(f"done in {elapsed:.2f}s", file=sys.stderr)
        return EXIT_OK

    if isinstance(body, dict) and body.get("kind") == "usage":
        return _fail(EXIT_USAGE, body.get("message", "usage error"))
    if isinstance(body, dict) and body.get("kind") == "data":
        return _fail(EXIT_DATA, body.get("message", "data error"))
    if status == 422 and isinstance(body, dict) and "detail" in body:
        return _fail(EXIT_USAGE, f"invalid request: {body['detail']}")
    return _fail(EXIT_DATA, f"unexpected response {status}: {body}")


if __name__ == "__main__":
    sys.exit(main())
