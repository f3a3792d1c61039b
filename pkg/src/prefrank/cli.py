"""Command-line interface.

Four subcommands: `run` executes one interactive session against files on
disk, `grid` sweeps a JSONL list of configurations, `synth` emits a
synthetic pool/gold pair (plus optional correlated priors), and `serve`
starts the HTTP session service. Exit code 0 on success, 1 with a message
on stderr otherwise.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .domain import ValidationError
from .harness import (
    PoolData,
    SessionConfig,
    SessionRun,
    export_results,
    run_grid,
    run_session,
)
from .ingest import load_gold, load_pool, load_priors, save_pool, save_scores
from .oracle import OracleConfig
from .synth import SyntheticConfig, make_pool, make_prior

__all__ = ["build_parser", "main"]

_CONFIG_KEYS = {
    "learner",
    "strategy",
    "warm_start",
    "max_interactions",
    "batch_size",
    "seed",
    "t",
    "reg_lambda",
    "inducing_count",
    "ndcg_k",
}


def _session_config(fields: dict) -> SessionConfig:
    unknown = set(fields) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(fields)
    t = kwargs.pop("t", 1.0)
    try:
        return SessionConfig(oracle=OracleConfig(t=t), **kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}")


def _load_pool_data(args) -> PoolData:
    pool = load_pool(args.pool)
    gold = load_gold(args.gold, pool)
    priors = load_priors(args.priors, pool) if args.priors else None
    return PoolData(pool, gold, priors)


def _cmd_run(args) -> int:
    data = _load_pool_data(args)
    cfg = _session_config(
        dict(
            learner=args.learner,
            strategy=args.strategy,
            warm_start=args.warm_start,
            max_interactions=args.interactions,
            batch_size=args.batch_size,
            seed=args.seed,
            t=args.t,
            ndcg_k=args.ndcg_k,
            inducing_count=args.inducing,
        )
    )
    result = run_session(cfg, data.pool, data.gold, data.priors)
    run = SessionRun(0, result.config, data.pool.topic_id, 0, result, result.error)
    export_results([run], args.out, format=args.format)
    print(f"results written to {args.out}")
    if result.error is not None:
        print(f"error: session stopped after {len(result.records)} labels: {result.error}", file=sys.stderr)
        return 1
    final = result.final_metrics
    print(
        f"final: labels={final.labels_seen}"
        f" accuracy={final.accuracy:.3f}"
        f" ndcg@{min(cfg.ndcg_k, data.pool.size)}={final.ndcg_at_k:.3f}"
        f" pearson_r={final.pearson_r:.3f}"
    )
    return 0


def _cmd_grid(args) -> int:
    configs = []
    with open(args.config, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                fields = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.config}: line {lineno}: {exc}")
            if not isinstance(fields, dict):
                raise ValidationError(f"{args.config}: line {lineno}: expected an object")
            configs.append(_session_config(fields))
    if not configs:
        raise ValidationError(f"{args.config}: no configurations found")

    data = _load_pool_data(args)
    grid = run_grid(configs, [data], repeats=args.repeats, workers=args.workers)
    if args.out:
        export_results(grid, args.out, format=args.format)
        print(f"results written to {args.out}")
    print(f"{'config':>6}  {'learner':7} {'strategy':8} {'warm':5} {'budget':>6} {'runs':>4} {'fail':>4}  {'ndcg':16}  {'pearson_r':16}")
    for s in grid.summaries:
        print(
            f"{s.config_index:>6}  {s.learner:7} {s.strategy:8} {s.warm_start:5}"
            f" {s.max_interactions:>6} {s.runs:>4} {s.failures:>4} "
            f" {s.ndcg_mean:.3f} +/- {s.ndcg_std:.3f} "
            f" {s.pearson_mean:.3f} +/- {s.pearson_std:.3f}"
        )
    return 0


def _cmd_synth(args) -> int:
    cfg = SyntheticConfig(n=args.n, d=args.d, seed=args.seed, centers=args.centers, noise=args.noise)
    pool, gold = make_pool(cfg)
    prefix = str(args.out_prefix)
    pool_path = Path(prefix + ".pool.jsonl")
    gold_path = Path(prefix + ".gold.jsonl")
    save_pool(pool, pool_path)
    save_scores(gold.scores, gold_path)
    written = [pool_path, gold_path]
    if args.rho is not None:
        priors = make_prior(gold, args.rho, seed=args.seed)
        priors_path = Path(prefix + ".priors.jsonl")
        save_scores(priors.mu, priors_path)
        written.append(priors_path)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    registry = {}
    for path in args.pool or []:
        pool = load_pool(path)
        registry[Path(path).stem] = pool
    app = create_app(log_dir=args.log_dir, pool_registry=registry)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one interactive session")
    run_p.add_argument("--pool", required=True)
    run_p.add_argument("--gold", required=True)
    run_p.add_argument("--priors", default=None)
    run_p.add_argument("--learner", required=True, choices=["bt", "gppl"])
    run_p.add_argument("--strategy", required=True, choices=["random", "unc", "unpa", "eig", "imp", "tp"])
    run_p.add_argument("--warm-start", default="none", choices=["none", "sum", "prior"])
    run_p.add_argument("--interactions", type=int, default=10)
    run_p.add_argument("--batch-size", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--t", type=float, default=1.0)
    run_p.add_argument("--ndcg-k", type=int, default=5)
    run_p.add_argument("--inducing", type=int, default=None)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    run_p.set_defaults(func=_cmd_run)

    grid_p = sub.add_parser("grid", help="sweep configurations from a JSONL file")
    grid_p.add_argument("--config", required=True)
    grid_p.add_argument("--pool", required=True)
    grid_p.add_argument("--gold", required=True)
    grid_p.add_argument("--priors", default=None)
    grid_p.add_argument("--repeats", type=int, default=1)
    grid_p.add_argument("--workers", type=int, default=1)
    grid_p.add_argument("--out", default=None)
    grid_p.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    grid_p.set_defaults(func=_cmd_grid)

    synth_p = sub.add_parser("synth", help="emit a synthetic pool and gold scores")
    synth_p.add_argument("--n", type=int, required=True)
    synth_p.add_argument("--d", type=int, required=True)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--centers", type=int, default=10)
    synth_p.add_argument("--noise", type=float, default=0.0)
    synth_p.add_argument("--rho", type=float, default=None)
    synth_p.add_argument("--out-prefix", default="synth")
    synth_p.set_defaults(func=_cmd_synth)

    serve_p = sub.add_parser("serve", help="start the HTTP session service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--log-dir", default=None)
    serve_p.add_argument("--pool", action="append", default=None, help="register a pool file (repeatable)")
    serve_p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
