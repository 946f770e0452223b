"""Operator command line: gen, score, serve, simulate, energy.

Exit codes are fixed for scripting: 0 success, 2 configuration problem,
3 insufficient sources during assembly, 4 response/manifest id mismatch.
Every subcommand is deterministic given its flags and --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .core import Difficulty
from .dataset import (
    CompositionQuota,
    GenParams,
    assemble,
    read_manifest_jsonl,
    write_manifest_jsonl,
)
from .errors import (
    DuplicateId,
    EmptyInput,
    GeoScoutError,
    InsufficientSources,
    MissingResponse,
    SchemaError,
    UnknownId,
)
from .grpo import ENV_NAMES, GrpoConfig, make_env, run_experiment
from .rewards import RewardConfig
from .scoring import (
    energy_gap,
    read_energy_csv,
    score_responses,
    write_cases_csv,
    write_gap_json,
    write_hist_csv,
    write_report_json,
)
from .taskgen import EmbeddingIndex, ReferenceResolver, load_catalog

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOURCES = 3
EXIT_SCORING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoscout",
        description="Geometric proxy-task generation, reward scoring, and simulation.",
    )
    parser.add_argument("--version", action="version", version=f"geoscout {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a benchmark manifest plus task images")
    gen.add_argument("--catalog", required=True, help="source catalog JSONL path")
    gen.add_argument("--out", required=True, help="output directory for manifest and images")
    gen.add_argument("--total", type=int, default=None, help="total case count (default 10800)")
    gen.add_argument(
        "--difficulty",
        choices=[d.value for d in Difficulty],
        default=None,
        help="task geometry preset (default hard)",
    )
    gen.add_argument(
        "--mode",
        choices=["direct", "reasoning", "mixed"],
        default=None,
        help="answer mode policy (default direct)",
    )
    gen.add_argument("--seed", type=int, default=None, help="dataset seed (default 0)")
    gen.add_argument("--index", default=None, help="embedding index JSONL for X-ray references")
    gen.add_argument(
        "--ref-offset", type=int, default=None, help="volumetric slice offset, 1..5 (default 1)"
    )
    gen.add_argument(
        "--jobs", type=int, default=os.cpu_count() or 1, help="worker threads (default: cores)"
    )
    gen.add_argument("--config", default=None, help="JSON config file layered under the flags")

    score = sub.add_parser("score", help="score a response file against a manifest")
    score.add_argument("--manifest", required=True, help="manifest JSONL path")
    score.add_argument("--responses", required=True, help="responses JSONL path ({id, output})")
    score.add_argument("--report", required=True, help="output directory for report files")
    score.add_argument(
        "--missing",
        choices=["zero", "strict"],
        default="zero",
        help="policy for manifest records without a response",
    )
    score.add_argument(
        "--jobs", type=int, default=os.cpu_count() or 1, help="worker threads (default: cores)"
    )

    serve = sub.add_parser("serve", help="run the batch reward HTTP service")
    serve.add_argument("--port", type=int, default=None, help="listen port (default 8000)")
    serve.add_argument("--host", default="127.0.0.1", help="bind address")
    serve.add_argument("--max-batch", type=int, default=None, help="request item limit (default 1024)")
    serve.add_argument("--tau", type=float, default=None, help="anomaly reward temperature (default 0.1)")
    serve.add_argument("--scale-mix", type=float, default=None, help="level/box mix for Task A (default 0.5)")

    sim = sub.add_parser("simulate", help="run the GRPO reward-shape experiment")
    sim.add_argument("--env", required=True, help=f"environment name: {', '.join(ENV_NAMES)}")
    sim.add_argument(
        "--reward", choices=["dense", "sparse", "both"], default="both", help="reward mode(s)"
    )
    sim.add_argument("--seeds", type=int, default=20, help="number of training seeds (>= 10)")
    sim.add_argument("--steps", type=int, default=4000, help="GRPO steps per run")
    sim.add_argument("--group-size", type=int, default=8, help="rollouts per step")
    sim.add_argument("--kl-coeff", type=float, default=0.04, help="KL penalty weight")
    sim.add_argument("--clip-ratio", type=float, default=0.2, help="PPO clipping range")
    sim.add_argument("--lr", type=float, default=0.1, help="logit learning rate")
    sim.add_argument("--out", required=True, help="output directory for curves and summary")

    energy = sub.add_parser("energy", help="energy-gap statistics over NLL pairs")
    energy.add_argument("--pairs", required=True, help="CSV: pair_id,nll_factual,nll_counterfactual")
    energy.add_argument("--out", required=True, help="output directory for gap stats")
    energy.add_argument("--bin-width", type=float, default=0.05, help="histogram bin width (nats)")

    return parser


def _layered(args: argparse.Namespace, config_path: str | None, defaults: dict) -> dict:
    """Resolve gen settings as defaults < config file < explicit flags."""
    merged = dict(defaults)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    return merged


def cmd_gen(args: argparse.Namespace) -> int:
    catalog_path = Path(args.catalog)
    if not catalog_path.exists():
        print(f"error: catalog not found: {catalog_path}", file=sys.stderr)
        return EXIT_CONFIG
    settings = _layered(
        args,
        args.config,
        {
            "total": 10800,
            "difficulty": "hard",
            "mode": "direct",
            "seed": 0,
            "ref_offset": 1,
            "noise_sigma": 0.05,
            "boundary_width": 2,
        },
    )
    catalog = load_catalog(catalog_path)
    index = EmbeddingIndex.load(args.index) if args.index else None
    refs = ReferenceResolver(catalog, index=index, offset=int(settings["ref_offset"]))
    params = GenParams(
        noise_sigma=float(settings["noise_sigma"]),
        boundary_width=int(settings["boundary_width"]),
        ref_offset=int(settings["ref_offset"]),
    )
    out_dir = Path(args.out)
    manifest = assemble(
        catalog,
        CompositionQuota(int(settings["total"])),
        Difficulty(settings["difficulty"]),
        settings["mode"],
        int(settings["seed"]),
        out_dir,
        refs=refs,
        params=params,
        jobs=args.jobs,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest_jsonl(manifest, out_dir / "manifest.jsonl")
    counts = manifest.cell_counts()
    print(f"wrote {len(manifest.records)} cases to {out_dir / 'manifest.jsonl'}")
    for key in sorted(counts):
        print(f"  {key}: {counts[key]}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    manifest = read_manifest_jsonl(args.manifest)
    responses = []
    with open(args.responses, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                responses.append({"id": obj["id"], "output": obj.get("output", "")})
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaError(f"bad response record: {exc}", line=lineno) from exc
    report = score_responses(manifest, responses, missing_policy=args.missing, jobs=args.jobs)
    report_dir = Path(args.report)
    report_dir.mkdir(parents=True, exist_ok=True)
    write_report_json(report, report_dir / "report.json")
    write_cases_csv(report, report_dir / "cases.csv")
    headline = " ".join(f"{task}={report.per_task.get(task, 0.0):.1f}" for task in ("scale", "topo", "anom"))
    print(headline)
    print(f"avg={report.avg:.1f} parse_fail_rate={report.parse_fail_rate:.3f}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import DEFAULT_MAX_BATCH, create_app

    def setting(flag_value, env_name: str, default, cast):
        if flag_value is not None:
            return flag_value
        env_value = os.environ.get(env_name)
        return cast(env_value) if env_value is not None else default

    port = setting(args.port, "GEOSCOUT_PORT", 8000, int)
    max_batch = setting(args.max_batch, "GEOSCOUT_MAX_BATCH", DEFAULT_MAX_BATCH, int)
    tau = setting(args.tau, "GEOSCOUT_TAU", 0.1, float)
    scale_mix = setting(args.scale_mix, "GEOSCOUT_SCALE_MIX", 0.5, float)
    app = create_app(max_batch=max_batch, config=RewardConfig(tau=tau, scale_mix=scale_mix))
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.env not in ENV_NAMES:
        print(f"error: unknown environment {args.env!r}", file=sys.stderr)
        return EXIT_CONFIG
    modes = ["dense", "sparse"] if args.reward == "both" else [args.reward]
    envs = {mode: make_env(args.env, mode) for mode in modes}
    cfg = GrpoConfig(
        group_size=args.group_size,
        kl_coeff=args.kl_coeff,
        clip_ratio=args.clip_ratio,
        learning_rate=args.lr,
        steps=args.steps,
    )
    result = run_experiment(envs, cfg, seeds=list(range(args.seeds)))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.write_curves_csv(out_dir / "curves.csv")
    result.write_summary_json(out_dir / "summary.json")
    for mode, stats in result.summary["modes"].items():
        print(f"{mode}: median_steps_to_threshold={stats['median_steps_to_threshold']}")
    return EXIT_OK


def cmd_energy(args: argparse.Namespace) -> int:
    records = read_energy_csv(args.pairs)
    stats = energy_gap(records, bin_width=args.bin_width)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_gap_json(stats, out_dir / "gap.json")
    write_hist_csv(stats, out_dir / "hist.csv")
    print(f"gap={stats.gap} separation_rate={stats.separation_rate} n={stats.n}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen": cmd_gen,
        "score": cmd_score,
        "serve": cmd_serve,
        "simulate": cmd_simulate,
        "energy": cmd_energy,
    }
    try:
        return handlers[args.command](args)
    except InsufficientSources as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOURCES
    except (UnknownId, DuplicateId, MissingResponse) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCORING
    except (SchemaError, EmptyInput, FileNotFoundError, ValueError, GeoScoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
