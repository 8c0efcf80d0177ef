"""Command line entry point: ``gridsim run | compare | validate``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from gridsim.errors import GridSimError, IncomparableInputError, InvalidSpecError
from gridsim.experiment import (
    compare_policies,
    plot_csv,
    run_experiment,
    validate_config,
    win_matrix_text,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def bundled_recipes() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("gridsim.recipes").iterdir() if p.name.endswith(".json"))


def read_config_text(ref: str) -> str:
    """A path, or the name of a bundled recipe (with or without ``.json``)."""
    path = Path(ref)
    if path.exists():
        return path.read_text(encoding="utf-8")
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in bundled_recipes():
        return resources.files("gridsim.recipes").joinpath(name + ".json").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no config file or bundled recipe named {ref!r}")


def _load(ref: str):
    cfg, problems = validate_config(read_config_text(ref))
    if problems:
        raise InvalidSpecError(problems)
    return cfg


def _seed_list(text: str) -> list[int]:
    """``0-9`` or ``1,4,7`` or a mix."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def cmd_run(args) -> int:
    cfg = _load(args.config)
    policies = args.policy.split(",") if args.policy else None
    cfg = cfg.with_overrides(policies=policies, seeds=args.seeds, jobs=args.jobs, nodes=args.nodes,
                             output_path=args.out)
    if args.traces:
        import dataclasses
        cfg = dataclasses.replace(cfg, write_traces=True)
    result = run_experiment(cfg, workers=args.workers)
    for row in result["summary"]:
        print(f"{row['workload_class']:8s} {row['policy']:6s} seed={row['seed']:<4d} "
              f"mean={row['mean_completion']:.3f} completed={row['jobs_completed']} failed={row['jobs_failed']}")
    print(f"outputs written to {cfg.output_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    summary = json.loads(Path(args.summary).read_text(encoding="utf-8"))
    report = compare_policies(summary)
    print(win_matrix_text(report))
    if args.out:
        Path(args.out).write_text(plot_csv(report), encoding="utf-8")
        print(f"plot data written to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, problems = validate_config(read_config_text(args.config))
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {len(cfg.policies)} policies x {len(cfg.seeds)} seeds, "
          f"{cfg.workload.count} {cfg.workload.job_class} jobs on {cfg.platform.node_count} nodes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsim", description="Peer-to-peer grid brokering simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config or bundled recipe")
    run.add_argument("--config", required=True, help=f"path or recipe name ({', '.join(bundled_recipes())})")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--policy", help="comma-separated subset of ncda,flops,rr")
    run.add_argument("--seeds", type=_seed_list, help="e.g. 0-9 or 1,3,5")
    run.add_argument("--jobs", type=int)
    run.add_argument("--nodes", type=int)
    run.add_argument("--workers", type=int, default=1, help="parallel runs (output is unaffected)")
    run.add_argument("--traces", action="store_true", help="also write per-run event traces")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="win counts from a summary.json")
    cmp_.add_argument("summary")
    cmp_.add_argument("--out", help="write plot-ready CSV here")
    cmp_.set_defaults(func=cmd_compare)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidSpecError as exc:
        for p in exc.violations:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    except (IncomparableInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GridSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
