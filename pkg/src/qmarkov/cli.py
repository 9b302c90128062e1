"""``qmarkov`` command line.

Subcommands: ``ingest``, ``synth``, ``run``, ``report``. Precedence for
run settings is flag > plan file > built-in default; the master seed falls
back to ``QMARKOV_SEED``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import QMarkovError
from .harness import (
    ExperimentPlan,
    ReportBundle,
    cmd_ingest,
    cmd_report,
    cmd_run,
    cmd_synth,
    parse_variants,
    resolve_seed,
    write_bundle,
)
from .io import format_counts


def _pad(value: str):
    return value if value == "auto" else int(value)


def _shots(value: str) -> int:
    """Shot count; ``exact`` maps to 0, meaning no sampling."""
    return 0 if value == "exact" else int(value)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmarkov", description="Quantum-circuit Markov-chain benchmark harness")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate (and normalise) a counts file")
    p.add_argument("--counts", required=True)
    p.add_argument("--colour-map", help="colour map CSV, or 'bundled' for the shipped WGSN table")
    p.add_argument("--out", help="write the canonical counts CSV here (default: stdout)")

    p = sub.add_parser("synth", help="write a synthetic hub-dominated counts file")
    p.add_argument("--states", type=int, default=8)
    p.add_argument("--hubs", type=int, default=1)
    p.add_argument("--strength", type=float, default=0.7)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("run", help="run an experiment grid and write the report bundle")
    p.add_argument("--plan", help="flat JSON plan file")
    p.add_argument("--counts")
    p.add_argument("--colour-map")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=_shots, help="shots per step, or 'exact'")
    p.add_argument("--depths", help="comma-separated, e.g. 4,8,16")
    p.add_argument("--horizons", help="comma-separated, e.g. 1,2,3,5,10,20")
    p.add_argument("--variants", help="e.g. 'full;minus-black;minus-bw=black,white'")
    p.add_argument("--seeds", type=int, help="seed replicates per cell")
    p.add_argument("--beta", type=float, help="Laplace smoothing (default 0.1)")
    p.add_argument("--pad", type=_pad, help="auto or a power of two")
    p.add_argument("--encoder", choices=("lcu", "dilation", "analytic", "demo-sqrt"))
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("report", help="re-emit tables from a bundle.json")
    p.add_argument("bundle", nargs="?", help="bundle.json (default: <out>/bundle.json)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="out")
    return ap


def _run(args) -> int:
    plan = ExperimentPlan.from_json(args.plan) if args.plan else ExperimentPlan()
    plan = plan.with_overrides(
        counts=args.counts, colour_map=args.colour_map, depths=args.depths, horizons=args.horizons,
        variants=parse_variants(args.variants) if args.variants else None, seeds=args.seeds,
        beta=args.beta, pad=args.pad, encoder=args.encoder, out=args.out,
    )
    if args.shots is not None:
        plan = replace(plan, shots=args.shots or None)
    bundle = cmd_run(plan, seed=resolve_seed(args.seed, plan.seed))
    paths = write_bundle(bundle, plan.out) + cmd_report(bundle, plan.out, args.format)
    failed = sum(1 for r in bundle.metrics if r["status"] != "ok")
    for path in paths:
        print(path)
    if failed:
        print(f"{failed} grid cell(s) failed; see metrics status column", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "ingest":
            res = cmd_ingest(args.counts, args.colour_map)
            text = format_counts(res.counts)
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            print(json.dumps({"states": res.counts.size, "unmapped": list(res.unmapped),
                              "merged": {k: list(v) for k, v in res.merged.items()}}), file=sys.stderr)
        elif args.command == "synth":
            seed = resolve_seed(args.seed, default=42)
            c = cmd_synth(args.states, args.hubs, args.strength, seed, args.out)
            if not args.out:
                sys.stdout.write(format_counts(c))
        elif args.command == "run":
            return _run(args)
        elif args.command == "report":
            src = Path(args.bundle) if args.bundle else Path(args.out) / "bundle.json"
            bundle = ReportBundle.from_json(src.read_text(encoding="utf-8"))
            for path in cmd_report(bundle, args.out, args.format):
                print(path)
    except (QMarkovError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
