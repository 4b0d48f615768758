"""Command line entry point: ``sgfluid <study> [--config FILE] [--out DIR] ...``.

Exit status is 0 when every check of the study passes, 1 when a check fails
and 2 on configuration or usage errors.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_seeds
from .report import write_report
from .solver import BlowUpError
from .studies import LEVEL_KEYS, STUDIES, run_study

HELP = {
    "basis-check": "eigenrelation and orthonormality of the spectral basis",
    "operator-check": "identities of the transport operator and transform vs direct oracle",
    "energy": "energy-equation residual and a priori bound under dt refinement",
    "converge-galerkin": "error against a high-cutoff reference for increasing n",
    "malliavin-fd": "Malliavin derivative vs noise-shift finite difference, deterministic xi",
    "chain-rule": "two-term chain rule vs noise-shift finite difference, anticipating xi",
    "product-rule": "Skorohod product rule on the analytic catalog",
    "theorem-residual": "residual of the integral equation for u = Q v",
    "simulate": "trajectory CSV with norms and energy terms",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgfluid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="study", required=True, metavar="study")
    for name in STUDIES:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="INI run configuration")
        p.add_argument("--out", type=Path, help="output root (default $SGFLUID_OUT or ./sgfluid-out)")
        p.add_argument("--seeds", help="seed list such as 0-99 or 1,4,9")
        if name in LEVEL_KEYS:
            p.add_argument("--levels", help=f"comma list overriding '{LEVEL_KEYS[name]}'")
        p.add_argument("--threads", type=int, default=1, help="worker processes for seed fan-out")
        p.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    return ap


def resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seeds:
        try:
            cfg = cfg.with_(seeds=parse_seeds(args.seeds))
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}") from None
    if getattr(args, "levels", None):
        cfg = cfg.with_(study={**cfg.study, LEVEL_KEYS[args.study]: args.levels})
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or (Path(cfg.out) if cfg.out else None) or Path(os.environ.get("SGFLUID_OUT", "sgfluid-out"))
    try:
        report = run_study(args.study, cfg, threads=max(1, args.threads))
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 1
    target = write_report(report, out, plots=not args.no_plot)
    for check in report.checks:
        print(check.line())
    print(f"report: {target}")
    if not report.passed:
        names = ", ".join(c.name for c in report.failing())
        print(f"FAILED: {names}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
