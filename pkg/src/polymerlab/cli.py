"""Command line entry point: ``polymerlab <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import experiment, limits, verify
from .errors import DomainError, UnsupportedRegimeError
from .polymer import make_rng

_ROWS_HELP = (
    "rows.csv columns, in order: " + ", ".join(experiment.SWEEP_COLUMNS)
    + ". The JSON schema ships as polymerlab/sweep_row_schema.json."
)


def _grid(text: str) -> list:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma list."""
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
    return [float(v) for v in text.split(",") if v.strip()]


def _cmd_simulate(args):
    config = experiment.load_config(args.config)
    _, summary = experiment.simulate(config, args.outputs)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_sweep(args):
    flat = experiment.load_config_dict(args.config)
    rows, _ = experiment.sweep(flat, args.outputs)
    out = args.outputs or flat.get("outputs", "polymerlab-out")
    print(f"{len(rows)} rows written to {out}")


def _cmd_sample_w(args):
    rng = make_rng(args.seed)
    draws = limits.sample_W_batch(args.alpha, args.c_minus, args.beta, args.eps, args.cap_k, args.count, rng)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["draw", "W"])
    for i, w in enumerate(draws):
        writer.writerow([i, repr(float(w))])


def _cmd_stable_cf(args):
    ys = np.linspace(args.y_min, args.y_max, args.steps)
    psi = limits.stable_exponent(args.alpha, args.c_minus, ys)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["y", "psi_re", "psi_im", "cf_re", "cf_im"])
    for y, p in zip(ys, np.atleast_1d(psi)):
        cf = np.exp(p)
        writer.writerow([repr(float(y)), repr(float(p.real)), repr(float(p.imag)),
                         repr(float(cf.real)), repr(float(cf.imag))])


def _cmd_regions(args):
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["gamma", "alpha", "region", "xi"])
    for g in _grid(args.gamma_grid):
        for a in _grid(args.alpha_grid):
            xi = experiment.region_xi(g, a)
            writer.writerow([repr(g), repr(a), experiment.classify_region(g, a), "" if xi is None else repr(xi)])


def _cmd_verify(args):
    checks = verify.run_all()
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polymerlab", description="Directed polymer simulation lab.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one parameter point", epilog=_ROWS_HELP)
    s.add_argument("--config", required=True, help="flat JSON config file")
    s.add_argument("--outputs", help="output directory (default: the config's outputs key)")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("sweep", help="run the cross product of list-valued config keys", epilog=_ROWS_HELP)
    s.add_argument("--config", required=True)
    s.add_argument("--outputs")
    s.set_defaults(func=_cmd_sweep)

    lim = sub.add_parser("limits", help="limit-law samplers").add_subparsers(dest="limits_command", required=True)
    s = lim.add_parser("sample-w", help="draws of the windowed Poisson-field functional W_beta")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--c-minus", type=float, default=1.0)
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--cap-k", type=float, default=8.0, help="spatial half-width K of the window")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_sample_w)
    s = lim.add_parser("stable-cf", help="tabulate psi_alpha and the characteristic function of W_0")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--c-minus", type=float, default=1.0)
    s.add_argument("--y-min", type=float, default=-3.0)
    s.add_argument("--y-max", type=float, default=3.0)
    s.add_argument("--steps", type=int, default=61)
    s.set_defaults(func=_cmd_stable_cf)

    s = sub.add_parser("regions", help="region tag and level-curve exponent on a (gamma, alpha) grid")
    s.add_argument("--gamma-grid", default="0:1:21", help="start:stop:count or comma list")
    s.add_argument("--alpha-grid", default="0.6:10:21", help="start:stop:count or comma list")
    s.set_defaults(func=_cmd_regions)

    s = sub.add_parser("verify", help="exact-oracle suite: enumeration, chaos identity, Feller")
    s.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (DomainError, UnsupportedRegimeError, OSError, json.JSONDecodeError) as exc:
        print(f"polymerlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
