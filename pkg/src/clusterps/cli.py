"""Command line: ``clusterps build-dem`` and ``clusterps simulate``."""

from __future__ import annotations

import argparse
import os
import re
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import codes
from .decoder import BpConfig
from .dem import DetectorErrorModel, PriorFoldWarning, parse_dem, serialize_dem
from .harness import ExperimentConfig, emit_results, run_experiment
from .metrics import parse_metric_list
from .window import WindowConfig

_MONOMIAL = re.compile(r"^(?:1|(?:x(?:\^(\d+))?)?\*?(?:y(?:\^(\d+))?)?)$")


def parse_polynomial(text: str) -> list[tuple[int, int]]:
    """``"x^3+y+y^2"`` -> ``[(3, 0), (0, 1), (0, 2)]``."""
    terms = []
    for raw in text.replace(" ", "").split("+"):
        m = _MONOMIAL.match(raw)
        if not raw or m is None:
            raise argparse.ArgumentTypeError(f"bad monomial {raw!r} in {text!r}")
        a = 0 if "x" not in raw else int(m.group(1) or 1)
        b = 0 if "y" not in raw else int(m.group(2) or 1)
        terms.append((a, b))
    return terms


def _probability(text: str) -> float:
    p = float(text)
    if not 0.0 <= p <= 0.5:
        raise argparse.ArgumentTypeError("probability must lie in [0, 0.5]")
    return p


def _cutoffs(text: str):
    if text == "auto":
        return "auto"
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cutoffs must be 'auto' or a comma list, got {text!r}") from None


def _add_code_args(p: argparse.ArgumentParser, required: bool) -> None:
    g = p.add_argument_group("code construction")
    g.add_argument("--code", choices=["rep", "surface", "bb", "hgp"], required=required)
    g.add_argument("--d", type=int, default=3, help="distance for rep/surface")
    g.add_argument("--rounds", type=int, default=None, help="syndrome rounds T (default: d)")
    g.add_argument("--p-data", type=_probability, default=None)
    g.add_argument("--p-meas", type=_probability, default=None)
    g.add_argument("--p", type=_probability, default=None, help="sets both --p-data and --p-meas")
    g.add_argument("--bb-l", type=int, default=6)
    g.add_argument("--bb-m", type=int, default=6)
    g.add_argument("--bb-a", type=parse_polynomial, default=None, help="e.g. 'x^3+y+y^2'")
    g.add_argument("--bb-b", type=parse_polynomial, default=None, help="e.g. 'y^3+x+x^2'")
    g.add_argument("--hgp-h1", default=None, help="text file with a 0/1 matrix (default: built-in 9x12)")
    g.add_argument("--hgp-h2", default=None, help="second factor (default: same as h1)")


def build_code(args) -> codes.CssCodeSpec:
    if args.code == "rep":
        return codes.repetition_code(args.d)
    if args.code == "surface":
        return codes.rotated_surface_code(args.d)
    if args.code == "bb":
        _, _, a_default, b_default = codes.BB_72_12_6
        return codes.bivariate_bicycle_code(args.bb_l, args.bb_m, args.bb_a or a_default, args.bb_b or b_default)
    h1 = np.loadtxt(args.hgp_h1, dtype=np.uint8, ndmin=2) if args.hgp_h1 else codes.HGP_CLASSICAL_CHECK
    h2 = np.loadtxt(args.hgp_h2, dtype=np.uint8, ndmin=2) if args.hgp_h2 else h1
    return codes.hgp_code(h1, h2)


def build_model(args) -> tuple[DetectorErrorModel, str, Optional[float]]:
    code = build_code(args)
    rounds = args.rounds if args.rounds is not None else (args.d if args.code in ("rep", "surface") else 1)
    p_data = args.p_data if args.p_data is not None else args.p
    p_meas = args.p_meas if args.p_meas is not None else args.p
    if p_data is None or p_meas is None:
        raise SystemExit("error: give --p or both --p-data and --p-meas")
    model = codes.phenomenological_dem(code, rounds, p_data, p_meas)
    p_label = p_data if p_data == p_meas else None
    return model, code.name, p_label


def cmd_build_dem(args) -> int:
    model, _, _ = build_model(args)
    text = serialize_dem(model) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def cmd_simulate(args) -> int:
    if args.dem:
        with open(args.dem) as fh, warnings.catch_warnings():
            warnings.simplefilter("always", PriorFoldWarning)
            model = parse_dem(fh.read())
        label, p = os.path.splitext(os.path.basename(args.dem))[0], None
    elif args.code:
        model, label, p = build_model(args)
    else:
        raise SystemExit("error: give --dem or --code")
    window = WindowConfig(args.window, args.commit) if args.mode == "realtime" else None
    config = ExperimentConfig(
        model=model,
        shots=args.shots,
        seed=args.seed,
        metrics=tuple(parse_metric_list(args.metric)),
        mode=args.mode,
        window=window,
        lookback=args.lookback,
        cutoffs=args.cutoffs,
        restrict=args.restrict,
        bp=BpConfig(max_iter=args.bp_iters, scaling=args.bp_scale),
        conv_max_conf=args.conv_max_conf,
        with_oracle=args.with_oracle,
        code=label,
        p=p,
        workers=args.workers,
        chunk_size=args.chunk_size,
    )
    result = run_experiment(config)
    for path in emit_results([result], args.out, plots=args.plot):
        print(path)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-dem", help="write a phenomenological Z-memory DEM")
    _add_code_args(b, required=True)
    b.add_argument("--out", default=None, help="output path (default: stdout)")
    b.set_defaults(func=cmd_build_dem)

    s = sub.add_parser("simulate", help="Monte Carlo post-selection sweep")
    s.add_argument("--dem", default=None, help="DEM text file (instead of --code)")
    _add_code_args(s, required=False)
    s.add_argument("--shots", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=["global", "realtime"], default="global")
    s.add_argument("--window", type=int, default=3, help="window size W")
    s.add_argument("--commit", type=int, default=1, help="commit size F")
    s.add_argument("--lookback", type=int, default=1, help="lookback L")
    s.add_argument("--metric", default="llr:2", help="comma list, e.g. size:2,llr:inf,weight,density")
    s.add_argument("--cutoffs", type=_cutoffs, default="auto")
    s.add_argument("--restrict", choices=["z"], default=None)
    s.add_argument("--out", default="results.csv")
    s.add_argument("--conv-max-conf", action="store_true")
    s.add_argument("--with-oracle", action="store_true", help="exhaustive ML reference (tiny models only)")
    s.add_argument("--bp-iters", type=int, default=30)
    s.add_argument("--bp-scale", type=float, default=1.0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--chunk-size", type=int, default=8192)
    s.add_argument("--plot", action="store_true", help="also write SVG plots")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
