"""Command-line front end: bound curves as CSV/JSON and oracle certificates.

Examples:

  hidden-dpsgd delta-curve --t-max 10000 --log-t
  hidden-dpsgd eps-curve --delta 1e-3 --t-max 200
  hidden-dpsgd regularized --lambda 0.01 --t-max 50 --out json
  hidden-dpsgd verify --suite contraction

Exit codes: 0 success, 1 usage error, 2 verification failure.
"""

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from hidden_dpsgd import accountant, suites
from hidden_dpsgd.accountant import RegularizedConfig, SamplingScheme, SgdBoundConfig

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2
MODES = ("delta-curve", "eps-curve", "regularized", "verify")
LOG_T_POINTS = 64

# Projected runs default to the D=3, C=2, eta=0.01, sigma=1, p=0.001 setting;
# regularized runs to C=1, eta=0.1, sigma=5, eps=5, p=0.001.
PROJECTED_DEFAULTS = dict(epsilon=3.0, delta=1e-3, D=3.0, C=2.0, eta=0.01, sigma=1.0, p=0.001, t_max=100)
REGULARIZED_DEFAULTS = dict(epsilon=5.0, C=1.0, eta=0.1, sigma=5.0, p=0.001, lam=0.65, dim=1, t_max=20)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _kappa(value: str):
    if value == "auto":
        return value
    try:
        k = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"kappa must be a number or 'auto', got {value!r}")
    if not k > 0:
        raise argparse.ArgumentTypeError("kappa must be positive")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hidden-dpsgd", description=__doc__.split("\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--D", type=float, help="diameter of the parameter set")
    parser.add_argument("--C", type=float, help="clipping constant")
    parser.add_argument("--eta", type=float, help="learning rate")
    parser.add_argument("--sigma", type=float, help="noise scale")
    parser.add_argument("--p", type=float, help="Poisson sampling rate")
    parser.add_argument("--b", type=int, help="batch size (sampling without replacement)")
    parser.add_argument("--n", type=int, help="dataset size (sampling without replacement)")
    parser.add_argument("--lambda", dest="lam", type=float, help="regularization strength")
    parser.add_argument("--dim", type=int, help="parameter dimension d")
    parser.add_argument("--kappa", type=_kappa, default="auto")
    parser.add_argument("--ball-diameter", action="store_true",
                        help="regularized: evaluate theta at the image-ball diameter")
    parser.add_argument("--t-max", dest="t_max", type=int)
    parser.add_argument("--log-t", action="store_true", help="log-spaced T values")
    parser.add_argument("--out", choices=("csv", "json"), default="csv")
    parser.add_argument("--suite", choices=sorted(suites.SUITES))
    parser.add_argument("--seed", type=int, default=0)
    return parser


def _fill_defaults(args):
    defaults = REGULARIZED_DEFAULTS if args.mode == "regularized" else PROJECTED_DEFAULTS
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _sampling(args, need_without_replacement=False) -> SamplingScheme:
    if (args.b is None) != (args.n is None):
        raise UsageError("--b and --n must be given together")
    if args.b is not None:
        return SamplingScheme.without_replacement(args.b, args.n)
    if need_without_replacement:
        return SamplingScheme.from_rate(args.p)
    return SamplingScheme.poisson(args.p)


def horizons(t_max: int, log_t: bool) -> List[int]:
    if t_max < 1:
        raise UsageError("--t-max must be a positive integer")
    if not log_t:
        return list(range(1, t_max + 1))
    ts = np.unique(np.round(np.geomspace(1, t_max, LOG_T_POINTS)).astype(int))
    return [int(t) for t in ts]


def _projected_config(args) -> SgdBoundConfig:
    return SgdBoundConfig(D=args.D, C=args.C, eta=args.eta, sigma=args.sigma, sampling=_sampling(args))


def delta_curve(args) -> List[tuple]:
    cfg = _projected_config(args)
    rows = [(t, accountant.delta_projected(cfg.with_T(t), args.epsilon)) for t in horizons(args.t_max, args.log_t)]
    rows.append(("inf", accountant.delta_limit(cfg, args.epsilon)))
    return rows


def eps_curve(args) -> List[tuple]:
    cfg = _projected_config(args)
    rows = [(t, accountant.eps_from_delta(cfg, args.delta, t)) for t in horizons(args.t_max, args.log_t)]
    rows.append(("inf", accountant.eps_from_delta(cfg, args.delta)))
    rows.append(("inf_closed_form", accountant.eps_closed_form_bound(cfg, args.delta)))
    return rows


def regularized_curve(args) -> List[tuple]:
    base = SgdBoundConfig(D=0.0, C=args.C, eta=args.eta, sigma=args.sigma,
                          sampling=_sampling(args, need_without_replacement=True))
    rows = []
    for t in horizons(args.t_max, args.log_t):
        reg = RegularizedConfig(base=base.with_T(t), lam=args.lam, d=args.dim,
                                kappa=args.kappa, use_diameter=args.ball_diameter)
        if args.kappa == "auto":
            delta, kappa = accountant.delta_regularized_optimized(reg, args.epsilon)
        else:
            delta, kappa = accountant.delta_regularized(reg, args.epsilon), args.kappa
        rows.append((t, delta, kappa))
    return rows


def _meta(args) -> dict:
    keys = ("mode", "epsilon", "delta", "D", "C", "eta", "sigma", "p", "b", "n",
            "lam", "dim", "kappa", "ball_diameter", "t_max", "log_t")
    return {k: getattr(args, k, None) for k in keys}


def format_rows(rows: Sequence[tuple], fmt: str, meta: dict) -> str:
    """CSV with header ``T,value[,kappa_star]`` or JSON ``{"meta": ..., "rows": [...]}``."""
    with_kappa = bool(rows) and len(rows[0]) == 3
    if fmt == "json":
        out = []
        for row in rows:
            item = {"t": row[0], "value": row[1]}
            if with_kappa:
                item["kappa_star"] = row[2]
            out.append(item)
        return json.dumps({"meta": meta, "rows": out}, indent=2)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["T", "value", "kappa_star"] if with_kappa else ["T", "value"])
    for row in rows:
        # repr() is the shortest string that round-trips the float.
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _fill_defaults(args)
    try:
        if args.mode == "verify":
            if args.suite is None:
                raise UsageError("verify needs --suite")
            certificate = suites.run_suite(args.suite, seed=args.seed)
            print(json.dumps(certificate, indent=2, default=_json_default))
            return EXIT_OK if certificate["pass"] else EXIT_VERIFY
        if args.mode == "delta-curve":
            rows = delta_curve(args)
        elif args.mode == "eps-curve":
            if not 0 < args.delta < 1:
                raise UsageError("--delta must lie in (0, 1)")
            rows = eps_curve(args)
        else:
            rows = regularized_curve(args)
    except (UsageError, ValueError) as err:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(format_rows(rows, args.out, _meta(args)))
    if args.out == "json":
        sys.stdout.write("\n")
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
