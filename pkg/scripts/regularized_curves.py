"""Regularized DP-SGD: kappa-optimized delta bound vs T for several lambda.

The dimension and batch/population sizes of the regularized setting are not
pinned down, so d defaults to 1 and b/n to 1/1000 (the closest fraction to
p = 0.001). Writes one CSV per lambda into --out-dir.

  python scripts/regularized_curves.py --out-dir results/regularized
"""

import argparse
import pathlib

import numpy as np

from hidden_dpsgd import accountant as acc
from hidden_dpsgd.accountant import RegularizedConfig, SamplingScheme, SgdBoundConfig
from hidden_dpsgd.cli import format_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("results/regularized"))
    parser.add_argument("--t-max", type=int, default=1000)
    parser.add_argument("--points", type=int, default=40)
    parser.add_argument("--lambdas", type=float, nargs="+", default=[0.65, 0.1, 0.01])
    parser.add_argument("--dim", type=int, default=1)
    parser.add_argument("--ball-diameter", action="store_true",
                        help="evaluate theta at the image-ball diameter")
    args = parser.parse_args()

    base = SgdBoundConfig(D=0.0, C=1.0, eta=0.1, sigma=5.0, sampling=SamplingScheme.from_rate(0.001))
    ts = [int(t) for t in np.unique(np.round(np.geomspace(1, args.t_max, args.points)))]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for lam in args.lambdas:
        rows = []
        for t in ts:
            reg = RegularizedConfig(base=base.with_T(t), lam=lam, d=args.dim, use_diameter=args.ball_diameter)
            delta, kappa = acc.delta_regularized_optimized(reg, 5.0)
            rows.append((t, delta, kappa))
        name = f"lambda_{lam:g}{'_diameter' if args.ball_diameter else ''}.csv"
        (args.out_dir / name).write_text(format_rows(rows, "csv", {}))
        print(f"lambda={lam:g}: delta(T=1)={rows[0][1]:.3e}, delta(T={ts[-1]})={rows[-1][1]:.3e}, "
              f"kappa*={rows[-1][2]:.3f}")


if __name__ == "__main__":
    main()
