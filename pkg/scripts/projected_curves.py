"""Projected DP-SGD curves: delta vs T at fixed eps, and eps vs T at fixed delta.

Writes delta_vs_T.csv and eps_vs_T.csv into --out-dir, with the T -> infinity
values as trailing rows.

  python scripts/projected_curves.py --out-dir results/projected
"""

import argparse
import pathlib

import numpy as np

from hidden_dpsgd import accountant as acc
from hidden_dpsgd.accountant import SamplingScheme, SgdBoundConfig
from hidden_dpsgd.cli import format_rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("results/projected"))
    parser.add_argument("--t-max", type=int, default=10**4)
    parser.add_argument("--points", type=int, default=200)
    parser.add_argument("--epsilon", type=float, default=3.0)
    parser.add_argument("--delta", type=float, default=1e-3)
    args = parser.parse_args()

    cfg = SgdBoundConfig(D=3.0, C=2.0, eta=0.01, sigma=1.0, sampling=SamplingScheme.poisson(0.001))
    ts = [int(t) for t in np.unique(np.round(np.geomspace(1, args.t_max, args.points)))]

    delta_rows = [(t, acc.delta_projected(cfg.with_T(t), args.epsilon)) for t in ts]
    delta_rows.append(("inf", acc.delta_limit(cfg, args.epsilon)))

    eps_rows = [(t, acc.eps_from_delta(cfg, args.delta, t)) for t in ts]
    eps_rows.append(("inf", acc.eps_from_delta(cfg, args.delta)))
    eps_rows.append(("inf_closed_form", acc.eps_closed_form_bound(cfg, args.delta)))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"D": cfg.D, "C": cfg.C, "eta": cfg.eta, "sigma": cfg.sigma, "p": cfg.p}
    (args.out_dir / "delta_vs_T.csv").write_text(format_rows(delta_rows, "csv", meta))
    (args.out_dir / "eps_vs_T.csv").write_text(format_rows(eps_rows, "csv", meta))

    print(f"theta = {cfg.theta(args.epsilon):.6f} at eps = {args.epsilon}, r = {cfg.sensitivity_ratio}")
    print(f"delta(T={ts[-1]}) = {delta_rows[-2][1]:.6e}, limit = {delta_rows[-1][1]:.6e}")
    print(f"eps(T={ts[-1]}) = {eps_rows[-3][1]:.6f}, limit root = {eps_rows[-2][1]:.6f}, "
          f"closed form = {eps_rows[-1][1]:.6f}")


if __name__ == "__main__":
    main()
