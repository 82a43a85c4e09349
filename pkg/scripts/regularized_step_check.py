"""Per-step inequality of the regularized companion process: radius vs diameter.

Evaluates the grid oracle with theta taken at the radius (r_t - sigma kappa)/sigma
and at twice that, on a small neighbouring pair with far-apart data.

  python scripts/regularized_step_check.py
"""

from hidden_dpsgd.accountant import SamplingScheme
from hidden_dpsgd.oracle import Grid1D, ToyProblem, verify_regularized_dpi


def main():
    prob = ToyProblem((10.0, 10.0), eta=0.5, C=1.0, lam=0.1)
    prob_prime = prob.replace_last(-10.0)
    scheme = SamplingScheme.without_replacement(1, 2)
    grid = Grid1D.centered(0.02, 301)
    for factor in (1.0, 2.0):
        for eps in (0.0, 0.5, 1.0):
            r = verify_regularized_dpi(prob, prob_prime, scheme, grid, 1.0, 0.5, 2, eps, diameter_factor=factor)
            print(f"factor {factor:.0f} eps {eps:.1f}: theta {r.details['theta']:.4f}  "
                  f"max slack {r.max_slack:+.4f}  tol {r.tolerance:.4f}  "
                  f"violations {r.details['violations']:3d}  {'PASS' if r.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
