"""Standard certificate suites run by ``hidden-dpsgd verify``.

Each suite returns a list of VerificationReport. Parameters are fixed
toy-scale instances: 1-D grids with spacing 0.02, datasets of at most four
points, and exact batch enumeration.
"""

import itertools
from typing import Callable, Dict, List

import numpy as np

from hidden_dpsgd.accountant import SamplingScheme
from hidden_dpsgd.oracle import (
    LOSS_GRADIENTS,
    Grid1D,
    ToyProblem,
    VerificationReport,
    verify_contraction,
    verify_coupled_dpi,
    verify_prop4_coupling,
    verify_recursion,
    verify_theorem,
    verify_update_diameter,
)

SPACING = 0.02
# Aligned to the cell boundaries of every centered grid with SPACING and an odd cell count.
UNIT_INTERVAL = (-1.01, 1.01)


def neighbors(loss: str, n: int, eta: float = 0.5, C: float = 1.0, lam: float = 0.0):
    """Dataset spread over [-0.5, 0.5] and its neighbour with the last point moved to -3."""
    prob = ToyProblem(tuple(np.linspace(-0.5, 0.5, n)), loss=loss, eta=eta, C=C, lam=lam)
    return prob, prob.replace_last(-3.0)


def schemes(n: int):
    return [SamplingScheme.poisson(0.3), SamplingScheme.without_replacement(n // 2, n)]


def contraction_suite(seed: int = 0) -> List[VerificationReport]:
    grid = Grid1D.centered(SPACING, 801)
    return [verify_contraction(grid, 1.0, UNIT_INTERVAL, eps) for eps in (0.0, 1.0, 3.0)]


def dpi_suite(seed: int = 0, trials: int = 100) -> List[VerificationReport]:
    grid = Grid1D.centered(SPACING, 201)
    reports = []
    for loss, n in itertools.product(LOSS_GRADIENTS, (2, 4)):
        prob, prob_prime = neighbors(loss, n)
        for scheme in schemes(n):
            reports.append(verify_update_diameter(prob, scheme, grid, UNIT_INTERVAL))
            for eps in (0.0, 1.0):
                reports.append(
                    verify_coupled_dpi(
                        prob, prob_prime, scheme, grid, 1.0, UNIT_INTERVAL, eps, trials=trials, seed=seed
                    )
                )
    return reports


def _trajectory_suite(check, seed):
    grid = Grid1D.centered(SPACING, 201)
    reports = []
    for loss, n in itertools.product(LOSS_GRADIENTS, (2, 4)):
        prob, prob_prime = neighbors(loss, n)
        for scheme in schemes(n):
            for eps in (0.0, 0.5):
                reports.append(check(prob, prob_prime, scheme, grid, 0.5, UNIT_INTERVAL, eps, 5))
    return reports


def recursion_suite(seed: int = 0) -> List[VerificationReport]:
    return _trajectory_suite(verify_recursion, seed)


def theorem_suite(seed: int = 0) -> List[VerificationReport]:
    return _trajectory_suite(verify_theorem, seed)


def coupling_suite(seed: int = 0) -> List[VerificationReport]:
    grid = Grid1D.centered(SPACING, 601)
    reports = []
    for loss in LOSS_GRADIENTS:
        prob, _ = neighbors(loss, 4, eta=0.1, C=1.0, lam=0.5)
        scheme = SamplingScheme.without_replacement(2, 4)
        for kappa in (1.0, 2.0, 4.0):
            reports.append(verify_prop4_coupling(prob, scheme, grid, 1.0, kappa, 3))
    return reports


SUITES: Dict[str, Callable[..., List[VerificationReport]]] = {
    "contraction": contraction_suite,
    "dpi": dpi_suite,
    "recursion": recursion_suite,
    "coupling": coupling_suite,
    "theorem": theorem_suite,
}


def run_suite(name: str, seed: int = 0) -> dict:
    """Runs one suite and returns its JSON-ready certificate."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    reports = SUITES[name](seed=seed)
    return {
        "suite": name,
        "seed": seed,
        "pass": all(r.passed for r in reports),
        "records": [r.to_record() for r in reports],
    }
