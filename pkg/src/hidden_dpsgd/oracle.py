"""Exact grid discretization of one-dimensional DP-SGD processes.

Measures live on the centers of a uniform grid and Markov kernels are
row-stochastic matrices, applied to row vectors as ``mu @ K``. One update is

    K = Psi @ G @ Pi

where ``Psi`` averages the per-batch update maps over the batch
distribution, ``G`` is the Gaussian kernel binned to the grid, and ``Pi`` is
a projection onto an interval. Batches are enumerated exactly (n <= 12) and
nothing is sampled, so every check is a deterministic computation.

Discretization only enters through ``Psi``. Outputs of the update maps are
split between the two neighbouring atoms, which moves them by less than one
cell width ``h``. Binning and folding the Gaussian are deterministic
post-processing of the continuous kernel, so they cannot increase a
hockey-stick divergence. The grid allowance of each check is therefore the
change in the analytic bound when the diameter grows by ``h``. Since
d theta / dr = phi(eps/r - r/2) <= 1/sqrt(2 pi), that change is at most
h / (sigma sqrt(2 pi)).
"""

import dataclasses
import itertools
import json
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from hidden_dpsgd import accountant, specfun
from hidden_dpsgd.accountant import SamplingScheme, SgdBoundConfig
from hidden_dpsgd.hockey_stick import (
    DiscreteDist,
    hs_divergence,
    hs_divergence_batch,
    theta,
    total_variation,
)

MAX_DATASET_SIZE = 12
ROW_SUM_TOL = 1e-10
_ALIGN_TOL = 1e-9
_FLOAT_SLACK = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclasses.dataclass(frozen=True)
class Grid1D:
    """Uniform partition of [lo, hi] into ``n_cells`` cells; atoms are cell centers."""

    lo: float
    hi: float
    n_cells: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got {self.lo!r}, {self.hi!r}")
        if self.n_cells < 3:
            raise ValueError(f"need at least 3 cells, got {self.n_cells}")

    @classmethod
    def centered(cls, h: float, n_cells: int) -> "Grid1D":
        """Grid of spacing ``h`` symmetric about 0 (0 is an atom when n_cells is odd)."""
        half = 0.5 * h * n_cells
        return cls(-half, half, n_cells)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.n_cells + 1)

    @property
    def atoms(self) -> np.ndarray:
        return self.lo + self.h * (np.arange(self.n_cells) + 0.5)

    def edge_index(self, x: float) -> int:
        """Index k with edges[k] == x; raises if x is not a cell boundary."""
        k = (x - self.lo) / self.h
        if abs(k - round(k)) > _ALIGN_TOL or not 0 <= round(k) <= self.n_cells:
            raise ValueError(f"{x!r} is not a cell boundary of {self}")
        return int(round(k))

    def atom_index(self, x: float) -> int:
        """Index of the cell containing x (clamped to the grid)."""
        return int(min(self.n_cells - 1, max(0, math.floor((x - self.lo) / self.h))))

    def inside(self, interval: Tuple[float, float]) -> np.ndarray:
        """Boolean mask of atoms lying in an aligned interval [a, b]."""
        a, b = interval
        if not a < b:
            raise ValueError(f"need a < b, got {interval!r}")
        ka, kb = self.edge_index(a), self.edge_index(b)
        mask = np.zeros(self.n_cells, dtype=bool)
        mask[ka:kb] = True
        return mask

    def dirac(self, x: float) -> np.ndarray:
        out = np.zeros(self.n_cells)
        out[self.atom_index(x)] = 1.0
        return out

    def dist(self, masses: np.ndarray) -> DiscreteDist:
        return DiscreteDist(self.atoms, masses)


def _quadratic(w, x):
    return w - x


def _nonconvex(w, x):
    return np.sin(w) + 0.1 * (w - x)


def _step(w, x):
    return np.sign(w - x)


# Per-example loss gradients; the last two are non-convex, the last non-smooth.
LOSS_GRADIENTS: Dict[str, Callable] = {
    "quadratic": _quadratic,
    "nonconvex": _nonconvex,
    "step": _step,
}


@dataclasses.dataclass(frozen=True)
class ToyProblem:
    """Scalar dataset with a catalog loss; ``lam = 0`` is the projected variant."""

    data: Tuple[float, ...]
    loss: str = "quadratic"
    eta: float = 0.5
    C: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(float(x) for x in self.data))
        if not 1 <= len(self.data) <= MAX_DATASET_SIZE:
            raise ValueError(
                f"dataset size must be between 1 and {MAX_DATASET_SIZE}, got {len(self.data)}"
            )
        if self.loss not in LOSS_GRADIENTS:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {sorted(LOSS_GRADIENTS)}")
        if self.eta < 0 or self.C <= 0:
            raise ValueError("need eta >= 0 and C > 0")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must lie in [0, 1), got {self.lam!r}")

    @property
    def n(self) -> int:
        return len(self.data)

    def replace_last(self, x: float) -> "ToyProblem":
        """Neighbouring problem whose last data point is ``x``."""
        return dataclasses.replace(self, data=self.data[:-1] + (x,))


def clip(v, C: float):
    """Rescales v to norm at most C (in one dimension: clamps to [-C, C])."""
    if C <= 0:
        raise ValueError(f"C must be positive, got {C!r}")
    return np.clip(v, -C, C) if isinstance(v, np.ndarray) else max(-C, min(C, v))


def update_map(prob: ToyProblem, batch: Sequence[int]) -> Callable:
    """w -> (1 - lam) w - eta / |B| sum_{i in B} clip(grad(w, x_i)).

    The empty batch (possible under Poisson sampling) gives w -> (1 - lam) w.
    """
    grad = LOSS_GRADIENTS[prob.loss]
    xs = [prob.data[i] for i in batch]

    def psi(w):
        w = np.asarray(w, dtype=float)
        out = (1.0 - prob.lam) * w
        if xs:
            step = sum(clip(grad(w, x), prob.C) for x in xs) / len(xs)
            out = out - prob.eta * step
        return out

    return psi


def batch_distribution(scheme: SamplingScheme, n: int) -> List[Tuple[Tuple[int, ...], float]]:
    """All batches of [n] with their probabilities under ``scheme``."""
    if n > MAX_DATASET_SIZE:
        raise ValueError(f"exact batch enumeration is capped at n = {MAX_DATASET_SIZE}")
    if scheme.kind == "poisson":
        p = scheme.p
        return [
            (batch, p ** len(batch) * (1.0 - p) ** (n - len(batch)))
            for k in range(n + 1)
            for batch in itertools.combinations(range(n), k)
        ]
    if scheme.n != n:
        raise ValueError(f"scheme is for n = {scheme.n} but the dataset has {n} points")
    batches = list(itertools.combinations(range(n), scheme.b))
    return [(batch, 1.0 / len(batches)) for batch in batches]


def snap_matrix(grid: Grid1D, positions: np.ndarray) -> np.ndarray:
    """Row i splits unit mass between the two atoms bracketing positions[i].

    Positions beyond the outermost atoms go entirely to that atom.
    """
    positions = np.asarray(positions, dtype=float)
    f = (positions - grid.atoms[0]) / grid.h
    f = np.clip(f, 0.0, grid.n_cells - 1)
    i = np.minimum(np.floor(f).astype(int), grid.n_cells - 2)
    frac = f - i
    out = np.zeros((positions.size, grid.n_cells))
    rows = np.arange(positions.size)
    out[rows, i] = 1.0 - frac
    out[rows, i + 1] += frac
    return out


def mixture_kernel(prob: ToyProblem, scheme: SamplingScheme, grid: Grid1D) -> np.ndarray:
    """Batch-averaged update kernel: atom w goes to psi_B(w) with probability P(B)."""
    out = np.zeros((grid.n_cells, grid.n_cells))
    for batch, weight in batch_distribution(scheme, prob.n):
        out += weight * snap_matrix(grid, update_map(prob, batch)(grid.atoms))
    return out


def _normal_mass(z_lo, z_hi):
    # P(z_lo < Z <= z_hi), using the tail on whichever side is smaller.
    upper = special.ndtr(z_hi) - special.ndtr(z_lo)
    lower = special.ndtr(-z_lo) - special.ndtr(-z_hi)
    return np.where(z_lo > 0, lower, upper)


def gaussian_kernel(grid: Grid1D, sigma: float) -> np.ndarray:
    """Row w holds the N(w, sigma^2) mass of each cell.

    Mass below ``lo`` is folded into the first cell and mass above ``hi`` into
    the last one.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    edges = grid.edges.copy()
    edges[0], edges[-1] = -np.inf, np.inf
    z = (edges[None, :] - grid.atoms[:, None]) / sigma
    return _normal_mass(z[:, :-1], z[:, 1:])


def projection_kernel(grid: Grid1D, interval: Tuple[float, float]) -> np.ndarray:
    """Nearest-point projection onto an interval aligned to cell boundaries."""
    inside = np.flatnonzero(grid.inside(interval))
    first, last = inside[0], inside[-1]
    target = np.clip(np.arange(grid.n_cells), first, last)
    out = np.zeros((grid.n_cells, grid.n_cells))
    out[np.arange(grid.n_cells), target] = 1.0
    return out


def check_stochastic(kernel: np.ndarray, tol: float = ROW_SUM_TOL) -> None:
    kernel = np.asarray(kernel)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got shape {kernel.shape}")
    if np.any(kernel < 0):
        raise ValueError("kernel has negative entries")
    worst = np.max(np.abs(kernel.sum(axis=1) - 1.0))
    if worst > tol:
        raise ValueError(f"kernel rows deviate from 1 by {worst:.3e}")


def push_forward(
    kernels: Sequence[np.ndarray], mu0: Union[np.ndarray, DiscreteDist]
) -> Union[np.ndarray, DiscreteDist]:
    """mu0 K_1 K_2 ... K_T; returns the same kind of object it was given."""
    as_dist = isinstance(mu0, DiscreteDist)
    mu = mu0.masses if as_dist else np.asarray(mu0, dtype=float)
    for k, kernel in enumerate(kernels):
        if kernel.shape[0] != mu.shape[-1]:
            raise ValueError(
                f"kernel {k} has {kernel.shape[0]} rows but the measure has {mu.shape[-1]} atoms"
            )
        mu = mu @ kernel
    return DiscreteDist(mu0.atoms, mu) if as_dist else mu


def projected_kernel(prob, scheme, grid, sigma, interval):
    """One step of projected DP-SGD: Psi, then Gaussian noise, then projection."""
    return mixture_kernel(prob, scheme, grid) @ gaussian_kernel(grid, sigma) @ projection_kernel(grid, interval)


@dataclasses.dataclass
class VerificationReport:
    """Outcome of one numerical certificate.

    ``max_slack`` is the largest observed lhs - rhs; the check passes when it
    does not exceed ``tolerance``.
    """

    check: str
    params: dict
    max_slack: float
    tolerance: float
    passed: bool
    witness: Optional[dict] = None
    details: dict = dataclasses.field(default_factory=dict)

    def to_record(self) -> dict:
        record = {
            "check": self.check,
            "params": self.params,
            "max_slack": self.max_slack,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.details:
            record["details"] = self.details
        if self.witness is not None:
            record["witness"] = self.witness
        return record

    def to_json(self) -> str:
        return json.dumps(self.to_record(), default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, SamplingScheme):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _scheme_params(scheme):
    return {k: v for k, v in dataclasses.asdict(scheme).items() if v is not None}


def _check_neighbors(prob, prob_prime):
    if prob.n != prob_prime.n:
        raise ValueError("neighbouring datasets must have the same size")
    differing = sum(x != y for x, y in zip(prob.data, prob_prime.data))
    if differing > 1:
        raise ValueError(f"datasets differ in {differing} entries, expected at most one")
    same = ("loss", "eta", "C", "lam")
    if any(getattr(prob, f) != getattr(prob_prime, f) for f in same):
        raise ValueError("neighbouring problems must share loss, eta, C and lam")


def grid_allowance(ratio: float, h: float, sigma: float, eps: float) -> float:
    """theta_eps(ratio + h / sigma) - theta_eps(ratio), at most h / (sigma sqrt(2 pi))."""
    return theta(eps, ratio + h / sigma) - theta(eps, ratio)


def random_measures(rng: np.random.Generator, support: np.ndarray, trials: int, n_cells: int) -> np.ndarray:
    """``trials`` random probability vectors on the atoms ``support``.

    Cycles through dense Dirichlet draws, sparse draws on a few atoms, and
    Dirac masses, the last of which favour the extreme atoms.
    """
    out = np.zeros((trials, n_cells))
    m = support.size
    for i in range(trials):
        kind = i % 3
        if kind == 0:
            out[i, support] = rng.dirichlet(np.full(m, 0.5))
        elif kind == 1:
            k = int(rng.integers(1, min(5, m) + 1))
            idx = rng.choice(support, size=k, replace=False)
            out[i, idx] = rng.dirichlet(np.ones(k))
        else:
            j = support[[0, -1][i % 2]] if rng.random() < 0.5 else rng.choice(support)
            out[i, j] = 1.0
    return out


def verify_coupled_dpi(
    prob: ToyProblem,
    prob_prime: ToyProblem,
    scheme: SamplingScheme,
    grid: Grid1D,
    sigma: float,
    interval: Tuple[float, float],
    eps: float,
    trials: int = 100,
    seed: int = 0,
) -> VerificationReport:
    """Checks E(K mu || K' nu) <= (1-p) theta E(mu || nu) + p theta on random inputs.

    K and K' are projected DP-SGD steps for neighbouring datasets. theta uses the
    diameter D + 2 eta C of the update images, where D = b - a is the width of
    the projection interval. Inputs are supported on the interval.
    """
    _check_neighbors(prob, prob_prime)
    mask = grid.inside(interval)
    support = np.flatnonzero(mask)
    K = projected_kernel(prob, scheme, grid, sigma, interval)
    Kp = projected_kernel(prob_prime, scheme, grid, sigma, interval)

    rng = np.random.default_rng(seed)
    mus = random_measures(rng, support, trials, grid.n_cells)
    nus = random_measures(rng, support, trials, grid.n_cells)
    # Shared inputs isolate the additive term.
    if trials:
        nus[0] = mus[0]

    D = interval[1] - interval[0]
    ratio = (D + 2.0 * prob.eta * prob.C) / sigma
    th = theta(eps, ratio)
    p = scheme.rate
    before = hs_divergence_batch(mus, nus, eps)
    after = hs_divergence_batch(mus @ K, nus @ Kp, eps)
    rhs = (1.0 - p) * th * before + p * th
    slack = after - rhs
    tol = grid_allowance(ratio, grid.h, sigma, eps) + _FLOAT_SLACK
    worst = int(np.argmax(slack)) if trials else 0
    max_slack = float(slack[worst]) if trials else -math.inf
    passed = max_slack <= tol
    witness = None
    if not passed:
        witness = {"mu": mus[worst], "nu": nus[worst], "lhs": after[worst], "rhs": rhs[worst]}
    return VerificationReport(
        check="coupled_dpi",
        params={
            "data": prob.data,
            "data_prime": prob_prime.data,
            "loss": prob.loss,
            "eta": prob.eta,
            "C": prob.C,
            "sampling": _scheme_params(scheme),
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "interval": list(interval),
            "eps": eps,
            "trials": trials,
            "seed": seed,
        },
        max_slack=max_slack,
        tolerance=tol,
        passed=passed,
        witness=witness,
        details={"theta": th, "violations": int(np.sum(slack > tol))},
    )


def verify_contraction(
    grid: Grid1D, sigma: float, interval: Tuple[float, float], eps: float, rel_gap: float = 0.05
) -> VerificationReport:
    """Exhaustive sup over Dirac pairs of E_eps between Gaussian kernel rows.

    Pass requires: sup <= theta(eps, span / sigma), sup >= (1 - rel_gap) theta,
    and the maximizing pair sits at the two extreme atoms. ``span`` is the
    distance between the extreme atoms in [a, b] (the interval may be
    degenerate).
    """
    a, b = interval
    atoms = grid.atoms
    idx = np.flatnonzero((atoms >= a - _ALIGN_TOL) & (atoms <= b + _ALIGN_TOL))
    rows = gaussian_kernel(grid, sigma)[idx]
    span = float(atoms[idx[-1]] - atoms[idx[0]]) if idx.size else 0.0
    analytic = theta(eps, span / sigma)

    if idx.size:
        scale = math.exp(eps)
        div = np.maximum(rows[:, None, :] - scale * rows[None, :, :], 0.0).sum(axis=-1)
        i, j = np.unravel_index(int(np.argmax(div)), div.shape)
        empirical = float(div[i, j])
        pair = (float(atoms[idx[i]]), float(atoms[idx[j]]))
        at_endpoints = idx.size == 1 or {int(i), int(j)} == {0, idx.size - 1}
    else:
        empirical, pair, at_endpoints = 0.0, None, True

    upper_ok = empirical <= analytic + _FLOAT_SLACK
    lower_ok = empirical >= (1.0 - rel_gap) * analytic
    return VerificationReport(
        check="contraction",
        params={
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "interval": [a, b],
            "eps": eps,
        },
        max_slack=empirical - analytic,
        tolerance=_FLOAT_SLACK,
        passed=bool(upper_ok and lower_ok and at_endpoints),
        details={
            "empirical_sup": empirical,
            "analytic_theta": analytic,
            "span": span,
            "maximizer": pair,
            "maximizer_at_endpoints": bool(at_endpoints),
            "within_rel_gap": bool(lower_ok),
        },
    )


def verify_update_diameter(
    prob: ToyProblem, scheme: SamplingScheme, grid: Grid1D, interval: Tuple[float, float]
) -> VerificationReport:
    """Exhaustive check that |psi_B2(w2) - psi_B1(w1)| <= D + 2 eta C over atoms and batches.

    D is the span of the atoms in the interval.
    """
    mask = grid.inside(interval)
    w = grid.atoms[mask]
    images = np.concatenate(
        [update_map(prob, batch)(w) for batch, _ in batch_distribution(scheme, prob.n)]
    )
    spread = float(images.max() - images.min())
    D = float(w.max() - w.min())
    bound = D + 2.0 * prob.eta * prob.C
    return VerificationReport(
        check="update_diameter",
        params={"data": prob.data, "loss": prob.loss, "eta": prob.eta, "C": prob.C,
                "grid": dataclasses.asdict(grid), "interval": list(interval)},
        max_slack=spread - bound,
        tolerance=_FLOAT_SLACK,
        passed=spread - bound <= _FLOAT_SLACK,
        details={"spread": spread, "bound": bound},
    )


def _trajectories(prob, prob_prime, scheme, grid, sigma, interval, T, mu0):
    K = projected_kernel(prob, scheme, grid, sigma, interval)
    Kp = projected_kernel(prob_prime, scheme, grid, sigma, interval)
    mu, nu = [mu0], [mu0]
    for _ in range(T):
        mu.append(mu[-1] @ K)
        nu.append(nu[-1] @ Kp)
    return mu, nu, K, Kp


def _default_mu0(grid, interval):
    return grid.dirac(0.5 * (interval[0] + interval[1]))


def verify_theorem(
    prob: ToyProblem,
    prob_prime: ToyProblem,
    scheme: SamplingScheme,
    grid: Grid1D,
    sigma: float,
    interval: Tuple[float, float],
    eps: float,
    T: int,
    mu0: Optional[np.ndarray] = None,
) -> VerificationReport:
    """End-to-end check: E_eps(mu K^T || mu K'^T) <= projected delta bound after each t <= T.

    ``mu0`` defaults to a Dirac at the interval midpoint.
    """
    _check_neighbors(prob, prob_prime)
    if mu0 is None:
        mu0 = _default_mu0(grid, interval)
    mu, nu, _, _ = _trajectories(prob, prob_prime, scheme, grid, sigma, interval, T, mu0)
    D = interval[1] - interval[0]
    cfg = SgdBoundConfig(D=D, C=prob.C, eta=prob.eta, sigma=sigma, sampling=scheme, T=T)
    inflated = theta(eps, cfg.sensitivity_ratio + grid.h / sigma)
    measured, bounds, tols = [], [], []
    for t in range(1, T + 1):
        measured.append(hs_divergence(mu[t], nu[t], eps))
        bounds.append(accountant.delta_projected(cfg.with_T(t), eps))
        tols.append(accountant.projected_bound_from_theta(inflated, cfg.p, t) - bounds[-1] + _FLOAT_SLACK)
    slack = np.array(measured) - np.array(bounds)
    excess = slack - np.array(tols)
    worst = int(np.argmax(excess))
    passed = bool(np.all(excess <= 0))
    return VerificationReport(
        check="theorem",
        params={
            "data": prob.data,
            "data_prime": prob_prime.data,
            "loss": prob.loss,
            "eta": prob.eta,
            "C": prob.C,
            "sampling": _scheme_params(scheme),
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "interval": list(interval),
            "eps": eps,
            "T": T,
        },
        max_slack=float(slack[worst]),
        tolerance=float(tols[worst]),
        passed=passed,
        witness=None if passed else {"t": worst + 1, "measured": measured[worst], "bound": bounds[worst]},
        details={"measured": measured, "bound": bounds},
    )


def verify_recursion(
    prob: ToyProblem,
    prob_prime: ToyProblem,
    scheme: SamplingScheme,
    grid: Grid1D,
    sigma: float,
    interval: Tuple[float, float],
    eps: float,
    T: int,
    mu0: Optional[np.ndarray] = None,
) -> VerificationReport:
    """Checks the per-step recursion along the actual trajectories.

    Two things are checked:

    * each step satisfies d_t <= alpha d_{t-1} + beta, with d_t = E_eps(mu_t || nu_t);
    * the composition of the steps dominates every d_t.

    alpha = (1 - p) theta and beta = p theta use the grid-inflated diameter
    D + 2 eta C + h, for which the inequality holds exactly on the grid.
    """
    _check_neighbors(prob, prob_prime)
    if mu0 is None:
        mu0 = _default_mu0(grid, interval)
    mu, nu, _, _ = _trajectories(prob, prob_prime, scheme, grid, sigma, interval, T, mu0)
    D = interval[1] - interval[0]
    th = theta(eps, (D + 2.0 * prob.eta * prob.C + grid.h) / sigma)
    p = scheme.rate
    step = accountant.BoundStep((1.0 - p) * th, p * th)
    d = [hs_divergence(m, n, eps) for m, n in zip(mu, nu)]
    step_slack = [d[t] - (step.alpha * d[t - 1] + step.beta) for t in range(1, T + 1)]
    composed = [accountant.compose_linear_bounds([step] * t, d[0]) for t in range(1, T + 1)]
    comp_slack = [d[t] - composed[t - 1] for t in range(1, T + 1)]
    max_slack = float(max(step_slack + comp_slack))
    passed = max_slack <= _FLOAT_SLACK
    return VerificationReport(
        check="recursion",
        params={
            "data": prob.data,
            "data_prime": prob_prime.data,
            "loss": prob.loss,
            "sampling": _scheme_params(scheme),
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "interval": list(interval),
            "eps": eps,
            "T": T,
        },
        max_slack=max_slack,
        tolerance=_FLOAT_SLACK,
        passed=passed,
        details={"alpha": step.alpha, "beta": step.beta, "measured": d[1:], "composed": composed},
    )


def _outer_edge(grid: Grid1D, r: float) -> float:
    """Smallest cell boundary >= r, capped at the grid edge."""
    k = math.ceil((r - grid.lo) / grid.h - _ALIGN_TOL)
    return grid.lo + grid.h * min(k, grid.n_cells)


def _ball_interval(grid: Grid1D, r: float) -> Tuple[float, float]:
    """[-r, r] widened to cell boundaries (the grid must be symmetric about 0)."""
    hi = _outer_edge(grid, r)
    lo = -hi if -hi >= grid.lo else grid.lo
    return (max(lo, grid.lo), hi)


def verify_prop4_coupling(
    prob: ToyProblem,
    scheme: SamplingScheme,
    grid: Grid1D,
    sigma: float,
    kappa: float,
    T: int,
) -> VerificationReport:
    """Checks TV(mu_t, mu~_t) <= 1 - P(chi^2_1 <= kappa^2)^t for t = 0..T.

    mu~_t is regularized DP-SGD without projection, and mu_t the same process
    projected onto [-r_t, r_t]. Both start from a Dirac at 0. Radii are widened
    to the next cell boundary. Each step then moves the projection threshold by
    less than 2h (snapping plus rounding), which changes the escape probability
    of the noise by at most 2 (2h / sigma) phi(0). The allowance therefore grows
    linearly in t and h.
    """
    if not 0.0 < prob.lam < 1.0:
        raise ValueError("the coupling check needs 0 < lam < 1")
    if abs(grid.lo + grid.hi) > _ALIGN_TOL:
        raise ValueError("the coupling check needs a grid symmetric about 0")
    reg = accountant.RegularizedConfig(
        base=SgdBoundConfig(D=0.0, C=prob.C, eta=prob.eta, sigma=sigma, sampling=scheme),
        lam=prob.lam,
        d=1,
        kappa=kappa,
    )
    mix_noise = mixture_kernel(prob, scheme, grid) @ gaussian_kernel(grid, sigma)
    mu = grid.dirac(0.0)
    mu_free = mu.copy()
    hold = specfun.chi2_cdf(1, kappa * kappa)
    per_step = 4.0 * grid.h / sigma * _INV_SQRT_2PI
    gaps, bounds, tols, radii = [0.0], [0.0], [_FLOAT_SLACK], [0.0]
    for t in range(1, T + 1):
        r_t = accountant.radius_schedule(reg, t)
        interval = _ball_interval(grid, r_t)
        mu = mu @ mix_noise @ projection_kernel(grid, interval)
        mu_free = mu_free @ mix_noise
        gaps.append(total_variation(mu, mu_free))
        bounds.append(1.0 - hold**t)
        tols.append(t * per_step + _FLOAT_SLACK)
        radii.append(r_t)
    slack = np.array(gaps) - np.array(bounds)
    excess = slack - np.array(tols)
    # t = 0 is trivially tight; report the worst step after it.
    worst = 1 + int(np.argmax(excess[1:])) if T >= 1 else 0
    passed = bool(np.all(excess <= 0))
    # Mass the unprojected process pushes into the boundary cells.
    truncation = float(mu_free[0] + mu_free[-1])
    return VerificationReport(
        check="coupling",
        params={
            "data": prob.data,
            "loss": prob.loss,
            "eta": prob.eta,
            "C": prob.C,
            "lam": prob.lam,
            "sampling": _scheme_params(scheme),
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "kappa": kappa,
            "T": T,
        },
        max_slack=float(slack[worst]),
        tolerance=float(tols[worst]),
        passed=passed,
        witness=None if passed else {"t": worst, "tv": gaps[worst], "bound": bounds[worst]},
        details={"tv": gaps, "bound": bounds, "radii": radii, "boundary_mass": truncation},
    )


def verify_regularized_dpi(
    prob: ToyProblem,
    prob_prime: ToyProblem,
    scheme: SamplingScheme,
    grid: Grid1D,
    sigma: float,
    kappa: float,
    t: int,
    eps: float,
    trials: int = 100,
    seed: int = 0,
    diameter_factor: float = 1.0,
) -> VerificationReport:
    """Per-step inequality of the projected companion of regularized DP-SGD.

    Inputs live on [-r_{t-1}, r_{t-1}] and outputs are projected onto
    [-r_t, r_t]. The right-hand side uses theta at
    ``diameter_factor * (r_t - sigma kappa) / sigma``. The stated constant
    corresponds to factor 1. The input-image set is a ball of radius
    r_t - sigma kappa, whose diameter corresponds to factor 2.
    """
    _check_neighbors(prob, prob_prime)
    if t < 2:
        raise ValueError("need t >= 2 so that the input ball is non-degenerate")
    reg = accountant.RegularizedConfig(
        base=SgdBoundConfig(D=0.0, C=prob.C, eta=prob.eta, sigma=sigma, sampling=scheme),
        lam=prob.lam,
        d=1,
        kappa=kappa,
    )
    r_prev = accountant.radius_schedule(reg, t - 1)
    r_t = accountant.radius_schedule(reg, t)
    inner = _ball_interval(grid, r_prev)
    outer = _ball_interval(grid, r_t)
    support = np.flatnonzero(grid.inside(inner))
    noise = gaussian_kernel(grid, sigma)
    K = mixture_kernel(prob, scheme, grid) @ noise @ projection_kernel(grid, outer)
    Kp = mixture_kernel(prob_prime, scheme, grid) @ noise @ projection_kernel(grid, outer)

    rng = np.random.default_rng(seed)
    mus = random_measures(rng, support, trials, grid.n_cells)
    nus = random_measures(rng, support, trials, grid.n_cells)
    # Widening r_{t-1} to a cell boundary grows the image radius by < h.
    widened = (1.0 - prob.lam) * (inner[1] - r_prev) + grid.h
    ratio = diameter_factor * ((1.0 - prob.lam) * r_prev + prob.eta * prob.C) / sigma
    th = theta(eps, ratio)
    q = scheme.rate
    before = hs_divergence_batch(mus, nus, eps)
    after = hs_divergence_batch(mus @ K, nus @ Kp, eps)
    rhs = (1.0 - q) * th * before + q * th
    slack = after - rhs
    tol = grid_allowance(ratio, diameter_factor * widened, sigma, eps) + _FLOAT_SLACK
    worst = int(np.argmax(slack))
    passed = bool(slack[worst] <= tol)
    return VerificationReport(
        check="regularized_dpi",
        params={
            "data": prob.data,
            "data_prime": prob_prime.data,
            "loss": prob.loss,
            "eta": prob.eta,
            "C": prob.C,
            "lam": prob.lam,
            "sampling": _scheme_params(scheme),
            "grid": dataclasses.asdict(grid),
            "sigma": sigma,
            "kappa": kappa,
            "t": t,
            "eps": eps,
            "diameter_factor": diameter_factor,
            "trials": trials,
            "seed": seed,
        },
        max_slack=float(slack[worst]),
        tolerance=tol,
        passed=passed,
        witness=None if passed else {"mu": mus[worst], "nu": nus[worst],
                                     "lhs": after[worst], "rhs": rhs[worst]},
        details={"theta": th, "violations": int(np.sum(slack > tol))},
    )
