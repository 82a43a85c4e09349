"""Hockey-stick divergence on finite supports and the Gaussian contraction.

``theta(eps, r)`` is the hockey-stick divergence between N(0, 1) and N(r, 1).
It is also the contraction coefficient of a Gaussian kernel whose inputs are
confined to a set of diameter ``r * sigma``.
"""

import dataclasses
import math
from typing import Sequence, Union

import numpy as np

from hidden_dpsgd import specfun

_MASS_TOL = 1e-12
# Negative round-off below this magnitude is treated as an exact zero.
_ROUND_OFF = 1e-15


@dataclasses.dataclass(frozen=True)
class DiscreteDist:
    """Probability masses on a strictly increasing list of atoms."""

    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if atoms.ndim != 1 or atoms.shape != masses.shape:
            raise ValueError("atoms and masses must be 1-D arrays of equal length")
        if atoms.size and np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(masses < 0):
            raise ValueError("masses must be non-negative")
        if abs(masses.sum() - 1.0) > _MASS_TOL:
            raise ValueError(f"masses sum to {masses.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def dirac(cls, atom: float) -> "DiscreteDist":
        return cls(np.array([atom]), np.array([1.0]))

    def on(self, atoms: np.ndarray) -> np.ndarray:
        """Masses re-expressed on a superset of atoms, zero-padded."""
        atoms = np.asarray(atoms, dtype=float)
        idx = np.searchsorted(atoms, self.atoms)
        if np.any(idx >= atoms.size) or np.any(atoms[np.minimum(idx, atoms.size - 1)] != self.atoms):
            raise ValueError("target atoms do not contain the support")
        out = np.zeros(atoms.size)
        out[idx] = self.masses
        return out


def align(mu: DiscreteDist, nu: DiscreteDist):
    """Returns (atoms, mu_masses, nu_masses) on the sorted union of supports.

    Atoms are matched by exact coordinate equality.
    """
    atoms = np.union1d(mu.atoms, nu.atoms)
    return atoms, mu.on(atoms), nu.on(atoms)


Measure = Union[DiscreteDist, Sequence[float], np.ndarray]


def _as_masses(mu: Measure, nu: Measure):
    if isinstance(mu, DiscreteDist) and isinstance(nu, DiscreteDist):
        _, p, q = align(mu, nu)
        return p, q
    if isinstance(mu, DiscreteDist) or isinstance(nu, DiscreteDist):
        raise ValueError("cannot mix DiscreteDist with bare mass vectors")
    p = np.asarray(mu, dtype=float)
    q = np.asarray(nu, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"mass vectors have shapes {p.shape} and {q.shape}")
    return p, q


def hs_divergence(mu: Measure, nu: Measure, eps: float) -> float:
    """E_eps(mu || nu) = sum_i max(mu_i - e^eps nu_i, 0).

    ``mu`` and ``nu`` are either two DiscreteDist (aligned on the union of their
    atoms) or two mass vectors indexed by the same support.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    p, q = _as_masses(mu, nu)
    return float(min(1.0, np.maximum(p - math.exp(eps) * q, 0.0).sum()))


def hs_divergence_batch(p: np.ndarray, q: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise E_eps for stacked mass vectors (last axis is the support)."""
    return np.maximum(p - math.exp(eps) * q, 0.0).sum(axis=-1)


def total_variation(mu: Measure, nu: Measure) -> float:
    p, q = _as_masses(mu, nu)
    return 0.5 * float(np.abs(p - q).sum())


def _check_theta_args(eps, r):
    if not (eps >= 0):
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    if not (r >= 0):
        raise ValueError(f"r must be non-negative, got {r!r}")


def _theta_parts(eps, r):
    """Returns (ln Q(a), x) with theta = Q(a) * (-expm1(x)), or None if theta == 0.

    Uses e^eps phi(b) = phi(a) for a = eps/r - r/2, b = a + r, so the e^eps
    factor cancels against the Gaussian exponents and never overflows.
    """
    a = eps / r - 0.5 * r
    if math.isinf(a):
        return None
    b = eps / r + 0.5 * r
    x = min(0.0, specfun._log_q_rest(b) - specfun._log_q_rest(a))
    return specfun.log_q_tail(a), x


def theta(eps: float, r: float) -> float:
    """theta_eps(r) = Q(eps/r - r/2) - e^eps Q(eps/r + r/2), clamped to [0, 1].

    ``r = 0`` gives 0; ``r = inf`` (the sigma = 0 convention) gives 1.
    """
    _check_theta_args(eps, r)
    if r == 0:
        return 0.0
    if math.isinf(r):
        return 1.0
    parts = _theta_parts(eps, r)
    if parts is None:
        return 0.0
    log_qa, x = parts
    val = math.exp(log_qa) * -math.expm1(x)
    if -_ROUND_OFF < val < 0:
        val = 0.0
    return min(1.0, max(0.0, val))


def log_theta(eps: float, r: float) -> float:
    """Natural log of ``theta(eps, r)``; -inf when theta is exactly zero.

    Stays finite when theta itself underflows, e.g. theta_5(0.02) ~ 1e-13578.
    """
    _check_theta_args(eps, r)
    if r == 0:
        return -math.inf
    if math.isinf(r):
        return 0.0
    parts = _theta_parts(eps, r)
    if parts is None:
        return -math.inf
    log_qa, x = parts
    if x == 0.0:
        return -math.inf
    return min(0.0, log_qa + math.log(-math.expm1(x)))


def gaussian_contraction(diameter: float, sigma: float, eps: float) -> float:
    """Contraction coefficient of N(., sigma^2 I) restricted to a set of given diameter."""
    if not (sigma > 0):
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if diameter < 0:
        raise ValueError(f"diameter must be non-negative, got {diameter!r}")
    return theta(eps, diameter / sigma)
