"""(eps, delta) bounds for projected and regularized DP-SGD with a hidden state.

The projected bound is the geometric sum obtained by composing the per-step
inequality E(K mu || K' nu) <= (1 - p) theta E(mu || nu) + p theta over T
steps. Here theta = theta_eps((D + 2 eta C) / sigma). The regularized bound
adds a coupling term that accounts for a projection onto growing balls.
"""

import dataclasses
import math
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from hidden_dpsgd import specfun
from hidden_dpsgd.hockey_stick import log_theta, theta

INFINITE = math.inf

_BISECT_TOL = 1e-9
_BISECT_MAX_ITER = 200
_KAPPA_GRID_SIZE = 256
_KAPPA_GRID_PROBS = (0.5, 1.0 - 1e-15)
_GOLDEN_REL_WIDTH = 1e-6


@dataclasses.dataclass(frozen=True)
class SamplingScheme:
    """Poisson sampling with rate ``p``, or uniform size-``b`` batches out of ``n``."""

    kind: str
    p: Optional[float] = None
    b: Optional[int] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.kind == "poisson":
            if self.p is None or not (0.0 < self.p < 1.0):
                raise ValueError(f"Poisson rate must lie in (0, 1), got {self.p!r}")
        elif self.kind == "without_replacement":
            if self.b is None or self.n is None:
                raise ValueError("sampling without replacement needs b and n")
            if int(self.b) != self.b or int(self.n) != self.n:
                raise ValueError("b and n must be integers")
            if not (1 <= self.b <= self.n):
                raise ValueError(f"need 1 <= b <= n, got b={self.b}, n={self.n}")
        else:
            raise ValueError(f"unknown sampling kind {self.kind!r}")

    @classmethod
    def poisson(cls, p: float) -> "SamplingScheme":
        return cls("poisson", p=p)

    @classmethod
    def without_replacement(cls, b: int, n: int) -> "SamplingScheme":
        return cls("without_replacement", b=int(b), n=int(n))

    @classmethod
    def from_rate(cls, p: float, max_n: int = 10**6) -> "SamplingScheme":
        """Without-replacement scheme whose b/n is the closest fraction to ``p``."""
        frac = Fraction(p).limit_denominator(max_n)
        return cls.without_replacement(frac.numerator, frac.denominator)

    @property
    def rate(self) -> float:
        if self.kind == "poisson":
            return self.p
        return self.b / self.n


@dataclasses.dataclass(frozen=True)
class SgdBoundConfig:
    """Scalars of projected DP-SGD.

    Attributes:
      D: diameter of the parameter set.
      C: clipping constant.
      eta: learning rate.
      sigma: noise scale; 0 means no noise (theta = 1 unless D = C = 0).
      sampling: batch sampling scheme.
      T: number of iterations.
    """

    D: float
    C: float
    eta: float
    sigma: float
    sampling: SamplingScheme
    T: int = 1

    def __post_init__(self):
        if self.D < 0:
            raise ValueError(f"D must be non-negative, got {self.D!r}")
        if self.C < 0 or self.eta < 0 or self.sigma < 0:
            raise ValueError("C, eta and sigma must be non-negative")
        if int(self.T) != self.T or self.T < 0:
            raise ValueError(f"T must be a non-negative integer, got {self.T!r}")

    @property
    def p(self) -> float:
        return self.sampling.rate

    @property
    def sensitivity_ratio(self) -> float:
        """r = (D + 2 eta C) / sigma, the argument of theta."""
        spread = self.D + 2.0 * self.eta * self.C
        if spread == 0:
            return 0.0
        if self.sigma == 0:
            return math.inf
        return spread / self.sigma

    def theta(self, eps: float) -> float:
        return theta(eps, self.sensitivity_ratio)

    def with_T(self, T: int) -> "SgdBoundConfig":
        return dataclasses.replace(self, T=T)


@dataclasses.dataclass(frozen=True)
class RegularizedConfig:
    """Regularized (unprojected) DP-SGD; ``base.D`` is ignored.

    ``kappa`` is either a positive float or ``"auto"`` for numerical
    optimization of the bound.

    By default theta_s is evaluated at (r_s - sigma kappa) / sigma, the radius
    of the ball holding the update images. That set has diameter
    2 (r_s - sigma kappa). With ``use_diameter=True`` theta_s takes the
    diameter instead, which is the value the grid oracle certifies for the
    per-step inequality.
    """

    base: SgdBoundConfig
    lam: float
    d: int = 1
    kappa: Union[float, str] = "auto"
    use_diameter: bool = False

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if self.kappa != "auto" and not (self.kappa > 0):
            raise ValueError(f"kappa must be positive or 'auto', got {self.kappa!r}")
        if self.base.sigma <= 0:
            raise ValueError("regularized bound needs sigma > 0")


@dataclasses.dataclass(frozen=True)
class BoundStep:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError(f"alpha, beta must lie in [0, 1], got {self.alpha!r}, {self.beta!r}")


@dataclasses.dataclass(frozen=True)
class PrivacyPoint:
    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps >= 0):
            raise ValueError(f"eps must be non-negative, got {self.eps!r}")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError(f"delta must lie in [0, 1], got {self.delta!r}")


def compose_linear_bounds(steps: Sequence[BoundStep], initial: float) -> float:
    """Unrolls delta_t <= alpha_t delta_{t-1} + beta_t from delta_0 = ``initial``.

    Equals prod(alpha) * initial + sum_t beta_t prod_{s > t} alpha_s.
    """
    if not (0.0 <= initial <= 1.0):
        raise ValueError(f"initial must lie in [0, 1], got {initial!r}")
    value = initial
    for step in steps:
        if not isinstance(step, BoundStep):
            step = BoundStep(*step)
        value = step.alpha * value + step.beta
    return min(1.0, max(0.0, value))


def projected_bound_from_theta(theta_value: float, p: float, T: int) -> float:
    """Geometric-sum bound (1 - [(1-p) theta]^T) / (1 - (1-p) theta) * p theta."""
    if T == 0 or theta_value == 0:
        return 0.0
    ratio = (1.0 - p) * theta_value
    if ratio == 1.0:
        return min(1.0, T * p * theta_value)
    # -expm1(T log ratio) keeps 1 - ratio^T accurate when ratio^T is near 1.
    head = -math.expm1(T * math.log(ratio)) if ratio > 0 else 1.0
    return min(1.0, head / (1.0 - ratio) * p * theta_value)


def delta_projected(cfg: SgdBoundConfig, eps: float) -> float:
    """Delta after ``cfg.T`` steps of projected DP-SGD at privacy level ``eps``.

    Poisson sampling and sampling without replacement share this bound with
    p = b / n in the latter case.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    return projected_bound_from_theta(cfg.theta(eps), cfg.p, cfg.T)


def delta_limit(cfg: SgdBoundConfig, eps: float) -> float:
    """T -> infinity limit p theta / (1 - (1 - p) theta)."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    th = cfg.theta(eps)
    if th == 0:
        return 0.0
    p = cfg.p
    return min(1.0, p * th / (1.0 - (1.0 - p) * th))


def eps_closed_form_bound(cfg: SgdBoundConfig, delta: float) -> float:
    """Closed-form upper bound r [r/2 + Phi^-1(p(1-delta) / (p + (1-p) delta))] on the limit eps."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    p = cfg.p
    r = cfg.sensitivity_ratio
    arg = p * (1.0 - delta) / (p + (1.0 - p) * delta)
    if not (0.0 < arg < 1.0):
        raise ValueError(f"quantile argument {arg!r} outside (0, 1)")
    if math.isinf(r):
        raise ValueError("closed-form bound undefined for sigma = 0")
    return max(0.0, r * (0.5 * r + specfun.std_normal_quantile(arg)))


def _bisect_decreasing(f, target, lo, hi):
    """Root of a decreasing f(x) = target on [lo, hi] with f(lo) > target."""
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo <= _BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eps_from_delta(
    cfg: SgdBoundConfig, delta: float, horizon: Union[int, float] = INFINITE
) -> float:
    """Smallest eps whose delta bound is at most ``delta``.

    With an infinite horizon this solves theta_eps(r) = delta / (p + (1-p) delta).
    With a finite horizon T it inverts the T-step geometric-sum bound. Both
    bounds are strictly decreasing in eps, so bisection is well posed. Returns
    0 when ``delta`` is already met at eps = 0.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    p = cfg.p
    if math.isinf(horizon):
        target = delta / (p + (1.0 - p) * delta)
        f = cfg.theta
    else:
        fixed = cfg.with_T(int(horizon))
        target = delta
        f = lambda e: delta_projected(fixed, e)  # noqa: E731
    if f(0.0) <= target:
        return 0.0
    if math.isinf(cfg.sensitivity_ratio):
        raise ValueError("no finite eps achieves delta < 1 without noise")
    try:
        hi = eps_closed_form_bound(cfg, delta)
    except ValueError:
        hi = 1.0
    hi = max(hi, 1e-6)
    while f(hi) > target:
        hi *= 2.0
    return _bisect_decreasing(f, target, 0.0, hi)


def radius_schedule(reg: RegularizedConfig, t: int, kappa: Optional[float] = None) -> float:
    """r_t = (eta C + kappa sigma) (1 - (1 - lambda)^t) / lambda."""
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    kappa = _explicit_kappa(reg, kappa)
    base = reg.base
    return (base.eta * base.C + kappa * base.sigma) * -math.expm1(t * math.log1p(-reg.lam)) / reg.lam


def _explicit_kappa(reg, kappa):
    if kappa is None:
        kappa = reg.kappa
    if kappa == "auto" or not (kappa > 0):
        raise ValueError(f"an explicit positive kappa is required, got {kappa!r}")
    return float(kappa)


def _check_regularized(reg: RegularizedConfig):
    s = reg.base.sampling
    if s.kind != "without_replacement":
        raise ValueError("regularized bound is stated for sampling without replacement")
    if s.b >= s.n:
        raise ValueError(f"regularized bound needs b < n, got b={s.b}, n={s.n}")
    if reg.base.T < 1:
        raise ValueError("regularized bound needs T >= 1")


def _step_ratios(reg: RegularizedConfig, T: int):
    """(r_s - sigma kappa) / sigma for s = 1..T, via r_s - sigma kappa = (1-lambda) r_{s-1} + eta C.

    Doubled when ``reg.use_diameter`` is set.
    """
    base = reg.base
    kappa = float(reg.kappa)
    scale = 2.0 if reg.use_diameter else 1.0
    r_prev = 0.0
    out = []
    for s in range(1, T + 1):
        out.append(scale * ((1.0 - reg.lam) * r_prev + base.eta * base.C) / base.sigma)
        r_prev = radius_schedule(reg, s, kappa)
    return out


def coupling_term(reg: RegularizedConfig, eps: float, kappa: float, T: int) -> float:
    """(1 + e^eps) [1 - P(chi^2_d <= kappa^2)^T]."""
    sf = specfun.chi2_sf(reg.d, kappa * kappa)
    miss = -math.expm1(T * math.log1p(-sf)) if sf < 1.0 else 1.0
    return (1.0 + math.exp(eps)) * miss


def _log_theta_sum(reg: RegularizedConfig, eps: float, T: int) -> float:
    """ln sum_{t=1}^T (1 - b/n)^{T-t} prod_{s=t}^T theta_s, by the recursion
    S_T = theta_T (1 + (1 - b/n) S_{T-1}) carried out in log space."""
    log_keep = math.log1p(-reg.base.sampling.rate)
    log_s = -math.inf
    for ratio in _step_ratios(reg, T):
        log_s = log_theta(eps, ratio) + np.logaddexp(0.0, log_keep + log_s)
    return float(log_s)


@dataclasses.dataclass(frozen=True)
class RegularizedBound:
    """Terms of the regularized bound at one (eps, kappa, T).

    ``delta`` is the stated bound (sum prefactor b / (n - b)). ``composed_delta``
    composes the per-step constants directly (prefactor b / n) and is never
    larger.
    """

    delta: float
    coupling: float
    theta_sum: float
    composed_delta: float
    kappa: float


def regularized_terms(reg: RegularizedConfig, eps: float, kappa: Optional[float] = None) -> RegularizedBound:
    _check_regularized(reg)
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps!r}")
    kappa = _explicit_kappa(reg, kappa)
    reg = dataclasses.replace(reg, kappa=kappa)
    T = reg.base.T
    s = reg.base.sampling
    coupling = coupling_term(reg, eps, kappa, T)
    theta_sum = math.exp(_log_theta_sum(reg, eps, T))
    return RegularizedBound(
        delta=coupling + s.b / (s.n - s.b) * theta_sum,
        coupling=coupling,
        theta_sum=theta_sum,
        composed_delta=coupling + s.b / s.n * theta_sum,
        kappa=kappa,
    )


def delta_regularized(reg: RegularizedConfig, eps: float, kappa: Optional[float] = None) -> float:
    """Delta bound of regularized DP-SGD after ``reg.base.T`` steps at a fixed kappa.

    The value is not clipped to 1; it lies in [0, 1 + e^eps].
    """
    return regularized_terms(reg, eps, kappa).delta


def kappa_grid(d: int, size: int = _KAPPA_GRID_SIZE) -> np.ndarray:
    """Log-spaced kappa values whose squares span chi^2_d quantiles 0.5 .. 1 - 1e-15."""
    lo = math.sqrt(specfun.chi2_quantile(d, _KAPPA_GRID_PROBS[0]))
    hi = math.sqrt(specfun.chi2_quantile(d, _KAPPA_GRID_PROBS[1]))
    return np.geomspace(lo, hi, size)


def _golden_section(f, lo, hi, rel_width):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > rel_width * 0.5 * (hi + lo):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def delta_regularized_optimized(reg: RegularizedConfig, eps: float) -> Tuple[float, float]:
    """Minimizes the regularized bound over kappa.

    A 256-point log grid guards against local minima; golden-section search
    then refines between the neighbours of the best grid point.

    Returns:
      (delta, kappa_star), where delta is no larger than the bound at any grid kappa.
    """
    _check_regularized(reg)
    f = lambda k: delta_regularized(reg, eps, k)  # noqa: E731
    grid = kappa_grid(reg.d)
    values = [f(k) for k in grid]
    i = int(np.argmin(values))
    best_k, best_v = float(grid[i]), values[i]
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    k, v = _golden_section(f, lo, hi, _GOLDEN_REL_WIDTH)
    if v < best_v:
        best_k, best_v = k, v
    return best_v, best_k
