"""Scalar special functions used by the privacy bounds.

Everything here is a plain function of floats. The Gaussian tail is taken
from ``math.erfc`` in the bulk and from its asymptotic expansion far in the
tail, so that ``log_q_tail`` stays finite where ``q_tail`` underflows.
"""

import math

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Beyond this point ln Q(t) comes from the asymptotic series.
_ASYMPTOTIC_FROM = 8.0

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


def _check_finite(t, name="t"):
    if not math.isfinite(t):
        raise ValueError(f"{name} must be finite, got {t!r}")


def q_tail(t: float) -> float:
    """Standard normal upper tail Q(t) = P(Z > t)."""
    _check_finite(t)
    return 0.5 * math.erfc(t / _SQRT2)


def _tail_series(t: float) -> float:
    """Sum of 1 - 1/t^2 + 3/t^4 - ..., truncated at its smallest term."""
    inv_t2 = 1.0 / (t * t)
    total = 1.0
    term = 1.0
    k = 1
    while True:
        nxt = -term * (2 * k - 1) * inv_t2
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        total += nxt
        term = nxt
        k += 1
    return total


def _log_q_rest(t: float) -> float:
    """Returns ln Q(t) + t^2/2, which never overflows for finite t."""
    if t < _ASYMPTOTIC_FROM:
        return math.log(q_tail(t)) + 0.5 * t * t
    return -math.log(t) - _LOG_SQRT_2PI + math.log(_tail_series(t))


def log_q_tail(t: float) -> float:
    """Natural log of the standard normal upper tail.

    For ``t >= 8`` this uses Q(t) = phi(t)/t * (1 - 1/t^2 + 3/t^4 - ...), so the
    result is finite far past the point where ``q_tail`` underflows to zero.
    """
    _check_finite(t)
    if t < _ASYMPTOTIC_FROM:
        return math.log(q_tail(t))
    return _log_q_rest(t) - 0.5 * t * t


def _log_norm_cdf(x: float) -> float:
    return log_q_tail(-x)


def std_normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF.

    Bisection on the (log) CDF down to a bracket of width 1e-12, followed by a
    single Newton step. Values above 1/2 are mapped through the symmetry
    Phi^-1(p) = -Phi^-1(1 - p), which is exact in floating point there.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if p > 0.5:
        return -std_normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    log_p = math.log(p)
    lo, hi = -40.0, 0.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _log_norm_cdf(mid) < log_p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    log_cdf = _log_norm_cdf(x)
    log_pdf = -0.5 * x * x - _LOG_SQRT_2PI
    return x - (log_cdf - log_p) / math.exp(log_pdf - log_cdf)


def _gamma_series(a, x):
    # Lower regularized incomplete gamma P(a, x), valid for x < a + 1.
    if x == 0.0:
        # x / 2 underflowed.
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a, x):
    # Upper regularized incomplete gamma Q(a, x) by modified Lentz, x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _check_chi2_args(d, x):
    if int(d) != d or d < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {d!r}")
    if not (x >= 0.0):
        raise ValueError(f"x must be non-negative, got {x!r}")


def chi2_cdf(d: int, x: float) -> float:
    """P(chi^2_d <= x) through the regularized lower incomplete gamma function."""
    _check_chi2_args(d, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a, y = 0.5 * d, 0.5 * x
    if y < a + 1.0:
        return _gamma_series(a, y)
    return 1.0 - _gamma_cont_frac(a, y)


def chi2_sf(d: int, x: float) -> float:
    """P(chi^2_d > x), computed directly so the far tail keeps relative accuracy."""
    _check_chi2_args(d, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a, y = 0.5 * d, 0.5 * x
    if y < a + 1.0:
        return 1.0 - _gamma_series(a, y)
    return _gamma_cont_frac(a, y)


def chi2_quantile(d: int, prob: float) -> float:
    """Inverse of ``chi2_cdf(d, .)`` by bisection; ``prob`` in (0, 1)."""
    if not (0.0 < prob < 1.0):
        raise ValueError(f"prob must lie in (0, 1), got {prob!r}")
    _check_chi2_args(d, 0.0)
    # Work on the survival function so quantiles near 1 stay resolvable.
    tail = 1.0 - prob
    lo, hi = 0.0, max(1.0, 2.0 * d)
    while chi2_sf(d, hi) > tail:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_sf(d, mid) > tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)
