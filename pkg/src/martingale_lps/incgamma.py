"""Regularized incomplete gamma functions and their safeguarded inversion.

``P(a, x)`` uses the power series below ``x = a + 1`` and ``Q(a, x)`` the
Legendre continued fraction (modified Lentz) above it; the complementary
function comes from ``log1p``.  Both are returned in log form so that tiny
tails such as ``2^-(q^2 (k+2))`` keep full relative precision.
"""

from __future__ import annotations

import math

from .errors import AccuracyError, DomainError

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 10_000


def _log_prefactor(a: float, x: float) -> float:
    # log(x^a e^-x / Gamma(a))
    return a * math.log(x) - x - math.lgamma(a)


def _log_series_p(a: float, x: float) -> float:
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            return _log_prefactor(a, x) + math.log(total)
    raise AccuracyError(f"P({a}, {x}) series did not converge")


def _log_cf_q(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
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
        if abs(delta - 1.0) < _EPS:
            return _log_prefactor(a, x) + math.log(h)
    raise AccuracyError(f"Q({a}, {x}) continued fraction did not converge")


def _check(a: float, x: float) -> None:
    if not a > 0:
        raise DomainError(f"shape a={a} must be > 0")
    if not x >= 0:
        raise DomainError(f"x={x} must be >= 0")


def log_gammainc_lower(a: float, x: float) -> float:
    """``log P(a, x)``, ``P`` the regularized lower incomplete gamma function."""
    _check(a, x)
    if x == 0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return _log_series_p(a, x)
    return math.log1p(-math.exp(_log_cf_q(a, x)))


def log_gammainc_upper(a: float, x: float) -> float:
    """``log Q(a, x) = log(1 - P(a, x))``."""
    _check(a, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < a + 1.0:
        return math.log1p(-math.exp(_log_series_p(a, x)))
    return _log_cf_q(a, x)


def gammainc_lower(a: float, x: float) -> float:
    return math.exp(log_gammainc_lower(a, x))


def gammainc_upper(a: float, x: float) -> float:
    return math.exp(log_gammainc_upper(a, x))


def _log_density(a: float, x: float) -> float:
    # log of x^(a-1) e^-x / Gamma(a)
    return (a - 1.0) * math.log(x) - x - math.lgamma(a)


def _safeguarded_newton(g, dg, lo, hi, x0, tol, max_iter=200):
    """Root of the increasing function ``g`` on ``[lo, hi]`` (``g(lo) < 0 < g(hi)``)."""
    x = min(max(x0, lo), hi)
    for _ in range(max_iter):
        gx = g(x)
        if abs(gx) <= tol:
            return x
        if gx < 0:
            lo = x
        else:
            hi = x
        slope = dg(x)
        step = x - gx / slope if slope > 0 and math.isfinite(slope) else math.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * math.ulp(max(abs(lo), abs(hi))):
            return x
    raise AccuracyError("safeguarded Newton did not converge", achieved=abs(g(x)))


def inverse_lower(a: float, log_target: float, tol: float = 1e-14) -> float:
    """Solve ``log P(a, x) = log_target`` for ``x``.

    Seeded by the small-``x`` expansion ``P ~ x^a / Gamma(a + 1)``; Newton
    runs in ``y = ln x`` where ``log P`` is nearly linear with slope ``a``.
    """
    if not log_target < 0:
        raise DomainError("target probability must lie in (0, 1)")

    def g(y):
        return log_gammainc_lower(a, math.exp(y)) - log_target

    def dg(y):
        x = math.exp(y)
        return math.exp(_log_density(a, x) + y - log_gammainc_lower(a, x))

    y0 = (log_target + math.lgamma(a + 1.0)) / a
    lo, hi = y0 - 1.0, y0 + 1.0
    while g(lo) > 0:
        lo -= 2.0 * (y0 - lo + 1.0)
    while g(hi) < 0:
        hi += 2.0 * (hi - y0 + 1.0)
    return math.exp(_safeguarded_newton(g, dg, lo, hi, y0, tol))


def inverse_upper(a: float, log_target: float, tol: float = 1e-14) -> float:
    """Solve ``log Q(a, x) = log_target`` for ``x``.

    Seeded by the asymptotic ``x - (a - 1) ln x = -log_target - ln Gamma(a)``,
    solved by fixed-point iteration.
    """
    if not log_target < 0:
        raise DomainError("target probability must lie in (0, 1)")
    rhs = -log_target - math.lgamma(a)
    x0 = max(rhs, 1.0)
    for _ in range(50):
        x0 = max(rhs + (a - 1.0) * math.log(x0), 1e-3)

    # g increasing in x: log_target - log Q
    def g(x):
        return log_target - log_gammainc_upper(a, x)

    def dg(x):
        return math.exp(_log_density(a, x) - log_gammainc_upper(a, x))

    lo, hi = 0.5 * x0, 2.0 * x0 + 1.0
    while lo > 0 and g(lo) > 0:
        lo *= 0.5
    while g(hi) < 0:
        hi *= 2.0
    return _safeguarded_newton(g, dg, lo, hi, x0, tol)
