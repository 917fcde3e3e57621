"""Littlewood-Paley g-functions of the martingale semigroups.

For ``f`` of depth ``n`` the semigroup derivative is a finite exponential sum,
and ``G^T(f)^2`` collapses to the quadratic form ``v^T B v`` in the
differences ``v = (dE_2 f, ..., dE_n f)`` with

    B_ij = b_i b_j / (b_i + b_j)^2 = 1 / (rho + 1/rho + 2),   rho = b_i / b_j.

The vector-valued ``G_q^T`` has no closed form and is integrated in
``u = ln t`` with panels aligned to the scales ``1/b_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import special

from .errors import AccuracyError, ConfigurationError, DomainError
from .probability import MartingaleFunction, lp_norm, martingale_differences, square_function_from
from .quadrature import integrate_panels
from .semigroup import SubordinationSequence, theorem_a_sequence

__all__ = [
    "LOWER_CONSTANT",
    "UPPER_CONSTANT",
    "KernelMatrix",
    "kernel_matrix",
    "gfunction_closed_form",
    "gfunction_squared",
    "gfunction_quadrature",
    "GershgorinInterval",
    "gershgorin_bounds",
    "eigen_range",
    "SandwichReport",
    "verify_theorem_a",
]

LOWER_CONSTANT = 7.0 / 60.0
UPPER_CONSTANT = 23.0 / 60.0


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric ``(n-1) x (n-1)`` kernel indexed by difference levels ``2..n``."""

    entries: np.ndarray
    scales: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _check_seq(seq: SubordinationSequence, depth: int) -> None:
    if seq.depth < depth - 1:
        raise ConfigurationError(f"sequence depth {seq.depth} < {depth - 1} needed for depth {depth}")


def kernel_matrix(seq: SubordinationSequence, n: int) -> KernelMatrix:
    """Kernel of the depth-``n`` quadratic form, built only from ratios of exponents."""
    if n < 2:
        raise DomainError(f"n={n}: the kernel needs at least two levels")
    _check_seq(seq, n)
    y = seq.b[1:n]
    with np.errstate(over="ignore"):
        rho = y[:, None] / y[None, :]
        B = 1.0 / (rho + 1.0 / rho + 2.0)
    np.fill_diagonal(B, 0.25)
    B = 0.5 * (B + B.T)
    B.flags.writeable = False
    return KernelMatrix(B, y.copy())


def _differences_above_first(f: MartingaleFunction) -> np.ndarray:
    return martingale_differences(f)[1:]


def gfunction_squared(seq: SubordinationSequence, f: MartingaleFunction) -> np.ndarray:
    """Per-atom ``v^T B v`` for scalar ``f``."""
    if not f.is_scalar:
        raise DomainError("closed form is scalar only; use gfunction_quadrature")
    depth = f.filtration.depth
    if depth < 2:
        return np.zeros(f.filtration.atom_count)
    B = kernel_matrix(seq, depth).entries
    v = _differences_above_first(f)[:, :, 0]            # (n-1, atoms)
    return np.maximum(np.einsum("ia,ij,ja->a", v, B, v), 0.0)


def gfunction_closed_form(seq: SubordinationSequence, f: MartingaleFunction) -> np.ndarray:
    """``G^T(f)`` per atom via the kernel quadratic form."""
    return np.sqrt(gfunction_squared(seq, f))


def _tail_bounds(norms_q, lnb, lo, hi, q, K, truncated):
    # |sum_k c_k v_k|^q <= K^(q-1) sum_k c_k^q |v_k|^q, with c = s e^-s
    s_lo = np.exp(lo + lnb)
    left = (s_lo[:, None] ** q / q * norms_q).sum(axis=0)
    if truncated:
        right = np.zeros_like(left)
    else:
        s_hi = np.exp(hi + lnb)
        tail = special.gammaincc(q, q * s_hi) * special.gamma(q) / q**q
        right = (tail[:, None] * norms_q).sum(axis=0)
    return K ** (q - 1) * (left + right)


def gfunction_quadrature(
    seq: SubordinationSequence,
    f: MartingaleFunction,
    q: float = 2.0,
    M: Optional[float] = None,
    rtol: float = 1e-9,
    full_output: bool = False,
):
    """``G_q^T(f)`` per atom by adaptive quadrature.

    Integrates ``||sum_k t b_k e^{-t b_k} dE_{k+1} f||_X^q dt/t`` over
    ``(0, inf)``, or over ``(0, M]`` when ``M`` is given (the truncated
    ``G_{q,M}``).  The integration variable is ``u = ln t`` and panels start
    at width at most one unit with breaks at every ``-ln b_k``.  The neglected
    tails are bounded analytically and included in the reported error.

    With ``full_output`` returns ``(values, info)`` where ``info`` holds the
    per-atom error bound on ``G^q`` and evaluation counts.
    """
    if not q >= 1:
        raise DomainError(f"q={q} must be >= 1")
    if M is not None and not M > 0:
        raise DomainError("M must be > 0")
    depth = f.filtration.depth
    A = f.filtration.atom_count
    if depth < 2:
        out = np.zeros(A)
        return (out, {"error": np.zeros(A), "evaluations": 0, "panels": 0}) if full_output else out
    _check_seq(seq, depth)
    d = _differences_above_first(f)                         # (K, A, m)
    K = d.shape[0]
    lnb = np.log(seq.b[1:depth])
    norms_q = f.fiber_norm(d) ** q                          # (K, A)

    s_low = 1e-18 ** (1.0 / q) / (K ** ((q - 1) / q))
    s_high = (60.0 + 4.0 * q) / q
    lo = math.log(s_low) - lnb[-1]
    hi = math.log(s_high) - lnb[0]
    truncated = M is not None and math.log(M) < hi
    if truncated:
        hi = math.log(M)
        lo = min(lo, hi - 1.0)
    n_grid = max(2, int(math.ceil(hi - lo)) + 1)
    breaks = -lnb[(-lnb > lo) & (-lnb < hi)]
    edges = np.unique(np.concatenate([np.linspace(lo, hi, n_grid), breaks]))

    def integrand(u):
        ln_s = u[:, None] + lnb[None, :]
        with np.errstate(over="ignore"):
            c = np.exp(ln_s - np.exp(ln_s))                 # s e^{-s}
        vec = np.einsum("uk,kam->uam", c, d)
        return f.fiber_norm(vec) ** q

    res = integrate_panels(integrand, edges, rtol=rtol)
    tails = _tail_bounds(norms_q, lnb, lo, hi, q, K, truncated)
    err = res.error + tails
    bad = err > 10 * rtol * np.abs(res.value) + 1e-300
    if np.any(bad & (res.value > 0)):
        worst = float(np.max(err[bad] / np.maximum(res.value[bad], 1e-300)))
        raise AccuracyError(f"g-function quadrature error {worst:.3g} above target", achieved=worst)
    values = np.maximum(res.value, 0.0) ** (1.0 / q)
    if full_output:
        return values, {"error": err, "evaluations": res.evaluations, "panels": res.panels}
    return values


@dataclass(frozen=True)
class GershgorinInterval:
    lo: float
    hi: float
    centers: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)

    def contains(self, values, tol: float = 0.0) -> bool:
        values = np.asarray(values)
        return bool(np.all(values >= self.lo - tol) and np.all(values <= self.hi + tol))


def _as_array(B) -> np.ndarray:
    return B.entries if isinstance(B, KernelMatrix) else np.asarray(B, dtype=float)


def gershgorin_bounds(B) -> GershgorinInterval:
    """Real interval containing every Gershgorin disc of a symmetric matrix."""
    A = _as_array(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max(initial=0.0))):
        raise DomainError("matrix must be symmetric")
    centers = np.diag(A).copy()
    radii = np.abs(A).sum(axis=1) - np.abs(centers)
    return GershgorinInterval(float((centers - radii).min()), float((centers + radii).max()),
                              centers, radii)


def eigen_range(B, residual_tol: float = 1e-10) -> tuple[float, float]:
    """``(lambda_min, lambda_max)`` from a dense symmetric eigensolve.

    Raises :class:`AccuracyError` when an extremal eigenpair has residual
    ``||Bx - lambda x||`` above ``residual_tol * ||B||``.
    """
    A = _as_array(B)
    if A.shape[0] > 10_000:
        raise DomainError("matrix too large for a dense eigensolve")
    w, V = np.linalg.eigh(A)
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    for i in (0, -1):
        r = np.linalg.norm(A @ V[:, i] - w[i] * V[:, i])
        if r > residual_tol * scale:
            raise AccuracyError(f"eigen residual {r:.3g} exceeds tolerance", achieved=r / scale)
    return float(w[0]), float(w[-1])


@dataclass
class SandwichReport:
    """Outcome of the pointwise and ``L_p`` sandwich check for one function.

    Margins are relative: ``G/S - sqrt(7/60)`` and ``sqrt(23/60) - G/S`` at
    the worst atom (``S`` the square function of ``f - F f``).
    """

    depth: int
    worst_lower_margin: float
    worst_upper_margin: float
    lp_checks: list
    slack: float
    violations: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "check": "sandwich",
            "depth": self.depth,
            "worst_lower_margin": self.worst_lower_margin,
            "worst_upper_margin": self.worst_upper_margin,
            "lp_checks": self.lp_checks,
            "violations": self.violations,
        }


def verify_theorem_a(
    f: MartingaleFunction,
    seq: Optional[SubordinationSequence] = None,
    slack: float = 1e-10,
    ps: Iterable[float] = (1.0, 2.0, 4.0, math.inf),
) -> SandwichReport:
    """Check ``sqrt(7/60) S(f - Ff) <= G^T f <= sqrt(23/60) S(f - Ff)`` atomwise and in ``L_p``."""
    depth = f.filtration.depth
    if seq is None:
        seq = theorem_a_sequence(max(depth, 1))
    G = gfunction_closed_form(seq, f)
    S = square_function_from(f, 2)
    lo_c, hi_c = math.sqrt(LOWER_CONSTANT), math.sqrt(UPPER_CONSTANT)
    live = S > 0
    violations = int(np.count_nonzero(G[~live] > 0))
    if live.any():
        ratio = G[live] / S[live]
        lower = ratio - lo_c
        upper = hi_c - ratio
        worst_lower = float(lower.min())
        worst_upper = float(upper.min())
        violations += int(np.count_nonzero(lower < -slack) + np.count_nonzero(upper < -slack))
    else:
        worst_lower = worst_upper = math.inf
    w = f.filtration.weights
    checks = []
    for p in ps:
        g_norm = lp_norm(G, p, w)
        s_norm = lp_norm(S, p, w)
        p_out = "inf" if math.isinf(p) else p
        for side, lhs, rhs in (("lower", lo_c * s_norm, g_norm), ("upper", g_norm, hi_c * s_norm)):
            ok = lhs <= rhs * (1 + slack) + 1e-300
            violations += not ok
            checks.append({"p": p_out, "side": side, "lhs": lhs, "rhs": rhs, "passed": bool(ok)})
    return SandwichReport(depth, worst_lower, worst_upper, checks, slack, violations)
