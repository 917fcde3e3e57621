"""Subordination sequences for the vector-valued ``G_q ~ S_q`` equivalence.

For ``q >= 1`` the cut points ``l_k < m_k`` put mass ``2^-(q^2 (k+2))`` of the
``Gamma(q)`` density below ``l_k`` and above ``m_k``.  The times ``t_k`` and
exponents ``b_k`` then solve ``t_k b_k q = l_k`` and ``t_{k-1} b_k q = m_k``
with ``t_0 = M``, ``b_0 = 0``, giving the prefix products

    t_k = M prod_{j<=k} l_j / m_j,      b_k = (M q)^-1 prod_{1<=j<=k} m_j / l_{j-1},

which are accumulated as sums of logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConstructionError, DomainError, RangeError
from .incgamma import inverse_lower, inverse_upper, log_gammainc_lower, log_gammainc_upper
from .littlewood_paley import gfunction_quadrature, verify_theorem_a
from .probability import MartingaleFunction, martingale_differences, square_function_q
from .quadrature import integrate_panels
from .semigroup import SubordinationSequence

__all__ = [
    "GammaSequenceParams",
    "GammaSequences",
    "log_tail_target",
    "solve_lk",
    "solve_mk",
    "build_sequences",
    "gamma_sequences",
    "verify_partition",
    "kernel_sum_check",
    "BlockEnergy",
    "block_energy",
    "EquivalenceReport",
    "lower_constant",
    "upper_constant",
    "verify_equivalence",
]

LN2 = math.log(2.0)
# 2^-(q^2 (k+2)) must stay well above the binary64 underflow threshold
MAX_TAIL_EXPONENT = 700.0
RESIDUAL_TOL = 1e-12


def log_tail_target(q: float, k: int) -> float:
    """``ln 2^-(q^2 (k+2))``, raising :class:`RangeError` past the supported depth."""
    if not q >= 1:
        raise DomainError(f"q={q} must be >= 1")
    if k < 0:
        raise DomainError("k must be >= 0")
    exponent = q * q * (k + 2) * LN2
    if exponent > MAX_TAIL_EXPONENT:
        kmax = int(MAX_TAIL_EXPONENT / (q * q * LN2)) - 2
        raise RangeError(
            f"target 2^-(q^2 (k+2)) for q={q}, k={k} is below the supported range; "
            f"use depth <= {kmax} or a log-domain extension"
        )
    return -exponent


def _relative_residual(log_value: float, log_target: float) -> float:
    return abs(math.expm1(log_value - log_target))


def solve_lk(q: float, k: int) -> float:
    """``l_k`` with ``P(q, l_k) = 2^-(q^2 (k+2))``."""
    if k < 1:
        raise DomainError("k must be >= 1")
    target = log_tail_target(q, k)
    l = inverse_lower(q, target)
    if _relative_residual(log_gammainc_lower(q, l), target) > RESIDUAL_TOL:
        raise ConstructionError(f"l_{k} residual above {RESIDUAL_TOL}")
    return l


def solve_mk(q: float, k: int) -> float:
    """``m_k`` with ``Q(q, m_k) = 2^-(q^2 (k+2))``."""
    if k < 1:
        raise DomainError("k must be >= 1")
    target = log_tail_target(q, k)
    m = inverse_upper(q, target)
    if _relative_residual(log_gammainc_upper(q, m), target) > RESIDUAL_TOL:
        raise ConstructionError(f"m_{k} residual above {RESIDUAL_TOL}")
    return m


@dataclass(frozen=True)
class GammaSequenceParams:
    q: float
    depth: int
    M: float = 1.0

    def __post_init__(self):
        if not self.q >= 1:
            raise DomainError(f"q={self.q} must be >= 1")
        if not self.M > 0:
            raise DomainError(f"M={self.M} must be > 0")
        if self.depth < 1:
            raise DomainError("depth must be >= 1")


@dataclass(frozen=True, eq=False)
class GammaSequences:
    """Constructed data for one ``(q, M, depth)``.

    ``l``, ``m``, ``log_t`` are indexed ``0..depth``.  ``log_b[0]`` is
    ``-inf`` (``b_0 = 0``).  ``N`` is the smallest separation ratio
    ``b_{k+1} / b_k = m_{k+1} / l_k``; it is ``inf`` when ``depth == 1``.
    """

    params: GammaSequenceParams
    l: np.ndarray
    m: np.ndarray
    log_t: np.ndarray
    log_b: np.ndarray
    N: float
    residuals: dict = field(default_factory=dict)

    @property
    def q(self) -> float:
        return self.params.q

    @property
    def M(self) -> float:
        return self.params.M

    @property
    def depth(self) -> int:
        return self.params.depth

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.log_t)

    @property
    def b(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_b)

    def to_subordination_sequence(self) -> SubordinationSequence:
        b = self.b
        if not np.all(np.isfinite(b)):
            raise RangeError("b_k overflows binary64 at this depth")
        return SubordinationSequence(b, "gamma", {"q": self.q, "M": self.M})

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "M": self.M,
            "depth": self.depth,
            "l": self.l.tolist(),
            "m": self.m.tolist(),
            "log_t": self.log_t.tolist(),
            "log_b": self.log_b[1:].tolist(),
            "N": None if math.isinf(self.N) else self.N,
            "residuals": dict(self.residuals),
        }


def build_sequences(params: GammaSequenceParams) -> GammaSequences:
    q, M, K = params.q, params.M, params.depth
    l = np.ones(K + 1)
    m = np.ones(K + 1)
    res_l = res_m = 0.0
    for k in range(1, K + 1):
        target = log_tail_target(q, k)
        l[k] = solve_lk(q, k)
        m[k] = solve_mk(q, k)
        res_l = max(res_l, _relative_residual(log_gammainc_lower(q, l[k]), target))
        res_m = max(res_m, _relative_residual(log_gammainc_upper(q, m[k]), target))
        if not l[k] < m[k]:
            raise ConstructionError(f"l_{k} >= m_{k}")

    ln_l, ln_m = np.log(l), np.log(m)
    log_t = math.log(M) + np.cumsum(ln_l - ln_m)
    log_b = np.empty(K + 1)
    log_b[0] = -math.inf
    log_b[1:] = -math.log(M * q) + np.cumsum(ln_m[1:] - ln_l[:-1])

    k = np.arange(1, K + 1)
    ident_lower = np.abs(np.expm1(log_t[k] + log_b[k] + math.log(q) - ln_l[k]))
    ident_upper = np.abs(np.expm1(log_t[k - 1] + log_b[k] + math.log(q) - ln_m[k]))
    N = float(np.min(m[2:] / l[1:-1])) if K >= 2 else math.inf
    if not N > 2:
        raise ConstructionError(f"separation ratio N={N} is not > 2")
    if np.any(np.diff(log_t) >= 0) or np.any(np.diff(log_b[1:]) <= 0):
        raise ConstructionError("t must decrease and b must increase")
    residuals = {
        "lk_max": res_l,
        "mk_max": res_m,
        "identity_tb_l": float(ident_lower.max()),
        "identity_tb_m": float(ident_upper.max()),
    }
    return GammaSequences(params, l, m, log_t, log_b, N, residuals)


def gamma_sequences(q: float, depth: int, M: float = 1.0) -> GammaSequences:
    return build_sequences(GammaSequenceParams(q, depth, M))


def _gamma_density_integral(q: float, lo: float, hi: float, rtol: float = 1e-13) -> float:
    # int_lo^hi t^(q-1) e^-t dt / Gamma(q), integrated in u = ln t
    a, b = math.log(lo), math.log(hi)
    edges = np.linspace(a, b, max(2, int(math.ceil((b - a) * 2)) + 1))
    lg = math.lgamma(q)

    def fun(u):
        with np.errstate(over="ignore"):
            return np.exp(q * u - np.exp(u) - lg)[:, None]

    return float(integrate_panels(fun, edges, rtol=rtol).value[0])


def verify_partition(q: float, k: int, seqs: Optional[GammaSequences] = None) -> float:
    """Relative residual of ``int_{l_k}^{m_k} t^(q-1) e^-t dt = (1 - 2 * 2^-(q^2 (k+2))) Gamma(q)``.

    The integral is computed by adaptive quadrature, independently of the
    incomplete gamma evaluations used to find ``l_k`` and ``m_k``.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if seqs is not None and k <= seqs.depth:
        l, m = seqs.l[k], seqs.m[k]
    else:
        l, m = solve_lk(q, k), solve_mk(q, k)
    expected = 1.0 - 2.0 * math.exp(log_tail_target(q, k))
    return abs(_gamma_density_integral(q, l, m) - expected)


def kernel_sum_check(seqs: GammaSequences, t_values: Sequence[float]) -> float:
    """Worst ``t (N-1)/N sum_k b_k e^{-t b_k}`` over ``t_values``; at most 1 when the bound holds."""
    t = np.asarray(t_values, dtype=float)
    ln_b = seqs.log_b[1:]
    with np.errstate(over="ignore"):
        terms = np.exp(np.log(t)[:, None] + ln_b[None, :] - np.exp(np.log(t)[:, None] + ln_b[None, :]))
    factor = 1.0 if math.isinf(seqs.N) else (seqs.N - 1.0) / seqs.N
    return float((terms.sum(axis=1) * factor).max())


@dataclass
class BlockEnergy:
    """Pieces of ``G_{q,M}`` restricted to the window ``[t_n, t_{n-1}]``.

    ``R[k-1]`` is the per-atom ``R_{n,k}`` for difference ``dE_{k+1}``;
    ``bound[k-1]`` is its a priori bound for ``k != n`` (``nan`` on the
    diagonal).  ``diagonal_residual`` compares the measured window integral
    for ``k = n`` with ``(1 - 2 * 2^-(q^2 (n+2))) Gamma(q) / q^q``.
    """

    n: int
    R: np.ndarray
    bound: np.ndarray
    diagonal_residual: float

    @property
    def R_nn(self) -> np.ndarray:
        return self.R[self.n - 1]

    @property
    def offdiag_bound(self) -> np.ndarray:
        return self.bound

    def bound_violation(self) -> float:
        """Largest relative excess of a measured off-diagonal ``R_{n,k}`` over its bound."""
        mask = ~np.isnan(self.bound)
        if not mask.any():
            return 0.0
        excess = self.R[mask] - self.bound[mask]
        scale = np.maximum(self.bound[mask], 1e-300)
        return float(max(0.0, (excess / scale).max(initial=0.0)))


def block_energy(seqs: GammaSequences, f: MartingaleFunction, q: Optional[float] = None, n: int = 1) -> BlockEnergy:
    q = seqs.q if q is None else q
    if not 1 <= n <= seqs.depth:
        raise IndexError(f"window n={n} outside 1..{seqs.depth}")
    diffs = martingale_differences(f)[1:]
    K = max(diffs.shape[0], n)
    if diffs.shape[0] > seqs.depth:
        raise DomainError("filtration deeper than the sequence")
    norms = np.zeros((K, f.filtration.atom_count))
    norms[: diffs.shape[0]] = f.fiber_norm(diffs)

    ln_b = seqs.log_b[1: K + 1]
    lo, hi = seqs.log_t[n], seqs.log_t[n - 1]
    edges = np.linspace(lo, hi, max(2, int(math.ceil(hi - lo)) * 2 + 1))

    def fun(u):
        ln_s = u[:, None] + ln_b[None, :]
        with np.errstate(over="ignore"):
            return np.exp(q * (ln_s - np.exp(ln_s)))

    J = integrate_panels(fun, edges, rtol=1e-12, atol=1e-300).value   # (K,)
    R = J[:, None] ** (1.0 / q) * norms
    gq = math.gamma(q) / q**q
    expected = (1.0 - 2.0 * math.exp(log_tail_target(q, n))) * gq
    diag_res = abs(J[n - 1] / expected - 1.0)

    bound = np.full_like(R, np.nan)
    for k in range(1, K + 1):
        if k < n:
            c = gq * math.exp(log_tail_target(q, n - 1))
        elif k > n:
            c = gq * math.exp(log_tail_target(q, k))
        else:
            continue
        bound[k - 1] = c ** (1.0 / q) * norms[k - 1]
    return BlockEnergy(n, R, bound, diag_res)


def lower_constant(q: float) -> float:
    """``(1/4) (Gamma(q) / q^q)^(1/q)``."""
    return 0.25 * math.exp((math.lgamma(q) - q * math.log(q)) / q)


def upper_constant(q: float, N: float) -> float:
    """``(N / (N-1))^(q-1)``, the constant bounding ``G_q^q / S_q^q``."""
    if math.isinf(N):
        return 1.0
    return (N / (N - 1.0)) ** (q - 1.0)


@dataclass
class EquivalenceReport:
    """Atomwise two-sided check ``c S_q <= G_q`` and ``G_q^q <= C S_q^q``.

    Margins are relative to ``S_q(f - Ff)``: ``G/S - c`` and ``C - (G/S)^q``.
    """

    q: float
    lower_constant: float
    upper_constant: float
    worst_lower_margin: float
    worst_upper_margin: float
    min_ratio: float
    max_ratio: float
    violations: int
    slack: float
    route: str = "quadrature"

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_equivalence(
    seqs: Union[GammaSequences, SubordinationSequence],
    f: MartingaleFunction,
    q: Optional[float] = None,
    slack: float = 1e-8,
) -> EquivalenceReport:
    """Compare ``G_q^T(f)`` with ``S_q(f - Ff)`` at every atom.

    With a gamma construction ``q`` defaults to (and must equal) its own ``q``.
    A 16^(n+1) sequence with ``q = 2`` and scalar ``f`` is routed to the
    closed-form sandwich check instead, using constants ``sqrt(7/60)`` and
    ``23/60``.
    """
    if isinstance(seqs, SubordinationSequence):
        if seqs.provenance == "theorem_a" and (q is None or q == 2) and f.is_scalar:
            rep = verify_theorem_a(f, seqs, slack=slack, ps=())
            lo_c = math.sqrt(7.0 / 60.0)
            return EquivalenceReport(
                2.0, lo_c, 23.0 / 60.0, rep.worst_lower_margin,
                (23.0 / 60.0) - (math.sqrt(23.0 / 60.0) - rep.worst_upper_margin) ** 2,
                lo_c + rep.worst_lower_margin, math.sqrt(23.0 / 60.0) - rep.worst_upper_margin,
                rep.violations, slack, route="closed_form",
            )
        raise DomainError("explicit constants are certified only for gamma constructions "
                          "and the 16^(n+1) sequence at q = 2")
    if q is None:
        q = seqs.q
    if q != seqs.q:
        raise DomainError(f"sequence was built for q={seqs.q}, not q={q}")
    seq = seqs.to_subordination_sequence()
    G = gfunction_quadrature(seq, f, q)
    S = square_function_q(f, q, n0=2)
    c = lower_constant(q)
    C = upper_constant(q, seqs.N)
    live = S > 0
    violations = int(np.count_nonzero(G[~live] > 0))
    if live.any():
        ratio = G[live] / S[live]
        lower = ratio - c
        upper = C - ratio**q
        violations += int(np.count_nonzero(lower < -slack * c))
        violations += int(np.count_nonzero(upper < -slack * C))
        stats = (float(lower.min()), float(upper.min()), float(ratio.min()), float(ratio.max()))
    else:
        stats = (math.inf, math.inf, math.nan, math.nan)
    return EquivalenceReport(q, c, C, *stats, violations, slack)
