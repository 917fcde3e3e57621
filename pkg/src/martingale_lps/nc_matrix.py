"""Tracial matrix algebras with tensor-factor filtrations.

The algebra is ``M_D`` with ``D = s_1 * ... * s_d`` and normalized trace
``tau = Tr / D``.  Level ``n`` is ``M_{s_1} (x) ... (x) M_{s_n} (x) 1``; its
trace-preserving conditional expectation is the normalized partial trace
over the trailing factors, tensored back with the identity.

Diagonal matrices form the commutative subalgebra of functions on
``prod s_i`` atoms, and there the filtration reduces to the product
filtration of :mod:`martingale_lps.probability`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .littlewood_paley import LOWER_CONSTANT, UPPER_CONSTANT, kernel_matrix
from .probability import FiniteMeasureSpace, Filtration
from .semigroup import SubordinationSequence, theorem_a_sequence

__all__ = [
    "MatrixAlgebraFiltration",
    "nc_condexp",
    "nc_differences",
    "psd_sqrt",
    "nc_square_functions",
    "nc_gfunction",
    "nc_gfunction_squared",
    "nc_apply_semigroup",
    "NCSandwichReport",
    "verify_nc_theorem",
    "nc_lp_norm",
    "hardy_norm",
    "hardy_norm_upper_bound",
    "semigroup_norm",
    "hardy_semigroup_norm_check",
    "NCAxiomReport",
    "verify_nc_axioms",
    "choi_matrix",
    "is_completely_positive",
    "diagonal_filtration",
    "matrix_to_dict",
    "matrix_from_dict",
    "random_matrix",
]

PSD_TOL = 1e-10


@dataclass(frozen=True)
class MatrixAlgebraFiltration:
    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(s) for s in self.factor_dims)
        if len(dims) < 1:
            raise DomainError("need at least one tensor factor")
        if any(s < 2 for s in dims):
            raise DomainError("every factor dimension must be >= 2")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def depth(self) -> int:
        return len(self.factor_dims)

    @property
    def dim(self) -> int:
        return math.prod(self.factor_dims)

    def tau(self, x: np.ndarray) -> complex:
        return np.trace(x) / self.dim

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.dim, self.dim):
            raise DomainError(f"matrix shape {x.shape}, expected ({self.dim}, {self.dim})")
        if not np.all(np.isfinite(x)):
            raise DomainError("matrix entries must be finite")
        return x


def nc_condexp(alg: MatrixAlgebraFiltration, x: np.ndarray, n: int) -> np.ndarray:
    """``E_n(x) = (Tr_{n+1..d} x / prod_{i>n} s_i) (x) 1``."""
    x = alg._check(x)
    if not 1 <= n <= alg.depth:
        raise IndexError(f"level {n} outside 1..{alg.depth}")
    head = math.prod(alg.factor_dims[:n])
    tail = alg.dim // head
    if tail == 1:
        return x.copy()
    reduced = np.einsum("ikjk->ij", x.reshape(head, tail, head, tail)) / tail
    return np.kron(reduced, np.eye(tail))


def nc_differences(alg: MatrixAlgebraFiltration, x: np.ndarray) -> np.ndarray:
    """``dx_1, ..., dx_d`` stacked into a ``(d, D, D)`` array (``E_0 = 0``)."""
    x = alg._check(x)
    out = np.empty((alg.depth,) + x.shape, dtype=np.result_type(x, float))
    prev = np.zeros_like(out[0])
    for n in range(1, alg.depth + 1):
        cur = nc_condexp(alg, x, n)
        out[n - 1] = cur - prev
        prev = cur
    return out


def _hermitian(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix; negative round-off eigenvalues are clamped to 0."""
    w, v = np.linalg.eigh(_hermitian(a))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _col_sum(d: np.ndarray) -> np.ndarray:
    return _hermitian(np.einsum("nji,njk->ik", d.conj(), d))     # sum dx* dx


def _row_sum(d: np.ndarray) -> np.ndarray:
    return _hermitian(np.einsum("nij,nkj->ik", d, d.conj()))     # sum dx dx*


def nc_square_functions(alg: MatrixAlgebraFiltration, x: np.ndarray, start: int = 1, squared: bool = False):
    """Column and row square functions ``(S_c, S_r)`` summed from level ``start``.

    ``start = 2`` gives the square functions of ``x - F(x)``.  With
    ``squared=True`` the PSD matrices ``S_c^2, S_r^2`` are returned instead.
    """
    d = nc_differences(alg, x)[start - 1:]
    if d.shape[0] == 0:
        z = np.zeros((alg.dim, alg.dim), dtype=d.dtype)
        return z, z.copy()
    col, row = _col_sum(d), _row_sum(d)
    if squared:
        return col, row
    return psd_sqrt(col), psd_sqrt(row)


def nc_gfunction_squared(alg: MatrixAlgebraFiltration, seq: SubordinationSequence, x: np.ndarray):
    """``(G_c^2, G_r^2)`` with ``G_c^2 = sum_{i,j>=2} B_ij dx_i^* dx_j``."""
    d = nc_differences(alg, x)[1:]
    if d.shape[0] == 0:
        z = np.zeros((alg.dim, alg.dim), dtype=d.dtype)
        return z, z.copy()
    B = kernel_matrix(seq, alg.depth).entries
    W = np.tensordot(B, d, axes=(1, 0))                 # W_i = sum_j B_ij dx_j
    col = np.matmul(d.conj().transpose(0, 2, 1), W).sum(axis=0)
    row = np.matmul(d, W.conj().transpose(0, 2, 1)).sum(axis=0)
    return _hermitian(col), _hermitian(row)


def nc_gfunction(alg: MatrixAlgebraFiltration, seq: SubordinationSequence, x: np.ndarray):
    """Column and row g-functions ``(G_c, G_r)``."""
    col, row = nc_gfunction_squared(alg, seq, x)
    return psd_sqrt(col), psd_sqrt(row)


def nc_apply_semigroup(alg: MatrixAlgebraFiltration, seq: SubordinationSequence, x: np.ndarray, t: float) -> np.ndarray:
    """``T^t x = sum_n exp(-t b_{n-1}) dx_n``."""
    if not t > 0:
        raise DomainError("t must be > 0")
    if seq.depth < alg.depth:
        raise DomainError("sequence shallower than the filtration")
    d = nc_differences(alg, x)
    c = np.exp(-t * seq.b[: alg.depth])
    return np.tensordot(c, d, axes=(0, 0))


def _min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(_hermitian(a))[0])


def _spectral_scale(a: np.ndarray) -> float:
    return float(max(np.abs(np.linalg.eigvalsh(_hermitian(a))).max(initial=0.0), 1e-300))


@dataclass
class NCSandwichReport:
    """Smallest eigenvalues of the four gap matrices, each divided by ``||S^2||``.

    ``col_lower`` is ``G_c^2 - (7/60) S_c^2``, ``col_upper`` is
    ``(23/60) S_c^2 - G_c^2``, likewise for rows; ``sqrt_*`` repeat the
    check after taking square roots.
    """

    col_lower: float
    col_upper: float
    row_lower: float
    row_upper: float
    sqrt_col_lower: float
    sqrt_col_upper: float
    sqrt_row_lower: float
    sqrt_row_upper: float
    tol: float
    sqrt_tol: float

    @property
    def min_eigenvalue(self) -> float:
        return min(self.col_lower, self.col_upper, self.row_lower, self.row_upper)

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= -self.tol

    @property
    def sqrt_passed(self) -> bool:
        return min(self.sqrt_col_lower, self.sqrt_col_upper,
                   self.sqrt_row_lower, self.sqrt_row_upper) >= -self.sqrt_tol

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_nc_theorem(
    alg: MatrixAlgebraFiltration,
    x: np.ndarray,
    seq: Optional[SubordinationSequence] = None,
    tol: float = PSD_TOL,
    sqrt_tol: float = 1e-7,
) -> NCSandwichReport:
    """PSD-order check of ``(7/60) S^2 <= G^2 <= (23/60) S^2`` for columns and rows.

    The square-root comparison ``sqrt(7/60) S <= G <= sqrt(23/60) S`` is also
    evaluated; matrix square roots amplify round-off near the kernel of
    ``S``, so it carries its own looser tolerance ``sqrt_tol``.
    """
    if seq is None:
        seq = theorem_a_sequence(alg.depth)
    Sc2, Sr2 = nc_square_functions(alg, x, start=2, squared=True)
    Gc2, Gr2 = nc_gfunction_squared(alg, seq, x)
    out = {}
    for name, S2, G2 in (("col", Sc2, Gc2), ("row", Sr2, Gr2)):
        scale = _spectral_scale(S2)
        out[f"{name}_lower"] = _min_eig(G2 - LOWER_CONSTANT * S2) / scale
        out[f"{name}_upper"] = _min_eig(UPPER_CONSTANT * S2 - G2) / scale
        S, G = psd_sqrt(S2), psd_sqrt(G2)
        root_scale = math.sqrt(scale)
        out[f"sqrt_{name}_lower"] = _min_eig(G - math.sqrt(LOWER_CONSTANT) * S) / root_scale
        out[f"sqrt_{name}_upper"] = _min_eig(math.sqrt(UPPER_CONSTANT) * S - G) / root_scale
    return NCSandwichReport(tol=tol, sqrt_tol=sqrt_tol, **out)


def nc_lp_norm(x: np.ndarray, p: float) -> float:
    """``(tau |x|^p)^(1/p)`` from singular values; operator norm at ``p = inf``."""
    if not p >= 1:
        raise DomainError(f"p={p} must be >= 1")
    s = np.linalg.svd(np.asarray(x), compute_uv=False)
    top = s.max(initial=0.0)
    if math.isinf(p) or top == 0:
        return float(top)
    return float(top * np.mean((s / top) ** p) ** (1.0 / p))


def hardy_norm(alg: MatrixAlgebraFiltration, x: np.ndarray, p: float, start: int = 1) -> float:
    """``max(||S_c(x)||_p, ||S_r(x)||_p)`` for ``p >= 2``.

    For ``p < 2`` the norm is an infimum over all decompositions; use
    :func:`hardy_norm_upper_bound`.
    """
    if not p >= 2:
        raise DomainError("the Hardy norm is only computed for p >= 2; "
                          "hardy_norm_upper_bound gives an upper bound for p < 2")
    Sc, Sr = nc_square_functions(alg, x, start=start)
    return max(nc_lp_norm(Sc, p), nc_lp_norm(Sr, p))


def hardy_norm_upper_bound(alg: MatrixAlgebraFiltration, x: np.ndarray, p: float, start: int = 1) -> float:
    """Upper bound from the decompositions ``x = x + 0`` and ``x = 0 + x``.

    This is an upper bound on the ``p < 2`` Hardy norm, not its value.
    """
    if not p >= 1:
        raise DomainError("p must be >= 1")
    Sc, Sr = nc_square_functions(alg, x, start=start)
    return min(nc_lp_norm(Sc, p), nc_lp_norm(Sr, p))


def semigroup_norm(alg: MatrixAlgebraFiltration, seq: SubordinationSequence, x: np.ndarray, p: float) -> float:
    """``max(||G_c(x)||_p, ||G_r(x)||_p)`` for ``p >= 2``."""
    if not p >= 2:
        raise DomainError("only p >= 2 is supported")
    Gc, Gr = nc_gfunction(alg, seq, x)
    return max(nc_lp_norm(Gc, p), nc_lp_norm(Gr, p))


def hardy_semigroup_norm_check(alg: MatrixAlgebraFiltration, x: np.ndarray, p: float,
                      seq: Optional[SubordinationSequence] = None) -> dict:
    """Both sides of ``sqrt(7/60) ||x - Fx||_H_p <= ||x||_{p,F} <= sqrt(23/60) ||x - Fx||_H_p``.

    The Hardy norm is taken of ``x - F(x)`` (square functions from level 2),
    matching the operator inequalities it is derived from.
    """
    if seq is None:
        seq = theorem_a_sequence(alg.depth)
    h = hardy_norm(alg, x, p, start=2)
    g = semigroup_norm(alg, seq, x, p)
    lo, hi = math.sqrt(LOWER_CONSTANT) * h, math.sqrt(UPPER_CONSTANT) * h
    return {"p": p, "hardy": h, "semigroup": g, "lower": lo, "upper": hi,
            "passed": bool(lo <= g * (1 + 1e-10) and g <= hi * (1 + 1e-10))}


@dataclass
class NCAxiomReport:
    unitality: float
    selfadjointness: float
    positivity: float
    contraction: dict

    @property
    def worst(self) -> float:
        return max(self.unitality, self.selfadjointness, self.positivity, max(self.contraction.values()))


def random_matrix(rng: np.random.Generator, D: int, hermitian: bool = False) -> np.ndarray:
    x = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    if hermitian:
        x = _hermitian(x)
    return x


def verify_nc_axioms(
    alg: MatrixAlgebraFiltration,
    seq: SubordinationSequence,
    samples: Sequence[np.ndarray],
    t_grid: Sequence[float],
) -> NCAxiomReport:
    """Unital, trace-selfadjoint, PSD-preserving and ``L_p`` contractive (``p`` in 1, 2, inf)."""
    I = np.eye(alg.dim)
    unit = selfadj = pos = 0.0
    contraction = {1.0: 0.0, 2.0: 0.0, math.inf: 0.0}
    samples = list(samples)
    for i, x in enumerate(samples):
        y = samples[(i + 1) % len(samples)]
        psd = x @ x.conj().T
        for t in t_grid:
            unit = max(unit, float(np.abs(nc_apply_semigroup(alg, seq, I, t) - I).max()))
            Tx = nc_apply_semigroup(alg, seq, x, t)
            Ty = nc_apply_semigroup(alg, seq, y, t)
            scale = nc_lp_norm(x, 2) * nc_lp_norm(y, 2)
            selfadj = max(selfadj, abs(alg.tau(Tx @ y) - alg.tau(x @ Ty)) / scale)
            Tp = nc_apply_semigroup(alg, seq, psd, t)
            pos = max(pos, max(0.0, -_min_eig(Tp)) / _spectral_scale(psd))
            for p in contraction:
                base = nc_lp_norm(x, p)
                contraction[p] = max(contraction[p], (nc_lp_norm(Tx, p) - base) / base)
    return NCAxiomReport(unit, selfadj, pos, contraction)


def choi_matrix(phi: Callable[[np.ndarray], np.ndarray], D: int) -> np.ndarray:
    """``sum_{ij} e_ij (x) phi(e_ij)``; PSD iff ``phi`` is completely positive."""
    C = np.zeros((D * D, D * D), dtype=complex)
    for i in range(D):
        for j in range(D):
            e = np.zeros((D, D))
            e[i, j] = 1.0
            C[i * D:(i + 1) * D, j * D:(j + 1) * D] = phi(e)
    return C


def is_completely_positive(phi: Callable[[np.ndarray], np.ndarray], D: int, tol: float = 1e-12) -> bool:
    C = choi_matrix(phi, D)
    return _min_eig(C) >= -tol * max(1.0, _spectral_scale(C))


def diagonal_filtration(alg: MatrixAlgebraFiltration) -> Filtration:
    """Commutative filtration seen by diagonal matrices (uniform weights)."""
    dims = alg.factor_dims
    idx = np.arange(alg.dim)
    levels = []
    for n in range(1, alg.depth + 1):
        levels.append(idx // math.prod(dims[n:]))
    return Filtration(FiniteMeasureSpace.uniform(alg.dim), tuple(levels))


def matrix_to_dict(alg: MatrixAlgebraFiltration, x: np.ndarray) -> dict:
    """``{factor_dims, shape, data}`` with ``data`` row-major ``[re, im, re, im, ...]``."""
    x = alg._check(x).astype(complex)
    inter = np.empty(2 * x.size)
    inter[0::2] = x.real.ravel()
    inter[1::2] = x.imag.ravel()
    return {"factor_dims": list(alg.factor_dims), "shape": list(x.shape), "data": inter.tolist()}


def matrix_from_dict(data: dict) -> tuple[MatrixAlgebraFiltration, np.ndarray]:
    alg = MatrixAlgebraFiltration(tuple(data["factor_dims"]))
    flat = np.asarray(data["data"], dtype=float)
    if flat.size != 2 * alg.dim * alg.dim:
        raise DomainError("data length does not match factor_dims")
    x = (flat[0::2] + 1j * flat[1::2]).reshape(alg.dim, alg.dim)
    return alg, x
