"""Martingale-induced symmetric diffusion semigroups.

Given ``0 = a_0 < a_1 < ... < 1`` the contraction ``T = sum_n (a_n - a_{n-1}) E_n``
generates ``T^t = sum_n (1 - a_{n-1})^t dE_n``.  Everything here is stored in
the log domain ``b_n = -ln(1 - a_n)`` so that ``(1 - a_n)^t = exp(-t b_n)``:
for the sequence ``a_n = 1 - exp(-16^(n+1))`` the linear-domain value ``1 - a_n``
is already below binary64 resolution at ``n = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, RangeError
from .probability import (
    Filtration,
    MartingaleFunction,
    condexp,
    inner_product,
    lp_norm,
    martingale_differences,
)

__all__ = [
    "SubordinationSequence",
    "THEOREM_A_MAX_DEPTH",
    "theorem_a_sequence",
    "custom_sequence",
    "semigroup_weight",
    "apply_semigroup",
    "apply_semigroup_weighted",
    "apply_T",
    "default_t_grid",
    "AxiomReport",
    "verify_axioms",
]

# 16**(depth + 1) = 2**(4 depth + 4) must stay below the binary64 maximum
THEOREM_A_MAX_DEPTH = 254


@dataclass(frozen=True, eq=False)
class SubordinationSequence:
    """Strictly increasing ``b_0 = 0 < b_1 < ... < b_depth`` with ``b_n = -ln(1 - a_n)``."""

    b: np.ndarray
    provenance: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.array(self.b, dtype=float).ravel()
        if b.size < 1 or b[0] != 0.0:
            raise DomainError("b_0 must be exactly 0")
        if not np.all(np.isfinite(b)):
            raise RangeError("sequence entries must be finite")
        if np.any(np.diff(b) <= 0):
            raise DomainError("b must be strictly increasing")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @property
    def depth(self) -> int:
        return self.b.size - 1

    def a(self, n: int) -> float:
        """Materialize ``a_n = 1 - exp(-b_n)``; rounds to 1.0 once ``b_n`` exceeds ~37."""
        return -math.expm1(-self.b[n])

    def to_dict(self) -> dict:
        return {"b": self.b.tolist(), "provenance": self.provenance, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "SubordinationSequence":
        return cls(np.asarray(data["b"], dtype=float), data.get("provenance", "custom"),
                   dict(data.get("params", {})))


def theorem_a_sequence(depth: int) -> SubordinationSequence:
    """``b_n = 16^(n+1)`` for ``1 <= n <= depth`` (exact powers of two)."""
    if depth < 1:
        raise DomainError("depth must be >= 1")
    if depth > THEOREM_A_MAX_DEPTH:
        raise RangeError(f"16^(depth+1) overflows binary64 for depth > {THEOREM_A_MAX_DEPTH}")
    b = np.array([0.0] + [math.ldexp(1.0, 4 * (n + 1)) for n in range(1, depth + 1)])
    return SubordinationSequence(b, "theorem_a", {"depth": depth})


def custom_sequence(b: Sequence[float], **params) -> SubordinationSequence:
    return SubordinationSequence(np.asarray(b, dtype=float), "custom", params)


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 0:
        raise DomainError(f"t={t} must be > 0")
    return t


def semigroup_weight(seq: SubordinationSequence, n: int, t: float) -> float:
    """Coefficient ``exp(-t b_{n-1}) - exp(-t b_n)`` of ``E_n`` in ``T^t``."""
    t = _check_t(t)
    if not 1 <= n <= seq.depth:
        raise IndexError(f"n={n} outside 1..{seq.depth}")
    lo, hi = seq.b[n - 1], seq.b[n]
    return math.exp(-t * lo) * -math.expm1(-t * (hi - lo))


def _check_depth(seq: SubordinationSequence, filtration: Filtration) -> None:
    if seq.depth < filtration.depth:
        raise ConfigurationError(
            f"sequence depth {seq.depth} < filtration depth {filtration.depth}"
        )


def _coefficients(seq: SubordinationSequence, depth: int, t) -> np.ndarray:
    # exp(-t b_{n-1}) for n = 1..depth; shape (len(t), depth) for array t
    return np.exp(-np.multiply.outer(np.asarray(t, dtype=float), seq.b[:depth]))


def apply_semigroup(seq: SubordinationSequence, f: MartingaleFunction, t: float) -> MartingaleFunction:
    """``T^t f = sum_n exp(-t b_{n-1}) dE_n f``."""
    t = _check_t(t)
    _check_depth(seq, f.filtration)
    d = martingale_differences(f)
    c = _coefficients(seq, f.filtration.depth, t)
    return f.with_values(np.tensordot(c, d, axes=(0, 0)))


def apply_semigroup_weighted(seq: SubordinationSequence, f: MartingaleFunction, t: float) -> MartingaleFunction:
    """``T^t f`` in the conditional-expectation form.

    ``sum_{n<=depth} [exp(-t b_{n-1}) - exp(-t b_n)] E_n f + exp(-t b_depth) f``;
    the tail term collects ``E_n f = f`` for all ``n >= depth``.
    """
    t = _check_t(t)
    _check_depth(seq, f.filtration)
    depth = f.filtration.depth
    out = math.exp(-t * seq.b[depth]) * f.values
    for n in range(1, depth + 1):
        out = out + semigroup_weight(seq, n, t) * condexp(f, n).values
    return f.with_values(out)


def apply_T(seq: SubordinationSequence, f: MartingaleFunction) -> MartingaleFunction:
    """The generating contraction ``T = T^1``."""
    return apply_semigroup(seq, f, 1.0)


def default_t_grid(seq: SubordinationSequence) -> np.ndarray:
    """``4^-j / b_1`` for ``j = -5..40``: covers the scales ``1/b_n`` of the 16^(n+1) sequence."""
    if seq.depth < 1:
        raise DomainError("sequence has no positive entry")
    return 4.0 ** -np.arange(-5, 41) / seq.b[1]


@dataclass
class AxiomReport:
    """Worst observed violation of each semigroup axiom (0 means no violation).

    Contractions, semigroup law, continuity and unitality are measured
    relative to the size of the input; selfadjointness relative to
    ``||f||_2 ||g||_2``.
    """

    contraction: dict
    positivity: float
    semigroup_law: float
    continuity: float
    continuity_final: float
    selfadjointness: float
    unitality: float
    n_samples: int
    n_times: int

    @property
    def worst(self) -> float:
        return max(max(self.contraction.values()), self.positivity, self.semigroup_law,
                   self.continuity, self.continuity_final, self.selfadjointness, self.unitality)

    def passed(self, tol: float = 1e-10) -> bool:
        return self.worst <= tol

    def to_dict(self) -> dict:
        return {
            "contraction": {("inf" if math.isinf(p) else str(p)): v
                            for p, v in self.contraction.items()},
            "positivity": self.positivity,
            "semigroup_law": self.semigroup_law,
            "continuity": self.continuity,
            "continuity_final": self.continuity_final,
            "selfadjointness": self.selfadjointness,
            "unitality": self.unitality,
            "n_samples": self.n_samples,
            "n_times": self.n_times,
        }


def _apply_many(seq, values: np.ndarray, filtration: Filtration, times: np.ndarray) -> np.ndarray:
    # T^t applied for every t: returns (len(times), atoms, m)
    d = martingale_differences(MartingaleFunction(filtration, values))
    c = _coefficients(seq, filtration.depth, times)
    return np.einsum("tn,nam->tam", c, d)


def verify_axioms(
    seq: SubordinationSequence,
    samples: Iterable[MartingaleFunction],
    t_grid: Optional[Sequence[float]] = None,
    continuity_floor: float = 2.0**-40,
) -> AxiomReport:
    """Evaluate the symmetric-diffusion-semigroup axioms on sample functions.

    The continuity check walks ``t = 2^-j`` from ``j = 1`` until
    ``t * b_max <= continuity_floor`` (at least 40 steps), where ``b_max`` is the
    largest exponent acting on the filtration; every value must satisfy
    ``||T^t f - f||_2 <= (1 - exp(-t b_max)) ||f||_2`` and the final relative
    value is reported as ``continuity_final``.
    """
    samples = list(samples)
    if not samples:
        raise DomainError("need at least one sample")
    grid = np.asarray(default_t_grid(seq) if t_grid is None else t_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise DomainError("t grid must be nonempty and positive")
    contraction = {1.0: 0.0, 2.0: 0.0, math.inf: 0.0}
    positivity = law = cont = cont_final = selfadj = unit = 0.0

    for idx, f in enumerate(samples):
        filt = f.filtration
        _check_depth(seq, filt)
        w = filt.weights
        # scalar view per fiber component keeps all checks on real functions
        vals = f.values
        Tf = _apply_many(seq, vals, filt, grid)

        for p in contraction:
            for j in range(vals.shape[1]):
                base = lp_norm(vals[:, j], p, w)
                if base == 0:
                    continue
                worst = max(lp_norm(Tf[i, :, j], p, w) for i in range(grid.size))
                contraction[p] = max(contraction[p], (worst - base) / base)

        pos = np.abs(vals)
        Tpos = _apply_many(seq, pos, filt, grid)
        scale = pos.max(initial=0.0)
        if scale > 0:
            positivity = max(positivity, float(-min(Tpos.min(), 0.0)) / scale)

        # semigroup law: T^s (T^t f) versus T^{s+t} f, all grid pairs
        stacked = np.moveaxis(Tf, 0, 1).reshape(filt.atom_count, -1)  # (atoms, T*m)
        TsTt = _apply_many(seq, stacked, filt, grid).reshape(grid.size, filt.atom_count, grid.size, -1)
        TsTt = np.moveaxis(TsTt, 2, 1)  # (s, t, atoms, m)
        summed = np.add.outer(grid, grid)
        Tsum = _apply_many(seq, vals, filt, summed.ravel()).reshape(TsTt.shape)
        norm2 = math.sqrt(inner_product(f, f))
        if norm2 > 0:
            diff = TsTt - Tsum
            err = np.sqrt(np.einsum("a,stam->st", w, diff * diff)).max()
            law = max(law, float(err) / norm2)

        # strong continuity along t = 2^-j
        bmax = seq.b[filt.depth - 1] if filt.depth > 1 else 0.0
        if norm2 > 0:
            jmax = 40
            if bmax > 0:
                jmax = max(40, math.ceil(math.log2(bmax / continuity_floor)))
            ts = 2.0 ** -np.arange(1, jmax + 1)
            Tc = _apply_many(seq, vals, filt, ts)
            dist = np.sqrt(np.einsum("a,tam->t", w, (Tc - vals) ** 2))
            bound = -np.expm1(-ts * bmax) * norm2
            cont = max(cont, float(np.max(dist - bound)) / norm2)
            cont_final = max(cont_final, float(dist[-1]) / norm2)

        g = samples[(idx + 1) % len(samples)]
        if g.filtration is filt and g.fiber_dim == f.fiber_dim:
            Tg = _apply_many(seq, g.values, filt, grid)
            ng = math.sqrt(inner_product(g, g))
            if norm2 > 0 and ng > 0:
                lhs = np.einsum("a,tam,am->t", w, Tf, g.values)
                rhs = np.einsum("a,am,tam->t", w, vals, Tg)
                selfadj = max(selfadj, float(np.abs(lhs - rhs).max()) / (norm2 * ng))

        ones = np.ones((filt.atom_count, 1))
        T1 = _apply_many(seq, ones, filt, grid)
        unit = max(unit, float(np.abs(T1 - 1.0).max()))

    return AxiomReport(
        contraction=contraction,
        positivity=positivity,
        semigroup_law=law,
        continuity=max(cont, 0.0),
        continuity_final=cont_final,
        selfadjointness=selfadj,
        unitality=unit,
        n_samples=len(samples),
        n_times=int(grid.size),
    )
