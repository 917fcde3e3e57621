"""Finite filtered probability spaces and discrete-time martingales.

A :class:`Filtration` is a refining chain of partitions of a finite set of
weighted atoms whose last level is the discrete partition.  Functions on
the atoms may be vector valued; the fiber ``R^m`` carries an ``l_r`` norm
(or a user supplied norm callback).

Conditional expectations are weighted block averages.  All levels share
one atom ordering in which every block of every level is contiguous, so a
single ``np.add.reduceat`` call computes block sums for all fiber
components at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "FiniteMeasureSpace",
    "Filtration",
    "MartingaleFunction",
    "condexp",
    "mdiff",
    "martingale_differences",
    "square_function",
    "square_function_from",
    "square_function_q",
    "lp_norm",
    "inner_product",
    "fixed_projection",
    "dyadic_filtration",
    "random_filtration",
    "sample_martingale",
    "martingale_to_dict",
    "martingale_from_dict",
]

WEIGHT_SUM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FiniteMeasureSpace:
    """Probability space on ``len(weights)`` atoms."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise DomainError("a measure space needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("every atom weight must be finite and > 0")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def uniform(cls, atom_count: int) -> "FiniteMeasureSpace":
        return cls(np.full(atom_count, 1.0 / atom_count))

    @property
    def atom_count(self) -> int:
        return self.weights.size


def _canonical_labels(labels: np.ndarray) -> tuple[np.ndarray, int]:
    # relabel blocks 0..k-1 in order of first appearance
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.intp)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse], first.size


@dataclass(frozen=True, eq=False)
class Filtration:
    """Increasing chain of partitions ``levels[0] ⊂ ... ⊂ levels[depth-1]``.

    ``levels[k][i]`` is the block index of atom ``i`` at level ``k + 1``.
    Level numbering in the public API is 1-based, as for sigma-algebras.
    """

    space: FiniteMeasureSpace
    levels: tuple
    _order: np.ndarray = field(init=False, repr=False)
    _starts: tuple = field(init=False, repr=False)
    _sizes: tuple = field(init=False, repr=False)
    _block_weights: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n_atoms = self.space.atom_count
        if len(self.levels) == 0:
            raise DomainError("a filtration needs at least one level")
        canon = []
        for k, lab in enumerate(self.levels):
            lab = np.asarray(lab)
            if lab.shape != (n_atoms,):
                raise DomainError(f"level {k + 1} labels {lab.shape} atoms, expected ({n_atoms},)")
            canon.append(_canonical_labels(lab)[0])
        for k in range(len(canon) - 1):
            coarse, fine = canon[k], canon[k + 1]
            # each fine block must sit inside one coarse block
            n_fine = fine.max() + 1
            parent = np.full(n_fine, -1)
            parent[fine] = coarse
            if np.any(parent[fine] != coarse):
                raise DomainError(f"level {k + 2} does not refine level {k + 1}")
        if canon[-1].max() + 1 != n_atoms:
            raise DomainError("the last level must be the discrete partition")

        order = np.lexsort(tuple(reversed(canon)))
        w = self.space.weights
        starts, sizes, bweights = [], [], []
        for lab in canon:
            sorted_lab = lab[order]
            s = np.flatnonzero(np.r_[True, sorted_lab[1:] != sorted_lab[:-1]])
            sizes.append(_readonly(np.diff(np.r_[s, n_atoms])))
            starts.append(_readonly(s))
            bweights.append(_readonly(np.add.reduceat(w[order], s)))
        object.__setattr__(self, "levels", tuple(_readonly(c) for c in canon))
        object.__setattr__(self, "_order", _readonly(order))
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "_sizes", tuple(sizes))
        object.__setattr__(self, "_block_weights", tuple(bweights))

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def atom_count(self) -> int:
        return self.space.atom_count

    @property
    def weights(self) -> np.ndarray:
        return self.space.weights

    def block_count(self, n: int) -> int:
        return self._starts[self._check_level(n) - 1].size

    def _check_level(self, n: int) -> int:
        if not 1 <= n <= self.depth:
            raise IndexError(f"level {n} outside 1..{self.depth}")
        return n

    def average(self, values: np.ndarray, n: int) -> np.ndarray:
        """Conditional expectation onto level ``n`` of an ``(atoms, m)`` array."""
        k = self._check_level(n) - 1
        order = self._order
        weighted = (self.weights[:, None] * values)[order]
        sums = np.add.reduceat(weighted, self._starts[k], axis=0)
        means = sums / self._block_weights[k][:, None]
        out = np.empty_like(means, shape=values.shape)
        out[order] = np.repeat(means, self._sizes[k], axis=0)
        return out


def _lr_norm(r: float) -> Callable[[np.ndarray], np.ndarray]:
    def norm(v: np.ndarray) -> np.ndarray:
        return np.linalg.norm(v, ord=r, axis=-1)

    return norm


@dataclass(frozen=True, eq=False)
class MartingaleFunction:
    """Per-atom values in ``R^m`` on a filtration.

    ``values`` has shape ``(atom_count, m)``; a 1-D input is read as the
    scalar case ``m = 1``.  ``fiber_r`` selects the ``l_r`` norm on the
    fiber; ``fiber_norm_fn`` overrides it with an arbitrary norm acting on
    the last axis.
    """

    filtration: Filtration
    values: np.ndarray
    fiber_r: float = 2.0
    fiber_norm_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.filtration.atom_count:
            raise DomainError(
                f"values shape {v.shape} incompatible with {self.filtration.atom_count} atoms"
            )
        if v.shape[1] < 1:
            raise DomainError("fiber dimension must be positive")
        r = float(self.fiber_r)
        if not r >= 1.0:
            raise DomainError(f"fiber norm exponent r={r} must be >= 1")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "fiber_r", r)

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self.fiber_dim == 1

    @property
    def scalar_values(self) -> np.ndarray:
        if not self.is_scalar:
            raise DomainError("function is vector valued")
        return self.values[:, 0]

    def fiber_norm(self, v: np.ndarray) -> np.ndarray:
        """Norm over the last axis of ``v``."""
        if self.fiber_norm_fn is not None:
            return np.asarray(self.fiber_norm_fn(v))
        return _lr_norm(self.fiber_r)(v)

    def with_values(self, values) -> "MartingaleFunction":
        return MartingaleFunction(self.filtration, values, self.fiber_r, self.fiber_norm_fn)

    def __add__(self, other):
        if isinstance(other, MartingaleFunction):
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, MartingaleFunction):
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def condexp(f: MartingaleFunction, n: int) -> MartingaleFunction:
    """``E(f | A_n)``: weighted block average of ``f`` at level ``n``."""
    return f.with_values(f.filtration.average(f.values, n))


def martingale_differences(f: MartingaleFunction) -> np.ndarray:
    """All differences ``dE_1 f, ..., dE_depth f`` as a ``(depth, atoms, m)`` array."""
    filt = f.filtration
    out = np.empty((filt.depth,) + f.values.shape)
    prev = np.zeros_like(f.values)
    for n in range(1, filt.depth + 1):
        cur = f.values if n == filt.depth else filt.average(f.values, n)
        out[n - 1] = cur - prev
        prev = cur
    return out


def mdiff(f: MartingaleFunction, n: int) -> MartingaleFunction:
    """``dE_n f = E_n f - E_{n-1} f`` with ``E_0 = 0``."""
    filt = f.filtration
    filt._check_level(n)
    cur = filt.average(f.values, n)
    if n == 1:
        return f.with_values(cur)
    return f.with_values(cur - filt.average(f.values, n - 1))


def fixed_projection(f: MartingaleFunction) -> MartingaleFunction:
    """Projection onto the fixed points of the martingale semigroups, i.e. ``E_1``."""
    return condexp(f, 1)


def square_function_from(f: MartingaleFunction, n0: int = 1) -> np.ndarray:
    """Per-atom ``(sum_{n >= n0} |dE_n f|^2)^(1/2)`` for scalar ``f``.

    ``n0 = 2`` gives the square function of ``f - F(f)``.
    """
    if not f.is_scalar:
        raise DomainError("square_function needs a scalar function; use square_function_q")
    if n0 < 1:
        raise IndexError(f"start level {n0} < 1")
    d = martingale_differences(f)[n0 - 1:, :, 0]
    return np.sqrt(np.sum(d * d, axis=0))


def square_function(f: MartingaleFunction) -> np.ndarray:
    return square_function_from(f, 1)


def _q_sum(norms: np.ndarray, q: float) -> np.ndarray:
    # (sum_k x_k^q)^(1/q) along axis 0, scaled to avoid overflow
    scale = norms.max(axis=0, initial=0.0)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.sum((norms / safe) ** q, axis=0) ** (1.0 / q)


def square_function_q(f: MartingaleFunction, q: float, n0: int = 1) -> np.ndarray:
    """Per-atom ``(sum_{n >= n0} ||dE_n f||_X^q)^(1/q)``."""
    if not q >= 1:
        raise DomainError(f"q={q} must be >= 1")
    if n0 < 1:
        raise IndexError(f"start level {n0} < 1")
    d = martingale_differences(f)[n0 - 1:]
    if d.shape[0] == 0:
        return np.zeros(f.filtration.atom_count)
    return _q_sum(f.fiber_norm(d), q)


def _weights_of(weights) -> np.ndarray:
    if isinstance(weights, FiniteMeasureSpace):
        return weights.weights
    if isinstance(weights, Filtration):
        return weights.weights
    return np.asarray(weights, dtype=float)


def lp_norm(g, p: float, weights) -> float:
    """``(sum_i w_i |g_i|^p)^(1/p)``; the max over atoms when ``p = inf``.

    ``weights`` may be a weight array, a measure space or a filtration.
    The sum is exactly rounded (``math.fsum``).
    """
    if not p >= 1:
        raise DomainError(f"p={p} must be >= 1")
    g = np.abs(np.asarray(g, dtype=float)).ravel()
    w = _weights_of(weights)
    if g.shape != w.shape:
        raise ConfigurationError(f"{g.size} values for {w.size} weights")
    top = g.max(initial=0.0)
    if math.isinf(p) or top == 0.0:
        return float(top)
    return float(top * math.fsum(w * (g / top) ** p) ** (1.0 / p))


def inner_product(f: MartingaleFunction, g: MartingaleFunction) -> float:
    """Weighted ``L_2`` inner product ``sum_i w_i <f_i, g_i>``."""
    w = f.filtration.weights
    return math.fsum(w * np.sum(f.values * g.values, axis=1))


def dyadic_filtration(depth: int) -> Filtration:
    """``2**depth`` equal atoms; level ``n`` has ``2**n`` blocks (leading bits)."""
    if depth < 1:
        raise DomainError("depth must be >= 1")
    atoms = np.arange(2**depth)
    levels = tuple(atoms >> (depth - n) for n in range(1, depth + 1))
    return Filtration(FiniteMeasureSpace.uniform(2**depth), levels)


def random_filtration(rng: np.random.Generator, depth: int, max_branch: int = 3) -> Filtration:
    """Random tree filtration with nonuniform weights, for property tests."""
    if depth < 1:
        raise DomainError("depth must be >= 1")
    paths = [()]
    for _ in range(depth):
        paths = [p + (j,) for p in paths for j in range(int(rng.integers(1, max_branch + 1)))]
    # level 1 must still be allowed to have several blocks; last level discrete
    n_atoms = len(paths)
    raw = rng.uniform(0.2, 1.0, n_atoms)
    w = raw / math.fsum(raw)
    w[-1] = 1.0 - math.fsum(w[:-1])
    levels = []
    for n in range(1, depth + 1):
        keys = {}
        levels.append(np.array([keys.setdefault(p[:n], len(keys)) for p in paths]))
    return Filtration(FiniteMeasureSpace(w), tuple(levels))


def sample_martingale(
    filtration: Filtration,
    rng: np.random.Generator,
    fiber_dim: int = 1,
    fiber_r: float = 2.0,
    family: Optional[str] = None,
) -> MartingaleFunction:
    """Draw a random function from a mix of families with varied level structure.

    Families: ``gaussian`` (i.i.d. atom values), ``levelscaled`` (martingale
    differences with log-normal per-level amplitudes), ``sparse`` (few
    nonzero atoms), ``indicator`` (indicator of a random atom set).
    """
    families = ("gaussian", "levelscaled", "sparse", "indicator")
    if family is None:
        family = families[int(rng.integers(len(families)))]
    A = filtration.atom_count
    shape = (A, fiber_dim)
    if family == "gaussian":
        vals = rng.standard_normal(shape)
    elif family == "levelscaled":
        noise = rng.standard_normal(shape)
        vals = np.zeros(shape)
        prev = np.zeros(shape)
        for n in range(1, filtration.depth + 1):
            cur = noise if n == filtration.depth else filtration.average(noise, n)
            vals += math.exp(rng.normal(0.0, 1.5)) * (cur - prev)
            prev = cur
    elif family == "sparse":
        vals = np.zeros(shape)
        k = int(rng.integers(1, max(2, A // 4) + 1))
        idx = rng.choice(A, size=min(k, A), replace=False)
        vals[idx] = rng.standard_normal((idx.size, fiber_dim)) * 10.0
    elif family == "indicator":
        mask = rng.random(A) < rng.uniform(0.05, 0.95)
        vals = np.repeat(mask[:, None].astype(float), fiber_dim, axis=1)
        vals *= rng.choice([-1.0, 1.0], size=(1, fiber_dim))
    else:
        raise DomainError(f"unknown family {family!r}")
    return MartingaleFunction(filtration, vals, fiber_r)


def martingale_to_dict(f: MartingaleFunction) -> dict:
    """JSON-ready dict ``{weights, levels, values, fiber: {dim, r}}``.

    ``r = inf`` is written as the string ``"inf"``.
    """
    if f.fiber_norm_fn is not None:
        raise ConfigurationError("custom fiber norms are not serializable")
    r = f.fiber_r
    return {
        "weights": f.filtration.weights.tolist(),
        "levels": [lvl.tolist() for lvl in f.filtration.levels],
        "values": f.values.tolist(),
        "fiber": {"dim": f.fiber_dim, "r": "inf" if math.isinf(r) else r},
    }


def martingale_from_dict(data: dict) -> MartingaleFunction:
    space = FiniteMeasureSpace(np.asarray(data["weights"], dtype=float))
    filt = Filtration(space, tuple(np.asarray(l) for l in data["levels"]))
    fiber = data.get("fiber", {"dim": 1, "r": 2})
    r = fiber.get("r", 2)
    r = math.inf if r in ("inf", "Infinity") else float(r)
    values = np.asarray(data["values"], dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] != int(fiber.get("dim", values.shape[1])):
        raise DomainError("fiber.dim does not match values")
    return MartingaleFunction(filt, values, r)


def as_martingale(filtration: Filtration, values: Sequence[float] | np.ndarray) -> MartingaleFunction:
    """Scalar martingale shortcut."""
    return MartingaleFunction(filtration, np.asarray(values, dtype=float))
