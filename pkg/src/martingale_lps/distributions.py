"""Finite discrete distributions on R^k with exact-support convolution.

Sums of independent variables are computed by convolving their laws; points
that coincide up to round-off are merged, so the support of an ``L``-fold
sum of two-point laws stays at ``L + 1`` points rather than ``2^L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RangeError

__all__ = ["MAX_SUPPORT", "DiscreteDistribution", "two_point", "convolve_power"]

MAX_SUPPORT = 1_000_000
MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Law with ``points`` of shape ``(n, k)`` and probabilities ``probs``."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.array(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        p = np.array(self.probs, dtype=float).ravel()
        if x.shape[0] != p.size or p.size == 0:
            raise DomainError("points and probabilities must be non-empty and aligned")
        if np.any(p < 0) or not np.all(np.isfinite(x)):
            raise DomainError("probabilities must be >= 0 and points finite")
        if p.size > MAX_SUPPORT:
            raise RangeError(f"support of {p.size} points exceeds {MAX_SUPPORT}")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "probs", p)

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def mass(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> np.ndarray:
        return np.array([math.fsum(self.probs * c) for c in self.points.T])

    def expect(self, fn) -> float:
        """``E fn(X)`` where ``fn`` maps the ``(n, k)`` points to ``n`` values."""
        return math.fsum(self.probs * np.asarray(fn(self.points), dtype=float))

    def convolve(self, other: "DiscreteDistribution", merge_rtol: float = 1e-11) -> "DiscreteDistribution":
        """Law of ``X + Y`` for independent ``X ~ self`` and ``Y ~ other``."""
        if self.points.shape[1] != other.points.shape[1]:
            raise DomainError("dimension mismatch")
        n = self.size * other.size
        if n > MAX_SUPPORT:
            raise RangeError(f"convolution support of {n} points exceeds {MAX_SUPPORT}")
        pts = (self.points[:, None, :] + other.points[None, :, :]).reshape(n, -1)
        pr = (self.probs[:, None] * other.probs[None, :]).ravel()
        return _merge(pts, pr, merge_rtol)


def _merge(points: np.ndarray, probs: np.ndarray, rtol: float) -> DiscreteDistribution:
    scale = np.maximum(np.abs(points).max(axis=0), 1.0)
    keys = np.round(points / (rtol * scale)).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    m = inverse.max() + 1
    mass = np.bincount(inverse, weights=probs, minlength=m)
    merged = np.empty((m, points.shape[1]))
    first = np.full(m, -1)
    first[inverse[::-1]] = np.arange(inverse.size)[::-1]
    merged[:] = points[first]
    return DiscreteDistribution(merged, mass)


def two_point(x0, x1, p1: float) -> DiscreteDistribution:
    """``x1`` with probability ``p1``, otherwise ``x0``."""
    if not 0 < p1 < 1:
        raise DomainError("p1 must lie in (0, 1)")
    return DiscreteDistribution(np.array([x0, x1], dtype=float), [1.0 - p1, p1])


def convolve_power(d: DiscreteDistribution, n: int) -> DiscreteDistribution:
    """``n``-fold convolution by sequential merging."""
    if n < 1:
        raise DomainError("n must be >= 1")
    out = d
    for _ in range(n - 1):
        out = out.convolve(d)
    return out
