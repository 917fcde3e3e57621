"""Measured constants: Burkholder-Gundy checks, the reverse Littlewood-Paley-Stein
ratio, an extremal search for it and an explicit lower-bound family.

For ``p >= 2`` the ratio ``||f - Ff||_p / ||G f||_p`` is bounded by
``(p - 1) * sqrt(60/7)``: the Burkholder-Gundy upper bound applied to
``f - Ff`` followed by the lower half of the ``G``-versus-``S`` sandwich.
Every ratio computed here is checked against that envelope.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import convolve_power, two_point
from .errors import DomainError, InvariantViolation
from .littlewood_paley import LOWER_CONSTANT, UPPER_CONSTANT, gfunction_closed_form, kernel_matrix
from .probability import (
    MartingaleFunction,
    dyadic_filtration,
    lp_norm,
    square_function,
    square_function_from,
)
from .semigroup import SubordinationSequence, theorem_a_sequence

__all__ = [
    "ENVELOPE_SLACK",
    "p_star",
    "envelope",
    "BGReport",
    "bg_verify",
    "ratio_L",
    "RatioReport",
    "search_extremal",
    "WitnessResult",
    "witness_family",
    "GrowthTable",
    "growth_report",
    "MAX_SEARCH_DEPTH",
    "MAX_WITNESS_LEVELS",
]

ENVELOPE_SLACK = 1e-10
MAX_SEARCH_DEPTH = 14
MAX_WITNESS_LEVELS = 60


def p_star(p: float) -> float:
    """``max(p, p / (p - 1))``."""
    if not 1 < p < math.inf:
        raise DomainError(f"p={p} must satisfy 1 < p < inf")
    return max(p, p / (p - 1.0))


def envelope(p: float) -> float:
    """Proven bound ``(p - 1) sqrt(60/7)`` on the reverse ratio for ``p >= 2``."""
    if not p >= 2:
        raise DomainError("the envelope applies for p >= 2")
    return (p - 1.0) / math.sqrt(LOWER_CONSTANT)


@dataclass(frozen=True)
class BGReport:
    """Two-sided Burkholder-Gundy check for one scalar martingale.

    Margins are relative to ``||S f||_p`` and nonnegative when the
    inequality holds: ``lower_margin = ||f||/||S|| - 1/(p*-1)`` and
    ``upper_margin = (p*-1) - ||f||/||S||``.  ``refinement_margin`` is the
    one-sided form with constant ``p - 1`` matching the side of 2 that
    ``p`` lies on.
    """

    p: float
    f_norm: float
    s_norm: float
    lower_margin: float
    upper_margin: float
    refinement_margin: float
    slack: float

    @property
    def ratio(self) -> float:
        return self.f_norm / self.s_norm if self.s_norm > 0 else math.nan

    @property
    def violations(self) -> int:
        return sum(m < -self.slack for m in (self.lower_margin, self.upper_margin, self.refinement_margin))

    @property
    def passed(self) -> bool:
        return self.violations == 0


def bg_verify(f: MartingaleFunction, p: float, slack: float = 1e-10) -> BGReport:
    """Check ``(p*-1)^-1 ||S f||_p <= ||f||_p <= (p*-1) ||S f||_p`` and its refinement.

    ``S`` includes the first difference ``E_1 f``.  A function with
    ``S f = 0`` vanishes identically and passes with zero margins.
    """
    c = p_star(p) - 1.0
    if not f.is_scalar:
        raise DomainError("Burkholder-Gundy check needs a scalar function")
    w = f.filtration.weights
    fn = lp_norm(f.scalar_values, p, w)
    sn = lp_norm(square_function(f), p, w)
    if sn == 0:
        return BGReport(p, fn, sn, 0.0, 0.0, 0.0, slack)
    r = fn / sn
    lower, upper = r - 1.0 / c, c - r
    refinement = r - (p - 1.0) if p <= 2 else (p - 1.0) - r
    return BGReport(p, fn, sn, lower, upper, refinement, slack)


def _fixed_part_removed(f: MartingaleFunction) -> np.ndarray:
    if f.filtration.depth < 2:
        return np.zeros(f.filtration.atom_count)
    return f.scalar_values - f.filtration.average(f.values, 1)[:, 0]


def ratio_L(
    f: MartingaleFunction,
    p: float,
    seq: Optional[SubordinationSequence] = None,
    check_envelope: bool = True,
) -> float:
    """``||f - Ff||_p / ||G f||_p`` with the closed-form ``G``.

    Raises :class:`DomainError` when ``G f = 0`` (``f`` measurable at level 1)
    and :class:`InvariantViolation` when ``p >= 2`` and the ratio exceeds
    the envelope.
    """
    if not p >= 1:
        raise DomainError("p must be >= 1")
    if not f.is_scalar:
        raise DomainError("ratio needs a scalar function")
    depth = f.filtration.depth
    if seq is None:
        seq = theorem_a_sequence(max(depth, 1))
    w = f.filtration.weights
    g = lp_norm(gfunction_closed_form(seq, f), p, w)
    if g == 0:
        raise DomainError("G f vanishes: f is measurable at level 1")
    ratio = lp_norm(_fixed_part_removed(f), p, w) / g
    if check_envelope and p >= 2 and ratio > envelope(p) * (1 + ENVELOPE_SLACK):
        raise InvariantViolation(
            f"ratio {ratio} exceeds envelope {envelope(p)} at p={p}",
            record={"p": p, "ratio": ratio, "envelope": envelope(p)},
        )
    return ratio


@dataclass(frozen=True, eq=False)
class RatioReport:
    p: float
    best_ratio: float
    envelope: float
    witness: MartingaleFunction = field(repr=False)
    evaluations: int
    depth: int
    seed: int
    restarts: int

    @property
    def within_envelope(self) -> bool:
        return self.best_ratio <= self.envelope * (1 + ENVELOPE_SLACK)

    def witness_descriptor(self) -> dict:
        return {"filtration": "dyadic", "depth": self.depth,
                "values": self.witness.scalar_values.tolist()}

    def to_dict(self, include_witness: bool = False) -> dict:
        out = {"p": self.p, "best_ratio": self.best_ratio, "envelope": self.envelope,
               "evaluations": self.evaluations, "depth": self.depth, "seed": self.seed,
               "restarts": self.restarts}
        if include_witness:
            out["witness"] = self.witness_descriptor()
        return out


class _DyadicRatioState:
    """Incrementally updated ``sum |h|^p`` and ``sum G^p`` on a dyadic tree.

    The function is parametrized by Haar coefficients: level ``n`` carries
    one coefficient per block of level ``n - 1``, added on the first half
    of the block and subtracted on the second.  Changing one coefficient
    touches only the atoms below it, so a proposal costs ``O(depth * size)``
    for a subtree of ``size`` atoms.
    """

    def __init__(self, depth: int, p: float, B: np.ndarray):
        self.d, self.p, self.B = depth, p, B
        self.K = depth - 1
        self.A = 2**depth
        self.half_sign = [np.repeat([1.0, -1.0], 2 ** (depth - k - 2)) for k in range(self.K)]

    def span(self, k: int) -> int:
        return 2 ** (self.d - k - 1)

    def load(self, coef: list) -> None:
        self.coef = [c.astype(float).copy() for c in coef]
        V = np.empty((self.K, self.A))
        for k, c in enumerate(self.coef):
            V[k] = np.repeat(c, self.span(k)) * np.tile(self.half_sign[k], c.size)
        self.W = self.B @ V
        self.h = V.sum(axis=0)
        self.G2 = np.maximum(np.einsum("ka,ka->a", V, self.W), 0.0)
        self.hp = np.abs(self.h) ** self.p
        self.gp = self.G2 ** (0.5 * self.p)
        self.Hp, self.Gp = float(self.hp.sum()), float(self.gp.sum())

    def ratio(self) -> float:
        if not self.Gp > 0:
            return 0.0
        return (self.Hp / self.Gp) ** (1.0 / self.p)

    def propose(self, k: int, beta: int, eps: float):
        s = self.span(k)
        sl = slice(beta * s, (beta + 1) * s)
        de = eps * self.half_sign[k]
        h_new = self.h[sl] + de
        G2_new = np.maximum(self.G2[sl] + 2.0 * de * self.W[k, sl] + self.B[k, k] * eps * eps, 0.0)
        hp_new = np.abs(h_new) ** self.p
        gp_new = G2_new ** (0.5 * self.p)
        Hp = self.Hp - self.hp[sl].sum() + hp_new.sum()
        Gp = self.Gp - self.gp[sl].sum() + gp_new.sum()
        return Hp, Gp, (sl, de, h_new, G2_new, hp_new, gp_new)

    def accept(self, k: int, beta: int, eps: float, Hp: float, Gp: float, cache) -> None:
        sl, de, h_new, G2_new, hp_new, gp_new = cache
        self.coef[k][beta] += eps
        self.W[:, sl] += self.B[:, k, None] * de[None, :]
        self.h[sl], self.G2[sl], self.hp[sl], self.gp[sl] = h_new, G2_new, hp_new, gp_new
        self.Hp, self.Gp = Hp, Gp

    def renormalize(self) -> None:
        top = float(np.abs(self.h).max(initial=0.0))
        scale = 1.0 / top if top > 0 else 1.0
        self.load([c * scale for c in self.coef])


def _initial_coefficients(rng: np.random.Generator, depth: int, restart: int) -> list:
    sizes = [2 ** (k + 1) for k in range(depth - 1)]
    if restart == 0:
        # a single difference at level 2: the ratio is exactly 2
        coef = [np.zeros(n) for n in sizes]
        coef[0][0] = 1.0
        return coef
    coef = []
    for n in sizes:
        amp = math.exp(rng.normal(0.0, 1.0))
        c = rng.standard_normal(n) * amp
        if restart % 2 == 0:
            c *= rng.random(n) < 0.25
        coef.append(c)
    return coef


def search_extremal(p: float, depth: int, budget: int, seed: int, restarts: int = 8) -> RatioReport:
    """Gradient-free ascent of :func:`ratio_L` over dyadic martingales.

    Runs ``restarts`` independent coordinate-perturbation climbs, each with
    its own generator spawned from ``seed`` and a share of ``budget``
    ratio evaluations.  A climb perturbs one Haar coefficient at a time,
    widens its step after a success and halves it after a run of failures,
    and stops early once the step collapses.  The best witness is
    re-evaluated from scratch through :func:`ratio_L`.
    """
    if not p >= 2:
        raise DomainError("search needs p >= 2")
    if not 2 <= depth <= MAX_SEARCH_DEPTH:
        raise DomainError(f"depth must lie in 2..{MAX_SEARCH_DEPTH}")
    budget = int(budget)
    if budget < 1:
        raise DomainError("budget must be >= 1")
    seq = theorem_a_sequence(depth)
    B = np.array(kernel_matrix(seq, depth).entries)
    state = _DyadicRatioState(depth, p, B)
    restarts = max(1, min(int(restarts), budget))
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]
    K = depth - 1

    used = 0
    best_ratio, best_coef = -1.0, None
    for r, rng in enumerate(streams):
        share = (budget - used) // (restarts - r)
        state.load(_initial_coefficients(rng, depth, r))
        current = state.ratio()
        spent = 1
        step, fails, accepted = 0.5, 0, 0
        while spent < share and step > 1e-9:
            k = int(rng.integers(K))
            beta = int(rng.integers(2 ** (k + 1)))
            typical = math.sqrt(float(np.mean(state.h * state.h))) + 1e-300
            eps = step * rng.standard_normal() * (abs(state.coef[k][beta]) + 0.1 * typical)
            Hp, Gp, cache = state.propose(k, beta, eps)
            spent += 1
            cand = (Hp / Gp) ** (1.0 / p) if Gp > 0 else 0.0
            if cand > current:
                state.accept(k, beta, eps, Hp, Gp, cache)
                current = cand
                step = min(step * 1.5, 4.0)
                fails = 0
                accepted += 1
                if accepted % 512 == 0:
                    state.renormalize()
                    current = state.ratio()
            else:
                fails += 1
                if fails >= 4 * K:
                    step *= 0.5
                    fails = 0
        used += spent
        state.renormalize()
        current = state.ratio()
        if current > best_ratio:
            best_ratio, best_coef = current, [c.copy() for c in state.coef]

    state.load(best_coef)
    witness = MartingaleFunction(dyadic_filtration(depth), state.h.copy())
    exact = ratio_L(witness, p, seq)
    return RatioReport(p, exact, envelope(p), witness, used, depth, int(seed), restarts)


@dataclass(frozen=True)
class WitnessResult:
    """Exact ratios for the product martingale with skewed two-point steps.

    Steps are ``1 - delta`` with probability ``delta`` and ``-delta``
    otherwise, ``delta = 1/p``; level 1 is trivial so ``F f = 0``.
    ``ratio_G_lower`` is a lower bound on ``||f||_p / ||G f||_p`` obtained
    from ``G <= sqrt(23/60) S``.
    """

    p: float
    levels: int
    delta: float
    f_norm: float
    s_norm: float
    ratio_S: float
    ratio_G_lower: float
    support: int
    mass: float
    mean: float

    def descriptor(self) -> dict:
        return {"family": "two_point_product", "p": self.p, "levels": self.levels,
                "delta": self.delta, "up": 1.0 - self.delta, "down": -self.delta}


def witness_family(p: float, levels: int) -> WitnessResult:
    """``||sum d_k||_p`` and ``||S||_p`` for ``levels`` i.i.d. skewed steps.

    The joint law of ``(sum d_k, sum d_k^2)`` is an exact convolution of
    two-point laws; the ``2^levels`` atoms are never formed.
    """
    if not p >= 2:
        raise DomainError("witness family needs p >= 2")
    levels = int(levels)
    if not 1 <= levels <= MAX_WITNESS_LEVELS:
        raise DomainError(f"levels must lie in 1..{MAX_WITNESS_LEVELS}")
    delta = 1.0 / p
    step = two_point([-delta, delta * delta], [1.0 - delta, (1.0 - delta) ** 2], delta)
    law = convolve_power(step, levels)
    x, s2 = law.points[:, 0], law.points[:, 1]
    f_norm = law.expect(lambda pts: np.abs(pts[:, 0]) ** p) ** (1.0 / p)
    s_norm = law.expect(lambda pts: np.maximum(pts[:, 1], 0.0) ** (0.5 * p)) ** (1.0 / p)
    ratio_S = f_norm / s_norm
    return WitnessResult(p, levels, delta, f_norm, s_norm, ratio_S,
                         ratio_S / math.sqrt(UPPER_CONSTANT), law.size, law.mass,
                         float(law.mean()[0]))


def _witness_levels(p: float) -> int:
    # about three expected up-steps: levels * delta ~ 3
    return int(min(MAX_WITNESS_LEVELS, max(1, round(3 * p))))


@dataclass
class GrowthTable:
    rows: list
    depth: int
    budget: int
    seed: int
    monotone: bool
    within_envelope: bool

    @property
    def passed(self) -> bool:
        return self.monotone and self.within_envelope

    COLUMNS = ("p", "searched_ratio", "witness_ratio", "envelope", "evals", "seed")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in self.rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in self.COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"depth": self.depth, "budget": self.budget, "seed": self.seed,
                "monotone": self.monotone, "within_envelope": self.within_envelope,
                "rows": self.rows}


def growth_report(p_list: Sequence[float], depth: int, budget: int, seed: int) -> GrowthTable:
    """Searched and witness ratios per ``p`` next to the envelope.

    ``monotone`` records whether searched ratios are nondecreasing in ``p``;
    ``within_envelope`` whether every entry is at most the envelope.
    """
    ps = [float(p) for p in p_list]
    if not ps or any(p < 2 for p in ps) or ps != sorted(ps):
        raise DomainError("p_list must be nonempty, sorted ascending and >= 2")
    rows = []
    for p in ps:
        rep = search_extremal(p, depth, budget, seed)
        wit = witness_family(p, _witness_levels(p))
        rows.append({"p": p, "searched_ratio": rep.best_ratio, "witness_ratio": wit.ratio_G_lower,
                     "envelope": envelope(p), "evals": rep.evaluations, "seed": int(seed)})
    searched = [r["searched_ratio"] for r in rows]
    monotone = all(b >= a for a, b in zip(searched, searched[1:]))
    within = all(max(r["searched_ratio"], r["witness_ratio"]) <= r["envelope"] * (1 + ENVELOPE_SLACK)
                 for r in rows)
    return GrowthTable(rows, depth, int(budget), int(seed), monotone, within)
