import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martingale_lps.errors import ConfigurationError, DomainError
from martingale_lps.littlewood_paley import (
    LOWER_CONSTANT,
    UPPER_CONSTANT,
    eigen_range,
    gershgorin_bounds,
    gfunction_closed_form,
    gfunction_quadrature,
    gfunction_squared,
    kernel_matrix,
    verify_theorem_a,
)
from martingale_lps.probability import (
    MartingaleFunction,
    dyadic_filtration,
    martingale_differences,
    sample_martingale,
    square_function_from,
)
from martingale_lps.semigroup import custom_sequence, theorem_a_sequence


def single_difference(depth=2, fiber=None):
    filt = dyadic_filtration(depth)
    A = filt.atom_count
    sign = np.where((np.arange(A) >> (depth - 2)) & 1, -1.0, 1.0)
    if fiber is None:
        return MartingaleFunction(filt, 3.0 * sign)
    return MartingaleFunction(filt, sign[:, None] * np.asarray(fiber)[None, :], fiber_r=2.0)


class TestKernelMatrix:
    def test_diagonal_quarter(self, rng):
        seq = custom_sequence(np.cumsum(np.r_[0.0, rng.uniform(0.1, 5.0, 6)]))
        B = kernel_matrix(seq, 7).entries
        np.testing.assert_array_equal(np.diag(B), 0.25)
        np.testing.assert_array_equal(B, B.T)
        assert np.all((B > 0) & (B <= 0.25))

    def test_offdiagonal_decay(self):
        B = kernel_matrix(theorem_a_sequence(30), 31).entries
        k, j = np.indices(B.shape)
        off = k != j
        assert np.all(B[off] <= 16.0 ** -np.abs(k - j)[off])

    def test_two_by_two(self):
        B = kernel_matrix(theorem_a_sequence(2), 3).entries
        assert B[0, 1] == pytest.approx(16.0 / 289.0, rel=1e-15)

    def test_no_overflow_at_depth(self):
        B = kernel_matrix(theorem_a_sequence(200), 201).entries
        assert np.all(np.isfinite(B))

    def test_preconditions(self):
        with pytest.raises(DomainError):
            kernel_matrix(theorem_a_sequence(3), 1)
        with pytest.raises(ConfigurationError):
            kernel_matrix(theorem_a_sequence(2), 5)


class TestClosedForm:
    def test_single_difference(self):
        f = single_difference()
        np.testing.assert_allclose(gfunction_closed_form(theorem_a_sequence(2), f), 1.5)

    def test_level_one_zero(self):
        f = MartingaleFunction(dyadic_filtration(4), np.repeat([1.0, 5.0], 8))
        np.testing.assert_array_equal(gfunction_closed_form(theorem_a_sequence(4), f), 0.0)

    def test_scale_equivariance(self, rng):
        seq = theorem_a_sequence(6)
        f = sample_martingale(dyadic_filtration(6), rng)
        np.testing.assert_allclose(gfunction_closed_form(seq, f * -3.0), 3.0 * gfunction_closed_form(seq, f),
                                   rtol=1e-14)

    def test_vector_rejected(self, rng):
        f = sample_martingale(dyadic_filtration(3), rng, fiber_dim=2)
        with pytest.raises(DomainError):
            gfunction_closed_form(theorem_a_sequence(3), f)


class TestQuadrature:
    def test_single_difference_q2(self):
        G = gfunction_quadrature(theorem_a_sequence(2), single_difference())
        np.testing.assert_allclose(G, 1.5, rtol=1e-9)

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.5, 3.0, 5.0])
    def test_single_difference_gamma(self, q):
        f = single_difference(fiber=[3.0, 4.0])
        G = gfunction_quadrature(theorem_a_sequence(2), f, q)
        np.testing.assert_allclose(G, math.gamma(q) ** (1 / q) / q * 5.0, rtol=1e-9)

    @pytest.mark.parametrize("depth", [2, 4, 6, 8, 10])
    def test_matches_closed_form(self, rng, depth):
        seq = theorem_a_sequence(depth)
        f = sample_martingale(dyadic_filtration(depth), rng)
        G = gfunction_closed_form(seq, f)
        Gq = gfunction_quadrature(seq, f, 2.0)
        np.testing.assert_allclose(Gq, G, rtol=1e-8, atol=1e-300)

    def test_quadratic_form_identity(self, rng):
        seq = theorem_a_sequence(5)
        f = sample_martingale(dyadic_filtration(5), rng, family="gaussian")
        G2 = gfunction_quadrature(seq, f, 2.0, rtol=1e-12) ** 2
        np.testing.assert_allclose(G2, gfunction_squared(seq, f), rtol=1e-11)

    def test_truncation_monotone(self, rng):
        seq = theorem_a_sequence(4)
        f = sample_martingale(dyadic_filtration(4), rng, fiber_dim=3, family="gaussian")
        full = gfunction_quadrature(seq, f, 3.0)
        prev = np.zeros_like(full)
        for M in (1e-6, 1e-4, 1e-2, 1.0, 100.0):
            cur = gfunction_quadrature(seq, f, 3.0, M=M)
            assert np.all(cur >= prev * (1 - 1e-9))
            assert np.all(cur <= full * (1 + 1e-9))
            prev = cur
        np.testing.assert_allclose(prev, full, rtol=1e-8)

    def test_error_info(self, rng):
        seq = theorem_a_sequence(3)
        f = sample_martingale(dyadic_filtration(3), rng, family="gaussian")
        G, info = gfunction_quadrature(seq, f, 2.0, full_output=True)
        assert np.all(info["error"] <= 1e-8 * G**2)

    def test_q_below_one(self, rng):
        with pytest.raises(DomainError):
            gfunction_quadrature(theorem_a_sequence(2), single_difference(), 0.9)


class TestSpectralBounds:
    def test_quarter(self):
        g = gershgorin_bounds(np.array([[0.25]]))
        assert (g.lo, g.hi) == (0.25, 0.25)
        assert eigen_range(np.array([[0.25]])) == (0.25, 0.25)

    @pytest.mark.parametrize("n", [2, 5, 20, 50])
    def test_theorem_a_interval(self, n):
        B = kernel_matrix(theorem_a_sequence(n), n + 1)
        g = gershgorin_bounds(B)
        assert g.lo >= LOWER_CONSTANT - 1e-12 and g.hi <= UPPER_CONSTANT + 1e-12
        lo, hi = eigen_range(B)
        assert g.lo - 1e-12 <= lo <= hi <= g.hi + 1e-12

    def test_random_symmetric_contains_spectrum(self, rng):
        A = rng.standard_normal((5, 5))
        A = A + A.T
        g = gershgorin_bounds(A)
        assert g.contains(np.linalg.eigvalsh(A), tol=1e-12)

    def test_interlacing(self):
        tops = [eigen_range(kernel_matrix(theorem_a_sequence(n), n + 1))[1] for n in range(1, 40)]
        assert all(b >= a - 1e-15 for a, b in zip(tops, tops[1:]))

    def test_nonsymmetric_rejected(self):
        with pytest.raises(DomainError):
            gershgorin_bounds(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestTheoremA:
    def test_single_difference_ratio(self):
        rep = verify_theorem_a(single_difference(3))
        assert rep.passed
        assert rep.worst_lower_margin == pytest.approx(0.5 - math.sqrt(7 / 60))
        assert rep.worst_upper_margin == pytest.approx(math.sqrt(23 / 60) - 0.5)

    def test_centered_indicator(self, rng):
        filt = dyadic_filtration(6)
        ind = (rng.random(64) < 0.3).astype(float)
        f = MartingaleFunction(filt, ind - filt.average(ind[:, None], 1)[:, 0])
        rep = verify_theorem_a(f)
        assert rep.passed
        assert rep.worst_lower_margin > 0 and rep.worst_upper_margin > 0

    def test_report_shape(self, rng):
        rep = verify_theorem_a(sample_martingale(dyadic_filtration(4), rng)).to_dict()
        assert rep["check"] == "sandwich"
        assert {"p", "lhs", "rhs"} <= set(rep["lp_checks"][0])
        assert len(rep["lp_checks"]) == 8


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth=st.integers(2, 9))
def test_sandwich_property(seed, depth):
    rng = np.random.default_rng(seed)
    seq = theorem_a_sequence(depth)
    f = sample_martingale(dyadic_filtration(depth), rng)
    G2 = gfunction_squared(seq, f)
    S2 = square_function_from(f, 2) ** 2
    assert np.all(G2 >= LOWER_CONSTANT * S2 * (1 - 1e-10))
    assert np.all(G2 <= UPPER_CONSTANT * S2 * (1 + 1e-10))
