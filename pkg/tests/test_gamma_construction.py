import math

import numpy as np
import pytest
from scipy import integrate, special

from martingale_lps.errors import DomainError, RangeError
from martingale_lps.gamma_construction import (
    LN2,
    block_energy,
    gamma_sequences,
    kernel_sum_check,
    log_tail_target,
    lower_constant,
    solve_lk,
    solve_mk,
    upper_constant,
    verify_equivalence,
    verify_partition,
)
from martingale_lps.littlewood_paley import gfunction_quadrature
from martingale_lps.probability import MartingaleFunction, dyadic_filtration, sample_martingale
from martingale_lps.semigroup import custom_sequence, theorem_a_sequence


class TestInversion:
    def test_q1_closed_forms(self):
        assert solve_lk(1.0, 1) == pytest.approx(-math.log(7 / 8), abs=1e-14)
        assert solve_mk(1.0, 1) == pytest.approx(3 * LN2, abs=1e-14)
        for k in range(1, 8):
            assert solve_lk(1.0, k) == pytest.approx(-math.log1p(-(2.0 ** -(k + 2))), abs=1e-12)
            assert solve_mk(1.0, k) == pytest.approx((k + 2) * LN2, abs=1e-12)

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_monotone(self, q):
        seqs = gamma_sequences(q, 6)
        assert np.all(np.diff(seqs.l[1:]) < 0) and np.all(np.diff(seqs.m[1:]) > 0)
        assert np.all(seqs.l[1:] < seqs.m[1:])

    def test_q2_by_independent_integration(self):
        l, m = solve_lk(2.0, 1), solve_mk(2.0, 1)
        lower, _ = integrate.quad(lambda t: t * math.exp(-t), 0.0, l, epsabs=0, epsrel=1e-13)
        upper, _ = integrate.quad(lambda t: t * math.exp(-t), m, np.inf, epsabs=0, epsrel=1e-13)
        assert lower == pytest.approx(2.0**-12, rel=1e-10)
        assert upper == pytest.approx(2.0**-12, rel=1e-10)

    def test_against_scipy_inverse(self):
        for q in (1.5, 2.0, 3.0):
            target = 2.0 ** -(q * q * 4)
            assert solve_lk(q, 2) == pytest.approx(special.gammaincinv(q, target), rel=1e-10)
            assert solve_mk(q, 2) == pytest.approx(special.gammainccinv(q, target), rel=1e-10)

    def test_range_limit(self):
        with pytest.raises(RangeError):
            log_tail_target(3.0, 200)
        with pytest.raises(DomainError):
            solve_lk(0.5, 1)


class TestSequences:
    def test_initial_values(self):
        seqs = gamma_sequences(2.0, 4, M=3.0)
        assert seqs.l[0] == 1.0 and seqs.m[0] == 1.0
        assert seqs.t[0] == pytest.approx(3.0)
        assert seqs.b[0] == 0.0

    def test_q1_identities(self):
        seqs = gamma_sequences(1.0, 4)
        k = np.arange(1, 5)
        l = -np.log1p(-(2.0 ** -(k + 2.0)))
        m = (k + 2) * LN2
        np.testing.assert_allclose(seqs.t[1:] * seqs.b[1:], l, rtol=1e-12)
        np.testing.assert_allclose(seqs.t[:-1] * seqs.b[1:], m, rtol=1e-12)

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_identities_and_separation(self, q):
        seqs = gamma_sequences(q, 6)
        assert max(seqs.residuals.values()) <= 1e-10
        assert seqs.N > 2
        np.testing.assert_allclose(seqs.b[2:] / seqs.b[1:-1], seqs.m[2:] / seqs.l[1:-1], rtol=1e-12)
        assert np.all(np.diff(seqs.t) < 0) and np.all(np.diff(seqs.b) > 0)

    def test_depth_one_separation(self):
        assert math.isinf(gamma_sequences(2.0, 1).N)

    def test_M_rescales(self):
        a, b = gamma_sequences(2.0, 4, 1.0), gamma_sequences(2.0, 4, 10.0)
        np.testing.assert_allclose(b.t, 10 * a.t, rtol=1e-13)
        np.testing.assert_allclose(b.b, a.b / 10, rtol=1e-13)

    def test_to_dict(self):
        d = gamma_sequences(1.0, 3).to_dict()
        assert set(d) == {"q", "M", "depth", "l", "m", "log_t", "log_b", "N", "residuals"}
        assert len(d["log_b"]) == 3


class TestPartition:
    def test_q1_k1(self):
        assert verify_partition(1.0, 1) <= 1e-14
        l, m = solve_lk(1.0, 1), solve_mk(1.0, 1)
        assert math.exp(-l) - math.exp(-m) == pytest.approx(0.75, abs=1e-15)

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
    def test_residual(self, q):
        for k in range(1, 6):
            assert verify_partition(q, k) <= 1e-10

    def test_tends_to_gamma(self):
        vals = [1 - 2 * math.exp(log_tail_target(2.0, k)) for k in range(1, 6)]
        assert vals == sorted(vals) and vals[-1] > 1 - 1e-7


class TestKernelSum:
    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_bound_over_twelve_decades(self, q):
        seqs = gamma_sequences(q, 6)
        centre = math.log10(seqs.t[3])
        ts = np.logspace(centre - 6, centre + 6, 600)
        assert kernel_sum_check(seqs, ts) <= 1.0


class TestBlockEnergy:
    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_diagonal_identity(self, q):
        seqs = gamma_sequences(q, 5)
        filt = dyadic_filtration(6)
        for n in (1, 3):
            # single difference at level n + 1
            sign = np.where((np.arange(64) >> (6 - n - 1)) & 1, -1.0, 1.0)
            f = MartingaleFunction(filt, sign)
            be = block_energy(seqs, f, n=n)
            assert be.diagonal_residual <= 1e-9
            expected = ((1 - 2 * math.exp(log_tail_target(q, n))) * math.gamma(q) / q**q) ** (1 / q)
            np.testing.assert_allclose(be.R_nn, expected, rtol=1e-9)
            others = np.delete(be.R, n - 1, axis=0)
            np.testing.assert_array_equal(others, 0.0)

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_offdiagonal_bounds(self, rng, q):
        seqs = gamma_sequences(q, 5)
        for _ in range(5):
            f = sample_martingale(dyadic_filtration(6), rng, fiber_dim=2)
            for n in range(1, 6):
                assert block_energy(seqs, f, n=n).bound_violation() <= 1e-9


class TestEquivalence:
    def test_constants(self):
        assert lower_constant(1.0) == 0.25
        assert lower_constant(2.0) == pytest.approx(0.25 * 0.5)
        assert upper_constant(1.0, 5.0) == 1.0
        assert upper_constant(3.0, 5.0) == pytest.approx(1.5625)

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_single_difference(self, q):
        seqs = gamma_sequences(q, 4)
        filt = dyadic_filtration(2)
        f = MartingaleFunction(filt, np.array([[3, 4], [-3, -4], [3, 4], [-3, -4]], float))
        G = gfunction_quadrature(seqs.to_subordination_sequence(), f, q)
        np.testing.assert_allclose(G, math.gamma(q) ** (1 / q) / q * 5, rtol=1e-9)
        rep = verify_equivalence(seqs, f)
        assert rep.passed and rep.worst_lower_margin > 0

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_random_vector_valued(self, rng, q):
        seqs = gamma_sequences(q, 6)
        for i in range(12):
            filt = dyadic_filtration(2 + i % 6)
            f = sample_martingale(filt, rng, fiber_dim=4, fiber_r=(1.0, 2.0, math.inf)[i % 3])
            assert verify_equivalence(seqs, f).passed

    def test_theorem_a_route(self, rng):
        f = sample_martingale(dyadic_filtration(5), rng)
        rep = verify_equivalence(theorem_a_sequence(5), f)
        assert rep.route == "closed_form" and rep.passed
        assert math.sqrt(7 / 60) <= rep.min_ratio <= rep.max_ratio <= math.sqrt(23 / 60)

    def test_uncertified_sequence(self, rng):
        f = sample_martingale(dyadic_filtration(3), rng)
        with pytest.raises(DomainError):
            verify_equivalence(custom_sequence([0.0, 1.0, 5.0]), f)
        with pytest.raises(DomainError):
            verify_equivalence(gamma_sequences(2.0, 3), f, q=3.0)
