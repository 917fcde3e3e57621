import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martingale_lps.errors import ConfigurationError, DomainError, RangeError
from martingale_lps.probability import (
    MartingaleFunction,
    condexp,
    dyadic_filtration,
    fixed_projection,
    random_filtration,
    sample_martingale,
)
from martingale_lps.semigroup import (
    THEOREM_A_MAX_DEPTH,
    SubordinationSequence,
    apply_semigroup,
    apply_semigroup_weighted,
    apply_T,
    custom_sequence,
    default_t_grid,
    semigroup_weight,
    theorem_a_sequence,
    verify_axioms,
)


class TestSequence:
    def test_depth_one(self):
        np.testing.assert_array_equal(theorem_a_sequence(1).b, [0.0, 256.0])

    def test_depth_three(self):
        np.testing.assert_array_equal(theorem_a_sequence(3).b, [0.0, 256.0, 4096.0, 65536.0])

    def test_linear_domain_degenerate(self):
        seq = theorem_a_sequence(1)
        assert seq.a(1) == 1.0
        assert seq.b[1] == 256.0

    def test_powers_exact_at_max_depth(self):
        seq = theorem_a_sequence(THEOREM_A_MAX_DEPTH)
        assert seq.b[-1] == 2.0 ** (4 * THEOREM_A_MAX_DEPTH + 4)
        with pytest.raises(RangeError):
            theorem_a_sequence(THEOREM_A_MAX_DEPTH + 1)

    def test_invariants(self):
        with pytest.raises(DomainError):
            SubordinationSequence([0.5, 1.0])
        with pytest.raises(DomainError):
            custom_sequence([0.0, 2.0, 2.0])

    def test_round_trip(self):
        seq = theorem_a_sequence(4)
        back = SubordinationSequence.from_dict(seq.to_dict())
        np.testing.assert_array_equal(back.b, seq.b)
        assert back.provenance == "theorem_a"


class TestWeights:
    def test_first_weight(self):
        seq = theorem_a_sequence(3)
        t = 0.003
        assert semigroup_weight(seq, 1, t) == pytest.approx(1 - math.exp(-t * 256), rel=1e-15)

    def test_half(self):
        seq = theorem_a_sequence(2)
        assert semigroup_weight(seq, 1, math.log(2) / 256) == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("t", [1e-9, 1e-4, 0.01, 1.0, 1e6])
    def test_telescoping(self, t):
        seq = theorem_a_sequence(6)
        ws = [semigroup_weight(seq, n, t) for n in range(1, 7)]
        assert all(w >= 0 for w in ws)
        assert math.fsum(ws) + math.exp(-t * seq.b[6]) == pytest.approx(1.0, abs=1e-15)


class TestApplySemigroup:
    def test_level_one_fixed(self):
        f = MartingaleFunction(dyadic_filtration(4), np.repeat([2.0, -1.0], 8))
        for t in (1e-6, 0.5, 10.0):
            np.testing.assert_allclose(apply_semigroup(theorem_a_sequence(4), f, t).values, f.values)

    def test_unital(self):
        f = MartingaleFunction(dyadic_filtration(5), np.ones(32))
        np.testing.assert_allclose(apply_semigroup(theorem_a_sequence(5), f, 1e-3).values, 1.0, atol=1e-15)

    def test_weighted_form(self, rng):
        seq = theorem_a_sequence(5)
        f = sample_martingale(dyadic_filtration(5), rng)
        a = apply_semigroup(seq, f, 0.01).values
        b = apply_semigroup_weighted(seq, f, 0.01).values
        np.testing.assert_allclose(a, b, atol=1e-12 * np.abs(f.values).max())

    def test_apply_T_is_t_one(self, rng):
        seq = theorem_a_sequence(4)
        f = sample_martingale(dyadic_filtration(4), rng)
        np.testing.assert_array_equal(apply_T(seq, f).values, apply_semigroup(seq, f, 1.0).values)

    def test_generator_form(self, rng):
        # sum (a_n - a_{n-1}) E_n f with a_n - a_{n-1} = exp(-b_{n-1}) - exp(-b_n)
        b = np.array([0.0, 0.3, 0.9, 2.0, 3.5])
        seq = custom_sequence(b)
        filt = random_filtration(rng, 4)
        f = MartingaleFunction(filt, rng.standard_normal(filt.atom_count))
        oracle = sum((math.exp(-b[n - 1]) - math.exp(-b[n])) * condexp(f, n).values for n in range(1, 5))
        oracle = oracle + math.exp(-b[4]) * f.values
        np.testing.assert_allclose(apply_T(seq, f).values, oracle, atol=1e-12)

    def test_depth_mismatch(self, rng):
        f = sample_martingale(dyadic_filtration(5), rng)
        with pytest.raises(ConfigurationError):
            apply_semigroup(theorem_a_sequence(3), f, 1.0)

    def test_commutes_with_fixed_projection(self, rng):
        seq = theorem_a_sequence(4)
        f = sample_martingale(random_filtration(rng, 4), rng)
        Ff = fixed_projection(f)
        for t in (1e-5, 1e-3, 0.2):
            np.testing.assert_allclose(fixed_projection(apply_semigroup(seq, f, t)).values, Ff.values, atol=1e-12)
            np.testing.assert_allclose(apply_semigroup(seq, Ff, t).values, Ff.values, atol=1e-12)


class TestAxioms:
    def test_dyadic_samples(self, rng):
        seq = theorem_a_sequence(8)
        filt = dyadic_filtration(8)
        samples = [sample_martingale(filt, rng) for _ in range(20)]
        rep = verify_axioms(seq, samples, default_t_grid(seq)[:30])
        assert rep.passed(1e-10), rep.to_dict()
        assert rep.continuity_final < 1e-9

    def test_depth_one_exact_law(self, rng):
        seq = theorem_a_sequence(1)
        filt = random_filtration(rng, 1)
        rep = verify_axioms(seq, [sample_martingale(filt, rng) for _ in range(3)])
        assert rep.semigroup_law == 0.0

    def test_positivity(self, rng):
        seq = theorem_a_sequence(4)
        filt = random_filtration(rng, 4)
        f = MartingaleFunction(filt, rng.random(filt.atom_count))
        for t in default_t_grid(seq):
            assert np.all(apply_semigroup(seq, f, t).values >= 0)

    def test_default_grid(self):
        seq = theorem_a_sequence(3)
        grid = default_t_grid(seq)
        assert grid.size == 46
        assert grid[0] == pytest.approx(4.0**5 / 256)

    def test_empty_samples(self):
        with pytest.raises(DomainError):
            verify_axioms(theorem_a_sequence(2), [])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(1e-6, 1.0), t=st.floats(1e-6, 1.0))
def test_semigroup_law_property(seed, s, t):
    rng = np.random.default_rng(seed)
    seq = custom_sequence(np.cumsum(np.r_[0.0, rng.uniform(0.5, 20.0, 4)]))
    f = sample_martingale(random_filtration(rng, 4), rng)
    lhs = apply_semigroup(seq, apply_semigroup(seq, f, s), t).values
    rhs = apply_semigroup(seq, f, s + t).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(f.values).max()))
