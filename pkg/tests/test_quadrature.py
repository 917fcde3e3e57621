import math

import numpy as np
import pytest

from martingale_lps.errors import AccuracyError
from martingale_lps.quadrature import G_WEIGHTS, K_WEIGHTS, NODES, integrate_panels


class TestRule:
    def test_kronrod_degree(self):
        for k in range(24):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert K_WEIGHTS @ NODES**k == pytest.approx(exact, abs=1e-14)

    def test_gauss_degree(self):
        for k in range(14):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert G_WEIGHTS @ NODES**k == pytest.approx(exact, abs=1e-14)


class TestIntegratePanels:
    def test_multi_component(self):
        res = integrate_panels(lambda x: np.stack([np.exp(x), np.cos(x)], axis=1), [0.0, 1.0, 3.0])
        np.testing.assert_allclose(res.value, [math.e**3 - 1, math.sin(3.0)], rtol=1e-12)

    def test_multi_scale_exponential(self):
        # int over u = ln t of s e^{-s}, s = e^u b, equals 1 for every scale b
        scales = np.array([1.0, 1e6, 1e12])
        lnb = np.log(scales)

        def fun(u):
            s = np.exp(u[:, None] + lnb[None, :])
            return s * np.exp(-s)

        edges = np.arange(-60.0, 6.0, 1.0)
        res = integrate_panels(fun, edges, rtol=1e-12)
        np.testing.assert_allclose(res.value, 1.0, rtol=1e-10)

    def test_failure_reports_achieved(self):
        with pytest.raises(AccuracyError) as info:
            integrate_panels(lambda x: (x**-0.9)[:, None], [0.0, 1.0], max_rounds=3)
        assert info.value.achieved is not None
