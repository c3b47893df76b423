import numpy as np
import pytest

from kgeft.errors import CausalityBudgetExceeded
from kgeft.grid import Field, GridSpec, gaussian_field, random_bandlimited
from kgeft.propagators import (
    ExponentFit,
    crossover_time,
    fit_power_law,
    from_halfwaves,
    linear_flow,
    measure_decay,
    to_halfwaves,
    verify_integral_estimates,
)


class TestHalfWaves:
    def test_round_trip(self, rng):
        g = GridSpec(2, 32, 12.0)
        U = random_bandlimited(g, rng)
        Ut = random_bandlimited(g, rng)
        U2, Ut2 = from_halfwaves(to_halfwaves(U, Ut, 3.0))
        assert np.allclose(U2.physical(), U.physical(), atol=1e-12)
        assert np.allclose(Ut2.physical(), Ut.physical(), atol=1e-12)

    def test_flow_is_unitary(self, rng):
        g = GridSpec(1, 128, 30.0)
        f = random_bandlimited(g, rng, real=False)
        out = linear_flow(f, 4.0, 1, 7.3)
        assert np.linalg.norm(out.fourier()) == pytest.approx(np.linalg.norm(f.fourier()), rel=1e-13)

    def test_flow_group_law(self, rng):
        g = GridSpec(1, 64, 10.0)
        f = random_bandlimited(g, rng, real=False)
        a = linear_flow(linear_flow(f, 2.0, -1, 1.5), 2.0, -1, 2.5)
        b = linear_flow(f, 2.0, -1, 4.0)
        assert np.allclose(a.fourier(), b.fourier(), atol=1e-12)
        back = linear_flow(b, 2.0, 1, 4.0)
        assert np.allclose(back.fourier(), f.fourier(), atol=1e-12)

    def test_bad_sign(self, rng):
        g = GridSpec(1, 16, 1.0)
        with pytest.raises(ValueError):
            linear_flow(Field.zeros(g), 1.0, 0, 1.0)


class TestFits:
    def test_exact_power_law(self):
        x = np.linspace(1, 100, 50)
        fit = fit_power_law(x, 3.0 * x**-1.5)
        assert fit.slope == pytest.approx(-1.5, abs=1e-12)
        assert fit.residual < 1e-12
        assert np.allclose(fit.predict(x), 3.0 * x**-1.5)

    def test_window_and_too_few_points(self):
        x = np.arange(1.0, 10.0)
        assert np.isnan(fit_power_law(x, x, (100, 200)).slope)

    def test_json_round_trip(self):
        fit = fit_power_law([1, 2, 4], [1, 0.5, 0.25])
        back = ExponentFit.from_json(fit.to_json())
        assert back.slope == fit.slope and back.window == fit.window

    def test_crossover_of_broken_power_law(self):
        t = np.linspace(0.1, 1000, 4000)
        y = np.minimum(1.0, (t / 20.0) ** -0.5)
        tc, level, fit = crossover_time(t, y, (0.1, 10), (100, 1000))
        assert tc == pytest.approx(20.0, rel=1e-6)
        assert level == pytest.approx(1.0)


class TestDecay:
    def test_one_dimensional_linf_rate(self):
        g = GridSpec(1, 4096, 1024.0)
        U0 = gaussian_field(g, 1.0, 1.0)
        fit = measure_decay(U0, Field.zeros(g), 1.0, np.linspace(20, 400, 60), np.inf)
        assert abs(fit.slope + 0.5) < 0.1

    def test_causality_guard(self):
        g = GridSpec(1, 256, 64.0)
        U0 = gaussian_field(g, 1.0, 1.0)
        with pytest.raises(CausalityBudgetExceeded):
            measure_decay(U0, Field.zeros(g), 1.0, [10.0, 100.0], 4.0)


class TestIntegralEstimates:
    @pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (0.5, 2.0), (2.0, 0.5), (2.0, 2.0)])
    def test_independent_ratio_bounded(self, alpha, beta):
        rep = verify_integral_estimates(alpha, beta, 8.0, np.geomspace(2, 2000, 12))
        assert rep.independent_sup_ratio < 20

    def test_unit_prefactor_is_uniform_in_M(self):
        sups = [verify_integral_estimates(1.5, 2.0, M, np.geomspace(2, 4000, 10))
                .dependent_sup_ratio_unit_prefactor for M in (4.0, 16.0, 64.0)]
        assert max(sups) / min(sups) < 4

    def test_literal_prefactor_grows_when_alpha_above_one(self):
        sups = [verify_integral_estimates(1.5, 2.0, M, np.geomspace(2, 4000, 10)).dependent_sup_ratio
                for M in (4.0, 64.0)]
        assert sups[1] > 2 * sups[0]

    def test_rejects_nonpositive_exponents(self):
        with pytest.raises(ValueError):
            verify_integral_estimates(0.0, 1.0, 2.0, [2.0])
