import numpy as np
import pytest

from kgeft.errors import CausalityBudgetExceeded
from kgeft.grid import Field, GridSpec, gaussian_field, random_bandlimited
from kgeft.solver import (
    MonitorSpec,
    UVModel,
    UVState,
    XNormTrace,
    change_variables,
    data_norms,
    evolve,
    evolve_direct,
    gaussian_state,
    scale_to_budget,
    step,
)


@pytest.fixture
def grid():
    return GridSpec(1, 128, 60.0)


def random_state(grid, rng, M, formulation="original"):
    f = lambda: random_bandlimited(grid, rng, band=0.2) * 0.05
    return UVState(f(), f(), f(), f(), M, 0.0, formulation)


class TestChangeOfVariables:
    @pytest.mark.parametrize("target", ["v_modified", "rescaled"])
    def test_round_trip(self, grid, rng, target):
        s = random_state(grid, rng, 5.0)
        back = change_variables(change_variables(s, target), "original")
        for a, b in zip(s.arrays(), back.arrays()):
            assert np.allclose(a, b, atol=1e-14)

    def test_rescaled_light_field_is_divided_by_M(self, grid, rng):
        s = random_state(grid, rng, 4.0)
        r = change_variables(s, "rescaled")
        assert np.allclose(r.U.physical() * 4.0, s.U.physical())

    def test_unknown_formulation(self, grid, rng):
        with pytest.raises(ValueError):
            change_variables(random_state(grid, rng, 2.0), "other")


class TestEquivalence:
    def run_pair(self, model):
        g = GridSpec(1, 256, 200.0)
        M = 8.0
        s = gaussian_state(g, M, 0.05, 3.0, 0.02)
        dt = 0.25 / M / 2
        a = change_variables(evolve_direct(s, 5.0, dt, model), "original")
        b = evolve_direct(change_variables(s, "original"), 5.0, dt, model)
        return a, b

    def test_mass_term_restores_equivalence(self):
        a, b = self.run_pair(UVModel(mass_term=True))
        err = np.abs(a.V.physical() - b.V.physical()).max() / np.abs(b.V.physical()).max()
        assert err < 2e-5

    def test_dropped_mass_term_changes_heavy_field(self):
        a, b = self.run_pair(UVModel(mass_term=False))
        err = np.abs(a.V.physical() - b.V.physical()).max() / np.abs(b.V.physical()).max()
        assert err > 1e-3


class TestEvolve:
    def test_zero_data_stays_zero(self, grid):
        res = evolve(UVState.zeros(grid, 4.0), 5.0)
        assert all(np.all(a == 0) for a in res.state.arrays())

    def test_free_flow_keeps_profiles(self, grid):
        s = gaussian_state(grid, 4.0, 0.5, 2.0)
        res = evolve(s, 10.0, monitors=("profiles",), model=UVModel(coupling=0.0))
        first, last = res.profiles[0], res.profiles[-1]
        assert np.allclose(first.l_plus.fourier(), last.l_plus.fourier(), atol=1e-12)

    def test_rk4_order(self):
        g = GridSpec(1, 128, 80.0)
        M = 4.0
        s = gaussian_state(g, M, 0.6, 2.0, 0.1)
        dt = 0.0625 / M
        runs = [evolve_direct(s, 4.0, dt / 2**j).U.physical() for j in range(3)]
        ratio = np.abs(runs[0] - runs[1]).max() / np.abs(runs[1] - runs[2]).max()
        assert 16 * 0.7 < ratio < 16 * 1.3

    def test_step_matches_evolve(self, grid):
        s = gaussian_state(grid, 4.0, 0.2, 2.0)
        a = step(s, 0.05)
        b = evolve_direct(s, 0.05, 0.05)
        assert np.allclose(a.U.physical(), b.U.physical(), atol=1e-14)

    def test_causality_guard(self):
        g = GridSpec(1, 128, 20.0)
        with pytest.raises(CausalityBudgetExceeded):
            evolve(gaussian_state(g, 4.0, 0.1, 1.0), 20.0)

    def test_dt_guard(self, grid):
        with pytest.raises(ValueError):
            evolve(gaussian_state(grid, 4.0, 0.1, 1.0), 1.0, dt=1.0)

    def test_trace_csv_round_trip(self, grid, tmp_path):
        res = evolve(gaussian_state(grid, 4.0, 0.1, 1.0), 2.0, monitor=MonitorSpec(every=4))
        path = res.trace.write_csv(tmp_path / "trace.csv")
        back = XNormTrace.read_csv(path)
        assert len(back) == len(res.trace)
        assert back.X_total == pytest.approx(res.trace.X_total)


class TestDataNorms:
    def test_zero_state_passes(self, grid):
        rep = data_norms(UVState.zeros(grid, 4.0), 8, 5, 1.0)
        assert rep.total == 0 and rep.passes

    def test_budget_scaling_hits_target(self):
        g = GridSpec(1, 256, 100.0)
        s = gaussian_state(g, 8.0, 1.0, 3.0)
        t = scale_to_budget(s, 8, 5, 1.0, 0.5, weighted=False)
        rep = data_norms(t, 8, 5, 1.0)
        light = rep.terms["M*|U0|_H^N"] + rep.terms["M*|U1|_H^(N-1)"]
        assert light == pytest.approx(0.5, rel=1e-12)
