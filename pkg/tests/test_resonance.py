import math

import numpy as np
import pytest

from kgeft.errors import GridTooLarge, InvalidHolderTriple, MinimizationFailed, StencilOutOfRange
from kgeft.grid import Field, GridSpec, random_bandlimited
from kgeft.propagators import fit_power_law
from kgeft.resonance import (
    BilinearSymbol,
    CutoffPartition,
    adversarial_pair,
    bilinear_apply,
    bump,
    estimate_operator_norm,
    finite_difference,
    grad_phase_eval,
    min_distance_to_time_resonance,
    parse_signs,
    phase_eval,
    phase_u,
    phase_v,
    polar_scan_distance,
    resonance_sheet,
    sample_support,
    space_resonance_point,
    symbol_chiS_over_phi,
    symbol_chiT_grad,
    symbol_indicator,
    symbol_one,
    verify_lower_bounds,
    verify_separation,
    verify_symbolic_bounds,
)


class TestPhases:
    def test_values_at_origin(self):
        assert phase_eval(phase_u(2.0), [0.0], [0.0]) == pytest.approx(0.0, abs=1e-15)
        assert phase_eval(phase_u(3.0), [0.0], [0.0]) == pytest.approx(-1.0)

    def test_heavy_phase_masses(self):
        spec = phase_v(5.0)
        assert spec.masses == (5.0, 1.0, 1.0)
        assert phase_eval(spec, [0.0], [0.0]) == pytest.approx(-5.0 + 2.0)

    def test_gradient_matches_finite_differences(self, rng):
        spec = phase_u(7.0)
        h = 1e-6
        for _ in range(20):
            rho, nu = rng.normal(size=3) * 5, rng.normal(size=3) * 5
            fd = [(phase_eval(spec, rho, nu + h * e) - phase_eval(spec, rho, nu - h * e)) / (2 * h)
                  for e in np.eye(3)]
            assert np.allclose(grad_phase_eval(spec, rho, nu), fd, atol=1e-6)

    def test_equal_signs_never_vanish(self, rng):
        for s in (1, -1):
            for M in (4.0, 32.0):
                spec = phase_u(M, (s, s, s))
                rho, nu = rng.normal(size=(1000, 3)) * 50, rng.normal(size=(1000, 3)) * 50
                assert np.abs(phase_eval(spec, rho, nu)).min() >= M - 2

    def test_sign_parsing(self):
        assert parse_signs("+-+") == (1, -1, 1)
        with pytest.raises(ValueError):
            parse_signs("+-")
        with pytest.raises(ValueError):
            phase_u(4.0, (1, 0, 1))


class TestSpaceResonance:
    def test_point_for_mass_two(self):
        spec = phase_u(2.0)
        star = space_resonance_point(spec, [1.0, 0.0, 0.0])
        assert np.allclose(star, [2.0, 0.0, 0.0])
        assert np.linalg.norm(grad_phase_eval(spec, [1.0, 0.0, 0.0], star)) == 0.0

    def test_origin(self):
        assert np.all(space_resonance_point(phase_u(4.0), np.zeros(3)) == 0)

    @pytest.mark.parametrize("M", [4.0, 32.0])
    def test_gradient_vanishes(self, rng, M):
        spec = phase_u(M)
        for rho in rng.normal(size=(50, 3)) * 20:
            g = grad_phase_eval(spec, rho, space_resonance_point(spec, rho))
            assert np.linalg.norm(g) <= 1e-12 * (1 + np.linalg.norm(rho))

    def test_requires_light_phase(self):
        with pytest.raises(ValueError):
            space_resonance_point(phase_v(4.0), [1.0])


class TestSeparation:
    def test_distance_exceeds_one_at_mass_four(self):
        spec = phase_u(4.0)
        d = min_distance_to_time_resonance(spec, 1.0)
        assert d > 1
        assert d == pytest.approx(polar_scan_distance(spec, 1.0), rel=1e-6)

    def test_origin_distance_positive(self):
        assert min_distance_to_time_resonance(phase_u(8.0), 0.0) > 0

    def test_growth_with_mass(self):
        rep = verify_separation([4, 8, 16, 32], [0.0, 1.0, 4.0])
        assert rep.fit.slope >= 0.45

    def test_rejects_small_masses(self):
        with pytest.raises(ValueError):
            verify_separation([2, 4], [1.0])

    def test_no_seed_converges(self):
        with pytest.raises(MinimizationFailed):
            min_distance_to_time_resonance(phase_u(8.0), 1.0, seeds=0)


class TestPartition:
    def test_bump_profile(self):
        assert bump(0.5) == 1.0 and bump(2.5) == 0.0
        x = np.linspace(1, 2, 101)
        assert np.all(np.diff(bump(x)) <= 0)

    @pytest.mark.parametrize("M", [4.0, 128.0])
    def test_partition_of_unity(self, rng, M):
        part = CutoffPartition(phase_u(M))
        rho = rng.normal(size=(2000, 3)) * M
        nu = rho * M / (M - 1) + rng.normal(size=(2000, 3)) * math.sqrt(M)
        cs, ct = part.chi_S(rho, nu), part.chi_T(rho, nu)
        assert np.max(np.abs(cs + ct - 1)) <= 1e-12
        assert cs.min() >= 0 and cs.max() <= 1

    def test_space_resonance_is_in_the_time_part(self, rng):
        for M in (4.0, 32.0, 128.0):
            part = CutoffPartition(phase_u(M))
            rho = rng.normal(size=(200, 3)) * M
            star = space_resonance_point(part.phase, rho)
            assert np.all(part.chi_T(rho, star) == 0)
            assert np.all(part.chi_S(rho, star) == 1)

    def test_phase_is_large_at_space_resonance(self, rng):
        for M in (4.0, 32.0, 128.0):
            spec = phase_u(M)
            rho = rng.normal(size=(200, 3)) * M
            star = space_resonance_point(spec, rho)
            q = np.abs(phase_eval(spec, rho, star)) * np.sqrt(1 + np.sum((rho - star) ** 2, -1)) / M
            assert q.min() > 0.25

    def test_gradient_order_one_away_from_resonance(self):
        spec = phase_u(8.0)
        g = grad_phase_eval(spec, [0.5, 0, 0], [-0.8, 0, 0])
        assert 0.1 < np.linalg.norm(g) < 2

    def test_lower_bounds_are_uniform(self, rng):
        infs = []
        for M in (4.0, 16.0, 64.0):
            rho = rng.normal(size=(50, 3)) * M
            rep = verify_lower_bounds(CutoffPartition(phase_u(M)), rho, rng, nu_per_rho=100)
            infs.append((rep.inf_time, rep.inf_space))
        t, s = np.array(infs).T
        assert t.min() > 0 and s.min() > 0
        assert t.max() / t.min() < 3 and s.max() / s.min() < 3

    def test_support_samples_surround_resonance(self, rng):
        part = CutoffPartition(phase_u(16.0))
        rho = np.array([[3.0, 0.0, 0.0]])
        nu = sample_support(part, rho, rng, 500)
        assert (part.chi_S(np.broadcast_to(rho[:, None], nu.shape), nu) > 0.99).any()


class TestSymbols:
    def test_one_has_no_derivatives(self, rng):
        nu1, nu2 = rng.normal(size=(100, 1)) * 10, rng.normal(size=(100, 1)) * 10
        rep = verify_symbolic_bounds(symbol_one(), nu1, nu2)
        for (order, _), r in rep.sup_ratio.items():
            assert r == (r if order == 0 else 0.0)
        assert rep.sup_ratio[(1, 1)] == 0.0

    def test_reciprocal_phase_derivative(self, rng):
        spec = phase_u(16.0)
        phi = lambda n1, n2: phase_eval(spec, n1 + n2, n1)
        sym = BilinearSymbol(lambda n1, n2: 1.0 / phi(n1, n2))
        nu1, nu2 = rng.normal(size=(400, 1)) * 3, rng.normal(size=(400, 1)) * 3
        keep = np.abs(phi(nu1, nu2)) > 1.0
        nu1, nu2 = nu1[keep], nu2[keep]
        rho = nu1 + nu2
        dphi = rho[:, 0] / np.sqrt(1 + rho[:, 0] ** 2) - nu1[:, 0] / np.sqrt(16.0**2 + nu1[:, 0] ** 2)
        analytic = -dphi / phi(nu1, nu2) ** 2
        fd = finite_difference(sym, nu1, nu2, 1, 1)
        assert np.allclose(fd, analytic, atol=1e-5)

    def test_stencil_order(self):
        with pytest.raises(StencilOutOfRange):
            finite_difference(symbol_one(), [1.0], [1.0], 4, 1)

    def test_chiS_over_phi_envelope_is_uniform(self, rng):
        sups = []
        for M in (8.0, 32.0, 128.0):
            part = CutoffPartition(phase_u(M))
            sym = symbol_chiS_over_phi(part)
            rho = rng.uniform(-3 * M, 3 * M, size=(200, 1))
            nu1 = sample_support(part, rho, rng, 20).reshape(-1, 1)
            nu2 = np.repeat(rho, 20, axis=0) - nu1
            rep = verify_symbolic_bounds(sym, nu1, nu2, max_order=3)
            sups.append([rep.sup_ratio[(a, k)] for a in range(4) for k in (1, 2)])
        sups = np.array(sups)
        assert np.all(sups.max(axis=0) / sups.min(axis=0) < 5)

    def test_chiT_symbol_vanishes_at_space_resonance(self):
        part = CutoffPartition(phase_u(8.0))
        sym = symbol_chiT_grad(part)
        rho = np.array([2.0])
        star = space_resonance_point(part.phase, rho)
        assert sym(star, rho - star) == 0.0


class TestBilinear:
    @pytest.fixture
    def grid(self):
        return GridSpec(1, 64, 2 * np.pi * 4)

    def test_one_gives_product(self, grid, rng):
        f, g = random_bandlimited(grid, rng), random_bandlimited(grid, rng)
        out = bilinear_apply(symbol_one(), f, g)
        assert np.max(np.abs(out.physical() - f.physical() * g.physical())) < 1e-10

    def test_one_gives_product_in_3d(self, rng):
        grid = GridSpec(3, 8, 5.0)
        f, g = random_bandlimited(grid, rng), random_bandlimited(grid, rng)
        out = bilinear_apply(symbol_one(), f, g)
        assert np.max(np.abs(out.physical() - f.physical() * g.physical())) < 1e-10

    def test_single_pair(self, grid, rng):
        f, g = random_bandlimited(grid, rng, real=False), random_bandlimited(grid, rng, real=False)
        out = bilinear_apply(symbol_indicator(grid, [3], [-5]), f, g).fourier().copy()
        i, j, r = 3, -5 % grid.n, -2 % grid.n
        assert out[r] == pytest.approx(f.fourier()[i] * g.fourier()[j] / grid.L)
        out[r] = 0
        assert np.all(out == 0)

    def test_swap_symmetry(self, grid, rng):
        part = CutoffPartition(phase_u(8.0))
        m = symbol_chiS_over_phi(part)
        swapped = BilinearSymbol(lambda a, b: m(b, a))
        f, g = random_bandlimited(grid, rng), random_bandlimited(grid, rng)
        a = bilinear_apply(m, f, g).fourier()
        b = bilinear_apply(swapped, g, f).fourier()
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))

    def test_bilinearity(self, grid, rng):
        m = symbol_chiS_over_phi(CutoffPartition(phase_u(8.0)))
        f1, f2, g = (random_bandlimited(grid, rng) for _ in range(3))
        lhs = bilinear_apply(m, f1 * 2.0 + f2 * -3.0, g).fourier()
        rhs = 2.0 * bilinear_apply(m, f1, g).fourier() - 3.0 * bilinear_apply(m, f2, g).fourier()
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))

    def test_grid_limits(self, rng):
        big = GridSpec(2, 128, 10.0)
        z = Field.zeros(big)
        with pytest.raises(GridTooLarge):
            bilinear_apply(symbol_one(), z, z)


class TestOperatorNorm:
    @pytest.fixture
    def grid(self):
        return GridSpec(1, 128, 2 * np.pi * 8)

    def test_holder_is_sharp_for_product(self, grid, rng):
        rep = estimate_operator_norm(symbol_one(), grid, 0, 2, (np.inf, 2), (2, np.inf), 0, 20, rng)
        assert rep.sup_ratio <= 1 + 1e-9

    def test_bad_triple(self, grid, rng):
        with pytest.raises(InvalidHolderTriple):
            estimate_operator_norm(symbol_one(), grid, 0, 2, (4, 2), (2, np.inf), 0, 1, rng)

    def test_no_growth_in_M(self, grid, rng):
        Ms = [8.0, 32.0, 128.0]
        sups, adv = [], []
        for M in Ms:
            sym = symbol_chiS_over_phi(CutoffPartition(phase_u(M)))
            sups.append(estimate_operator_norm(sym, grid, 1, 2, (4, 4), (4, 4), 2, 20, rng).sup_ratio)
            pair = adversarial_pair(grid, M / (M - 1), -1 / (M - 1))
            adv.append(estimate_operator_norm(sym, grid, 1, 2, (4, 4), (4, 4), 2, 0, rng,
                                              pairs=[pair]).sup_ratio)
        assert fit_power_law(Ms, sups).slope <= 0.1
        assert fit_power_law(Ms, adv).slope <= 0.1


class TestSheets:
    def test_columns_and_resonance_row(self):
        spec = phase_u(32.0)
        sheet = resonance_sheet(spec, 4.0, 10.0, n=21)
        assert sheet.shape == (21 * 11, 5)
        row = np.argmin(np.abs(sheet[:, 0] - 4.0 * 32 / 31) + sheet[:, 1])
        assert sheet[row, 3] < 1e-12 and sheet[row, 4] == 1.0
