import numpy as np
import pytest

from kgeft.errors import GridMismatch, UnsupportedWeight
from kgeft.grid import (
    FOURIER,
    PHYSICAL,
    Field,
    GridSpec,
    NormSpec,
    bessel_potential,
    dealias,
    gaussian_field,
    hs_norm,
    is_hermitian,
    l2_physical,
    norm,
    random_bandlimited,
    read_fld,
    transform,
    write_fld,
)


class TestGridSpec:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            GridSpec(1, 100, 10.0)
        with pytest.raises(ValueError):
            GridSpec(4, 16, 10.0)

    def test_frequencies_follow_fft_order(self):
        g = GridSpec(1, 8, 2 * np.pi)
        assert np.allclose(g.rho1d, [0, 1, 2, 3, -4, -3, -2, -1])

    def test_dealias_mask_keeps_two_thirds(self):
        g = GridSpec(1, 64, 10.0)
        assert g.dealias_mask.sum() == 43

    def test_dict_round_trip(self):
        g = GridSpec(3, 16, 7.5)
        assert GridSpec.from_dict(g.to_dict()) == g


class TestTransforms:
    def test_round_trip(self, rng):
        g = GridSpec(2, 32, 10.0)
        f = random_bandlimited(g, rng, real=False)
        back = transform(transform(f, FOURIER), PHYSICAL)
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))

    def test_gaussian_matches_continuum_transform(self):
        g = GridSpec(1, 256, 60.0)
        w = 2.0
        f = gaussian_field(g, 1.0, w)
        exact = np.sqrt(2 * np.pi) * w * np.exp(-(w * g.rho1d) ** 2 / 2)
        assert np.max(np.abs(f.fourier() - exact)) < 1e-12

    def test_parseval(self, rng):
        g = GridSpec(3, 16, 9.0)
        f = random_bandlimited(g, rng)
        assert hs_norm(f, 0) == pytest.approx(l2_physical(f), rel=1e-12)

    def test_bessel_inverse_pair(self, rng):
        g = GridSpec(1, 64, 20.0)
        f = random_bandlimited(g, rng)
        back = bessel_potential(bessel_potential(f, 2.5, 3.0), -2.5, 3.0)
        assert np.max(np.abs(back.values - f.values)) < 1e-12 * np.max(np.abs(f.values))

    def test_real_fields_are_hermitian(self, rng):
        g = GridSpec(2, 16, 5.0)
        assert is_hermitian(random_bandlimited(g, rng))
        assert not is_hermitian(random_bandlimited(g, rng, real=False))

    def test_dealias_removes_high_modes(self, rng):
        g = GridSpec(1, 64, 5.0)
        f = dealias(random_bandlimited(g, rng, band=0.5))
        assert np.max(np.abs(f.fourier()[~g.dealias_mask])) < 1e-12

    def test_grid_mismatch(self):
        a = Field.zeros(GridSpec(1, 16, 1.0))
        b = Field.zeros(GridSpec(1, 16, 2.0))
        with pytest.raises(GridMismatch):
            a + b


class TestNorms:
    def test_gaussian_l2_closed_form(self):
        g = GridSpec(1, 512, 80.0)
        w = 1.5
        assert hs_norm(gaussian_field(g, 1.0, w), 0) ** 2 == pytest.approx(np.sqrt(np.pi) * w, rel=1e-12)

    def test_hs_monotone_in_s(self, rng):
        g = GridSpec(1, 64, 10.0)
        f = random_bandlimited(g, rng)
        assert hs_norm(f, 0) < hs_norm(f, 1) < hs_norm(f, 2)

    def test_linf_is_sample_max(self, rng):
        g = GridSpec(1, 64, 10.0)
        f = random_bandlimited(g, rng)
        assert norm(f, NormSpec("Wkp", 0, np.inf)) == np.max(np.abs(f.values))

    def test_weighted_norm_needs_central_support(self):
        g = GridSpec(1, 64, 10.0)
        with pytest.raises(UnsupportedWeight):
            norm(Field(g, np.ones(g.shape)), NormSpec("weightedHs", 1.0))
        assert norm(gaussian_field(g, 1.0, 0.3), NormSpec("weightedHs", 1.0)) > 0

    def test_bad_norm_spec(self):
        with pytest.raises(ValueError):
            NormSpec("Lp")
        with pytest.raises(ValueError):
            NormSpec("Wkp", 0.0, 0.5)


class TestSnapshots:
    def test_fld_round_trip_is_bitwise(self, tmp_path, rng):
        g = GridSpec(2, 16, 3.0)
        f = random_bandlimited(g, rng, real=False)
        p = write_fld(tmp_path / "a.fld", f, 1.25, "a", {"M": 8.0})
        h, hdr = read_fld(p)
        assert np.array_equal(h.values, f.values)
        assert hdr.time == 1.25 and hdr.extra["M"] == 8.0 and hdr.grid == g
