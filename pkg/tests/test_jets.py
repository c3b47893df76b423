import numpy as np
import pytest

from kgeft.errors import InsufficientJetDepth
from kgeft.grid import GridSpec
from kgeft.jets import JetField, jet_box, jet_lorentz_dot, jet_multiply, jet_power


def poly_jet(grid, coeffs, profile):
    """Jets at t = 0 of p(t) * profile(x) for a polynomial p with the given coefficients."""
    p = np.polynomial.Polynomial(coeffs)
    arrs = []
    for k in range(len(coeffs)):
        arrs.append(p.deriv(k)(0.0) * profile if k else p(0.0) * profile)
    return JetField(grid, tuple(arrs)), p


@pytest.fixture
def grid():
    return GridSpec(1, 64, 2 * np.pi)


class TestJetAlgebra:
    def test_leibniz_matches_polynomial_product(self, grid):
        a, pa = poly_jet(grid, [1.0, 0.5, -0.3, 0.2], np.ones(grid.shape))
        b, pb = poly_jet(grid, [0.4, -1.0, 0.7, 0.1], np.ones(grid.shape))
        prod = jet_multiply(a, b)
        pp = pa * pb
        for k in range(4):
            assert np.allclose(prod[k], pp.deriv(k)(0.0) if k else pp(0.0), atol=1e-13)

    def test_power(self, grid):
        a, p = poly_jet(grid, [0.5, 1.0, 0.0], np.ones(grid.shape))
        cube = jet_power(a, 3)
        assert np.allclose(cube[1], (p**3).deriv(1)(0.0))

    def test_box_of_plane_wave(self, grid):
        kappa, omega = 2.0, 3.0
        x = grid.x[0]
        # d_t^s cos(kx - wt) for s = 0..3
        arrs = [np.cos(kappa * x), omega * np.sin(kappa * x), -omega**2 * np.cos(kappa * x),
                -omega**3 * np.sin(kappa * x)]
        box = jet_box(JetField(grid, tuple(arrs)))
        assert box.order == 1
        assert np.allclose(box[0], (omega**2 - kappa**2) * np.cos(kappa * x), atol=1e-12)

    def test_lorentz_dot_drops_one_order(self, grid):
        x = grid.x[0]
        u = JetField(grid, (np.cos(x), np.sin(x), -np.cos(x)))
        q = jet_lorentz_dot(u, u)
        assert q.order == 1
        # -u_t^2 + u_x^2 = -sin^2 + sin^2 = 0 at t = 0
        assert np.allclose(q[0], 0.0, atol=1e-12)

    def test_taylor_evaluation(self, grid):
        a, p = poly_jet(grid, [1.0, 2.0, 3.0, 4.0], np.ones(grid.shape))
        assert np.allclose(a.taylor(0.3), p(0.3))

    def test_truncate_and_shift_errors(self, grid):
        a = JetField.constant(grid, 1.0, 2)
        with pytest.raises(InsufficientJetDepth):
            a.truncate(3)
        with pytest.raises(InsufficientJetDepth):
            jet_box(a.truncate(1))
