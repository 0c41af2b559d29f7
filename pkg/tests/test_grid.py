"""Grid, stencil, bump, and quadrature checks.

Oracle values are computed independently of the implementation: analytic
derivatives for the stencil tests, the closed-form bump integral
pi*r^2/3, and hand-built flat orderings for the storage convention.
"""

import math

import numpy as np
import pytest

from minding_lab.grid import (
    Grid2D,
    GridError,
    ScalarField,
    TestFunction,
    fd_laplacian,
    fd_partial,
    quadrature,
)


def smooth_field(grid):
    return ScalarField.from_function(grid, lambda x, y: np.sin(1.3 * x) * np.exp(0.4 * y))


def smooth_dx(grid):
    X, Y = grid.mesh()
    return 1.3 * np.cos(1.3 * X) * np.exp(0.4 * Y)


def smooth_dy(grid):
    X, Y = grid.mesh()
    return 0.4 * np.sin(1.3 * X) * np.exp(0.4 * Y)


class TestGrid2D:
    def test_geometry(self):
        g = Grid2D.from_bounds(0.0, 1.0, 1.0, 2.0, 5, 9)
        assert g.shape == (9, 5)
        assert g.dx == pytest.approx(0.25)
        assert g.dy == pytest.approx(0.125)
        assert g.x()[-1] == pytest.approx(1.0)
        assert g.y()[-1] == pytest.approx(2.0)
        assert g.h == pytest.approx(0.25)

    def test_refined_halves_spacing_keeps_extent(self):
        g = Grid2D.from_bounds(-1.0, 1.0, 2.0, 3.0, 17, 9)
        r = g.refined()
        assert (r.nx, r.ny) == (33, 17)
        assert r.dx == pytest.approx(g.dx / 2)
        assert r.x1 == pytest.approx(g.x1)
        assert r.y1 == pytest.approx(g.y1)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(x0=0, y0=0, nx=2, ny=5, dx=0.1, dy=0.1),
            dict(x0=0, y0=0, nx=5, ny=5, dx=-0.1, dy=0.1),
            dict(x0=0, y0=0, nx=5, ny=5, dx=0.1, dy=0.0),
            dict(x0=math.inf, y0=0, nx=5, ny=5, dx=0.1, dy=0.1),
        ],
    )
    def test_rejects_bad_geometry(self, kwargs):
        with pytest.raises(GridError):
            Grid2D(**kwargs)


class TestScalarField:
    def test_node_major_storage_x_fastest(self):
        g = Grid2D.from_bounds(0.0, 3.0, 0.0, 2.0, 4, 3)
        f = ScalarField.from_function(g, lambda x, y: x + 10.0 * y)
        flat = f.values.ravel()
        for j in range(g.ny):
            for i in range(g.nx):
                assert flat[j * g.nx + i] == pytest.approx(g.x()[i] + 10.0 * g.y()[j])

    def test_rejects_interior_nan_and_any_inf(self):
        g = Grid2D.from_bounds(0, 1, 0, 1, 4, 4)
        bad = np.zeros(g.shape)
        bad[1, 1] = np.nan
        with pytest.raises(GridError):
            ScalarField(g, bad)
        bad = np.zeros(g.shape)
        bad[0, 0] = np.inf
        with pytest.raises(GridError):
            ScalarField(g, bad)

    def test_boundary_nan_allowed(self):
        g = Grid2D.from_bounds(0, 1, 0, 1, 4, 4)
        vals = np.ones(g.shape)
        vals[0, :] = np.nan
        f = ScalarField(g, vals)
        assert f.interior_abs_max() == pytest.approx(1.0)

    def test_nan_rules_on_larger_grid(self):
        # two outer rings may be NaN, the core may not
        g = Grid2D.from_bounds(0, 1, 0, 1, 7, 7)
        vals = np.ones(g.shape)
        vals[1, 1] = np.nan
        f = ScalarField(g, vals)
        assert f.interior_abs_max() == pytest.approx(1.0)
        vals = np.ones(g.shape)
        vals[3, 3] = np.nan
        with pytest.raises(GridError):
            ScalarField(g, vals)

    def test_values_read_only(self):
        g = Grid2D.from_bounds(0, 1, 0, 1, 4, 4)
        f = ScalarField(g, np.zeros(g.shape))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestStencils:
    def test_partial_exact_on_quadratics(self):
        # Central and one-sided second-order stencils reproduce the
        # derivative of a quadratic exactly, boundary included.
        g = Grid2D.from_bounds(-1, 1, -1, 1, 11, 13)
        f = ScalarField.from_function(g, lambda x, y: 2.0 * x**2 - x * y + 3.0 * y**2)
        X, Y = g.mesh()
        np.testing.assert_allclose(fd_partial(f, "x").values, 4.0 * X - Y, atol=1e-12)
        np.testing.assert_allclose(fd_partial(f, "y").values, -X + 6.0 * Y, atol=1e-12)

    def test_partial_linearity(self):
        g = Grid2D.from_bounds(0, 1, 0, 1, 12, 12)
        rng = np.random.default_rng(7)
        a = ScalarField(g, rng.standard_normal(g.shape))
        b = ScalarField(g, rng.standard_normal(g.shape))
        combo = ScalarField(g, 2.5 * a.values - 1.25 * b.values)
        expect = 2.5 * fd_partial(a, "x").values - 1.25 * fd_partial(b, "x").values
        np.testing.assert_allclose(fd_partial(combo, "x").values, expect, atol=1e-12)

    def test_partial_second_order_with_richardson_factor(self):
        g = Grid2D.from_bounds(0.0, 1.0, 0.0, 1.0, 33, 33)
        errors = {}
        for grid in (g, g.refined()):
            err_x = np.abs(fd_partial(smooth_field(grid), "x").values - smooth_dx(grid)).max()
            err_y = np.abs(fd_partial(smooth_field(grid), "y").values - smooth_dy(grid)).max()
            errors[grid.nx] = (err_x, err_y)
        assert errors[33][0] < 10 * g.dx**2
        assert errors[33][1] < 10 * g.dy**2
        assert errors[33][0] / errors[65][0] >= 3.5
        assert errors[33][1] / errors[65][1] >= 3.5

    def test_laplacian_stencil_exact_on_x2_plus_y2(self):
        g = Grid2D.from_bounds(0, 2, 0, 1, 9, 7)
        f = ScalarField.from_function(g, lambda x, y: x**2 + y**2)
        lap = fd_laplacian(f)
        assert np.isnan(lap.values[0, :]).all()
        assert np.isnan(lap.values[:, -1]).all()
        np.testing.assert_allclose(lap.interior(), 4.0, atol=1e-11)

    def test_laplacian_richardson_factor(self):
        g = Grid2D.from_bounds(0.0, 1.0, 0.0, 1.0, 33, 33)

        def err(grid):
            X, Y = grid.mesh()
            exact = (1.3**2 * -np.sin(1.3 * X) + 0.4**2 * np.sin(1.3 * X)) * np.exp(0.4 * Y)
            return np.abs(fd_laplacian(smooth_field(grid)).interior() - exact[1:-1, 1:-1]).max()

        assert err(g) / err(g.refined()) >= 3.5


class TestQuadrature:
    def test_exact_for_bilinear(self):
        g = Grid2D.from_bounds(0, 2, 0, 3, 5, 4)
        f = ScalarField.from_function(g, lambda x, y: 2.0 + x * y)
        # integral of 2 + x*y over [0,2]x[0,3] is 12 + (2^2/2)(3^2/2) = 21
        assert quadrature(f) == pytest.approx(21.0, abs=1e-12)

    def test_bump_integral_pi_over_3(self):
        g = Grid2D.from_bounds(-1.2, 1.2, -1.2, 1.2, 97, 97)
        bump = TestFunction(0.0, 0.0, 1.0)
        q = quadrature(bump.sample(g))
        assert abs(q - math.pi / 3.0) < 10 * g.h**2

    def test_bump_truncated_when_support_leaves_grid(self):
        g = Grid2D.from_bounds(0.0, 1.0, 0.0, 1.0, 65, 65)
        bump = TestFunction(0.95, 0.5, 0.3)
        assert not bump.supported_inside(g)
        assert quadrature(bump.sample(g)) < bump.exact_integral()

    def test_rejects_nan(self):
        g = Grid2D.from_bounds(0, 1, 0, 1, 4, 4)
        f = fd_laplacian(ScalarField(g, np.ones(g.shape)))
        with pytest.raises(GridError):
            quadrature(f)


class TestBump:
    def test_c1_matching_at_support_circle(self):
        bump = TestFunction(0.2, -0.1, 0.5)
        on_circle = np.array([0.2 + 0.5 * math.cos(0.3), -0.1 + 0.5 * math.sin(0.3)])
        assert bump.value(*on_circle) == pytest.approx(0.0, abs=1e-15)
        gx, gy = bump.grad(*on_circle)
        assert abs(gx) < 1e-14 and abs(gy) < 1e-14

    def test_gradient_matches_finite_differences(self):
        bump = TestFunction(0.0, 0.0, 0.7)
        rng = np.random.default_rng(11)
        pts = 0.6 * (rng.random((40, 2)) - 0.5)
        eps = 1e-6
        for x, y in pts:
            gx, gy = bump.grad(x, y)
            fx = (bump.value(x + eps, y) - bump.value(x - eps, y)) / (2 * eps)
            fy = (bump.value(x, y + eps) - bump.value(x, y - eps)) / (2 * eps)
            assert gx == pytest.approx(fx, abs=5e-9)
            assert gy == pytest.approx(fy, abs=5e-9)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(GridError):
            TestFunction(0.0, 0.0, 0.0)
