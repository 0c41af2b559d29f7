"""Quadrature-realized distributional identities."""

import numpy as np
import pytest

from minding_lab.grid import Grid2D, GridError, ScalarField, TestFunction, quadrature
from minding_lab.forms import FrameField, SecondForm, isothermic_connection
from minding_lab.weak import (
    WeakResidualReport,
    bump_lattice,
    frame_weak_compatibility,
    frame_weak_entry_residual,
    liouville_weak_residual,
    mixed_partials_check,
    product_rule_check,
    product_rule_pointwise_residual,
)


def unit_grid(n=65):
    return Grid2D.from_bounds(0.0, 1.0, 0.0, 1.0, n, n)


def half_plane_connection(n=65):
    g = Grid2D.from_bounds(0.0, 1.0, 1.4, 2.4, n, n)
    _, Y = g.mesh()
    root = np.sqrt(Y**2 - 1.0)
    II = SecondForm(g, root / Y**2, np.zeros_like(Y), -1.0 / (Y**2 * root))
    A, B = isothermic_connection(ScalarField(g, 1.0 / Y), II)
    return g, A, B


class TestReportAndLattice:
    def test_report_invariants(self):
        with pytest.raises(GridError):
            WeakResidualReport((1.0, 2.0), (1.0,))
        with pytest.raises(GridError):
            WeakResidualReport((), ())
        rep = WeakResidualReport((0.5, -2.0), (1.0, 4.0))
        assert rep.count == 2
        assert rep.max_abs() == 2.0
        assert rep.normalized() == (0.5, -0.5)
        assert rep.max_normalized() == 0.5

    def test_lattice_is_deterministic_and_interior(self):
        g = unit_grid(65)
        a = bump_lattice(g)
        b = bump_lattice(g)
        assert [(t.cx, t.cy, t.r) for t in a] == [(t.cx, t.cy, t.r) for t in b]
        assert all(t.supported_inside(g) for t in a)
        # the large radius only fits at the central sites
        assert len(a) == 35
        assert sorted({t.r for t in a}) == [0.1, 0.2, 0.4]

    def test_lattice_rejects_hopeless_grid(self):
        with pytest.raises(GridError):
            bump_lattice(Grid2D.from_bounds(0, 1, 0, 1, 3, 3))

    def test_boundary_touching_test_rejected(self):
        g = unit_grid(33)
        W = ScalarField.from_function(g, lambda X, Y: X * Y)
        with pytest.raises(GridError):
            mixed_partials_check(W, [TestFunction(0.05, 0.5, 0.2)])


class TestMixedPartials:
    def test_bilinear_with_centered_bump(self):
        g = unit_grid(65)
        W = ScalarField.from_function(g, lambda X, Y: X * Y)
        rep = mixed_partials_check(W, [TestFunction(0.5, 0.5, 0.3)])
        assert rep.max_abs() <= 1e-14

    def test_c1_kink_under_offcenter_bump(self):
        # |x - 1/2|^1.5 is C^1 but not C^2; the identity only needs C^1
        g = unit_grid(65)
        W = ScalarField.from_function(g, lambda X, Y: np.abs(X - 0.5) ** 1.5)
        rep = mixed_partials_check(W, [TestFunction(0.47, 0.56, 0.3)])
        assert rep.max_abs() <= 10 * g.h**2

    def test_constant_field(self):
        g = unit_grid(33)
        W = ScalarField.from_function(g, lambda X, Y: 3.0 + 0.0 * X)
        rep = mixed_partials_check(W, bump_lattice(g))
        assert rep.max_abs() <= 1e-15

    def test_smooth_lattice_and_refinement(self):
        fn = lambda X, Y: np.sin(1.3 * X) * np.exp(0.4 * Y)
        g = unit_grid(65)
        coarse = mixed_partials_check(
            ScalarField.from_function(g, fn), bump_lattice(g)
        ).max_abs()
        assert coarse <= 10 * g.h**2
        g2 = g.refined()
        fine = mixed_partials_check(
            ScalarField.from_function(g2, fn), bump_lattice(g2)
        ).max_abs()
        assert coarse / fine >= 3.0

    def test_matrix_field_input(self):
        g, A, _ = half_plane_connection(65)
        rep = mixed_partials_check(A, bump_lattice(g))
        assert isinstance(A, FrameField)
        assert rep.max_abs() <= 10 * g.h**2


class TestProductRule:
    def test_lipschitz_factor(self):
        g = unit_grid(65)
        P = ScalarField.from_function(g, lambda X, Y: X)
        L = ScalarField.from_function(g, lambda X, Y: np.abs(Y - 0.5))
        rep = product_rule_check(P, L, bump_lattice(g))
        assert rep.max_abs() <= 10 * g.h**2

    def test_unit_p_collapses_exactly(self):
        g = unit_grid(65)
        P = ScalarField.from_function(g, lambda X, Y: 1.0 + 0.0 * X)
        L = ScalarField.from_function(g, lambda X, Y: np.abs(Y - 0.5))
        rep = product_rule_check(P, L, bump_lattice(g))
        assert all(r == 0.0 for r in rep.residuals)

    def test_unit_l_reduces_to_rounding(self):
        g = unit_grid(65)
        P = ScalarField.from_function(g, lambda X, Y: X)
        L = ScalarField.from_function(g, lambda X, Y: 1.0 + 0.0 * X)
        rep = product_rule_check(P, L, bump_lattice(g))
        assert rep.max_abs() <= 1e-14

    def test_step_factor_survives_weak_reading(self):
        # no derivative of L is ever taken, so even a jump is harmless
        g = unit_grid(65)
        P = ScalarField.from_function(g, lambda X, Y: np.sin(1.0 + X))
        L = ScalarField.from_function(
            g, lambda X, Y: np.where(X > 0.5 + 0.3 * g.dx, 1.0, -1.0)
        )
        rep = product_rule_check(P, L, bump_lattice(g))
        assert rep.max_abs() <= 1e-14

    def test_pointwise_expansion_scalings(self):
        # classical reading: O(h^2) for smooth L, O(h) at a Lipschitz
        # kink, O(1) = |P'| at a jump; only the last is a failure
        sups = {"smooth": [], "kink": [], "step": []}
        for n in (65, 129):
            g = unit_grid(n)
            P = ScalarField.from_function(g, lambda X, Y: np.sin(1.0 + Y))
            fields = {
                "smooth": ScalarField.from_function(g, lambda X, Y: np.cos(X + 2 * Y)),
                "kink": ScalarField.from_function(g, lambda X, Y: np.abs(Y - 0.5)),
                "step": ScalarField.from_function(
                    g, lambda X, Y: np.where(Y > 0.5 + 0.3 * g.dy, 1.0, -1.0)
                ),
            }
            for name, L in fields.items():
                sups[name].append(product_rule_pointwise_residual(P, L, axis="y"))
        assert sups["smooth"][0] <= 10 * unit_grid(65).h ** 2
        assert sups["smooth"][0] / sups["smooth"][1] >= 3.0
        assert sups["kink"][0] / sups["kink"][1] >= 1.7  # first order
        # the step residual stays put near |P'(kink)| = |cos(1.5)|
        floor = 0.5 * abs(np.cos(1.5))
        assert sups["step"][0] >= floor
        assert sups["step"][1] >= floor


class TestLiouvilleResidual:
    def test_half_plane_factor_is_weak_solution(self):
        g = Grid2D.from_bounds(0.0, 1.0, 1.0, 2.0, 65, 65)
        u = ScalarField.from_function(g, lambda X, Y: -np.log(Y))
        rep = liouville_weak_residual(u, bump_lattice(g))
        assert rep.max_abs() <= 10 * g.h**2

    def test_disk_factor_is_weak_solution(self):
        half = 0.7 / np.sqrt(2.0)
        g = Grid2D.from_bounds(-half, half, -half, half, 65, 65)
        u = ScalarField.from_function(
            g, lambda X, Y: np.log(2.0) - np.log(1.0 - X**2 - Y**2)
        )
        rep = liouville_weak_residual(u, bump_lattice(g))
        assert rep.max_abs() <= 10 * g.h**2

    def test_zero_field_detected_as_nonsolution(self):
        g = Grid2D.from_bounds(-1.4, 1.4, -1.4, 1.4, 65, 65)
        u = ScalarField.from_function(g, lambda X, Y: 0.0 * X)
        rep = liouville_weak_residual(u, [TestFunction(0.0, 0.0, 1.0)])
        # gradient term drops; the residual is the bump integral itself
        assert rep.residuals[0] == pytest.approx(np.pi / 3.0, abs=10 * g.h**2)
        assert rep.max_abs() >= 0.9

    def test_constant_shift_identity(self):
        # adding c changes the residual exactly through the source term
        g = Grid2D.from_bounds(0.0, 1.0, 1.0, 2.0, 65, 65)
        u = ScalarField.from_function(g, lambda X, Y: -np.log(Y))
        shifted = ScalarField(g, u.values + 0.37)
        tests = bump_lattice(g)
        base = liouville_weak_residual(u, tests)
        moved = liouville_weak_residual(shifted, tests)
        for v, a, b in zip(tests, base.residuals, moved.residuals):
            vals = v.sample(g).values
            expect = quadrature(
                ScalarField(
                    g, (np.exp(2 * (u.values + 0.37)) - np.exp(2 * u.values)) * vals
                )
            )
            assert (b - a) == pytest.approx(expect, abs=1e-13)


class TestFrameWeak:
    def test_zero_connection(self):
        g = unit_grid(33)
        Z = np.zeros(g.shape + (3, 3))
        rep = frame_weak_compatibility(Z, Z, g, bump_lattice(g))
        assert rep.max_abs() == 0.0
        assert rep.count == 9 * len(bump_lattice(g))

    def test_half_plane_chart_compatible(self):
        g, A, B = half_plane_connection(65)
        rep = frame_weak_compatibility(A, B, g, bump_lattice(g))
        assert rep.max_abs() <= 10 * g.h**2

    def test_offdiagonal_entry_reproduces_scalar_residual(self):
        # the (1,2) elementary-matrix test collapses the matrix identity
        # onto the scalar curvature identity for u = ln h, up to sign
        g, A, B = half_plane_connection(65)
        _, Y = g.mesh()
        u = ScalarField(g, np.log(1.0 / Y))
        tests = bump_lattice(g)
        r12 = frame_weak_entry_residual(A, B, g, 0, 1, tests)
        rl = liouville_weak_residual(u, tests)
        worst = max(abs(a + b) for a, b in zip(r12.residuals, rl.residuals))
        assert worst <= 10 * g.h**2

    def test_entry_index_validation(self):
        g, A, B = half_plane_connection(33)
        with pytest.raises(GridError):
            frame_weak_entry_residual(A, B, g, 3, 0, bump_lattice(g))
