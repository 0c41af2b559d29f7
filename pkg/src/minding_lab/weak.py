"""Distributional identities realized as quadratures against bumps.

A locally integrable field acts on compactly supported C^1 test
functions through the trapezoid quadrature; its distributional
derivative acts through the analytic gradient of the test function.
Each checker below integrates both sides of an identity against a
family of bumps and reports the residuals.  Gradients of the test
functions are always closed-form, never finite differences, so a
nonzero residual points at the field under test (or at quadrature
error, which shrinks at second order).

The residual for the curvature equation is the weak form

    r(v) = integral(u_x v_x + u_y v_y) + integral(e^{2u} v),

which vanishes for weak solutions of lap(u) = e^{2u}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import FrameField
from .grid import (
    Grid2D,
    GridError,
    ScalarField,
    TestFunction,
    fd_partial,
    quadrature,
)

__all__ = [
    "WeakResidualReport",
    "bump_lattice",
    "mixed_partials_check",
    "product_rule_check",
    "product_rule_pointwise_residual",
    "liouville_weak_residual",
    "frame_weak_compatibility",
    "frame_weak_entry_residual",
]


@dataclass(frozen=True)
class WeakResidualReport:
    """Residuals of one identity over a family of test functions.

    ``normalizers`` holds the integral of |v| for each test, so
    ``normalized()`` gives dimensionless residuals comparable across
    bump sizes.
    """

    residuals: tuple
    normalizers: tuple

    def __post_init__(self) -> None:
        if len(self.residuals) != len(self.normalizers):
            raise GridError("one normalizer per residual required")
        if len(self.residuals) == 0:
            raise GridError("empty test family")
        object.__setattr__(self, "residuals", tuple(float(r) for r in self.residuals))
        object.__setattr__(self, "normalizers", tuple(float(n) for n in self.normalizers))

    @property
    def count(self) -> int:
        return len(self.residuals)

    def max_abs(self) -> float:
        return max(abs(r) for r in self.residuals)

    def normalized(self) -> tuple:
        return tuple(r / n for r, n in zip(self.residuals, self.normalizers))

    def max_normalized(self) -> float:
        return max(abs(r) for r in self.normalized())


def bump_lattice(grid: Grid2D, centers_per_axis: int = 5, radii_fractions=(0.1, 0.2, 0.4)):
    """Deterministic family of interior bumps.

    Centers sit at interior fractions k/(n+1) of each extent, radii are
    fractions of the smaller extent; bumps whose support is not
    strictly interior are dropped.
    """
    ext_x = grid.x1 - grid.x0
    ext_y = grid.y1 - grid.y0
    scale = min(ext_x, ext_y)
    tests = []
    for frac in radii_fractions:
        r = frac * scale
        for ky in range(1, centers_per_axis + 1):
            for kx in range(1, centers_per_axis + 1):
                v = TestFunction(
                    grid.x0 + ext_x * kx / (centers_per_axis + 1),
                    grid.y0 + ext_y * ky / (centers_per_axis + 1),
                    r,
                )
                if v.supported_inside(grid):
                    tests.append(v)
    if not tests:
        raise GridError("no bump fits strictly inside this grid")
    return tests


def _check_tests(grid: Grid2D, tests) -> list:
    tests = list(tests)
    if not tests:
        raise GridError("empty test family")
    for v in tests:
        if not v.supported_inside(grid):
            raise GridError(
                f"test support touches the boundary: center ({v.cx}, {v.cy}) radius {v.r}"
            )
    return tests


def mixed_partials_check(W, tests) -> WeakResidualReport:
    """Weak symmetry of second mixed partials: for every test v,

        -integral(W_x v_y) + integral(W_y v_x) = 0

    holds whenever W is C^1 (integration by parts twice moves both
    derivatives onto v, where symmetry is classical).  Accepts a scalar
    field or a matrix field; matrix residuals report the worst entry.
    """
    if isinstance(W, FrameField):
        grid = W.grid
        tests = _check_tests(grid, tests)
        Wx = np.gradient(W.values, grid.dx, axis=1, edge_order=2)
        Wy = np.gradient(W.values, grid.dy, axis=0, edge_order=2)
        residuals = []
        normalizers = []
        for v in tests:
            gx, gy = v.grad_sample(grid)
            worst = 0.0
            for p in range(3):
                for q in range(3):
                    r = -quadrature(
                        ScalarField(grid, Wx[:, :, p, q] * gy)
                    ) + quadrature(ScalarField(grid, Wy[:, :, p, q] * gx))
                    worst = max(worst, abs(r))
            residuals.append(worst)
            normalizers.append(v.exact_integral())
        return WeakResidualReport(tuple(residuals), tuple(normalizers))

    grid = W.grid
    tests = _check_tests(grid, tests)
    Wx = fd_partial(W, "x").values
    Wy = fd_partial(W, "y").values
    residuals = []
    normalizers = []
    for v in tests:
        gx, gy = v.grad_sample(grid)
        r = -quadrature(ScalarField(grid, Wx * gy)) + quadrature(
            ScalarField(grid, Wy * gx)
        )
        residuals.append(r)
        normalizers.append(v.exact_integral())
    return WeakResidualReport(tuple(residuals), tuple(normalizers))


def product_rule_check(P: ScalarField, L: ScalarField, tests, axis: str = "x") -> WeakResidualReport:
    """Weak product rule: d(PL) = (dP) L + P dL against each test.

    P must be C^1-sampled; L only needs to be integrable.  All three
    terms act on the test by quadrature:

        r(v) = -integral(P L v') - integral(fd(P) L v)
               + integral(L (fd(P) v + P v'))

    where ' is the analytic test derivative along ``axis`` and the last
    term realizes (P dL)(v) = (dL)(P v) = -integral(L (P v)') with the
    product differentiated through the same fd(P) and analytic v' as
    the other terms.  The identity then holds at the summation level
    for any integrable L, which is the point of the distributional
    reading: no derivative of L is ever taken.  The classical reading
    that does differentiate L lives in
    ``product_rule_pointwise_residual`` and genuinely fails for
    discontinuous L.
    """
    P.grid.require_matches(L.grid)
    grid = P.grid
    tests = _check_tests(grid, tests)
    Pd = fd_partial(P, axis).values
    residuals = []
    normalizers = []
    for v in tests:
        vals = v.sample(grid).values
        gx, gy = v.grad_sample(grid)
        dv = gx if axis == "x" else gy
        r = (
            -quadrature(ScalarField(grid, P.values * L.values * dv))
            - quadrature(ScalarField(grid, Pd * L.values * vals))
            + quadrature(ScalarField(grid, L.values * (Pd * vals + P.values * dv)))
        )
        residuals.append(r)
        normalizers.append(v.exact_integral())
    return WeakResidualReport(tuple(residuals), tuple(normalizers))


def product_rule_pointwise_residual(P: ScalarField, L: ScalarField, axis: str = "x") -> float:
    """Sup of the raw-derivative expansion fd(PL) - fd(P) L - P fd(L).

    This is the pointwise (non-distributional) reading of the product
    rule.  It needs L differentiable in the classical sense: a step in
    L leaves an O(1) residual at the jump no matter how fine the grid,
    which is exactly why the weak reading above exists.
    """
    P.grid.require_matches(L.grid)
    grid = P.grid
    pl = ScalarField(grid, P.values * L.values)
    resid = (
        fd_partial(pl, axis).values
        - fd_partial(P, axis).values * L.values
        - P.values * fd_partial(L, axis).values
    )
    return float(np.abs(resid[1:-1, 1:-1]).max())


def liouville_weak_residual(u: ScalarField, tests) -> WeakResidualReport:
    """Weak residual of the conformal-factor curvature equation.

    r(v) = integral(u_x v_x + u_y v_y) + integral(e^{2u} v); zero (to
    quadrature error) exactly when u = ln h is a weak solution of
    lap(u) = e^{2u}, i.e. when h^2(dx^2+dy^2) has curvature -1.
    """
    grid = u.grid
    tests = _check_tests(grid, tests)
    ux = fd_partial(u, "x").values
    uy = fd_partial(u, "y").values
    source = np.exp(2.0 * u.values)
    residuals = []
    normalizers = []
    for v in tests:
        vals = v.sample(grid).values
        gx, gy = v.grad_sample(grid)
        r = quadrature(ScalarField(grid, ux * gx + uy * gy)) + quadrature(
            ScalarField(grid, source * vals)
        )
        residuals.append(r)
        normalizers.append(v.exact_integral())
    return WeakResidualReport(tuple(residuals), tuple(normalizers))


def frame_weak_entry_residual(A, B, grid: Grid2D, p: int, q: int, tests) -> WeakResidualReport:
    """Weak zero-curvature residual tested against bump * E_pq.

    With v = w E_pq the trace pairing picks out one matrix entry:

        r(w) = -integral(A_pq w_y) + integral(B_pq w_x)
               - integral((AB - BA)_pq w)
    """
    A_vals = A.values if isinstance(A, FrameField) else np.asarray(A, dtype=float)
    B_vals = B.values if isinstance(B, FrameField) else np.asarray(B, dtype=float)
    if A_vals.shape != grid.shape + (3, 3) or B_vals.shape != A_vals.shape:
        raise GridError("connection matrices must be sampled as (ny, nx, 3, 3)")
    if not (0 <= p < 3 and 0 <= q < 3):
        raise GridError("entry indices must lie in 0..2")
    tests = _check_tests(grid, tests)
    commutator = (A_vals @ B_vals - B_vals @ A_vals)[:, :, p, q]
    a = A_vals[:, :, p, q]
    b = B_vals[:, :, p, q]
    residuals = []
    normalizers = []
    for w in tests:
        vals = w.sample(grid).values
        gx, gy = w.grad_sample(grid)
        r = (
            -quadrature(ScalarField(grid, a * gy))
            + quadrature(ScalarField(grid, b * gx))
            - quadrature(ScalarField(grid, commutator * vals))
        )
        residuals.append(r)
        normalizers.append(w.exact_integral())
    return WeakResidualReport(tuple(residuals), tuple(normalizers))


def frame_weak_compatibility(A, B, grid: Grid2D, tests) -> WeakResidualReport:
    """Weak zero-curvature identity over all nine elementary matrices.

    One residual per (test, entry) pair, ordered test-major with the
    entry index q fastest.
    """
    residuals = []
    normalizers = []
    per_entry = [
        frame_weak_entry_residual(A, B, grid, p, q, tests)
        for p in range(3)
        for q in range(3)
    ]
    n_tests = per_entry[0].count
    for t in range(n_tests):
        for rep in per_entry:
            residuals.append(rep.residuals[t])
            normalizers.append(rep.normalizers[t])
    return WeakResidualReport(tuple(residuals), tuple(normalizers))
