"""First and second fundamental forms, connections, and curvature.

Metric quantities are sampled coefficient fields E, F, G; second-form
coefficients are written ell, m, n.  Two separate curvature routes are
kept deliberately: the determinant formula (ell*n - m^2)/(EG - F^2)
from the forms of an immersion, and -laplacian(ln h)/h^2 for a
conformal factor h.  Agreement between them on the same data is one of
the checks this package exists to run, so neither is expressed through
the other.

The frame W = (f_x, f_y, N) of a conformal (isothermic) immersion with
|f_x| = |f_y| = h, <f_x, f_y> = 0 satisfies W_x = W A, W_y = W B with

    A = [[ h_x/h,  h_y/h, -ell/h^2],      B = [[ h_y/h, -h_x/h, -m/h^2],
         [-h_y/h,  h_x/h, -m/h^2  ],           [ h_x/h,  h_y/h, -n/h^2],
         [ ell,    m,      0      ]]           [ m,      n,      0    ]]

and the flatness of ambient space makes A_y - B_x = AB - BA.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Grid2D,
    GridError,
    ScalarField,
    VectorField3,
    fd_laplacian,
    fd_partial,
)

__all__ = [
    "DegenerateMetricError",
    "MetricField",
    "SecondForm",
    "FrameField",
    "induced_metric",
    "normal_and_second_form",
    "isothermic_connection",
    "zero_curvature_residual",
    "zero_curvature_entries",
    "gauss_curvature_from_forms",
    "gauss_curvature_isothermic",
    "gauss_curvature_chebyshev",
]


class DegenerateMetricError(ValueError):
    """Metric determinant vanished (or went negative) somewhere."""


@dataclass(frozen=True)
class MetricField:
    """First-form coefficients E, F, G on one grid."""

    grid: Grid2D
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray

    def __post_init__(self) -> None:
        for name in ("E", "F", "G"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise GridError(f"{name} must have shape {self.grid.shape}")
            object.__setattr__(self, name, arr)
        det = self.det()
        if not np.isfinite(det).all() or det.min() <= 0.0:
            bad = np.argwhere(~(det > 0.0))
            raise DegenerateMetricError(
                f"metric is degenerate at {len(bad)} nodes, first at (j,i)={tuple(bad[0])}"
            )

    def det(self) -> np.ndarray:
        return self.E * self.G - self.F**2

    @classmethod
    def conformal(cls, h: ScalarField) -> "MetricField":
        h2 = h.values**2
        return cls(h.grid, h2, np.zeros_like(h2), h2)

    @classmethod
    def chebyshev(cls, theta_values: np.ndarray, grid: Grid2D) -> "MetricField":
        ones = np.ones(grid.shape)
        return cls(grid, ones, np.cos(theta_values), ones)


@dataclass(frozen=True)
class SecondForm:
    """Second-form coefficients ell, m, n on one grid.

    ``m_asymmetry`` records the max difference between the two
    cross-derivative estimates of m when the form was measured from an
    immersion; it is zero for analytically prescribed forms.
    """

    grid: Grid2D
    ell: np.ndarray
    m: np.ndarray
    n: np.ndarray
    m_asymmetry: float = 0.0

    def __post_init__(self) -> None:
        for name in ("ell", "m", "n"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise GridError(f"{name} must have shape {self.grid.shape}")
            if not np.isfinite(arr).all():
                raise GridError(f"{name} must be finite")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class FrameField:
    """A 3x3 real matrix at every node, shape ``(ny, nx, 3, 3)``.

    Carries connection matrices or an integrated moving frame.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != self.grid.shape + (3, 3):
            raise GridError(f"frame values must have shape {self.grid.shape + (3, 3)}")
        if not np.isfinite(arr).all():
            raise GridError("frame entries must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def det(self) -> np.ndarray:
        return np.linalg.det(self.values)


def _as_matrices(M, grid: Grid2D, name: str) -> np.ndarray:
    if isinstance(M, FrameField):
        grid.require_matches(M.grid)
        return M.values
    arr = np.asarray(M, dtype=float)
    if arr.shape != grid.shape + (3, 3):
        raise GridError(f"{name} must be sampled as (ny, nx, 3, 3)")
    return arr


def _partial_vec(values: np.ndarray, grid: Grid2D, axis: str) -> np.ndarray:
    ax = 1 if axis == "x" else 0
    d = grid.dx if axis == "x" else grid.dy
    return np.gradient(values, d, axis=ax, edge_order=2)


def induced_metric(f: VectorField3) -> MetricField:
    """E, F, G of an immersion by finite differences."""
    grid = f.grid
    f_x = _partial_vec(f.values, grid, "x")
    f_y = _partial_vec(f.values, grid, "y")
    dot = lambda a, b: np.einsum("jki,jki->jk", a, b)
    return MetricField(grid, dot(f_x, f_x), dot(f_x, f_y), dot(f_y, f_y))


def normal_and_second_form(f: VectorField3) -> tuple[VectorField3, SecondForm]:
    """Unit normal and second form of an immersion.

    N is the normalized cross product of the coordinate tangents; the
    coefficients come from derivatives of N (ell = -<N_x, f_x> and so
    on), with the mixed coefficient measured both ways and averaged.
    """
    grid = f.grid
    f_x = _partial_vec(f.values, grid, "x")
    f_y = _partial_vec(f.values, grid, "y")
    cross = np.cross(f_x, f_y)
    norm = np.linalg.norm(cross, axis=2)
    if norm.min() <= 0.0:
        raise DegenerateMetricError("tangent planes degenerate; cannot form a normal")
    N = cross / norm[:, :, None]

    N_x = _partial_vec(N, grid, "x")
    N_y = _partial_vec(N, grid, "y")
    dot = lambda a, b: np.einsum("jki,jki->jk", a, b)
    ell = -dot(N_x, f_x)
    m1 = -dot(N_x, f_y)
    m2 = -dot(N_y, f_x)
    n = -dot(N_y, f_y)
    second = SecondForm(
        grid, ell, 0.5 * (m1 + m2), n, m_asymmetry=float(np.abs(m1 - m2).max())
    )
    return VectorField3(grid, N), second


def isothermic_connection(h: ScalarField, second: SecondForm) -> tuple[FrameField, FrameField]:
    """Connection matrices A, B of a conformal immersion (see module doc)."""
    h.grid.require_matches(second.grid)
    hv = h.values
    if hv.min() <= 0.0:
        raise DegenerateMetricError("conformal factor must be positive")
    hx = fd_partial(h, "x").values / hv
    hy = fd_partial(h, "y").values / hv
    h2 = hv**2
    ell, m, n = second.ell, second.m, second.n
    zero = np.zeros_like(hv)

    A = np.stack(
        [
            np.stack([hx, hy, -ell / h2], axis=-1),
            np.stack([-hy, hx, -m / h2], axis=-1),
            np.stack([ell, m, zero], axis=-1),
        ],
        axis=-2,
    )
    B = np.stack(
        [
            np.stack([hy, -hx, -m / h2], axis=-1),
            np.stack([hx, hy, -n / h2], axis=-1),
            np.stack([m, n, zero], axis=-1),
        ],
        axis=-2,
    )
    return FrameField(h.grid, A), FrameField(h.grid, B)


def zero_curvature_residual(A, B, grid: Grid2D) -> ScalarField:
    """Entrywise max of A_y - B_x - (AB - BA) per node (outer two rings NaN).

    Vanishes exactly when the first-order frame system W_x = W A,
    W_y = W B is integrable.

    Two rings are masked, not one: connection samples are usually
    assembled from on-grid derivatives, whose boundary values come from
    one-sided stencils with a different error constant.  Differencing
    across that ring mixes the constants and drops an order, so the
    first interior ring of the raw residual is only O(h) accurate.
    """
    R = zero_curvature_entries(A, B, grid)
    out = np.full(grid.shape, np.nan)
    out[2:-2, 2:-2] = np.abs(R[2:-2, 2:-2]).max(axis=(2, 3))
    return ScalarField(grid, out)


def zero_curvature_entries(A, B, grid: Grid2D) -> np.ndarray:
    """Raw entries of A_y - B_x - (AB - BA), shape (ny, nx, 3, 3).

    Outer two rings are NaN; see zero_curvature_residual for why two.
    Accepts FrameField or bare arrays.
    """
    A = _as_matrices(A, grid, "A")
    B = _as_matrices(B, grid, "B")
    if grid.nx < 5 or grid.ny < 5:
        raise GridError("zero-curvature check needs at least a 5x5 grid")
    A_y = np.gradient(A, grid.dy, axis=0, edge_order=2)
    B_x = np.gradient(B, grid.dx, axis=1, edge_order=2)
    R = A_y - B_x - (A @ B - B @ A)
    R[:2, :] = np.nan
    R[-2:, :] = np.nan
    R[:, :2] = np.nan
    R[:, -2:] = np.nan
    return R


def gauss_curvature_from_forms(metric: MetricField, second: SecondForm) -> ScalarField:
    """K = (ell*n - m^2) / (EG - F^2), defined at every node."""
    metric.grid.require_matches(second.grid)
    K = (second.ell * second.n - second.m**2) / metric.det()
    return ScalarField(metric.grid, K)


def gauss_curvature_isothermic(h: ScalarField) -> ScalarField:
    """K = -laplacian(ln h) / h^2 for a conformal factor (boundary NaN)."""
    if h.values.min() <= 0.0:
        raise DegenerateMetricError("conformal factor must be positive")
    lap = fd_laplacian(ScalarField(h.grid, np.log(h.values)))
    return ScalarField(h.grid, -lap.values / h.values**2)


def gauss_curvature_chebyshev(theta: ScalarField) -> ScalarField:
    """K = -theta_xy / sin(theta) for a Chebyshev net angle (boundary NaN)."""
    mixed = fd_partial(fd_partial(theta, "x"), "y")
    vals = -mixed.values / np.sin(theta.values)
    out = np.full(theta.grid.shape, np.nan)
    out[1:-1, 1:-1] = vals[1:-1, 1:-1]
    return ScalarField(theta.grid, out)
