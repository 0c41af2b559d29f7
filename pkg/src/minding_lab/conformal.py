"""Isothermic coordinates: closed-form catalog charts and a constructive
least-squares flattener.

A chart stores new coordinates ``(X, Y)`` per source node together with
the conformal factor ``h`` of the image metric sampled at the same
nodes.  ``flatten_conformal`` builds such a chart for an arbitrary
positive metric by driving the differential of ``(X, Y)`` toward a
similarity with respect to the metric's orthonormal frames; the catalog
supplies exact charts for the constant-curvature test metrics so the
flattener has something to be measured against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import spsolve

from .grid import Grid2D, GridError, ScalarField, fd_laplacian, fd_partial
from .forms import MetricField

__all__ = [
    "ConformalError",
    "Chart",
    "catalog_chart",
    "flatten_conformal",
    "rescale_to_liouville",
    "inner_image_grid",
    "chart_preimage",
    "resample_to_image",
]


class ConformalError(RuntimeError):
    """Flattening breakdown: singular system or unusable image region."""


@dataclass(frozen=True)
class Chart:
    """Coordinates ``(X, Y)`` and conformal factor ``h`` per source node.

    ``anisotropy`` and ``skew`` are the flattener's acceptance
    diagnostics (max of ``|E'/G' - 1|`` and of ``|F'|/sqrt(E'G')`` over
    interior nodes); exact catalog charts carry zeros.  ``converged``
    records whether both stayed under the requested threshold.
    """

    X: ScalarField
    Y: ScalarField
    h: ScalarField
    anisotropy: float = 0.0
    skew: float = 0.0
    converged: bool = True

    def __post_init__(self) -> None:
        g = self.X.grid
        if not (self.Y.grid.matches(g) and self.h.grid.matches(g)):
            raise GridError("chart components live on different grids")
        if np.nanmin(self.h.values[1:-1, 1:-1]) <= 0.0:
            raise GridError("conformal factor must be positive on interior nodes")
        det = self.jacobian_det()
        inner = det[1:-1, 1:-1]
        if not np.isfinite(inner).all() or np.min(np.abs(inner)) == 0.0:
            raise GridError("chart Jacobian vanishes at an interior node")

    @property
    def grid(self) -> Grid2D:
        return self.X.grid

    def jacobian_det(self) -> np.ndarray:
        xx = fd_partial(self.X, "x").values
        xy = fd_partial(self.X, "y").values
        yx = fd_partial(self.Y, "x").values
        yy = fd_partial(self.Y, "y").values
        return xx * yy - xy * yx


def _pushforward(metric: MetricField, X: ScalarField, Y: ScalarField):
    """Metric components in chart coordinates at each source node."""
    xx = fd_partial(X, "x").values
    xy = fd_partial(X, "y").values
    yx = fd_partial(Y, "x").values
    yy = fd_partial(Y, "y").values
    det = xx * yy - xy * yx
    if np.min(np.abs(det)) == 0.0:
        raise ConformalError("chart Jacobian vanishes; cannot push the metric forward")
    # columns of J^{-1}: dx/dX etc.
    ax, bx = yy / det, -xy / det
    ay, by = -yx / det, xx / det
    E, F, G = metric.E, metric.F, metric.G
    Ep = E * ax * ax + 2.0 * F * ax * ay + G * ay * ay
    Gp = E * bx * bx + 2.0 * F * bx * by + G * by * by
    Fp = E * ax * bx + F * (ax * by + ay * bx) + G * ay * by
    return Ep, Fp, Gp


def _diagnostics(Ep, Fp, Gp) -> tuple[float, float]:
    core = np.s_[1:-1, 1:-1]
    anis = float(np.max(np.abs(Ep[core] / Gp[core] - 1.0)))
    skew = float(np.max(np.abs(Fp[core]) / np.sqrt(Ep[core] * Gp[core])))
    return anis, skew


def catalog_chart(name: str, n: int = 65, alpha: float | None = None):
    """Closed-form isothermic chart for a named test metric.

    Returns ``(metric, chart, extras)`` on an ``n x n`` grid; ``extras``
    carries the exact log-factor ``u = ln h`` and, where meaningful, the
    angle ``alpha``.  Charts: the hyperbolic half-plane strip with
    ``h = 1/y``, the hyperbolic disk factor ``h = 2/(1 - x^2 - y^2)`` on
    the square inscribed in radius 0.7, and the flat constant-angle net
    straightened by a linear shear.
    """
    if name == "half_plane_pseudosphere":
        g = Grid2D.from_bounds(0.0, 1.0, 1.0, 2.0, n, n)
        X, Y = g.mesh()
        h = ScalarField(g, 1.0 / Y)
        metric = MetricField.conformal(h)
        chart = Chart(ScalarField(g, X), ScalarField(g, Y), h)
        return metric, chart, {"u": ScalarField(g, -np.log(Y))}
    if name == "poincare_disk_patch":
        half = 0.7 / np.sqrt(2.0)
        g = Grid2D.from_bounds(-half, half, -half, half, n, n)
        X, Y = g.mesh()
        h = ScalarField(g, 2.0 / (1.0 - X**2 - Y**2))
        metric = MetricField.conformal(h)
        chart = Chart(ScalarField(g, X), ScalarField(g, Y), h)
        return metric, chart, {"u": ScalarField(g, np.log(h.values))}
    if name == "flat_constant_angle":
        if alpha is None:
            raise ValueError("flat_constant_angle needs the angle alpha")
        if not 0.0 < alpha < np.pi:
            raise ValueError(f"angle must lie in (0, pi), got {alpha}")
        g = Grid2D.from_bounds(0.0, 1.0, 0.0, 1.0, n, n)
        X, Y = g.mesh()
        c = float(np.cos(alpha))
        ones = np.ones(g.shape)
        metric = MetricField(g, ones, c * ones, ones)
        chart = Chart(
            ScalarField(g, X + c * Y),
            ScalarField(g, float(np.sin(alpha)) * Y),
            ScalarField(g, ones),
        )
        return metric, chart, {"u": ScalarField(g, np.zeros(g.shape)), "alpha": alpha}
    raise ValueError(f"unknown catalog chart {name!r}")


def _triangle_rows(metric: MetricField):
    """Conformality residual rows, two per triangle, two triangles per cell.

    Each grid cell is split along its main diagonal.  A triangle is laid
    out isometrically (w.r.t. the metric averaged over its vertices) in
    the plane; the affine map from that layout to the unknown images
    must be a similarity, which gives two linear equations in the six
    vertex unknowns.  Rows are weighted by the square root of the
    triangle's metric area so the stack discretizes the conformal
    energy integral.
    """
    g = metric.grid
    nx, ny = g.nx, g.ny
    idx = np.arange(nx * ny).reshape(g.shape)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    v0 = np.concatenate([n00, n00])
    v1 = np.concatenate([n10, n11])
    v2 = np.concatenate([n11, n01])

    Xg, Yg = g.mesh()
    xf, yf = Xg.ravel(), Yg.ravel()
    e1x, e1y = xf[v1] - xf[v0], yf[v1] - yf[v0]
    e2x, e2y = xf[v2] - xf[v0], yf[v2] - yf[v0]
    Ec, Fc, Gc = (
        (arr.ravel()[v0] + arr.ravel()[v1] + arr.ravel()[v2]) / 3.0
        for arr in (metric.E, metric.F, metric.G)
    )
    a = Ec * e1x**2 + 2.0 * Fc * e1x * e1y + Gc * e1y**2
    b = Ec * e1x * e2x + Fc * (e1x * e2y + e1y * e2x) + Gc * e1y * e2y
    c = Ec * e2x**2 + 2.0 * Fc * e2x * e2y + Gc * e2y**2
    disc = a * c - b * b
    if np.min(disc) <= 0.0 or np.min(a) <= 0.0:
        raise ConformalError("metric degenerated on a triangle")
    sq_a = np.sqrt(a)
    s = np.sqrt(disc) / sq_a
    w = np.sqrt(0.5 * np.sqrt(disc))

    c1 = w / sq_a
    cs = w / s
    cb = w * b / (a * s)
    M = v0.size
    N = nx * ny
    rows1 = np.repeat(2 * np.arange(M), 5)
    cols1 = np.stack([v1, v0, N + v1, N + v2, N + v0], axis=1).ravel()
    vals1 = np.stack([c1, -c1, cb, -cs, cs - cb], axis=1).ravel()
    rows2 = np.repeat(2 * np.arange(M) + 1, 5)
    cols2 = np.stack([v1, v2, v0, N + v1, N + v0], axis=1).ravel()
    vals2 = np.stack([-cb, cs, cb - cs, c1, -c1], axis=1).ravel()
    return sp.coo_matrix(
        (
            np.concatenate([vals1, vals2]),
            (np.concatenate([rows1, rows2]), np.concatenate([cols1, cols2])),
        ),
        shape=(2 * M, 2 * N),
    ).tocsr()


def flatten_conformal(metric: MetricField, *, anisotropy_tol: float = 1e-3) -> Chart:
    """Least-squares conformal chart for an arbitrary positive metric.

    Minimizes the per-triangle conformal energy of ``_triangle_rows``;
    the overdetermined stack leaves exactly the similarity group free.
    Gauge: the first node of the bottom row maps to the origin and the
    last one to ``(L, 0)`` where ``L`` is the metric length of that
    row, which kills translation, rotation, and scale.  The result is
    flagged ``converged`` when the pushed-forward metric is isothermic
    within ``anisotropy_tol``.
    """
    g = metric.grid
    nx, ny = g.nx, g.ny
    N = nx * ny
    A = _triangle_rows(metric)

    L = float(np.trapezoid(np.sqrt(metric.E[0, :]), dx=g.dx))
    pins = sp.lil_matrix((4, 2 * N))
    pins[0, 0] = 1.0  # X at the bottom-left node
    pins[1, N] = 1.0  # Y there
    pins[2, nx - 1] = 1.0  # X at the bottom-right node
    pins[3, N + nx - 1] = 1.0  # Y there
    targets = np.array([0.0, 0.0, L, 0.0])

    # exact pin enforcement through the stationarity system
    K = sp.bmat([[A.T @ A, pins.T], [pins, None]], format="csc")
    rhs = np.concatenate([np.zeros(2 * N), targets])
    sol = spsolve(K, rhs)
    if not np.isfinite(sol).all():
        raise ConformalError("flattening system is singular")

    X = ScalarField(g, sol[:N].reshape(g.shape))
    Y = ScalarField(g, sol[N : 2 * N].reshape(g.shape))
    Ep, Fp, Gp = _pushforward(metric, X, Y)
    if np.min(Ep) <= 0.0 or np.min(Gp) <= 0.0:
        raise ConformalError("pushed-forward metric lost positivity")
    anis, skew = _diagnostics(Ep, Fp, Gp)
    h = ScalarField(g, np.sqrt(0.5 * (Ep + Gp)))
    return Chart(X, Y, h, anis, skew, anis <= anisotropy_tol and skew <= anisotropy_tol)


def rescale_to_liouville(h: ScalarField) -> tuple[ScalarField, float]:
    """Fit the multiplicative constant that best matches the curvature
    equation and return the rescaled factor together with the fit.

    On the grid the factor lives on (assumed isothermic coordinates),
    the log-factor of a curvature -1 metric satisfies
    ``lap ln h = h^2``; a factor carrying a stray constant ``c`` still
    has the same left side but ``h^2/c^2`` on the right.  The scalar
    least-squares fit of ``lap ln h`` against ``h^2`` therefore recovers
    ``1/c^2``, and multiplying by its square root removes the stray
    scale.  For a clean factor the fit sits at 1 up to h^2 error.
    """
    if np.nanmin(h.values[1:-1, 1:-1]) <= 0.0:
        raise GridError("conformal factor must be positive on interior nodes")
    lap = fd_laplacian(ScalarField(h.grid, np.log(h.values))).values[1:-1, 1:-1]
    h2 = h.values[1:-1, 1:-1] ** 2
    fit = float(np.sum(lap * h2) / np.sum(h2 * h2))
    if fit <= 0.0:
        raise ConformalError(f"curvature-scale fit is not positive: {fit:.3e}")
    return ScalarField(h.grid, np.sqrt(fit) * h.values), fit


def _boundary_polygon(chart: Chart) -> np.ndarray:
    Xv, Yv = chart.X.values, chart.Y.values
    idx = []
    ny, nx = chart.grid.shape
    idx += [(0, i) for i in range(nx)]
    idx += [(j, nx - 1) for j in range(1, ny)]
    idx += [(ny - 1, i) for i in range(nx - 2, -1, -1)]
    idx += [(j, 0) for j in range(ny - 2, 0, -1)]
    return np.array([(Xv[j, i], Yv[j, i]) for j, i in idx])


def _points_in_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
    # even-odd ray casting, vectorized over query points
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(px.shape, dtype=bool)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        crosses = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcut = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (px < xcut)
    return inside


def inner_image_grid(chart: Chart, n: int = 65, margin: float = 0.12) -> Grid2D:
    """Regular grid on a rectangle strictly inside the chart image.

    Starts from the bounding box of the node images shrunk toward the
    image of the central node and bisects the shrink factor until every
    edge sample of the rectangle lies inside the image boundary polygon
    with a relative safety ``margin``.
    """
    poly = _boundary_polygon(chart)
    cx = float(chart.X.values[chart.grid.ny // 2, chart.grid.nx // 2])
    cy = float(chart.Y.values[chart.grid.ny // 2, chart.grid.nx // 2])
    half_w = max(chart.X.values.max() - cx, cx - chart.X.values.min())
    half_h = max(chart.Y.values.max() - cy, cy - chart.Y.values.min())

    ts = np.linspace(0.0, 1.0, 129)
    def fits(scale: float) -> bool:
        w, hh = scale * half_w, scale * half_h
        ex = np.concatenate([cx - w + 2 * w * ts, np.full(129, cx + w),
                             cx - w + 2 * w * ts, np.full(129, cx - w)])
        ey = np.concatenate([np.full(129, cy - hh), cy - hh + 2 * hh * ts,
                             np.full(129, cy + hh), cy - hh + 2 * hh * ts])
        return bool(_points_in_polygon(ex, ey, poly).all())

    scale = 1.0
    for _ in range(40):
        if fits(scale * (1.0 + margin)):
            break
        scale *= 0.5
        if scale < 1e-6:
            raise ConformalError("no axis-aligned rectangle fits inside the image")
    lo, hi = scale, min(1.0, 2.0 * scale)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fits(mid * (1.0 + margin)) else (lo, mid)
    w, hh = lo * half_w, lo * half_h
    return Grid2D.from_bounds(cx - w, cx + w, cy - hh, cy + hh, n, n)


def chart_preimage(chart: Chart, image_grid: Grid2D,
                   tol: float = 1e-11) -> tuple[np.ndarray, np.ndarray]:
    """Source coordinates of every node of ``image_grid`` under the chart.

    Spline-interpolates ``(X, Y)`` and runs a vectorized Newton solve
    per image node, seeded from the nearest sampled node image.  Nodes
    must lie inside the image; use ``inner_image_grid`` to stay there.
    """
    g = chart.grid
    sx = RectBivariateSpline(g.y(), g.x(), chart.X.values)
    sy = RectBivariateSpline(g.y(), g.x(), chart.Y.values)
    XT, YT = image_grid.mesh()
    xt, yt = XT.ravel(), YT.ravel()

    # coarse nearest-image seed
    step = max(1, min(g.nx, g.ny) // 48)
    Xs = chart.X.values[::step, ::step].ravel()
    Ys = chart.Y.values[::step, ::step].ravel()
    Xg, Yg = g.mesh()
    xs = Xg[::step, ::step].ravel()
    ys = Yg[::step, ::step].ravel()
    d2 = (xt[:, None] - Xs[None, :]) ** 2 + (yt[:, None] - Ys[None, :]) ** 2
    seed = np.argmin(d2, axis=1)
    x, y = xs[seed].copy(), ys[seed].copy()

    for _ in range(60):
        rx = sx.ev(y, x) - xt
        ry = sy.ev(y, x) - yt
        worst = max(np.max(np.abs(rx)), np.max(np.abs(ry)))
        if worst <= tol:
            break
        jxx = sx.ev(y, x, dy=1)  # d/dx is the spline's second axis
        jxy = sx.ev(y, x, dx=1)
        jyx = sy.ev(y, x, dy=1)
        jyy = sy.ev(y, x, dx=1)
        det = jxx * jyy - jxy * jyx
        if np.min(np.abs(det)) == 0.0:
            raise ConformalError("chart inversion hit a singular Jacobian")
        x = np.clip(x - (jyy * rx - jxy * ry) / det, g.x0, g.x1)
        y = np.clip(y - (-jyx * rx + jxx * ry) / det, g.y0, g.y1)
    else:
        raise ConformalError(
            f"chart inversion did not converge; residual {worst:.3e}"
        )
    return x.reshape(image_grid.shape), y.reshape(image_grid.shape)


def resample_to_image(field: ScalarField, chart: Chart, image_grid: Grid2D,
                      preimage: tuple[np.ndarray, np.ndarray] | None = None) -> ScalarField:
    """Sample a source-grid field at the chart preimages of image nodes."""
    if not field.grid.matches(chart.grid):
        raise GridError("field lives on a different grid than the chart")
    if preimage is None:
        preimage = chart_preimage(chart, image_grid)
    x, y = preimage
    spline = RectBivariateSpline(chart.grid.y(), chart.grid.x(), field.values)
    return ScalarField(image_grid, spline.ev(y.ravel(), x.ravel()).reshape(image_grid.shape))
