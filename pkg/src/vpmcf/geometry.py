"""Discrete geometry of graph surfaces {r = u(x)} in the chart dr^2 + g(x, r).

The chart metric inherits the diagonal storage of the reference data, so
``g(x, r) = diag(g1, g2)`` with ``g_k = exp(2v) (cosh r + lam_k sinh r)^2``.
Spatial derivatives of u and of the reference fields are second-order
periodic central differences; r-derivatives of g are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .errors import GraphViolationError
from .foliation import ReferenceSurfaceData

DET_GUARD = 1e-14
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def d1(f, h, axis):
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)


def d2(f, h, axis):
    return (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / (h * h)


def d12(f, dx, dy):
    return d1(d1(f, dx, 0), dy, 1)


@dataclass(frozen=True, eq=False)
class LeafTerms:
    """Chart quantities evaluated at (grid point, r) for diagonal g."""

    g1: np.ndarray
    g2: np.ndarray
    # half r-derivatives, i.e. the second fundamental form of the leaf
    hr1: np.ndarray
    hr2: np.ndarray
    # spatial derivatives at fixed r: dg[k][a] = d g_k / d x^a
    dg: tuple

    @property
    def k1(self):
        return self.hr1 / self.g1

    @property
    def k2(self):
        return self.hr2 / self.g2


class FoliationChart:
    """Normal-coordinate chart (x, y, r) with metric dr^2 + g(x, r) built from reference data."""

    def __init__(self, data: ReferenceSurfaceData):
        self.data = data
        dx, dy = data.dx, data.dy
        self.dv = (d1(data.v, dx, 0), d1(data.v, dy, 1))
        self.dlam = (
            (d1(data.lam1, dx, 0), d1(data.lam1, dy, 1)),
            (d1(data.lam2, dx, 0), d1(data.lam2, dy, 1)),
        )
        self._w = data.conformal

    def terms(self, r) -> LeafTerms:
        c, s = np.cosh(r), np.sinh(r)
        w = self._w
        out_g, out_h, out_dg = [], [], []
        for lam, dlam in ((self.data.lam1, self.dlam[0]), (self.data.lam2, self.dlam[1])):
            p = c + lam * s
            q = s + lam * c
            gk = w * p * p
            out_g.append(gk)
            out_h.append(w * p * q)
            out_dg.append(tuple(gk * (2.0 * self.dv[a] + 2.0 * s * dlam[a] / p) for a in range(2)))
        return LeafTerms(out_g[0], out_g[1], out_h[0], out_h[1], tuple(out_dg))

    def _tensor(self, a, b):
        t = np.zeros(np.shape(a) + (2, 2))
        t[..., 0, 0] = a
        t[..., 1, 1] = b
        return t

    def _broadcast(self, r):
        return np.broadcast_to(np.asarray(r, dtype=float), self.data.v.shape)

    def metric(self, r) -> np.ndarray:
        t = self.terms(self._broadcast(r))
        return self._tensor(t.g1, t.g2)

    def metric_r_derivative(self, r) -> np.ndarray:
        t = self.terms(self._broadcast(r))
        return self._tensor(2.0 * t.hr1, 2.0 * t.hr2)

    def metric_x_derivative(self, r) -> np.ndarray:
        """Array of shape (nx, ny, 2, 2, 2); last axis is the differentiation direction."""
        t = self.terms(self._broadcast(r))
        out = np.zeros(self.data.v.shape + (2, 2, 2))
        for a in range(2):
            out[..., 0, 0, a] = t.dg[0][a]
            out[..., 1, 1, a] = t.dg[1][a]
        return out

    def sqrt_det_metric(self, r):
        c, s = np.cosh(r), np.sinh(r)
        return self._w * (c + self.data.lam1 * s) * (c + self.data.lam2 * s)

    def column_antiderivative(self, r) -> np.ndarray:
        """Closed-form integral of sqrt(det g) from 0 to r in every column."""
        r = self._broadcast(r)
        lam1, lam2 = self.data.lam1, self.data.lam2
        tr, det = lam1 + lam2, lam1 * lam2
        sh = np.sinh(r)
        quarter_s2r = 0.5 * sh * np.cosh(r)
        return self._w * ((1.0 - det) * 0.5 * r + (1.0 + det) * quarter_s2r + 0.5 * tr * sh * sh)

    def column_volume(self, lower, upper, panel_width: float = 1.0) -> np.ndarray:
        """Per-column integral of sqrt(det g) over r from ``lower`` to ``upper`` (signed)."""
        lower = self._broadcast(lower)
        upper = self._broadcast(upper)
        span = upper - lower
        panels = max(1, int(math.ceil(float(np.max(np.abs(span))) / panel_width)))
        total = np.zeros_like(span)
        width = span / panels
        for k in range(panels):
            mid = lower + (k + 0.5) * width
            acc = np.zeros_like(span)
            for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
                acc += weight * self.sqrt_det_metric(mid + 0.5 * width * node)
            total += 0.5 * width * acc
        return total


def build_chart(data: ReferenceSurfaceData) -> FoliationChart:
    return FoliationChart(data)


_FIELDS = (
    "ux", "uy", "lg1", "lg2", "lh1", "lh2", "theta",
    "g11", "g12", "g22", "i11", "i12", "i22", "area_element",
    "h11", "h12", "h22", "hmean", "a2norm", "det",
)


_PLANE_PAD = 8


def _pointwise_numpy(chart: FoliationChart, u: np.ndarray) -> np.ndarray:
    data = chart.data
    dx, dy = data.dx, data.dy
    ux, uy = d1(u, dx, 0), d1(u, dy, 1)
    uxx, uyy, uxy = d2(u, dx, 0), d2(u, dy, 1), d1(ux, dy, 1)

    t = chart.terms(u)
    g1, g2 = t.g1, t.g2
    (g1x, g1y), (g2x, g2y) = t.dg

    uxux, uyuy, uxuy = ux * ux, uy * uy, ux * uy
    theta = 1.0 / np.sqrt(1.0 + uxux / g1 + uyuy / g2)
    G11 = g1 + uxux
    G22 = g2 + uyuy
    det = G11 * G22 - uxuy * uxuy
    i11, i12, i22 = G22 / det, -uxuy / det, G11 / det

    # Christoffel symbols of the leaf metric at fixed r, contracted with grad u
    s11 = 0.5 * (ux * g1x / g1 - uy * g1y / g2)
    s12 = 0.5 * (ux * g1y / g1 + uy * g2x / g2)
    s22 = 0.5 * (uy * g2y / g2 - ux * g2x / g1)
    k1, k2 = t.hr1 / g1, t.hr2 / g2
    h11 = (-uxx + t.hr1 + s11 + 2.0 * k1 * uxux) * theta
    h22 = (-uyy + t.hr2 + s22 + 2.0 * k2 * uyuy) * theta
    h12 = (-uxy + s12 + (k1 + k2) * uxuy) * theta

    hmean = i11 * h11 + 2.0 * i12 * h12 + i22 * h22
    m11 = i11 * h11 + i12 * h12
    m12 = i11 * h12 + i12 * h22
    m21 = i12 * h11 + i22 * h12
    m22 = i12 * h12 + i22 * h22
    a2 = m11 * m11 + 2.0 * m12 * m21 + m22 * m22
    return np.stack([
        ux, uy, g1, g2, t.hr1, t.hr2, theta,
        G11, uxuy, G22, i11, i12, i22, np.sqrt(np.maximum(det, 0.0)),
        h11, h12, h22, hmean, a2, det,
    ])


@numba.njit(cache=True, error_model="numpy")
def _pointwise_kernel(u, ch, sh, w, lam1, lam2, vx2, vy2, l1x, l1y, l2x, l2y, dx, dy, out):
    # u carries one periodic ghost layer on each side
    nx, ny = u.shape[0] - 2, u.shape[1] - 2
    cx, cy = 0.5 / dx, 0.5 / dy
    cxx, cyy, cxy = 1.0 / (dx * dx), 1.0 / (dy * dy), 0.25 / (dx * dy)
    for i in range(nx):
        for j in range(ny):
            a, b = i + 1, j + 1
            k = i * ny + j
            uc = u[a, b]
            ux = (u[a + 1, b] - u[a - 1, b]) * cx
            uy = (u[a, b + 1] - u[a, b - 1]) * cy
            uxx = (u[a + 1, b] - 2.0 * uc + u[a - 1, b]) * cxx
            uyy = (u[a, b + 1] - 2.0 * uc + u[a, b - 1]) * cyy
            uxy = (u[a + 1, b + 1] - u[a + 1, b - 1] - u[a - 1, b + 1] + u[a - 1, b - 1]) * cxy

            c = ch[i, j]
            s = sh[i, j]
            wc = w[i, j]
            p1 = c + lam1[i, j] * s
            p2 = c + lam2[i, j] * s
            g1 = wc * p1 * p1
            g2 = wc * p2 * p2
            hr1 = wc * p1 * (s + lam1[i, j] * c)
            hr2 = wc * p2 * (s + lam2[i, j] * c)
            # derivatives of log g1, log g2
            e1 = 2.0 * s / p1
            e2 = 2.0 * s / p2
            q1x = vx2[i, j] + e1 * l1x[i, j]
            q1y = vy2[i, j] + e1 * l1y[i, j]
            q2x = vx2[i, j] + e2 * l2x[i, j]
            q2y = vy2[i, j] + e2 * l2y[i, j]
            ig1 = 1.0 / g1
            ig2 = 1.0 / g2

            uxux = ux * ux
            uyuy = uy * uy
            uxuy = ux * uy
            theta = 1.0 / math.sqrt(1.0 + uxux * ig1 + uyuy * ig2)
            G11 = g1 + uxux
            G22 = g2 + uyuy
            det = G11 * G22 - uxuy * uxuy
            idet = 1.0 / det
            i11 = G22 * idet
            i12 = -uxuy * idet
            i22 = G11 * idet

            s11 = 0.5 * (ux * q1x - uy * q1y * g1 * ig2)
            s12 = 0.5 * (ux * q1y + uy * q2x)
            s22 = 0.5 * (uy * q2y - ux * q2x * g2 * ig1)
            k1 = hr1 * ig1
            k2 = hr2 * ig2
            h11 = (-uxx + hr1 + s11 + 2.0 * k1 * uxux) * theta
            h22 = (-uyy + hr2 + s22 + 2.0 * k2 * uyuy) * theta
            h12 = (-uxy + s12 + (k1 + k2) * uxuy) * theta

            m11 = i11 * h11 + i12 * h12
            m12 = i11 * h12 + i12 * h22
            m21 = i12 * h11 + i22 * h12
            m22 = i12 * h12 + i22 * h22

            out[0, k] = ux
            out[1, k] = uy
            out[2, k] = g1
            out[3, k] = g2
            out[4, k] = hr1
            out[5, k] = hr2
            out[6, k] = theta
            out[7, k] = G11
            out[8, k] = uxuy
            out[9, k] = G22
            out[10, k] = i11
            out[11, k] = i12
            out[12, k] = i22
            out[13, k] = math.sqrt(max(det, 0.0))
            out[14, k] = h11
            out[15, k] = h12
            out[16, k] = h22
            out[17, k] = i11 * h11 + 2.0 * i12 * h12 + i22 * h22
            out[18, k] = m11 * m11 + 2.0 * m12 * m21 + m22 * m22
            out[19, k] = det


def _pointwise_numba(chart: FoliationChart, u: np.ndarray) -> np.ndarray:
    data = chart.data
    n = u.size
    # padding staggers the field planes, which would otherwise share cache sets
    buf = np.empty((len(_FIELDS), n + _PLANE_PAD))
    (l1x, l1y), (l2x, l2y) = chart.dlam
    _pointwise_kernel(
        np.pad(u, 1, mode="wrap"), np.cosh(u), np.sinh(u), chart._w, data.lam1, data.lam2,
        2.0 * chart.dv[0], 2.0 * chart.dv[1], l1x, l1y, l2x, l2y,
        data.dx, data.dy, buf,
    )
    return [buf[f, :n].reshape(u.shape) for f in range(len(_FIELDS))]


class GraphSurface:
    """Geometry of the graph {r = u(x)}.

    Fields are stored componentwise (``g11``, ``h12``, ...); the tensor views
    ``metric``, ``metric_inv`` and ``a2ff`` are assembled on demand. Both
    backends evaluate the same second-order stencils; ``"numba"`` fuses them
    into one pass over the grid.
    """

    def __init__(self, chart: FoliationChart, u: np.ndarray, backend: str = "numba"):
        data = chart.data
        u = np.asarray(u, dtype=float)
        if u.shape != data.v.shape:
            raise ValueError(f"height field has shape {u.shape}, expected {data.v.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("height field contains non-finite values")
        self.chart = chart
        self.u = u
        if backend == "numba":
            fields = _pointwise_numba(chart, u)
        elif backend == "numpy":
            fields = _pointwise_numpy(chart, u)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        det = fields[19]
        if not np.all(np.isfinite(det)) or np.min(det) < DET_GUARD:
            raise GraphViolationError(f"induced metric degenerate (min det = {np.min(det)!r})")
        if not np.min(fields[6]) > 0.0:
            raise GraphViolationError("gradient function is not positive")
        for name, value in zip(_FIELDS, fields):
            setattr(self, name, value)
        self.grad_u = (self.ux, self.uy)
        self.area = data.integrate(self.area_element)

    @staticmethod
    def _sym(a11, a12, a22):
        out = np.empty(a11.shape + (2, 2))
        out[..., 0, 0] = a11
        out[..., 0, 1] = out[..., 1, 0] = a12
        out[..., 1, 1] = a22
        return out

    @property
    def metric(self) -> np.ndarray:
        return self._sym(self.g11, self.g12, self.g22)

    @property
    def metric_inv(self) -> np.ndarray:
        return self._sym(self.i11, self.i12, self.i22)

    @property
    def a2ff(self) -> np.ndarray:
        return self._sym(self.h11, self.h12, self.h22)

    @property
    def data(self) -> ReferenceSurfaceData:
        return self.chart.data

    def integrate(self, f) -> float:
        """Integral of f against the surface area element."""
        return self.data.integrate(f * self.area_element)

    @cached_property
    def volume(self) -> float:
        return enclosed_volume(self.chart, self.u)

    @property
    def normal(self) -> np.ndarray:
        """Upward unit normal, components (nu^x, nu^y, nu^r) in the chart."""
        ux, uy = self.grad_u
        return np.stack([-ux / self.lg1 * self.theta, -uy / self.lg2 * self.theta, self.theta], axis=-1)


def graph_geometry(chart: FoliationChart, u) -> GraphSurface:
    return GraphSurface(chart, u)


def enclosed_volume(chart: FoliationChart, u) -> float:
    """Signed volume between the reference surface (r = 0) and the graph of u."""
    return chart.data.integrate(chart.column_antiderivative(u))


def quadrature_volume(chart: FoliationChart, u) -> float:
    """Same volume by composite 32-point Gauss-Legendre quadrature in r."""
    return chart.data.integrate(chart.column_volume(0.0, u))


def volume_between(chart: FoliationChart, u1, u2) -> float:
    return chart.data.integrate(chart.column_volume(u1, u2))


@dataclass(frozen=True)
class ThetaIdentityReport:
    max_residual: float
    norm: str


def theta_gradient_identity_check(surface: GraphSurface, norm: str = "leaf") -> ThetaIdentityReport:
    """Compare the gradient function with ``1 / sqrt(1 + |grad u|^2)``.

    ``norm="leaf"`` measures grad u with the leaf metric g(x, u) through the
    point, for which the identity is exact; ``norm="surface"`` uses the
    induced metric of the graph, which differs at fourth order in the slope.
    """
    ux, uy = surface.grad_u
    if norm == "leaf":
        grad2 = ux * ux / surface.lg1 + uy * uy / surface.lg2
    elif norm == "surface":
        grad2 = surface.i11 * ux * ux + 2.0 * surface.i12 * ux * uy + surface.i22 * uy * uy
    else:
        raise ValueError(f"unknown norm {norm!r}")
    theta_geometric = surface.normal[..., 2]
    residual = np.max(np.abs(theta_geometric - 1.0 / np.sqrt(1.0 + grad2)))
    return ThetaIdentityReport(float(residual), norm)


# Laplace-Beltrami in divergence form. The operator is assembled as
# K = sum_a Dst_a^T W_aa Dst_a + cross terms with centered differences, where
# Dst is a staggered (node to face) difference, so K is symmetric and its only
# null vectors are constants. Delta_G f = -K f / sqrt(det G).

def _stag(f, h, axis, order):
    if order == 2:
        return (np.roll(f, -1, axis) - f) / h
    return (np.roll(f, 1, axis) - 27.0 * f + 27.0 * np.roll(f, -1, axis) - np.roll(f, -2, axis)) / (24.0 * h)


def _stag_t(F, h, axis, order):
    if order == 2:
        return (np.roll(F, 1, axis) - F) / h
    return (np.roll(F, -1, axis) - 27.0 * F + 27.0 * np.roll(F, 1, axis) - np.roll(F, 2, axis)) / (24.0 * h)


def _face(w, axis, order):
    if order == 2:
        return 0.5 * (w + np.roll(w, -1, axis))
    return (-np.roll(w, 1, axis) + 9.0 * w + 9.0 * np.roll(w, -1, axis) - np.roll(w, -2, axis)) / 16.0


def _centered(f, h, axis, order):
    if order == 2:
        return d1(f, h, axis)
    return (-np.roll(f, -2, axis) + 8.0 * np.roll(f, -1, axis) - 8.0 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12.0 * h)


class DiffusionOperator:
    """Symmetric stiffness operator of -Delta_G on a fixed surface."""

    def __init__(self, surface: GraphSurface, order: int = 2):
        if order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        self.order = order
        data = surface.data
        self.h = (data.dx, data.dy)
        sq = surface.area_element
        self.mass = sq
        self.w_face = (_face(sq * surface.i11, 0, order), _face(sq * surface.i22, 1, order))
        self.w_cross = sq * surface.i12
        self._has_cross = bool(np.any(self.w_cross != 0.0))

    def stiffness(self, f):
        o = self.order
        out = np.zeros_like(f)
        for a in range(2):
            out += _stag_t(self.w_face[a] * _stag(f, self.h[a], a, o), self.h[a], a, o)
        if self._has_cross:
            fx = _centered(f, self.h[0], 0, o)
            fy = _centered(f, self.h[1], 1, o)
            out -= _centered(self.w_cross * fy, self.h[0], 0, o) + _centered(self.w_cross * fx, self.h[1], 1, o)
        return out

    def diagonal(self):
        hx, hy = self.h
        if self.order == 2:
            dg = (self.w_face[0] + np.roll(self.w_face[0], 1, 0)) / hx**2
            dg += (self.w_face[1] + np.roll(self.w_face[1], 1, 1)) / hy**2
            return dg
        out = np.zeros_like(self.mass)
        for a, h in ((0, hx), (1, hy)):
            w = self.w_face[a]
            near = w + np.roll(w, 1, a)
            far = np.roll(w, -1, a) + np.roll(w, 2, a)
            out += (729.0 * near + far) / (24.0 * h) ** 2
        return out

    def laplacian(self, f):
        return -self.stiffness(f) / self.mass


def laplace_beltrami(surface: GraphSurface, f, order: int = 2):
    return DiffusionOperator(surface, order).laplacian(f)
