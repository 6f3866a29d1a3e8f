"""Closed-form geometry of the equidistant foliation {S(r)} of a reference surface.

The reference surface S lives on a periodic rectangular grid (a flat torus)
with isothermal metric ``exp(2v) * I`` and a diagonal second fundamental
form whose principal curvatures are ``lam1`` and ``lam2``. Every quantity
below is either pointwise in x or a periodic trapezoid integral against the
area element of S.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidDataError, PreconditionError, SingularDenominatorError

LAMBDA_GUARD = 1e-6
MIN_GRID = 8


@dataclass(frozen=True, eq=False)
class ReferenceSurfaceData:
    """Conformal factor and principal curvatures of S sampled on a periodic grid.

    Arrays have shape ``(nx, ny)``; axis 0 runs along x with spacing
    ``lx / nx`` and the point ``x = lx`` is identified with ``x = 0``.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    v: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidDataError("grid sizes must be integers")
        if self.nx < MIN_GRID or self.ny < MIN_GRID:
            raise InvalidDataError(f"grid must be at least {MIN_GRID}x{MIN_GRID}, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0 and np.isfinite(self.lx) and np.isfinite(self.ly)):
            raise InvalidDataError("domain periods must be positive and finite")
        for name in ("v", "lam1", "lam2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.nx, self.ny):
                raise InvalidDataError(f"{name} has shape {arr.shape}, expected {(self.nx, self.ny)}")
            if not np.all(np.isfinite(arr)):
                raise InvalidDataError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        worst = max(np.max(np.abs(self.lam1)), np.max(np.abs(self.lam2)))
        if worst > 1.0 - LAMBDA_GUARD:
            raise InvalidDataError(f"small-curvature condition violated: max|lambda| = {worst!r}")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def coordinates(self):
        """Return the meshgrid ``(X, Y)`` of grid-point coordinates."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    @property
    def conformal(self) -> np.ndarray:
        return np.exp(2.0 * self.v)

    def integrate(self, f) -> float:
        """Periodic trapezoid rule over the coordinate domain (dx dy measure)."""
        return float(np.sum(f) * self.cell_area)


@dataclass(frozen=True)
class SmallCurvatureConstants:
    alpha: float
    beta: float


@dataclass(frozen=True, eq=False)
class LeafGeometry:
    """Geometry of the parallel surface S(r); tensor fields have shape (nx, ny, 2, 2)."""

    r: float
    g: np.ndarray
    a2ff: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    hmean: np.ndarray
    area_element: np.ndarray


@dataclass(frozen=True)
class NonsingularityReport:
    min_value: float
    all_positive: bool
    per_sample_min: list = field(default_factory=list)


def _check_lambda(*lams):
    for lam in lams:
        if np.any(np.abs(np.asarray(lam)) >= 1.0):
            raise InvalidDataError("principal curvatures must lie in (-1, 1)")


def _shape_tensor(data: ReferenceSurfaceData) -> np.ndarray:
    """exp(-2v) A in the isothermal frame, i.e. diag(lam1, lam2)."""
    b = np.zeros(data.v.shape + (2, 2))
    b[..., 0, 0] = data.lam1
    b[..., 1, 1] = data.lam2
    return b


def parallel_metric(data: ReferenceSurfaceData, r: float) -> np.ndarray:
    """Induced metric ``exp(2v) [cosh r I + sinh r exp(-2v) A]^2`` of S(r)."""
    eye = np.eye(2)
    p = np.cosh(r) * eye + np.sinh(r) * _shape_tensor(data)
    g = data.conformal[..., None, None] * (p @ p)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    assert np.all(det > 0.0) and np.all(g[..., 0, 0] > 0.0), "parallel metric lost positive definiteness"
    return g


def parallel_second_fundamental(data: ReferenceSurfaceData, r: float) -> np.ndarray:
    """Second fundamental form of S(r) with respect to the upward leaf normal."""
    eye = np.eye(2)
    b = _shape_tensor(data)
    p = np.cosh(r) * eye + np.sinh(r) * b
    q = np.sinh(r) * eye + np.cosh(r) * b
    return data.conformal[..., None, None] * (p @ q)


def principal_curvatures(lam1, lam2, r):
    """Principal curvatures ``(tanh r + lam) / (1 + lam tanh r)`` of the leaf at distance r."""
    _check_lambda(lam1, lam2)
    t = np.tanh(r)
    return (t + lam1) / (1.0 + lam1 * t), (t + lam2) / (1.0 + lam2 * t)


def mean_curvature_parallel(lam1, lam2, r):
    _check_lambda(lam1, lam2)
    t = np.tanh(r)
    tr = lam1 + lam2
    det = lam1 * lam2
    return (2.0 * (1.0 + det) * t + tr * (1.0 + t * t)) / (1.0 + tr * t + det * t * t)


def area_element_factor(data: ReferenceSurfaceData, r: float) -> np.ndarray:
    """Ratio d mu(r) / dx dy, i.e. ``(c^2 + (l1+l2) s c + l1 l2 s^2) exp(2v)``."""
    c, s = np.cosh(r), np.sinh(r)
    lam1, lam2 = data.lam1, data.lam2
    return (c * c + (lam1 + lam2) * s * c + lam1 * lam2 * s * s) * data.conformal


def leaf_geometry(data: ReferenceSurfaceData, r: float) -> LeafGeometry:
    mu1, mu2 = principal_curvatures(data.lam1, data.lam2, r)
    return LeafGeometry(
        r=float(r),
        g=parallel_metric(data, r),
        a2ff=parallel_second_fundamental(data, r),
        mu1=mu1,
        mu2=mu2,
        hmean=mean_curvature_parallel(data.lam1, data.lam2, r),
        area_element=area_element_factor(data, r),
    )


def leaf_area(data: ReferenceSurfaceData, r: float) -> float:
    return data.integrate(area_element_factor(data, r))


def reference_averages(data: ReferenceSurfaceData) -> tuple[float, float]:
    """Average mean curvature h0 and average extrinsic curvature kappa0 of S."""
    w = data.conformal
    total = data.integrate(w)
    h0 = data.integrate((data.lam1 + data.lam2) * w) / total
    kappa0 = data.integrate(data.lam1 * data.lam2 * w) / total
    return h0, kappa0


def leaf_area_derivative(data: ReferenceSurfaceData, r: float, tol: float = 1e-10) -> float:
    """Closed-form d|S(r)|/dr; valid only when S has zero average mean curvature."""
    w = data.conformal
    trace_integral = data.integrate((data.lam1 + data.lam2) * w)
    scale = data.integrate(w)
    if abs(trace_integral) > tol * scale:
        raise PreconditionError(
            f"reference surface must have zero average mean curvature, got integral {trace_integral!r}"
        )
    return 2.0 * np.sinh(r) * np.cosh(r) * data.integrate((1.0 + data.lam1 * data.lam2) * w)


def average_mean_curvature_leaf(data: ReferenceSurfaceData, r: float) -> float:
    weight = area_element_factor(data, r)
    hmean = mean_curvature_parallel(data.lam1, data.lam2, r)
    return data.integrate(hmean * weight) / data.integrate(weight)


def rational_average_formula(h0: float, kappa0: float, r: float) -> float:
    """Rational expression for the leaf-average mean curvature in terms of h0, kappa0.

    Exact for any data when h0 and kappa0 are averages against the area
    element of S: with t = tanh r, both ``H dmu(r)`` and ``dmu(r)`` equal
    ``cosh^2 r exp(2v)`` times a polynomial in t that is affine in
    ``lam1 + lam2`` and ``lam1 * lam2``, so the integrals reduce to h0 and
    kappa0. :func:`average_formula_discrepancy` measures the gap.
    """
    t = np.tanh(r)
    denom = 1.0 + h0 * t + kappa0 * t * t
    if not denom > 1e-14:
        raise SingularDenominatorError(f"denominator {denom!r} is not positive")
    return float((2.0 * (1.0 + kappa0) * t + h0 * (1.0 + t * t)) / denom)


# name used by the published interface
paper_average_formula = rational_average_formula


def average_formula_discrepancy(data: ReferenceSurfaceData, r: float) -> float:
    h0, kappa0 = reference_averages(data)
    return rational_average_formula(h0, kappa0, r) - average_mean_curvature_leaf(data, r)


def small_curvature_constants(data: ReferenceSurfaceData) -> SmallCurvatureConstants:
    alpha = float(max(np.max(np.abs(data.lam1)), np.max(np.abs(data.lam2))))
    if alpha > 1.0 - LAMBDA_GUARD:
        raise InvalidDataError(f"alpha = {alpha!r} is too close to 1")
    beta = 0.5 * np.log((1.0 + alpha) / (1.0 - alpha))
    return SmallCurvatureConstants(alpha=alpha, beta=float(beta))


def foliation_nonsingularity(data: ReferenceSurfaceData, r_samples: Iterable[float]) -> NonsingularityReport:
    """Evaluate ``1 + (l1+l2) tanh r + l1 l2 tanh^2 r`` over the grid for each sample r."""
    mins = []
    tr = data.lam1 + data.lam2
    det = data.lam1 * data.lam2
    for r in r_samples:
        t = np.tanh(r)
        mins.append(float(np.min(1.0 + tr * t + det * t * t)))
    lowest = min(mins) if mins else float("nan")
    return NonsingularityReport(min_value=lowest, all_positive=bool(mins) and lowest > 0.0, per_sample_min=mins)


def shape_operator(data: ReferenceSurfaceData, r: float) -> np.ndarray:
    """Mixed tensor ``g^{-1} A`` of S(r); satisfies d/dr S + S^2 = I."""
    return np.linalg.solve(parallel_metric(data, r), parallel_second_fundamental(data, r))
