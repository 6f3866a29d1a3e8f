"""Stability operator L = -Delta - (|A|^2 - 2) on a graph surface.

The Laplace-Beltrami part uses the fourth-order symmetric divergence-form
discretization from :mod:`vpmcf.geometry`, so L is self-adjoint in the
discrete dmu inner product and constants span the kernel of its diffusion
part.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, IterationFailureError
from .geometry import DiffusionOperator, GraphSurface

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 4
# Ritz residual at which Lanczos stops; L amplifies leftover high modes by ~1e4 at 128^2
RITZ_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StabilityReport:
    lambda_min: float
    eigenfunction: np.ndarray
    strictly_stable: bool
    iterations: int
    residual: float
    fitted_decay_rate: float | None = None


@dataclass(frozen=True)
class RateComparison:
    fitted_rate: float
    required_rate: float
    passed: bool
    window: tuple
    n_records: int


def _inner(surface, f, g):
    return surface.integrate(f * g)


def project_mean_zero(surface: GraphSurface, phi):
    """Remove the dmu-weighted mean of phi."""
    return phi - surface.integrate(phi) / surface.area


def apply_stability_operator(surface: GraphSurface, phi, order: int = DEFAULT_ORDER):
    op = DiffusionOperator(surface, order)
    return op.laplacian(phi) * -1.0 - (surface.a2norm - 2.0) * phi


def rayleigh_quotient(surface: GraphSurface, phi, order: int = DEFAULT_ORDER) -> float:
    return _inner(surface, phi, apply_stability_operator(surface, phi, order)) / _inner(surface, phi, phi)


def _pcg(apply, b, precond, x0=None, rtol=1e-10, maxiter=5000):
    """Preconditioned conjugate gradients for a symmetric positive definite operator."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    z = precond * r
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, maxiter + 1):
        ap = apply(p)
        alpha = rz / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it
        z = precond * r
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise IterationFailureError(f"conjugate gradients did not reach rtol={rtol} in {maxiter} iterations")


def _seed(surface: GraphSurface):
    data = surface.data
    X, Y = data.coordinates()
    kx, ky = 2 * np.pi / data.lx, 2 * np.pi / data.ly
    # the longer period carries the lowest nonconstant mode; a small fixed-seed
    # random part keeps the start from being orthogonal to it by symmetry
    if data.lx >= data.ly:
        smooth = np.cos(kx * X) + 0.5 * np.sin(kx * X)
    else:
        smooth = np.cos(ky * Y) + 0.5 * np.sin(ky * Y)
    return smooth + 1e-2 * np.random.default_rng(0).standard_normal(smooth.shape)


def lowest_eigenvalue(
    surface: GraphSurface,
    tol: float = 1e-12,
    max_iter: int = 500,
    order: int = DEFAULT_ORDER,
    solve_rtol: float = 1e-10,
) -> StabilityReport:
    """Lowest eigenvalue of L on dmu-mean-zero functions.

    Lanczos with full reorthogonalization runs on the inverse of the
    constrained operator. Each step solves ``(L + s) psi = phi + mu`` with
    the Lagrange multiplier mu fixed so that psi has zero mean; the shift s
    only makes the system positive definite for the conjugate-gradient
    solve. Krylov convergence depends on the square root of the spectral
    gap, so nearly degenerate spectra cost tens rather than hundreds of
    solves. ``iterations`` counts Lanczos steps.
    """
    op = DiffusionOperator(surface, order)
    mass = surface.area_element
    potential = 2.0 - surface.a2norm
    shift = max(0.0, -float(np.min(potential))) + 1e-3
    diag = op.diagonal() + mass * (potential + shift)

    def apply(x):
        return op.stiffness(x) + mass * (potential + shift) * x

    precond = 1.0 / diag
    ones = np.ones_like(mass)
    z_const, _ = _pcg(apply, mass * ones, precond, rtol=solve_rtol)
    z_mean = surface.integrate(z_const)

    def inverse(phi):
        psi, _ = _pcg(apply, mass * phi, precond, rtol=solve_rtol)
        psi = psi - (surface.integrate(psi) / z_mean) * z_const
        return project_mean_zero(surface, psi)

    q = project_mean_zero(surface, _seed(surface))
    basis = [q / np.sqrt(_inner(surface, q, q))]
    alphas, betas = [], []
    lam_old = None
    for it in range(1, max_iter + 1):
        w = inverse(basis[-1])
        alphas.append(_inner(surface, w, basis[-1]))
        for _ in range(2):  # full reorthogonalization, twice is enough
            for v in basis:
                w = w - _inner(surface, w, v) * v
        beta = float(np.sqrt(max(_inner(surface, w, w), 0.0)))
        tri = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        thetas, vecs = np.linalg.eigh(tri)
        theta, coeffs = thetas[-1], vecs[:, -1]
        lam = 1.0 / theta - shift
        # the Ritz residual beta |s_k| bounds the eigenvector error; the value error is its square
        ritz_resid = beta * abs(coeffs[-1]) / theta
        settled = lam_old is not None and abs(lam - lam_old) <= tol * max(1.0, abs(lam))
        if (settled and ritz_resid <= RITZ_TOL) or beta <= tol * theta:
            phi = project_mean_zero(surface, sum(c * v for c, v in zip(coeffs, basis)))
            phi /= np.sqrt(_inner(surface, phi, phi))
            lam = rayleigh_quotient(surface, phi, order)
            resid_field = project_mean_zero(surface, apply_stability_operator(surface, phi, order) - lam * phi)
            residual = float(np.sqrt(_inner(surface, resid_field, resid_field)))
            logger.debug("Lanczos converged in %d steps, lambda=%.12g", it, lam)
            return StabilityReport(lam, phi, lam > 0.0, it, residual)
        lam_old = lam
        betas.append(beta)
        basis.append(w / beta)
    raise IterationFailureError(f"Lanczos iteration did not converge in {max_iter} steps")


def fit_decay_rate(times, values) -> float:
    """Least-squares slope of -log(values) against time."""
    t = np.asarray(times, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    slope = np.polyfit(t, y, 1)[0]
    return float(-slope)


def exponential_rate_check(
    report: StabilityReport,
    history,
    tol: float = 0.1,
    sup_threshold: float = 1e-2,
    noise_floor: float = 1e-22,
    min_records: int = 10,
) -> RateComparison:
    """Fit the late-time decay of the dissipation integral and compare with 2 lambda_min.

    The window holds records whose sup|H - h| is below ``sup_threshold`` and
    whose dissipation, relative to the area, is above ``noise_floor``.
    """
    late = [r for r in history if r.sup_dev <= sup_threshold and r.dissipation > noise_floor * r.area]
    if len(late) < min_records:
        raise InsufficientDataError(f"only {len(late)} late-time records above the noise floor; need {min_records}")
    rate = fit_decay_rate([r.t for r in late], [r.dissipation for r in late])
    required = 2.0 * report.lambda_min - tol
    return RateComparison(rate, required, rate >= required, (late[0].t, late[-1].t), len(late))
