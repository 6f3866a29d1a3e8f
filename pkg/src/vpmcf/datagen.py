"""Synthetic reference surfaces and the independent oracles used to check them.

Random phases come from SplitMix64 (Steele, Lea & Flood 2014), a counter-based
64-bit generator that is trivial to reproduce in any language:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

all arithmetic modulo 2**64. A uniform double in [0, 1) is ``(z >> 11) * 2**-53``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidSpecError
from .foliation import (
    LAMBDA_GUARD,
    ReferenceSurfaceData,
    parallel_metric,
    parallel_second_fundamental,
)

_MASK = (1 << 64) - 1
GENERATOR_KINDS = ("fuchsian", "constant-lambda", "fourier-bump")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic reference surface.

    ``amp`` is the target max|lambda| of a fourier-bump surface, ``lam1`` and
    ``lam2`` the values of a constant-lambda surface, ``v_amp`` the max|v| of
    the conformal factor and ``kmax`` the largest wavenumber used.
    """

    kind: str = "fuchsian"
    amp: float = 0.0
    lam1: float = 0.0
    lam2: float = 0.0
    v_amp: float = 0.0
    kmax: int = 2
    zero_mean_trace: bool = False
    seed: int = 0

    def validate(self):
        if self.kind not in GENERATOR_KINDS:
            raise InvalidSpecError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        for name in ("amp", "lam1", "lam2"):
            value = getattr(self, name)
            if not math.isfinite(value) or abs(value) >= 1.0 - LAMBDA_GUARD:
                raise InvalidSpecError(f"{name} = {value!r} must satisfy |{name}| < 1")
        if self.amp < 0:
            raise InvalidSpecError("amp must be non-negative")
        if not math.isfinite(self.v_amp) or self.v_amp < 0:
            raise InvalidSpecError("v_amp must be a non-negative finite number")
        if self.kmax < 1:
            raise InvalidSpecError("kmax must be at least 1")


def _modes(kmax: int):
    modes = []
    for kx in range(0, kmax + 1):
        for ky in range(-kmax, kmax + 1):
            if kx == 0 and ky <= 0:
                continue
            modes.append((kx, ky))
    return modes


def _random_field(rng: SplitMix64, X, Y, lx, ly, kmax):
    f = np.zeros_like(X)
    for kx, ky in _modes(kmax):
        weight = (0.5 + 0.5 * rng.uniform()) / (1.0 + kx * kx + ky * ky)
        phase = 2.0 * math.pi * rng.uniform()
        f += weight * np.cos(2.0 * math.pi * (kx * X / lx + ky * Y / ly) + phase)
    return f


def _scale_to(f, target):
    peak = np.max(np.abs(f))
    return f * (target / peak) if peak > 0 else f


def generate(spec: GeneratorSpec, nx: int, ny: int, lx: float = 2 * math.pi, ly: float = 2 * math.pi) -> ReferenceSurfaceData:
    """Build reference data from a generator spec; deterministic for a fixed seed."""
    spec.validate()
    shape = (nx, ny)
    if spec.kind == "fuchsian":
        zeros = np.zeros(shape)
        return ReferenceSurfaceData(nx, ny, lx, ly, zeros, zeros.copy(), zeros.copy())
    if spec.kind == "constant-lambda":
        return ReferenceSurfaceData(
            nx, ny, lx, ly, np.full(shape, spec.v_amp), np.full(shape, spec.lam1), np.full(shape, spec.lam2)
        )

    # fourier-bump: band limit keeps second-order differences resolving every mode
    if spec.kmax > min(nx, ny) // 8:
        raise InvalidSpecError(f"kmax = {spec.kmax} exceeds the band limit min(nx, ny)/8 = {min(nx, ny) // 8}")
    x = np.arange(nx) * (lx / nx)
    y = np.arange(ny) * (ly / ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    rng = SplitMix64(spec.seed)
    v = _scale_to(_random_field(rng, X, Y, lx, ly, spec.kmax), spec.v_amp)
    lam1 = _random_field(rng, X, Y, lx, ly, spec.kmax)
    lam2 = _random_field(rng, X, Y, lx, ly, spec.kmax)
    if spec.zero_mean_trace:
        w = np.exp(2.0 * v)
        shift = np.sum((lam1 + lam2) * w) / np.sum(w)
        lam1 = lam1 - 0.5 * shift
        lam2 = lam2 - 0.5 * shift
    # common rescaling keeps a zero weighted trace at zero
    peak = max(np.max(np.abs(lam1)), np.max(np.abs(lam2)))
    if peak > 0:
        lam1 = lam1 * (spec.amp / peak)
        lam2 = lam2 * (spec.amp / peak)
    return ReferenceSurfaceData(nx, ny, lx, ly, v, lam1, lam2)


def generalized_eigenvalues(g: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    """Roots of det(a - mu g) = 0 for symmetric 2x2 g (positive definite) and a, ascending.

    g = L L^T is factored and the symmetric matrix L^-1 a L^-T is diagonalized.
    Its discriminant is a sum of squares, so coincident roots stay accurate;
    the quadratic formula in det(a - mu g) loses half the digits there.
    """
    l11 = math.sqrt(g[0, 0])
    l21 = g[1, 0] / l11
    l22 = math.sqrt(g[1, 1] - l21 * l21)
    # b = L^-1 a L^-T, written out for lower-triangular L
    s = l21 / l11
    b11 = a[0, 0] / (l11 * l11)
    b12 = (a[0, 1] - s * a[0, 0]) / (l11 * l22)
    b22 = (a[1, 1] - 2.0 * s * a[0, 1] + s * s * a[0, 0]) / (l22 * l22)
    mean = 0.5 * (b11 + b22)
    radius = math.hypot(0.5 * (b11 - b22), b12)
    return mean - radius, mean + radius


def eigen_oracle(data: ReferenceSurfaceData, index: tuple[int, int], r: float) -> tuple[float, float]:
    """Principal curvatures at one grid point from g(x, r) and A(x, r), without the tanh closed form."""
    i, j = index
    g = parallel_metric(data, r)[i, j]
    a = parallel_second_fundamental(data, r)[i, j]
    return generalized_eigenvalues(g, a)


def point_data(lam1: float, lam2: float, v: float = 0.0) -> ReferenceSurfaceData:
    """Constant data on the minimal grid, for pointwise oracle checks."""
    shape = (8, 8)
    return ReferenceSurfaceData(8, 8, 1.0, 1.0, np.full(shape, v), np.full(shape, lam1), np.full(shape, lam2))


@dataclass(frozen=True)
class ConvergenceOrder:
    order: float | None
    values: list
    differences: list
    determinate: bool
    reason: str = ""


def refinement_oracle(
    evaluate: Callable[[int], float],
    levels: Sequence[int],
    exact: float | None = None,
    noise_floor: float = 1e-13,
) -> ConvergenceOrder:
    """Estimate the convergence order of ``evaluate(n)`` over refinement levels.

    Without ``exact`` the estimate is Richardson style,
    ``log2(|q_h - q_h/2| / |q_h/2 - q_h/4|)`` on the last three levels. With
    ``exact`` it is ``log2(e_h / e_h/2)`` on the last two errors. Levels must
    double each time. Errors at rounding level or non-monotone errors give an
    indeterminate report rather than an exception.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("refinement needs at least three levels")
    values = [float(evaluate(n)) for n in levels]
    scale = max(1.0, max(abs(q) for q in values))
    if exact is None:
        diffs = [abs(values[k] - values[k + 1]) for k in range(len(values) - 1)]
    else:
        diffs = [abs(q - exact) for q in values]
    if max(diffs) <= noise_floor * scale:
        return ConvergenceOrder(None, values, diffs, False, "errors at rounding level")
    if diffs[-1] <= noise_floor * scale:
        return ConvergenceOrder(None, values, diffs, False, "finest level at rounding level")
    if any(diffs[k + 1] >= diffs[k] for k in range(len(diffs) - 1)):
        return ConvergenceOrder(None, values, diffs, False, "errors are not monotonically decreasing")
    order = math.log2(diffs[-2] / diffs[-1])
    return ConvergenceOrder(order, values, diffs, True)
