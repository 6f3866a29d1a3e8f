"""Volume-preserving mean curvature flow of graphs over the reference surface.

The surface moves with normal speed ``h(t) - H``. Written at fixed grid
points x the height obeys ``du/dt = (h - H) / Theta``: a fixed-x
parametrization adds a tangential component to the motion, which does not
change the surface. With this form the semi-discrete volume is conserved
exactly, since ``sqrt(det g) / Theta`` is the discrete area element.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import GraphViolationError, InsufficientDataError, StepFailureError
from .geometry import FoliationChart, GraphSurface, d1, laplace_beltrami

logger = logging.getLogger(__name__)

SCHEMES = ("explicit-rk2", "semi-implicit")
STATUSES = ("converged", "t_max_reached", "graph_violation", "step_failure")


@dataclass(frozen=True)
class FlowConfig:
    dt_init: float = 1e-3
    cfl_safety: float = 0.9
    t_max: float = 50.0
    eps_converge: float = 1e-6
    eps_volume_drift: float = 1e-6
    record_every: int = 10
    scheme: str = "explicit-rk2"
    stall_window: int = 100
    stall_tol: float = 1e-14

    def __post_init__(self):
        for name in ("dt_init", "t_max", "eps_converge", "eps_volume_drift", "stall_tol"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.stall_window < 2:
            raise ValueError("stall_window must be at least 2")


@dataclass(frozen=True)
class HistoryRecord:
    t: float
    area: float
    volume: float
    h: float
    sup_dev: float
    min_theta: float
    max_a2: float
    dissipation: float
    u_min: float
    u_max: float

    def as_dict(self):
        return asdict(self)


@dataclass
class FlowState:
    t: float
    surface: GraphSurface
    h: float
    history: list = field(default_factory=list)
    steps: int = 0

    @property
    def u(self):
        return self.surface.u


@dataclass
class FlowOutcome:
    status: str
    final: FlowState
    c_limit: float | None = None
    stalled: bool = False
    max_volume_drift: float = 0.0


def compute_average_mean_curvature(surface: GraphSurface) -> float:
    return surface.integrate(surface.hmean) / surface.area


def make_state(chart: FoliationChart, u, t: float = 0.0) -> FlowState:
    surface = GraphSurface(chart, u)
    return FlowState(t=t, surface=surface, h=compute_average_mean_curvature(surface))


def normal_speed(surface: GraphSurface, h: float | None = None):
    if h is None:
        h = compute_average_mean_curvature(surface)
    return h - surface.hmean


def height_velocity(surface: GraphSurface, h: float | None = None):
    """du/dt at fixed x."""
    return normal_speed(surface, h) / surface.theta


def make_record(state: FlowState) -> HistoryRecord:
    s = state.surface
    dev = s.hmean - state.h
    return HistoryRecord(
        t=state.t,
        area=s.area,
        volume=s.volume,
        h=state.h,
        sup_dev=float(np.max(np.abs(dev))),
        min_theta=float(np.min(s.theta)),
        max_a2=float(np.max(s.a2norm)),
        dissipation=s.integrate(dev * dev),
        u_min=float(np.min(s.u)),
        u_max=float(np.max(s.u)),
    )


def stable_dt(surface: GraphSurface, cfl_safety: float = 1.0) -> float:
    """Largest explicit RK2 step for the linearized flow at this surface.

    The principal part of du/dt is G^{ij} d_ij u, so the discrete spectrum
    is bounded by ``4 D (1/dx^2 + 1/dy^2) + max(|A|^2 + 2)`` with D the
    largest eigenvalue of G^{-1}; Heun's method is stable for real
    eigenvalues with ``dt * lambda <= 2``.
    """
    tr = surface.i11 + surface.i22
    det = surface.i11 * surface.i22 - surface.i12**2
    dmax = float(np.max(0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))))
    data = surface.data
    stiff = 4.0 * dmax * (1.0 / data.dx**2 + 1.0 / data.dy**2) + float(np.max(surface.a2norm)) + 2.0
    return cfl_safety * 2.0 / stiff


def _check_finite(u):
    if not np.all(np.isfinite(u)):
        raise StepFailureError("height field became non-finite")


def _semi_implicit_symbol(data, dt, coeff):
    kx = np.fft.fftfreq(data.nx) * 2.0 * np.pi
    ky = np.fft.fftfreq(data.ny) * 2.0 * np.pi
    lap = -(4.0 * np.sin(kx / 2) ** 2 / data.dx**2)[:, None] - (4.0 * np.sin(ky / 2) ** 2 / data.dy**2)[None, :]
    return 1.0 - dt * coeff * lap, lap


def flow_step(state: FlowState, chart: FoliationChart, dt: float, scheme: str = "explicit-rk2") -> FlowState:
    """Advance the height field by one step of size dt.

    The average mean curvature is re-evaluated at every stage. The returned
    state shares ``history`` with the input; recording is the caller's job.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0 = state.surface.u
    k1 = height_velocity(state.surface, state.h)
    if scheme == "explicit-rk2":
        u1 = u0 + dt * k1
        _check_finite(u1)
        stage = GraphSurface(chart, u1)
        k2 = height_velocity(stage)
        u_new = u0 + 0.5 * dt * (k1 + k2)
    elif scheme == "semi-implicit":
        # frozen constant-coefficient diffusion, solved exactly in Fourier space
        s = state.surface
        coeff = float(np.max(0.5 * (s.i11 + s.i22)))
        symbol, lap = _semi_implicit_symbol(chart.data, dt, coeff)
        explicit_lap = np.real(np.fft.ifft2(lap * np.fft.fft2(u0)))
        rhs = u0 + dt * (k1 - coeff * explicit_lap)
        u_new = np.real(np.fft.ifft2(np.fft.fft2(rhs) / symbol))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_finite(u_new)
    surface = GraphSurface(chart, u_new)
    return FlowState(
        t=state.t + dt,
        surface=surface,
        h=compute_average_mean_curvature(surface),
        history=state.history,
        steps=state.steps + 1,
    )


def _converged(state: FlowState, eps: float) -> bool:
    return float(np.max(np.abs(state.surface.hmean - state.h))) <= eps


def run_flow(
    chart: FoliationChart,
    u0,
    config: FlowConfig,
    state: FlowState | None = None,
    on_record: Callable[[FlowState, HistoryRecord], None] | None = None,
) -> FlowOutcome:
    """Integrate until sup|H - h| <= eps_converge, t_max, or a failure.

    Pass ``state`` (with its history) to resume an interrupted run; ``u0`` is
    then ignored.
    """
    if state is None:
        try:
            state = make_state(chart, u0)
        except GraphViolationError:
            logger.error("initial surface is not a graph")
            raise
    history = state.history
    volume0 = history[0].volume if history else state.surface.volume

    def record(s: FlowState):
        rec = make_record(s)
        history.append(rec)
        if on_record is not None:
            on_record(s, rec)
        return rec

    def drift():
        return max((abs(r.volume - volume0) for r in history), default=0.0) / max(1.0, abs(volume0))

    if not history or history[-1].t < state.t:
        record(state)
    last_recorded = state.steps
    areas = deque([state.surface.area], maxlen=config.stall_window + 1)
    status = None
    stalled = False

    while True:
        if _converged(state, config.eps_converge):
            status = "converged"
            break
        # accumulated rounding in t must not leave a sliver step before t_max
        if config.t_max - state.t <= 1e-9 * config.dt_init:
            status = "t_max_reached"
            break
        dt = config.dt_init
        if config.scheme == "explicit-rk2":
            dt = min(dt, stable_dt(state.surface, config.cfl_safety))
        dt = min(dt, config.t_max - state.t)
        try:
            state = flow_step(state, chart, dt, config.scheme)
        except GraphViolationError as exc:
            logger.warning("graph violation at t=%.6g: %s", state.t, exc)
            status = "graph_violation"
            break
        except StepFailureError as exc:
            logger.warning("step failure at t=%.6g: %s", state.t, exc)
            status = "step_failure"
            break
        if state.steps - last_recorded >= config.record_every:
            record(state)
            last_recorded = state.steps
        areas.append(state.surface.area)
        if len(areas) == areas.maxlen and abs(areas[0] - areas[-1]) <= config.stall_tol * abs(areas[0]):
            if not _converged(state, config.eps_converge):
                logger.info("stall detected at t=%.6g", state.t)
                stalled = True
                status = "t_max_reached"
                break

    if history[-1].t < state.t:
        record(state)
    c_limit = state.h if status == "converged" else None
    return FlowOutcome(status=status, final=state, c_limit=c_limit, stalled=stalled, max_volume_drift=drift())


def perturbed_leaf(data, r: float, amp: float = 0.0, kx: int = 1, ky: int = 0):
    """Height field ``r + amp sin(2 pi (kx x / lx + ky y / ly))``."""
    X, Y = data.coordinates()
    return r + amp * np.sin(2.0 * np.pi * (kx * X / data.lx + ky * Y / data.ly))


# Diagnostics on recorded trajectories


@dataclass(frozen=True)
class DissipationReport:
    max_rel_residual: float
    times: np.ndarray
    residuals: np.ndarray
    scale: float


def area_dissipation_check(history, stride: int = 1, times=None) -> DissipationReport:
    """Compare centered differences of |S_t| with the dissipation integral.

    Records ``stride`` apart are used for the three-point difference, which is
    second order even for uneven spacing. Residuals are signed and scaled by
    the largest dissipation on the evaluated window. ``times`` restricts the
    evaluation to records at those times.
    """
    if len(history) < 3:
        raise InsufficientDataError("area dissipation check needs at least three records")
    t = np.array([r.t for r in history])
    area = np.array([r.area for r in history])
    q = np.array([r.dissipation for r in history])
    idx = np.arange(stride, len(history) - stride)
    if times is not None:
        wanted = np.asarray(times)
        idx = np.array([k for k in idx if np.any(np.isclose(t[k], wanted, rtol=0, atol=1e-12))], dtype=int)
    if idx.size == 0:
        raise InsufficientDataError("no interior records for the requested stride")
    tm, t0, tp = t[idx - stride], t[idx], t[idx + stride]
    am, a0, ap = area[idx - stride], area[idx], area[idx + stride]
    hm, hp = t0 - tm, tp - t0
    deriv = (-hp / (hm * (hm + hp))) * am + ((hp - hm) / (hm * hp)) * a0 + (hm / (hp * (hm + hp))) * ap
    scale = float(np.max(np.abs(q[idx])))
    residual = (deriv + q[idx]) / scale if scale > 0 else deriv + q[idx]
    return DissipationReport(float(np.max(np.abs(residual))), t0, residual, scale)


@dataclass(frozen=True)
class EvolutionCheckReport:
    max_residual: float
    residual: np.ndarray
    dt_probe: float


def mean_curvature_evolution_check(chart: FoliationChart, state: FlowState, dt_probe: float, lb_order: int = 2):
    """Probe-step check of dH/dt = Delta H + (H - h)(|A|^2 - 2).

    One forward Euler step of the flow is taken. Because the grid points are
    fixed in x rather than carried along the normal, the measured rate also
    contains the tangential transport term ``du/dt <grad H, grad u>_G``,
    which is added to the right-hand side.
    """
    s = state.surface
    h = state.h
    vel = height_velocity(s, h)
    after = GraphSurface(chart, s.u + dt_probe * vel)
    lhs = (after.hmean - s.hmean) / dt_probe
    data = s.data
    hx, hy = _grad(s.hmean, data)
    ux, uy = s.grad_u
    transport = vel * (s.i11 * hx * ux + s.i12 * (hx * uy + hy * ux) + s.i22 * hy * uy)
    rhs = laplace_beltrami(s, s.hmean, order=lb_order) + (s.hmean - h) * (s.a2norm - 2.0) + transport
    residual = lhs - rhs
    return EvolutionCheckReport(float(np.max(np.abs(residual))), residual, dt_probe)


def _grad(f, data):
    return d1(f, data.dx, 0), d1(f, data.dy, 1)


@dataclass(frozen=True)
class HeightBandReport:
    passed: bool
    lower: float
    upper: float
    worst_min: float
    worst_max: float


def height_band_check(history, r: float, beta: float, tol: float = 1e-2) -> HeightBandReport:
    lower, upper = r - 2.0 * beta, r + 2.0 * beta
    worst_min = min(rec.u_min for rec in history)
    worst_max = max(rec.u_max for rec in history)
    ok = worst_min >= lower - tol and worst_max <= upper + tol
    return HeightBandReport(bool(ok), lower, upper, worst_min, worst_max)


def curvature_bounds(r: float, beta: float) -> tuple[float, float]:
    """Interval [2 tanh(r - beta), 2 tanh(r + beta)] containing the limit mean curvature."""
    return 2.0 * math.tanh(r - beta), 2.0 * math.tanh(r + beta)


def volume_drift(history) -> float:
    v0 = history[0].volume
    return max(abs(r.volume - v0) for r in history) / max(1.0, abs(v0))


def area_monotone(history, tol: float = 1e-12) -> bool:
    return all(b.area <= a.area + tol * max(1.0, abs(a.area)) for a, b in zip(history, history[1:]))


def with_dt(config: FlowConfig, dt: float) -> FlowConfig:
    return replace(config, dt_init=dt)
