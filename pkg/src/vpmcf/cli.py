"""Command-line front end: ``vpmcf {foliate,flow,sweep,stability,check}``.

Every option can also be given in a ``key = value`` config file (``--config``)
using the flag name without dashes, e.g. ``dt-init = 5e-4``. Explicit flags
override the file. Each run directory receives ``config.txt``, a canonical
echo of the effective options, which is enough to reproduce the run.

Exit codes: 0 success or converged, 1 a diagnostic check failed,
2 t_max reached, 3 graph violation, 4 invalid input, 5 I/O error,
6 step failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .datagen import GENERATOR_KINDS, GeneratorSpec, generate
from .errors import (
    GraphViolationError,
    InsufficientDataError,
    InvalidDataError,
    InvalidSpecError,
    IterationFailureError,
    MissingArtifactError,
    PreconditionError,
    SingularDenominatorError,
    StepFailureError,
    VPMCFError,
)
from .flow import (
    SCHEMES,
    FlowConfig,
    area_dissipation_check,
    area_monotone,
    curvature_bounds,
    height_band_check,
    make_state,
    mean_curvature_evolution_check,
    perturbed_leaf,
    run_flow,
    volume_drift,
)
from .foliation import (
    ReferenceSurfaceData,
    average_mean_curvature_leaf,
    leaf_area,
    rational_average_formula,
    principal_curvatures,
    reference_averages,
    small_curvature_constants,
)
from .geometry import FoliationChart, GraphSurface, theta_gradient_identity_check
from .stability import exponential_rate_check, lowest_eigenvalue

logger = logging.getLogger("vpmcf")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_TMAX, EXIT_GRAPH, EXIT_INPUT, EXIT_IO, EXIT_STEP = 0, 1, 2, 3, 4, 5, 6
STATUS_EXIT = {
    "converged": EXIT_OK,
    "t_max_reached": EXIT_TMAX,
    "graph_violation": EXIT_GRAPH,
    "step_failure": EXIT_STEP,
}
CHECK_NAMES = (
    "volume-drift",
    "area-monotone",
    "area-dissipation",
    "eq-h",
    "theta-identity",
    "height-band",
    "convergence",
)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Option:
    name: str
    type: type
    default: object
    help: str
    choices: tuple | None = None

    @property
    def dest(self):
        return self.name.replace("-", "_")

    def convert(self, text):
        value = _bool(text) if self.type is bool else self.type(text)
        if self.choices and value not in self.choices:
            raise ValueError(f"{self.name} must be one of {self.choices}, got {value!r}")
        return value


_FLOW_DEFAULTS = FlowConfig()

DATA_OPTIONS = [
    Option("data", str, None, "reference surface file (overrides --gen)"),
    Option("gen", str, "fuchsian", "procedural generator", GENERATOR_KINDS),
    Option("amp", float, 0.0, "fourier-bump target max|lambda|"),
    Option("lam1", float, 0.0, "constant-lambda first principal curvature"),
    Option("lam2", float, 0.0, "constant-lambda second principal curvature"),
    Option("v-amp", float, 0.0, "conformal factor amplitude"),
    Option("kmax", int, 2, "largest generator wavenumber"),
    Option("seed", int, 0, "generator seed"),
    Option("zero-mean-trace", bool, False, "remove the weighted mean of lam1 + lam2"),
    Option("nx", int, 64, "grid points along x"),
    Option("ny", int, 64, "grid points along y"),
    Option("lx", float, 2 * math.pi, "period along x"),
    Option("ly", float, 2 * math.pi, "period along y"),
]
FLOW_OPTIONS = [
    Option("dt-init", float, _FLOW_DEFAULTS.dt_init, "time step (upper bound for rk2)"),
    Option("cfl-safety", float, _FLOW_DEFAULTS.cfl_safety, "fraction of the stable rk2 step"),
    Option("t-max", float, _FLOW_DEFAULTS.t_max, "final time"),
    Option("eps-converge", float, _FLOW_DEFAULTS.eps_converge, "sup|H - h| stopping tolerance"),
    Option("eps-volume-drift", float, _FLOW_DEFAULTS.eps_volume_drift, "allowed relative volume drift"),
    Option("record-every", int, _FLOW_DEFAULTS.record_every, "steps between trajectory records"),
    Option("scheme", str, _FLOW_DEFAULTS.scheme, "time stepper", SCHEMES),
    Option("stall-window", int, _FLOW_DEFAULTS.stall_window, "steps in the stall detector window"),
    Option("stall-tol", float, _FLOW_DEFAULTS.stall_tol, "relative area change that counts as a stall"),
]
START_OPTIONS = [
    Option("r", float, 0.0, "initial leaf height"),
    Option("perturb", float, 0.0, "amplitude of the sine perturbation of the initial leaf"),
    Option("perturb-kx", int, 1, "perturbation wavenumber along x"),
    Option("perturb-ky", int, 0, "perturbation wavenumber along y"),
]
RANGE_OPTIONS = [
    Option("r-min", float, -1.0, "first r of the grid"),
    Option("r-max", float, 1.0, "last r of the grid"),
    Option("count", int, 3, "number of r values"),
]

COMMAND_OPTIONS = {
    "foliate": DATA_OPTIONS + RANGE_OPTIONS,
    "flow": DATA_OPTIONS + FLOW_OPTIONS + START_OPTIONS + [
        Option("checkpoint-every", int, 10, "records between checkpoints"),
    ],
    "sweep": DATA_OPTIONS + FLOW_OPTIONS + RANGE_OPTIONS + [
        Option("perturb", float, 0.0, "amplitude of the sine perturbation of each leaf"),
        Option("jobs", int, 1, "concurrent rows"),
        Option("skip-stability", bool, False, "do not compute lambda_min per row"),
    ],
    "stability": DATA_OPTIONS + [
        Option("r", float, 0.0, "leaf height when no --surface is given"),
        Option("surface", str, None, "surface snapshot file"),
        Option("trajectory", str, None, "trajectory file for the decay-rate fit"),
        Option("rate-tol", float, 0.1, "allowed shortfall of the fitted rate below 2 lambda_min"),
    ],
    "check": [
        Option("run", str, None, "run directory written by the flow command"),
        Option("checks", str, ",".join(CHECK_NAMES), "comma-separated checks"),
        Option("dissipation-tol", float, 5e-3, "area-dissipation residual threshold"),
        Option("eq-h-tol", float, 1e-3, "eq-h probe residual threshold"),
        Option("dt-probe", float, 1e-5, "probe step for eq-h"),
        Option("band-tol", float, 1e-2, "height-band allowance"),
    ],
}
COMMAND_HELP = {
    "foliate": "leaf areas and mean curvatures over an r grid",
    "flow": "run the volume-preserving flow from a (perturbed) leaf",
    "sweep": "limit mean curvature c(r) against its bounds over an r grid",
    "stability": "lowest eigenvalue of the stability operator",
    "check": "diagnostics on a completed flow run",
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpmcf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in COMMAND_OPTIONS.items():
        p = sub.add_parser(name, help=COMMAND_HELP[name])
        p.add_argument("--config", help="key = value file; explicit flags take precedence")
        p.add_argument("--out", help="output directory")
        p.add_argument("--log-level", default="WARNING", help="logging level (default: %(default)s)")
        if name == "flow":
            p.add_argument("--resume", action="store_true", help="continue the run stored in --out")
        for opt in options:
            flag = "--" + opt.name
            if opt.type is bool:
                p.add_argument(flag, action="store_const", const=True, default=None, help=opt.help)
            else:
                p.add_argument(flag, type=opt.type, default=None, choices=opt.choices, help=f"{opt.help} (default: {opt.default})")
    return parser


def resolve_options(args, base: dict | None = None) -> dict:
    """Merge defaults, config files and explicit flags into one {flag-name: value} dict."""
    options = COMMAND_OPTIONS[args.command]
    known = {o.name: o for o in options}
    from_file = dict(base or {})
    if args.config:
        from_file.update(fileio.parse_config(args.config))
    for key in from_file:
        if key not in known:
            logger.warning("ignoring unknown config key %r", key)
    values = {}
    for opt in options:
        explicit = getattr(args, opt.dest)
        if explicit is not None:
            values[opt.name] = explicit
        elif opt.name in from_file:
            try:
                values[opt.name] = opt.convert(from_file[opt.name])
            except ValueError as exc:
                raise UsageError(f"config key {opt.name}: {exc}") from None
        else:
            values[opt.name] = opt.default
    return values


def load_reference(opts) -> ReferenceSurfaceData:
    if opts.get("data"):
        return fileio.read_reference(opts["data"])
    spec = GeneratorSpec(
        kind=opts["gen"],
        amp=opts["amp"],
        lam1=opts["lam1"],
        lam2=opts["lam2"],
        v_amp=opts["v-amp"],
        kmax=opts["kmax"],
        zero_mean_trace=opts["zero-mean-trace"],
        seed=opts["seed"],
    )
    return generate(spec, opts["nx"], opts["ny"], opts["lx"], opts["ly"])


def flow_config(opts) -> FlowConfig:
    return FlowConfig(
        dt_init=opts["dt-init"],
        cfl_safety=opts["cfl-safety"],
        t_max=opts["t-max"],
        eps_converge=opts["eps-converge"],
        eps_volume_drift=opts["eps-volume-drift"],
        record_every=opts["record-every"],
        scheme=opts["scheme"],
        stall_window=opts["stall-window"],
        stall_tol=opts["stall-tol"],
    )


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _is_fuchsian(data: ReferenceSurfaceData) -> bool:
    return not (np.any(data.v) or np.any(data.lam1) or np.any(data.lam2))


# foliate


def cmd_foliate(args) -> int:
    opts = resolve_options(args)
    if opts["count"] < 1:
        raise UsageError("count must be at least 1")
    data = load_reference(opts)
    out = _out_dir(args, "foliate-out")
    fileio.write_config(out / "config.txt", opts)
    fileio.write_reference(out / "reference.txt", data)
    h0, kappa0 = reference_averages(data)
    rows = []
    for r in np.linspace(opts["r-min"], opts["r-max"], opts["count"]):
        r = float(r)
        try:
            formula = rational_average_formula(h0, kappa0, r)
        except SingularDenominatorError:
            formula = None
        mu1, mu2 = principal_curvatures(data.lam1, data.lam2, r)
        rows.append((r, leaf_area(data, r), average_mean_curvature_leaf(data, r), formula,
                     float(min(mu1.min(), mu2.min())), float(max(mu1.max(), mu2.max()))))
    fileio.write_csv(out / "foliate.csv", ["r", "area", "h_direct", "h_formula", "mu_min", "mu_max"], rows)
    print(f"wrote {len(rows)} leaves to {out / 'foliate.csv'}")
    return EXIT_OK


# flow


class _Recorder:
    """Appends records as they arrive and writes a checkpoint every few records."""

    def __init__(self, out: Path, data, every: int):
        self.out = out
        self.data = data
        self.every = max(1, every)
        self.count = 0
        self.fh = open(out / "trajectory.jsonl", "a")

    def __call__(self, state, rec):
        self.fh.write(fileio.record_line(rec) + "\n")
        self.fh.flush()
        self.count += 1
        if self.count % self.every == 0:
            self.checkpoint(state)

    def checkpoint(self, state):
        fileio.write_surface(self.out / "checkpoint.txt", state.surface, state.t, state.h)
        fileio.write_json(self.out / "checkpoint.json", {"t": state.t, "steps": state.steps})

    def close(self):
        self.fh.close()


def _resume_state(out: Path, chart: FoliationChart):
    meta = fileio.read_json(out / "checkpoint.json")
    snap = fileio.read_snapshot(out / "checkpoint.txt")
    history = [rec for rec in fileio.read_records(out / "trajectory.jsonl") if rec.t <= meta["t"]]
    if not history:
        raise InvalidDataError(f"{out}: trajectory has no records up to the checkpoint")
    fileio.write_records(out / "trajectory.jsonl", history)
    state = make_state(chart, snap.u, t=meta["t"])
    state.steps = int(meta["steps"])
    state.history = history
    logger.info("resuming at t=%.6g after %d steps", state.t, state.steps)
    return state


def execute_flow(out: Path, data: ReferenceSurfaceData, config: FlowConfig, u0, checkpoint_every: int = 10,
                 resume: bool = False):
    """Run the flow inside ``out`` and write trajectory, snapshots and outcome; returns the outcome."""
    chart = FoliationChart(data)
    if resume:
        state = _resume_state(out, chart)
    else:
        fileio.write_reference(out / "reference.txt", data)
        fileio.write_snapshot(out / "initial.txt", data, u0)
        (out / "trajectory.jsonl").write_text("")
        for stale in ("checkpoint.txt", "checkpoint.json", "final.txt", "outcome.json"):
            (out / stale).unlink(missing_ok=True)
        state = None
    recorder = _Recorder(out, data, checkpoint_every)
    try:
        outcome = run_flow(chart, u0, config, state=state, on_record=recorder)
        recorder.checkpoint(outcome.final)
    finally:
        recorder.close()
    final = outcome.final
    fileio.write_surface(out / "final.txt", final.surface, final.t, final.h)
    fileio.write_json(out / "outcome.json", {
        "status": outcome.status,
        "t": final.t,
        "steps": final.steps,
        "c_limit": outcome.c_limit,
        "stalled": outcome.stalled,
        "max_volume_drift": outcome.max_volume_drift,
        "records": len(final.history),
    })
    return outcome


def cmd_flow(args) -> int:
    out = _out_dir(args, "flow-out")
    base = fileio.parse_config(out / "config.txt") if args.resume else None
    opts = resolve_options(args, base)
    data = load_reference(opts)
    config = flow_config(opts)
    fileio.write_config(out / "config.txt", opts)
    u0 = perturbed_leaf(data, opts["r"], opts["perturb"], opts["perturb-kx"], opts["perturb-ky"])
    outcome = execute_flow(out, data, config, u0, opts["checkpoint-every"], args.resume)
    c = "" if outcome.c_limit is None else f" c_limit={outcome.c_limit!r}"
    print(f"status={outcome.status} t={outcome.final.t!r} steps={outcome.final.steps}{c} "
          f"volume_drift={outcome.max_volume_drift:.3e}")
    return STATUS_EXIT[outcome.status]


# sweep

SWEEP_HEADER = ["r", "c", "lower", "upper", "status", "lambda_min"]


def _sweep_row(task):
    out, data, config, r, perturb, with_stability = task
    row = {"r": r, "c": None, "status": "error", "lambda_min": None}
    try:
        out.mkdir(parents=True, exist_ok=True)
        u0 = perturbed_leaf(data, r, perturb)
        outcome = execute_flow(out, data, config, u0)
        row["status"] = outcome.status
        row["c"] = outcome.c_limit
        if with_stability and outcome.status == "converged":
            try:
                row["lambda_min"] = lowest_eigenvalue(outcome.final.surface).lambda_min
            except IterationFailureError as exc:
                logger.warning("row r=%g: %s", r, exc)
    except GraphViolationError:
        row["status"] = "graph_violation"
    except (VPMCFError, ValueError, OSError) as exc:
        logger.warning("row r=%g failed: %s", r, exc)
        row["status"] = "error"
    return row


def cmd_sweep(args) -> int:
    opts = resolve_options(args)
    if opts["count"] < 1:
        raise UsageError("count must be at least 1")
    if opts["jobs"] < 1:
        raise UsageError("jobs must be at least 1")
    data = load_reference(opts)
    config = flow_config(opts)
    beta = small_curvature_constants(data).beta
    out = _out_dir(args, "sweep-out")
    fileio.write_config(out / "config.txt", opts)
    fileio.write_reference(out / "reference.txt", data)
    rs = sorted(float(r) for r in np.linspace(opts["r-min"], opts["r-max"], opts["count"]))
    tasks = [(out / "rows" / f"r{k:03d}", data, config, r, opts["perturb"], not opts["skip-stability"])
             for k, r in enumerate(rs)]
    if opts["jobs"] == 1:
        results = [_sweep_row(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=opts["jobs"]) as pool:
            results = list(pool.map(_sweep_row, tasks))
    rows = []
    for res in sorted(results, key=lambda d: d["r"]):
        lower, upper = curvature_bounds(res["r"], beta)
        rows.append((res["r"], res["c"], lower, upper, res["status"], res["lambda_min"]))
    fileio.write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'} (beta={beta!r})")
    return EXIT_OK


# stability


def cmd_stability(args) -> int:
    opts = resolve_options(args)
    data = load_reference(opts)
    chart = FoliationChart(data)
    if opts["surface"]:
        snap = fileio.read_snapshot(opts["surface"])
        if snap.u.shape != (data.nx, data.ny):
            raise InvalidDataError(f"surface grid {snap.u.shape} does not match reference grid {(data.nx, data.ny)}")
        u = snap.u
    else:
        u = np.full((data.nx, data.ny), opts["r"])
    surface = GraphSurface(chart, u)
    report = lowest_eigenvalue(surface)
    result = {
        "lambda_min": report.lambda_min,
        "strictly_stable": report.strictly_stable,
        "iterations": report.iterations,
        "residual": report.residual,
        "fitted_rate": None,
        "required_rate": None,
        "rate_check": None,
    }
    if opts["trajectory"]:
        history = fileio.read_records(opts["trajectory"])
        try:
            cmp = exponential_rate_check(report, history, tol=opts["rate-tol"])
            result.update(fitted_rate=cmp.fitted_rate, required_rate=cmp.required_rate, rate_check=cmp.passed)
        except InsufficientDataError as exc:
            result["rate_check"] = f"insufficient data: {exc}"
    out = _out_dir(args, "stability-out")
    fileio.write_config(out / "config.txt", opts)
    fileio.write_json(out / "stability.json", result)
    fileio.write_snapshot(out / "eigenfunction.txt", data, report.eigenfunction, 0.0, surface.area, surface.volume,
                          report.lambda_min, comment="eigenfunction; header h slot holds lambda_min")
    rate = "" if result["fitted_rate"] is None else f" fitted_rate={result['fitted_rate']!r}"
    print(f"lambda_min={report.lambda_min!r} strictly_stable={report.strictly_stable}{rate}")
    return EXIT_OK


# check


@dataclass
class CheckResult:
    name: str
    status: str  # pass, fail or skip
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def as_dict(self):
        return {"status": self.status, "value": self.value, "threshold": self.threshold, "detail": self.detail}


def _verdict(name, value, threshold, ok=None, detail=""):
    ok = value <= threshold if ok is None else ok
    return CheckResult(name, "pass" if ok else "fail", float(value), threshold, detail)


def run_checks(run: Path, names, opts) -> list[CheckResult]:
    for required in ("config.txt", "reference.txt", "trajectory.jsonl", "final.txt"):
        if not (run / required).exists():
            raise MissingArtifactError(f"{run / required}: missing run artifact")
    cfg = fileio.parse_config(run / "config.txt")
    data = fileio.read_reference(run / "reference.txt")
    history = fileio.read_records(run / "trajectory.jsonl")
    final = fileio.read_snapshot(run / "final.txt")
    chart = FoliationChart(data)
    eps_drift = float(cfg.get("eps-volume-drift", FlowConfig().eps_volume_drift))
    eps_conv = float(cfg.get("eps-converge", FlowConfig().eps_converge))
    results = []
    for name in names:
        if name == "volume-drift":
            results.append(_verdict(name, volume_drift(history), eps_drift))
        elif name == "area-monotone":
            worst = max((b.area - a.area for a, b in zip(history, history[1:])), default=0.0)
            results.append(_verdict(name, worst, 0.0, area_monotone(history), "largest area increase"))
        elif name == "area-dissipation":
            try:
                rep = area_dissipation_check(history)
                results.append(_verdict(name, rep.max_rel_residual, opts["dissipation-tol"]))
            except InsufficientDataError as exc:
                results.append(CheckResult(name, "skip", detail=str(exc)))
        elif name == "eq-h":
            if not _is_fuchsian(data):
                results.append(CheckResult(name, "skip", detail="only meaningful on the Fuchsian chart"))
                continue
            initial = fileio.read_snapshot(run / "initial.txt")
            rep = mean_curvature_evolution_check(chart, make_state(chart, initial.u), opts["dt-probe"])
            results.append(_verdict(name, rep.max_residual, opts["eq-h-tol"]))
        elif name == "theta-identity":
            rep = theta_gradient_identity_check(GraphSurface(chart, final.u))
            results.append(_verdict(name, rep.max_residual, 1e-12))
        elif name == "height-band":
            if float(cfg.get("perturb", 0.0)) != 0.0:
                results.append(CheckResult(name, "skip", detail="run did not start from a leaf"))
                continue
            beta = small_curvature_constants(data).beta
            rep = height_band_check(history, float(cfg.get("r", 0.0)), beta, opts["band-tol"])
            excess = max(rep.lower - rep.worst_min, rep.worst_max - rep.upper)
            results.append(_verdict(name, excess, opts["band-tol"], rep.passed, f"band [{rep.lower!r}, {rep.upper!r}]"))
        elif name == "convergence":
            outcome = fileio.read_json(run / "outcome.json") if (run / "outcome.json").exists() else {}
            if outcome.get("status") != "converged":
                results.append(CheckResult(name, "skip", detail="run did not converge"))
                continue
            surface = GraphSurface(chart, final.u)
            dev = float(np.max(np.abs(surface.hmean - outcome["c_limit"])))
            # c_limit is the average of H, so the sup deviation may exceed eps by rounding only
            results.append(_verdict(name, dev, eps_conv * (1 + 1e-9)))
        else:
            raise UsageError(f"unknown check {name!r}; expected some of {CHECK_NAMES}")
    return results


def cmd_check(args) -> int:
    opts = resolve_options(args)
    if not opts["run"]:
        raise UsageError("check needs --run DIR")
    run = Path(opts["run"])
    names = [n.strip() for n in opts["checks"].split(",") if n.strip()]
    results = run_checks(run, names, opts)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_json(out / "check.json", {r.name: r.as_dict() for r in results})
    for r in results:
        value = "" if r.value is None else f" value={r.value:.3e} threshold={r.threshold:.3e}"
        print(f"{r.status.upper():4s} {r.name}{value} {r.detail}".rstrip())
    return EXIT_CHECK_FAILED if any(r.status == "fail" for r in results) else EXIT_OK


COMMANDS = {
    "foliate": cmd_foliate,
    "flow": cmd_flow,
    "sweep": cmd_sweep,
    "stability": cmd_stability,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GraphViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRAPH
    except StepFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    except (MissingArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, InvalidDataError, InvalidSpecError, PreconditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IterationFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
