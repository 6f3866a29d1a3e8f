"""Equidistant-foliation geometry and volume-preserving mean curvature flow of graphs.

The reference surface is a periodic grid with isothermal metric exp(2v) I and
principal curvatures lam1, lam2 in (-1, 1). Graphs r = u(x) over it evolve by
the volume-preserving mean curvature flow in the normal chart dr^2 + g(x, r).
"""

from .datagen import GeneratorSpec, eigen_oracle, generate, refinement_oracle
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
from .flow import FlowConfig, FlowOutcome, FlowState, HistoryRecord, flow_step, make_state, perturbed_leaf, run_flow
from .foliation import (
    ReferenceSurfaceData,
    area_element_factor,
    average_mean_curvature_leaf,
    foliation_nonsingularity,
    leaf_area,
    leaf_area_derivative,
    mean_curvature_parallel,
    paper_average_formula,
    rational_average_formula,
    parallel_metric,
    parallel_second_fundamental,
    principal_curvatures,
    small_curvature_constants,
)
from .geometry import FoliationChart, GraphSurface, build_chart, enclosed_volume, graph_geometry
from .stability import StabilityReport, apply_stability_operator, exponential_rate_check, lowest_eigenvalue

__version__ = "0.1.0"
