"""Weighted anisotropic least gradient problems on 2-D grids.

Library layout:

  shapes      analytic domains (disk, annulus, box, polygon)
  grid        masks, gradient/divergence/trace operators
  metric      norm families phi(x, .), dual norms, ball projections
  functional  energies: interior TV, boundary penalty, dual value, gap
  solver      primal-dual saddle solver returning the certificate field
  structure   alignment and boundary-jump diagnostics of a solve
  barrier     curvature-type sufficient condition on the boundary
  imaging     conductivity round trip from interior current data
  gallery     canned problems with expected values
  cli         command-line front end (`leastgrad ...`)
"""
from __future__ import annotations

from .barrier import BarrierReport, barrier_indicator, classify, signed_distance
from .config import ProblemSpec, apply_overrides, build_problem, load_config
from .errors import (
    ConfigError,
    DimensionMismatchError,
    InvalidMetricError,
    InvalidShapeError,
    LeastGradError,
    NumericalError,
    StateMismatchError,
    ValidationError,
)
from .functional import (
    EnergyBreakdown,
    GapReport,
    dual_objective,
    duality_gap,
    phi_perimeter,
    relaxed_energy,
)
from .grid import (
    BoundaryField,
    DomainMask,
    GridGeometry,
    ScalarGrid,
    VectorGrid,
    boundary_trace,
    build_mask,
    directional_derivative,
    divergence,
    gradient,
    green_identity_residual,
    interior_gradient,
    mask_from_array,
)
from .imaging import (
    ImagingProblem,
    ImagingReport,
    forward_solve,
    phantom_conductivity,
    recover_conductivity,
    run_pipeline,
    weight_from_current,
)
from .gallery import GalleryEntry, gallery_entry, gallery_list, gallery_run
from .metric import MetricField, MetricKind, TensorField, constant_metric
from .shapes import Annulus, Box, Disk, Polygon, Shape, parse_shape
from .solver import SolveReport, SolverOptions, resume, solve_relaxed
from .structure import (
    StructureReport,
    alignment_report,
    boundary_jump_report,
    level_sets,
    nonexistence_diagnostic,
    predicted_direction,
    structure_report,
)

__version__ = "0.1.0"

__all__ = [
    "Annulus",
    "BarrierReport",
    "BoundaryField",
    "Box",
    "ConfigError",
    "DimensionMismatchError",
    "Disk",
    "DomainMask",
    "EnergyBreakdown",
    "GalleryEntry",
    "GapReport",
    "GridGeometry",
    "ImagingProblem",
    "ImagingReport",
    "InvalidMetricError",
    "InvalidShapeError",
    "LeastGradError",
    "MetricField",
    "MetricKind",
    "NumericalError",
    "Polygon",
    "ProblemSpec",
    "ScalarGrid",
    "Shape",
    "SolveReport",
    "SolverOptions",
    "StateMismatchError",
    "StructureReport",
    "TensorField",
    "ValidationError",
    "VectorGrid",
    "alignment_report",
    "apply_overrides",
    "barrier_indicator",
    "boundary_jump_report",
    "boundary_trace",
    "build_mask",
    "build_problem",
    "classify",
    "constant_metric",
    "directional_derivative",
    "divergence",
    "dual_objective",
    "duality_gap",
    "forward_solve",
    "gallery_entry",
    "gallery_list",
    "gallery_run",
    "gradient",
    "green_identity_residual",
    "interior_gradient",
    "level_sets",
    "load_config",
    "mask_from_array",
    "nonexistence_diagnostic",
    "parse_shape",
    "phantom_conductivity",
    "phi_perimeter",
    "predicted_direction",
    "recover_conductivity",
    "relaxed_energy",
    "resume",
    "run_pipeline",
    "signed_distance",
    "solve_relaxed",
    "structure_report",
    "weight_from_current",
    "__version__",
]
