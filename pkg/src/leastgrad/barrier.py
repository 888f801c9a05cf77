"""Curvature-type sufficient condition for trace attainment on the boundary.

For domains whose boundary bends the right way relative to the metric,
every boundary datum is attained by some minimizer. The checkable quantity
is built from the distance to the boundary: with p(x) the xi-gradient of
the norm evaluated at the distance gradient, the indicator

    S(x) = -div p(x)

must be positive on (a dense subset of) the boundary. This module computes
S in a one-sided interior band, extrapolates it to boundary faces, and
classifies each face as pass / fail / marginal against a threshold. The
test needs a differentiable norm, so crystalline kinds are rejected rather
than smoothed.

Only the sufficient condition is evaluated; a failing face says the
shortcut does not apply there, not that attainment fails.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidMetricError, ValidationError
from .grid import (
    BoundaryField,
    DomainMask,
    GridGeometry,
    ScalarGrid,
    directional_derivative,
    face_components,
)
from .metric import MetricField, MetricKind
from .shapes import Shape

# Distance gradients should have unit length; far smaller means the cell
# sits on the medial axis and its direction is noise.
_GRAD_FLOOR = 0.5

PASS, MARGINAL, FAIL = 1, 0, -1
_LABELS = {PASS: "pass", MARGINAL: "marginal", FAIL: "fail"}


def signed_distance(
    source: Shape | DomainMask,
    geom: GridGeometry | None = None,
) -> ScalarGrid:
    """Distance to the boundary, positive inside, negative outside.

    Analytic shapes use their closed forms on the given grid. A mask uses a
    monotone first-order eikonal iteration seeded half a cell from each
    boundary face; its values are good to about two cells.
    """
    if isinstance(source, DomainMask):
        return _eikonal_signed_distance(source)
    if geom is None:
        raise ValidationError("analytic shapes need a grid to evaluate on")
    X, Y = geom.cell_centers()
    return ScalarGrid(geom, np.asarray(source.signed_distance(X, Y), dtype=float))


def _eikonal_side(seeds: np.ndarray, region: np.ndarray, h: float) -> np.ndarray:
    """Solve |grad d| = 1 on region with Dirichlet seeds, Godunov upwind."""
    d = np.where(seeds > 0, seeds, np.inf)
    free = region & ~(seeds > 0)
    for _ in range(4 * max(d.shape)):
        west = np.roll(d, 1, axis=1)
        west[:, 0] = np.inf
        east = np.roll(d, -1, axis=1)
        east[:, -1] = np.inf
        south = np.roll(d, 1, axis=0)
        south[0, :] = np.inf
        north = np.roll(d, -1, axis=0)
        north[-1, :] = np.inf
        a = np.minimum(west, east)
        b = np.minimum(south, north)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        fin = np.isfinite(hi)  # hi finite forces lo finite too
        gap = np.where(fin, hi, 0.0) - np.where(fin, lo, 0.0)
        both = fin & (gap < h)
        quad = 0.5 * (a + b + np.sqrt(np.maximum(2 * h * h - gap * gap, 0.0)))
        upd = np.where(both, quad, lo + h)
        new = np.where(free, np.minimum(d, upd), d)
        if np.array_equal(new, d):  # exact fixed point of a monotone update
            break
        d = new
    return d


def _eikonal_signed_distance(mask: DomainMask) -> ScalarGrid:
    h = mask.geom.h
    fs = mask.faces
    seeds_in = np.zeros(mask.interior.shape)
    seeds_in[fs.cell_j, fs.cell_i] = 0.5 * h
    seeds_out = np.zeros_like(seeds_in)
    seeds_out[fs.ghost_j, fs.ghost_i] = 0.5 * h
    din = _eikonal_side(seeds_in, mask.interior, h)
    dout = _eikonal_side(seeds_out, ~mask.interior, h)
    vals = np.where(mask.interior, din, -dout)
    return ScalarGrid(mask.geom, vals)


@dataclass
class BarrierReport:
    """Indicator values on boundary faces plus their classification."""

    S: BoundaryField
    trusted: np.ndarray  # per face: stencils stayed inside and off the medial axis
    S_band: ScalarGrid  # indicator over the evaluation band, for inspection
    components: list[np.ndarray]  # boundary faces grouped by connectivity
    boundary_measure_unit: float  # face length h, for fractions
    delta: float
    classification: np.ndarray  # per face: PASS, MARGINAL, or FAIL
    component_fractions: list[dict]
    verdict: str  # "holds" / "fails" / "inconclusive"

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "verdict": self.verdict,
            "fraction_pass": float(np.mean(self.classification == PASS)),
            "fraction_fail": float(np.mean(self.classification == FAIL)),
            "fraction_marginal": float(np.mean(self.classification == MARGINAL)),
            "components": self.component_fractions,
        }


def classify(report: BarrierReport, delta: float) -> BarrierReport:
    """Reclassify a report's faces against a new threshold delta.

    A face passes when S > delta with a trusted stencil, fails when
    S < -delta likewise; everything else is marginal. A boundary component
    fails as soon as one face fails, holds only if every face passes, and
    is inconclusive in between; the verdict aggregates components the same
    way.
    """
    if not delta > 0:
        raise ValidationError("classification threshold must be positive")
    s = report.S.values
    cls = np.zeros(len(s), dtype=np.int8)
    cls[report.trusted & (s > delta)] = PASS
    cls[report.trusted & (s < -delta)] = FAIL
    fractions = []
    verdicts = []
    for comp in report.components:
        c = cls[comp]
        frac = {
            "faces": len(comp),
            "measure": len(comp) * report.boundary_measure_unit,
            "pass": float(np.mean(c == PASS)),
            "fail": float(np.mean(c == FAIL)),
            "marginal": float(np.mean(c == MARGINAL)),
        }
        if frac["fail"] > 0:
            frac["verdict"] = "fails"
        elif frac["pass"] == 1.0:
            frac["verdict"] = "holds"
        else:
            frac["verdict"] = "inconclusive"
        verdicts.append(frac["verdict"])
        fractions.append(frac)
    if "fails" in verdicts:
        verdict = "fails"
    elif all(v == "holds" for v in verdicts):
        verdict = "holds"
    else:
        verdict = "inconclusive"
    return BarrierReport(
        S=report.S,
        trusted=report.trusted,
        S_band=report.S_band,
        components=report.components,
        boundary_measure_unit=report.boundary_measure_unit,
        delta=delta,
        classification=cls,
        component_fractions=fractions,
        verdict=verdict,
    )


def barrier_indicator(
    m: MetricField,
    d: ScalarGrid,
    mask: DomainMask,
    band_width: float | None = None,
    delta: float | None = None,
) -> BarrierReport:
    """Evaluate S = -div phi_xi(x, grad d) near the boundary.

    Derivatives are taken inside the domain only (one-sided at the rim):
    the distance gradient is taken at face value there, pushed through the
    norm's gradient, and its divergence is evaluated on cells within
    band_width of the boundary, then extrapolated constantly along the
    normal to each face. Faces whose stencils hit the medial axis (where
    grad d degenerates) are never trusted and stay marginal.
    """
    if m.kind not in (MetricKind.IsotropicEuclidean, MetricKind.Riemannian):
        raise InvalidMetricError(
            "the sufficient condition needs a differentiable norm; "
            f"got kind {m.kind.value!r}"
        )
    if not mask.geom.matches(d.geom) or not mask.geom.matches(m.a.geom):
        raise ValidationError("distance, metric, and mask must share one grid")
    h = mask.geom.h
    if band_width is None:
        band_width = 3.0 * h
    if delta is None:
        delta = 10.0 * h

    inter = mask.interior
    gx, okx = directional_derivative(d.values, inter, h, axis=0)
    gy, oky = directional_derivative(d.values, inter, h, axis=1)
    g_ok = okx & oky & inter
    nrm = np.hypot(gx, gy)
    p_usable = g_ok & (nrm >= _GRAD_FLOOR)
    px, py = m.norm_gradient(np.where(p_usable, gx, 0.0), np.where(p_usable, gy, 0.0))
    dpx, okpx = directional_derivative(px, p_usable, h, axis=0)
    dpy, okpy = directional_derivative(py, p_usable, h, axis=1)
    S = -(dpx + dpy)
    S_ok = okpx & okpy & inter
    band = inter & (d.values <= band_width)
    S_band = ScalarGrid(mask.geom, np.where(band & S_ok, S, 0.0))

    fs = mask.faces
    s_face = S[fs.cell_j, fs.cell_i]
    trusted = S_ok[fs.cell_j, fs.cell_i] & p_usable[fs.cell_j, fs.cell_i]
    base = BarrierReport(
        S=mask.boundary_field(s_face),
        trusted=trusted,
        S_band=S_band,
        components=face_components(mask),
        boundary_measure_unit=h,
        delta=delta,
        classification=np.zeros(len(fs), dtype=np.int8),
        component_fractions=[],
        verdict="inconclusive",
    )
    return classify(base, delta)
