"""Structure diagnostics relating a minimizer to its flux certificate.

At an exact saddle point the certificate is tied to the solution in three
ways, and this module measures how far a computed pair is from each:

  * alignment: inside the domain, wherever the solution actually varies,
    the flux saturates its constraint along the gradient direction, so
    phi(x, g) - T.g vanishes;
  * boundary jumps: where the trace detaches from the data, the flux
    pairs with the outer normal at full strength, signed by which side of
    the data the solution landed on;
  * direction selection: a saturating flux value singles out the gradient
    directions compatible with it, which is what makes level lines of
    minimizers locally predictable.

A detached boundary arc along which the data is not constant additionally
rules out any minimizer attaining its trace there, which is the one
genuinely negative certificate this module can emit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .functional import face_phi
from .grid import (
    BoundaryField,
    DomainMask,
    ScalarGrid,
    VectorGrid,
    boundary_trace,
    face_components,
    interior_gradient,
)
from .metric import MetricField

# Floor for the weighted-mean denominator; only reached when the solution
# is flat everywhere, in which case the numerator is zero too.
_DENOM_FLOOR = 1e-30

# Certificates with feasibility worse than this make alignment residuals
# meaningless (they can go negative), so reports carry a warning.
_FEAS_WARN = 1e-6


@dataclass
class StructureReport:
    """Diagnostics of a (u, T) pair; sections are filled by their ops."""

    # Interior alignment section.
    alignment_residual: ScalarGrid | None = None
    weighted_mean_alignment: float | None = None
    n_cells_included: int | None = None
    # Boundary section; index arrays refer to the mask's face order.
    jump_faces: np.ndarray | None = None
    boundary_residual: BoundaryField | None = None
    faces_solution_above: np.ndarray | None = None  # u > f: expect trace -phi(nu)
    faces_solution_below: np.ndarray | None = None  # u < f: expect trace +phi(nu)
    attach_faces: np.ndarray | None = None  # |trace| < |T|: jump impossible there
    attainment_fraction: float | None = None
    warnings: list[str] = field(default_factory=list)

    def merged_with(self, other: "StructureReport") -> "StructureReport":
        out = StructureReport()
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if name == "warnings":
                out.warnings = list(a) + list(b)
            else:
                setattr(out, name, b if a is None else a)
        return out

    def as_dict(self) -> dict:
        d: dict = {"warnings": list(self.warnings)}
        if self.weighted_mean_alignment is not None:
            d["weighted_mean_alignment"] = self.weighted_mean_alignment
            d["n_cells_included"] = self.n_cells_included
        if self.jump_faces is not None:
            d["jump_faces"] = [int(i) for i in self.jump_faces]
            d["faces_solution_above"] = [int(i) for i in self.faces_solution_above]
            d["faces_solution_below"] = [int(i) for i in self.faces_solution_below]
            d["attach_faces"] = [int(i) for i in self.attach_faces]
            d["attainment_fraction"] = self.attainment_fraction
            d["boundary_residual_max"] = (
                float(np.max(np.abs(self.boundary_residual.values[self.jump_faces])))
                if len(self.jump_faces)
                else 0.0
            )
        return d


def _feasibility_warning(T: VectorGrid, m: MetricField, mask: DomainMask) -> list[str]:
    from .functional import feasibility_residual

    feas = feasibility_residual(T, m, mask)
    if feas > _FEAS_WARN:
        return [f"certificate infeasible (residual {feas:.3e}); residuals unreliable"]
    return []


def alignment_report(
    u: ScalarGrid,
    T: VectorGrid,
    m: MetricField,
    mask: DomainMask,
    grad_tol: float = 1e-3,
    scale: float | None = None,
) -> StructureReport:
    """Per-cell saturation defect phi(x, g) - T.g for g the interior gradient.

    The defect is nonnegative wherever T is feasible. Cells whose gradient
    is below grad_tol * scale / diameter are excluded from the weighted
    mean: the condition only binds where the solution varies. The scale
    defaults to the range of u, which is wrong for solutions that detach
    from their data and go flat; callers who know the data pass its range.
    """
    g = interior_gradient(u, mask)
    r = m.phi(g.vx, g.vy) - (T.vx * g.vx + T.vy * g.vy)
    r = np.where(mask.interior, r, 0.0)
    if scale is None:
        ui = u.values[mask.interior]
        scale = float(ui.max() - ui.min())
    floor = grad_tol * scale / mask.diameter
    included = mask.interior & (np.hypot(g.vx, g.vy) > floor)
    num = mask.h**2 * float(np.sum(r[included]))
    den = mask.h**2 * float(np.sum(m.phi(g.vx, g.vy)[included]))
    rep = StructureReport(
        alignment_residual=ScalarGrid(mask.geom, r),
        weighted_mean_alignment=num / max(den, _DENOM_FLOOR),
        n_cells_included=int(included.sum()),
        warnings=_feasibility_warning(T, m, mask),
    )
    return rep


def default_jump_tol(f: ScalarGrid, mask: DomainMask) -> float:
    """10 h range(f) / diameter: above discretization smear, below real jumps."""
    ghost = f.values[mask.faces.ghost_j, mask.faces.ghost_i]
    return 10.0 * mask.h * float(ghost.max() - ghost.min()) / mask.diameter


def boundary_jump_report(
    u: ScalarGrid,
    f: ScalarGrid,
    T: VectorGrid,
    m: MetricField,
    mask: DomainMask,
    jump_tol: float | None = None,
) -> StructureReport:
    """Flag detached boundary faces and check the signed trace condition.

    On a face where the solution left the data, the certificate must pair
    with the normal at strength phi(x, nu), directed toward the data; the
    reported residual phi(x, nu) - sign(f - u) [T, nu] measures the miss.
    Faces are classified by the side the solution landed on, plus the set
    where the trace is slack (|[T, nu]| < |T|), which forbids a jump.
    """
    if jump_tol is None:
        jump_tol = default_jump_tol(f, mask)
    fs = mask.faces
    ghost = f.values[fs.ghost_j, fs.ghost_i]
    adj = u.values[fs.cell_j, fs.cell_i]
    diff = adj - ghost  # u side minus data side
    jumping = np.abs(diff) > jump_tol
    idx = np.nonzero(jumping)[0]

    trace = boundary_trace(T, mask).values
    phis = face_phi(m, mask)
    resid = np.zeros(len(fs))
    resid[idx] = phis[idx] - np.sign(-diff[idx]) * trace[idx]

    tnorm = np.hypot(T.vx, T.vy)[fs.cell_j, fs.cell_i]
    rep = StructureReport(
        jump_faces=idx,
        boundary_residual=mask.boundary_field(resid),
        faces_solution_above=np.nonzero(jumping & (diff > 0))[0],
        faces_solution_below=np.nonzero(jumping & (diff < 0))[0],
        attach_faces=np.nonzero(np.abs(trace) < tnorm)[0],
        attainment_fraction=1.0 - len(idx) / len(fs),
        warnings=_feasibility_warning(T, m, mask),
    )
    return rep


def structure_report(
    u: ScalarGrid,
    f: ScalarGrid,
    T: VectorGrid,
    m: MetricField,
    mask: DomainMask,
    grad_tol: float = 1e-3,
    jump_tol: float | None = None,
) -> StructureReport:
    """Both diagnostic sections in one report."""
    ghost = f.values[mask.faces.ghost_j, mask.faces.ghost_i]
    a = alignment_report(u, T, m, mask, grad_tol, scale=float(ghost.max() - ghost.min()))
    b = boundary_jump_report(u, f, T, m, mask, jump_tol)
    b.warnings = []  # identical to the alignment warning; keep one copy
    return a.merged_with(b)


def predicted_direction(
    t: np.ndarray,
    m: MetricField,
    cell: tuple[int, int],
    n_dirs: int = 256,
    dir_tol: float = 1e-2,
) -> np.ndarray | None:
    """Direction a gradient must take at a cell for the flux value t.

    Maximizes t.p / phi(x, p) over sampled unit vectors p. When the best
    ratio stays below 1 - dir_tol the constraint is slack at this cell and
    no direction is forced, so None is returned.
    """
    if n_dirs < 64:
        raise ValidationError("need at least 64 sampled directions")
    t = np.asarray(t, dtype=float)
    angles = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    px, py = np.cos(angles), np.sin(angles)
    phis = m.phi_at_cell(cell, px, py)
    ratio = (t[0] * px + t[1] * py) / phis
    k = int(np.argmax(ratio))
    if ratio[k] < 1.0 - dir_tol:
        return None
    return np.array([px[k], py[k]])


@dataclass
class ArcDiagnostic:
    """One connected arc of detached boundary faces."""

    faces: np.ndarray  # indices into the mask's face order
    measure: float
    f_min: float
    f_max: float
    verdict: str  # "indicates-nonexistence" or "inconclusive"

    @property
    def variation(self) -> float:
        return self.f_max - self.f_min

    def as_dict(self) -> dict:
        return {
            "faces": [int(i) for i in self.faces],
            "measure": self.measure,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "variation": self.variation,
            "verdict": self.verdict,
        }


def nonexistence_diagnostic(
    report: StructureReport,
    f: ScalarGrid,
    mask: DomainMask,
    var_tol: float | None = None,
) -> list[ArcDiagnostic]:
    """Group detached faces into arcs and test the data along each.

    Along an arc where the trace detaches, a minimizer that attains its
    trace would force the data to be constant there; measurable variation
    of f along such an arc therefore indicates that no trace-attaining
    minimizer exists. Constant data leaves the question open.
    """
    if report.jump_faces is None:
        raise ValidationError("report has no boundary section; run boundary_jump_report")
    fs = mask.faces
    ghost = f.values[fs.ghost_j, fs.ghost_i]
    if var_tol is None:
        rng = float(ghost.max() - ghost.min())
        var_tol = 1e-6 * max(1.0, rng)
    arcs = []
    for faces in face_components(mask, report.jump_faces):
        vals = ghost[faces]
        lo, hi = float(vals.min()), float(vals.max())
        verdict = "indicates-nonexistence" if hi - lo > var_tol else "inconclusive"
        arcs.append(ArcDiagnostic(faces, len(faces) * mask.h, lo, hi, verdict))
    return arcs


# --- level lines -----------------------------------------------------------------


def _chain_segments(segments: list[tuple[tuple[float, float], tuple[float, float]]]):
    """Join segments into polylines; deterministic given segment order."""
    endpoint: dict[tuple[float, float], list[int]] = {}
    for s, (a, b) in enumerate(segments):
        endpoint.setdefault(a, []).append(s)
        endpoint.setdefault(b, []).append(s)
    used = [False] * len(segments)
    # Open endpoints (degree 1) start chains; walk each exactly once. Points
    # are keyed exactly: interpolated vertices coincide bitwise because both
    # incident squares compute them from the same two cell values.
    starts = sorted(p for p, ss in endpoint.items() if len(ss) == 1)
    polylines: list[np.ndarray] = []

    def walk(start: tuple[float, float]) -> list[tuple[float, float]]:
        path = [start]
        point = start
        while True:
            nxt = [s for s in endpoint[point] if not used[s]]
            if not nxt:
                return path
            s = nxt[0]
            used[s] = True
            a, b = segments[s]
            point = b if a == point else a
            path.append(point)

    for p in starts:
        if any(not used[s] for s in endpoint[p]):
            polylines.append(np.array(walk(p)))
    # Remaining segments form closed loops; start each at its smallest point.
    remaining = sorted(p for p, ss in endpoint.items() if any(not used[s] for s in ss))
    for p in remaining:
        if any(not used[s] for s in endpoint[p]):
            polylines.append(np.array(walk(p)))
    return polylines


def level_sets(
    u: ScalarGrid, mask: DomainMask, levels: list[float] | np.ndarray
) -> dict[float, list[np.ndarray]]:
    """Marching-squares level lines of u over the interior.

    Squares are blocks of four interior cell centers; vertices interpolate
    linearly along square edges. Output order and vertex order are
    deterministic functions of the input.
    """
    vals = u.values
    X, Y = u.geom.cell_centers()
    inter = mask.interior
    ok = inter[:-1, :-1] & inter[:-1, 1:] & inter[1:, :-1] & inter[1:, 1:]
    out: dict[float, list[np.ndarray]] = {}
    for level in levels:
        level = float(level)
        segments: list[tuple[tuple[float, float], tuple[float, float]]] = []
        above = vals >= level
        codes = (
            above[:-1, :-1].astype(np.int8)
            | above[:-1, 1:].astype(np.int8) << 1
            | above[1:, 1:].astype(np.int8) << 2
            | above[1:, :-1].astype(np.int8) << 3
        )
        js, is_ = np.nonzero(ok & (codes > 0) & (codes < 15))
        for j, i in zip(js, is_):
            code = int(codes[j, i])

            def cut(j0, i0, j1, i1):
                v0, v1 = vals[j0, i0], vals[j1, i1]
                t = 0.5 if v1 == v0 else (level - v0) / (v1 - v0)
                return (
                    float(X[j0, i0] + t * (X[j1, i1] - X[j0, i0])),
                    float(Y[j0, i0] + t * (Y[j1, i1] - Y[j0, i0])),
                )

            s = cut(j, i, j, i + 1)  # south edge
            e = cut(j, i + 1, j + 1, i + 1)  # east edge
            n = cut(j + 1, i, j + 1, i + 1)  # north edge
            w = cut(j, i, j + 1, i)  # west edge
            pairs = {
                1: [(s, w)], 2: [(s, e)], 3: [(e, w)], 4: [(e, n)],
                5: None, 6: [(s, n)], 7: [(n, w)], 8: [(n, w)],
                9: [(s, n)], 10: None, 11: [(e, n)], 12: [(e, w)],
                13: [(s, e)], 14: [(s, w)],
            }[code]
            if pairs is None:
                # Saddle: split by the cell-average side.
                mean_above = vals[j : j + 2, i : i + 2].mean() >= level
                if code == 5:
                    pairs = [(s, e), (n, w)] if mean_above else [(s, w), (e, n)]
                else:
                    pairs = [(s, w), (e, n)] if mean_above else [(s, e), (n, w)]
            segments.extend(pairs)
        out[level] = _chain_segments(segments)
    return out
