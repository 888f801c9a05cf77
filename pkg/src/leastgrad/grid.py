"""Discrete geometry on a uniform cell-centered lattice.

Arrays are indexed ``[j, i]`` with ``j`` the row (y) and ``i`` the column
(x); the center of cell (j, i) sits at ``(x0 + (i + 0.5) h, y0 + (j + 0.5)
h)``. Masks are rasterized with a two-cell exterior ring so every stencil
read stays in bounds. ``n`` in build_mask counts cells per unit length, so
``h = 1/n`` regardless of the shape's extent; box(1,1) at n=4 is a 4x4
interior.

Operator layout. Scalar unknowns live on interior cells; exterior cells are
ghost cells that carry the extension field f. The discrete gradient acts on
forward "arms": the x-arm of cell c is the edge from c to its east neighbor,
the y-arm the edge to its north neighbor. An arm is kept when at least one
endpoint is interior, which gives three kinds:

  interior arm     both cells interior          (u_nbr - u_c)/h
  outflow arm      c interior, neighbor ghost   (f_nbr - u_c)/h
  inflow arm       c ghost, neighbor interior   (u_nbr - f_c)/h

Arm values are stored at the arm's origin cell, so a dual field V occupies
the interior cells (full 2-vectors) plus single "ghost slots" on exterior
cells that own an inflow arm. Those ghost slots are exactly the fluxes
through -x/-y boundary faces, and the vector components of boundary-adjacent
interior cells are the fluxes through +x/+y faces; boundary_trace reads them
with outward sign.

The backward-difference divergence over these slots is the exact negative
adjoint of the gradient taken with zero ghost data, and with the adjacent
interior cell's value standing in for u on each face the discrete
integration-by-parts identity

    sum_faces h * u_adj * [V, nu]  =  <u, div V> + <V, G_int u>

holds to rounding error (G_int keeps only interior arms). Consequently
 <V, gradient(u, f)> = sum_faces h * f_ghost * [V, nu] - <u, div V>, which
is the saddle-point pairing the solver and the duality-gap report rely on.

Boundary faces are enumerated deterministically: x-faces first, scanning
owning interior cells in row-major order emitting -x before +x at a cell,
then y-faces the same way (-y before +y). Reports and boundary fields index
faces in this order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, InvalidShapeError
from .shapes import Shape

PAD = 2  # exterior ghost ring width, in cells


class GridGeometry(NamedTuple):
    nx: int  # cells along x, ghost ring included
    ny: int  # cells along y, ghost ring included
    h: float  # cell size
    x0: float  # lattice corner (not a cell center)
    y0: float

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(xs, ys)

    def matches(self, other: "GridGeometry") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and self.h == other.h
            and self.x0 == other.x0
            and self.y0 == other.y0
        )


def _require_match(a: GridGeometry, b: GridGeometry, what: str) -> None:
    if not a.matches(b):
        raise DimensionMismatchError(f"{what}: grid geometries differ ({a} vs {b})")


@dataclass
class ScalarGrid:
    geom: GridGeometry
    values: np.ndarray  # (ny, nx) float64

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.geom.ny, self.geom.nx):
            raise DimensionMismatchError(
                f"scalar field shape {self.values.shape} does not match "
                f"geometry ({self.geom.ny}, {self.geom.nx})"
            )

    @classmethod
    def full(cls, geom: GridGeometry, fill: float = 0.0) -> "ScalarGrid":
        return cls(geom, np.full((geom.ny, geom.nx), float(fill)))

    def copy(self) -> "ScalarGrid":
        return ScalarGrid(self.geom, self.values.copy())


@dataclass
class VectorGrid:
    geom: GridGeometry
    vx: np.ndarray  # (ny, nx) x-arm values
    vy: np.ndarray  # (ny, nx) y-arm values

    def __post_init__(self) -> None:
        self.vx = np.asarray(self.vx, dtype=float)
        self.vy = np.asarray(self.vy, dtype=float)
        shape = (self.geom.ny, self.geom.nx)
        if self.vx.shape != shape or self.vy.shape != shape:
            raise DimensionMismatchError(
                f"vector field shapes {self.vx.shape}/{self.vy.shape} do not "
                f"match geometry {shape}"
            )

    @classmethod
    def zeros(cls, geom: GridGeometry) -> "VectorGrid":
        z = np.zeros((geom.ny, geom.nx))
        return cls(geom, z, z.copy())

    def copy(self) -> "VectorGrid":
        return VectorGrid(self.geom, self.vx.copy(), self.vy.copy())


@dataclass
class FaceSet:
    """Boundary faces in the canonical enumeration order (module docstring)."""

    axis: np.ndarray  # 0 for x-faces, 1 for y-faces
    sign: np.ndarray  # outward normal direction along the axis, -1 or +1
    cell_j: np.ndarray  # adjacent interior cell
    cell_i: np.ndarray
    ghost_j: np.ndarray  # adjacent exterior cell (normal points at it)
    ghost_i: np.ndarray
    slot_j: np.ndarray  # cell owning the arm that crosses this face
    slot_i: np.ndarray

    def __len__(self) -> int:
        return len(self.axis)

    def interior_index(self) -> tuple[np.ndarray, np.ndarray]:
        return self.cell_j, self.cell_i

    def ghost_index(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ghost_j, self.ghost_i

    def midpoints(self, geom: GridGeometry) -> tuple[np.ndarray, np.ndarray]:
        """Face midpoint coordinates (on the exact shape boundary lattice)."""
        xc = geom.x0 + (self.cell_i + 0.5) * geom.h
        yc = geom.y0 + (self.cell_j + 0.5) * geom.h
        x = xc + np.where(self.axis == 0, self.sign * 0.5 * geom.h, 0.0)
        y = yc + np.where(self.axis == 1, self.sign * 0.5 * geom.h, 0.0)
        return x, y


@dataclass
class BoundaryField:
    """One scalar per boundary face, aligned with a mask's FaceSet order."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DimensionMismatchError("boundary field must be one-dimensional")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class DomainMask:
    geom: GridGeometry
    interior: np.ndarray  # (ny, nx) bool
    faces: FaceSet = field(init=False)
    # Arm masks, all (ny, nx) bool, True where the arm originating at the
    # cell is of the given kind.
    arm_x_interior: np.ndarray = field(init=False)
    arm_y_interior: np.ndarray = field(init=False)
    arm_x_out: np.ndarray = field(init=False)  # outflow: +x boundary faces
    arm_y_out: np.ndarray = field(init=False)
    arm_x_in: np.ndarray = field(init=False)  # inflow ghost slots: -x faces
    arm_y_in: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.interior = np.asarray(self.interior, dtype=bool)
        if self.interior.shape != (self.geom.ny, self.geom.nx):
            raise DimensionMismatchError("mask shape does not match geometry")
        if self.interior[[0, -1], :].any() or self.interior[:, [0, -1]].any():
            raise InvalidShapeError("interior touches the lattice edge; widen the pad")
        if not self.interior.any():
            raise InvalidShapeError("mask has an empty interior")
        inter = self.interior
        east = np.zeros_like(inter)
        east[:, :-1] = inter[:, 1:]
        north = np.zeros_like(inter)
        north[:-1, :] = inter[1:, :]
        self.arm_x_interior = inter & east
        self.arm_y_interior = inter & north
        self.arm_x_out = inter & ~east
        self.arm_y_out = inter & ~north
        self.arm_x_in = ~inter & east
        self.arm_y_in = ~inter & north
        self.faces = self._enumerate_faces()

    def _enumerate_faces(self) -> FaceSet:
        inter = self.interior
        west_ext = np.zeros_like(inter)
        west_ext[:, 1:] = inter[:, 1:] & ~inter[:, :-1]
        east_ext = self.arm_x_out
        south_ext = np.zeros_like(inter)
        south_ext[1:, :] = inter[1:, :] & ~inter[:-1, :]
        north_ext = self.arm_y_out
        # Interleave -x/+x per cell by stacking along a trailing axis, then
        # rely on C-order nonzero for the row-major scan.
        xpair = np.stack([west_ext, east_ext], axis=-1)
        xj, xi, xk = np.nonzero(xpair)
        xsign = np.where(xk == 0, -1, 1).astype(np.int8)
        ypair = np.stack([south_ext, north_ext], axis=-1)
        yj, yi, yk = np.nonzero(ypair)
        ysign = np.where(yk == 0, -1, 1).astype(np.int8)

        axis = np.concatenate([np.zeros(len(xj), np.int8), np.ones(len(yj), np.int8)])
        sign = np.concatenate([xsign, ysign])
        cell_j = np.concatenate([xj, yj]).astype(np.int32)
        cell_i = np.concatenate([xi, yi]).astype(np.int32)
        ghost_j = cell_j + np.where(axis == 1, sign, 0).astype(np.int32)
        ghost_i = cell_i + np.where(axis == 0, sign, 0).astype(np.int32)
        # Arm origin: the lower of the two cells along the face's axis.
        slot_j = np.minimum(cell_j, ghost_j)
        slot_i = np.minimum(cell_i, ghost_i)
        return FaceSet(axis, sign, cell_j, cell_i, ghost_j, ghost_i, slot_j, slot_i)

    @property
    def h(self) -> float:
        return self.geom.h

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def boundary_measure(self) -> float:
        return self.n_faces * self.geom.h

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal of the interior, including cell extent."""
        X, Y = self.geom.cell_centers()
        xs, ys = X[self.interior], Y[self.interior]
        h = self.geom.h
        return float(np.hypot(xs.max() - xs.min() + h, ys.max() - ys.min() + h))

    def boundary_field(self, values: np.ndarray) -> BoundaryField:
        bf = BoundaryField(values)
        if len(bf) != self.n_faces:
            raise DimensionMismatchError(
                f"boundary field has {len(bf)} values for {self.n_faces} faces"
            )
        return bf


def _connected(interior: np.ndarray) -> bool:
    from scipy import ndimage

    _, count = ndimage.label(interior)
    return count <= 1


def build_mask(shape: Shape, n: int) -> DomainMask:
    """Rasterize a shape at resolution n (cells per unit length, h = 1/n).

    A cell is interior iff its center lies strictly inside the shape. The
    lattice covers the shape's bounding box plus a two-cell ghost ring,
    anchored at the box's lower-left corner.
    """
    if n < 1:
        raise InvalidShapeError(f"resolution must be a positive integer, got {n}")
    h = 1.0 / n
    bx0, by0, bx1, by1 = shape.bbox()
    mx = int(np.ceil((bx1 - bx0) * n - 1e-9))
    my = int(np.ceil((by1 - by0) * n - 1e-9))
    geom = GridGeometry(mx + 2 * PAD, my + 2 * PAD, h, bx0 - PAD * h, by0 - PAD * h)
    X, Y = geom.cell_centers()
    interior = np.asarray(shape.contains(X, Y), dtype=bool)
    interior[:PAD, :] = interior[-PAD:, :] = False
    interior[:, :PAD] = interior[:, -PAD:] = False
    if not interior.any():
        raise InvalidShapeError(f"shape {shape!r} rasterizes to an empty interior at n={n}")
    mask = DomainMask(geom, interior)
    if not _connected(interior):
        warnings.warn(f"interior of {shape!r} is not connected at n={n}", stacklevel=2)
    return mask


def mask_from_array(geom: GridGeometry, interior: np.ndarray) -> DomainMask:
    """Wrap an explicit interior flag array (e.g. loaded from a mask file)."""
    mask = DomainMask(geom, interior)
    if not _connected(mask.interior):
        warnings.warn("interior flag array is not connected", stacklevel=2)
    return mask


# ---------------------------------------------------------------------------
# Operators


def gradient(u: ScalarGrid, f: ScalarGrid, mask: DomainMask) -> VectorGrid:
    """Forward-difference gradient over all kept arms, ghosts read from f.

    Interior cells receive ((u_E - u_C)/h, (u_N - u_C)/h) with any exterior
    neighbor value taken from f; ghost slots (inflow arms) receive
    (u_int - f_ghost)/h. See the module docstring for the slot layout.
    """
    _require_match(u.geom, mask.geom, "gradient u")
    _require_match(f.geom, mask.geom, "gradient f")
    h = mask.geom.h
    w = np.where(mask.interior, u.values, f.values)
    gx = np.zeros_like(w)
    gy = np.zeros_like(w)
    keep_x = mask.arm_x_interior | mask.arm_x_out | mask.arm_x_in
    keep_y = mask.arm_y_interior | mask.arm_y_out | mask.arm_y_in
    gx[:, :-1] = w[:, 1:] - w[:, :-1]
    gy[:-1, :] = w[1:, :] - w[:-1, :]
    gx *= keep_x
    gy *= keep_y
    gx /= h
    gy /= h
    return VectorGrid(mask.geom, gx, gy)


def interior_gradient(u: ScalarGrid, mask: DomainMask) -> VectorGrid:
    """Forward differences over interior arms only (no ghost reads)."""
    _require_match(u.geom, mask.geom, "interior_gradient u")
    h = mask.geom.h
    v = u.values
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    gx[:, :-1] = v[:, 1:] - v[:, :-1]
    gy[:-1, :] = v[1:, :] - v[:-1, :]
    gx *= mask.arm_x_interior
    gy *= mask.arm_y_interior
    gx /= h
    gy /= h
    return VectorGrid(mask.geom, gx, gy)


def divergence(V: VectorGrid, mask: DomainMask) -> ScalarGrid:
    """Backward-difference divergence on interior cells.

    Reads every slot (interior components and ghost slots), which makes it
    the exact negative adjoint of the zero-ghost-data gradient; the
    integration-by-parts identity in the module docstring is exact.
    """
    _require_match(V.geom, mask.geom, "divergence V")
    h = mask.geom.h
    vx, vy = V.vx, V.vy
    d = np.zeros_like(vx)
    d[:, 1:] = vx[:, 1:] - vx[:, :-1]
    d[:, 0] = vx[:, 0]
    d[1:, :] += vy[1:, :] - vy[:-1, :]
    d[0, :] += vy[0, :]
    d *= mask.interior
    d /= h
    return ScalarGrid(mask.geom, d)


def boundary_trace(V: VectorGrid, mask: DomainMask) -> BoundaryField:
    """Outward normal flux [V, nu] per boundary face, in face order."""
    _require_match(V.geom, mask.geom, "boundary_trace V")
    fs = mask.faces
    comp = np.where(fs.axis == 0, V.vx[fs.slot_j, fs.slot_i], V.vy[fs.slot_j, fs.slot_i])
    return BoundaryField(fs.sign * comp)


def directional_derivative(
    vals: np.ndarray, usable: np.ndarray, h: float, axis: int
) -> tuple[np.ndarray, np.ndarray]:
    """Derivative along axis (0 = x, 1 = y) reading only usable cells.

    Centered where both neighbors are usable, else second-order one-sided,
    else first-order; the returned flag is False where not even one
    neighbor is available. Evaluation cells near the lattice edge are
    exterior by construction, so the wrap-around of the shifts is inert.
    """
    ax = 1 if axis == 0 else 0

    def sh(arr: np.ndarray, k: int) -> np.ndarray:
        return np.roll(arr, -k, axis=ax)

    up1, up2 = sh(usable, 1), sh(usable, 2)
    um1, um2 = sh(usable, -1), sh(usable, -2)
    vp1, vp2, vm1, vm2 = sh(vals, 1), sh(vals, 2), sh(vals, -1), sh(vals, -2)
    deriv = np.zeros_like(vals)
    have = np.zeros(vals.shape, dtype=bool)
    for cond, formula in (
        (up1 & um1, (vp1 - vm1) / (2 * h)),
        (up1 & up2, (-3 * vals + 4 * vp1 - vp2) / (2 * h)),
        (um1 & um2, (3 * vals - 4 * vm1 + vm2) / (2 * h)),
        (up1, (vp1 - vals) / h),
        (um1, (vals - vm1) / h),
    ):
        use = cond & ~have
        deriv[use] = formula[use]
        have |= use
    return deriv, have


def face_vertices(fs: FaceSet, k: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Lattice vertex (ix, iy) pairs bounding face k; shared ones join arcs."""
    j, i = int(fs.cell_j[k]), int(fs.cell_i[k])
    up = int(fs.sign[k]) > 0
    if fs.axis[k] == 0:
        vi = i + 1 if up else i
        return (vi, j), (vi, j + 1)
    vj = j + 1 if up else j
    return (i, vj), (i + 1, vj)


def face_components(mask: DomainMask, faces: np.ndarray | None = None) -> list[np.ndarray]:
    """Group faces into connected chains by shared lattice vertices.

    Components are sorted by their smallest face index and each lists its
    faces in ascending index order, so the output is deterministic.
    """
    idx = range(mask.n_faces) if faces is None else [int(k) for k in faces]
    fs = mask.faces
    vertex_owner: dict[tuple[int, int], int] = {}
    parent = {k: k for k in idx}

    def find(k: int) -> int:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for k in idx:
        for v in face_vertices(fs, k):
            if v in vertex_owner:
                ra, rb = find(vertex_owner[v]), find(k)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                vertex_owner[v] = k
    groups: dict[int, list[int]] = {}
    for k in idx:
        groups.setdefault(find(k), []).append(k)
    return [np.array(sorted(groups[r]), dtype=int) for r in sorted(groups)]


def green_identity_residual(u: ScalarGrid, V: VectorGrid, mask: DomainMask) -> float:
    """Relative defect of the discrete integration-by-parts identity.

    Checks sum_F h u_adj [V,nu] = <u, div V> + <V, G_int u> with u extended
    by zero on ghost cells; returns |lhs - rhs| / max(|terms|) (0 for all-zero
    input). Exact adjointness means rounding-level values.
    """
    _require_match(u.geom, mask.geom, "green u")
    _require_match(V.geom, mask.geom, "green V")
    h = mask.geom.h
    uin = np.where(mask.interior, u.values, 0.0)
    trace = boundary_trace(V, mask).values
    u_adj = uin[mask.faces.interior_index()]
    boundary = h * np.sum(u_adj * trace)
    div_term = h * h * np.sum(uin * divergence(V, mask).values)
    g = interior_gradient(ScalarGrid(mask.geom, uin), mask)
    pair_term = h * h * (np.sum(V.vx * g.vx) + np.sum(V.vy * g.vy))
    scale = max(abs(boundary), abs(div_term), abs(pair_term))
    diff = abs(boundary - (div_term + pair_term))
    return diff / scale if scale > 0 else diff
