"""Analytic planar shapes: containment tests and signed distances.

Shapes describe the open domain Omega. Containment is strict (a point
exactly on the boundary counts as outside), which keeps rasterization
deterministic. Signed distance is positive inside, negative outside, zero
on the boundary, and exact (closed form) for every shape here; the
fast-sweeping fallback for mask-only domains lives in the barrier module.

Text form accepted by parse_shape, used by the CLI and config files:

    disk:cx,cy,r      annulus:r0,r1      box:w,h      polygon:x1,y1;x2,y2;...

A parenthesized spelling like ``disk(0,0,1)`` is accepted as an alias.
The annulus is centered at the origin. The box has its lower-left corner
at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidShapeError


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float

    def __post_init__(self) -> None:
        if not (self.r > 0):
            raise InvalidShapeError(f"disk radius must be positive, got {self.r}")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.r**2

    def signed_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.r - np.hypot(x - self.cx, y - self.cy)

    def bbox(self) -> tuple[float, float, float, float]:
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    def spec_text(self) -> str:
        return f"disk:{self.cx:g},{self.cy:g},{self.r:g}"


@dataclass(frozen=True)
class Annulus:
    r0: float  # inner radius
    r1: float  # outer radius

    def __post_init__(self) -> None:
        if not (0 < self.r0 < self.r1):
            raise InvalidShapeError(
                f"annulus needs 0 < r0 < r1, got r0={self.r0}, r1={self.r1}"
            )

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        rr = x * x + y * y
        return (rr > self.r0**2) & (rr < self.r1**2)

    def signed_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r = np.hypot(x, y)
        return np.minimum(r - self.r0, self.r1 - r)

    def bbox(self) -> tuple[float, float, float, float]:
        return (-self.r1, -self.r1, self.r1, self.r1)

    def spec_text(self) -> str:
        return f"annulus:{self.r0:g},{self.r1:g}"


@dataclass(frozen=True)
class Box:
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise InvalidShapeError(f"box sides must be positive, got {self.w}x{self.h}")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (x > 0) & (x < self.w) & (y > 0) & (y < self.h)

    def signed_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        # qx, qy > 0 measure how far outside along each axis.
        qx = np.maximum(-x, x - self.w)
        qy = np.maximum(-y, y - self.h)
        inside = -np.maximum(qx, qy)
        outside = -np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return np.where((qx <= 0) & (qy <= 0), inside, outside)

    def bbox(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, self.w, self.h)

    def spec_text(self) -> str:
        return f"box:{self.w:g},{self.h:g}"


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise InvalidShapeError("polygon needs at least 3 vertices")
        vx = np.array([v[0] for v in self.vertices])
        vy = np.array([v[1] for v in self.vertices])
        # Degenerate (zero-length) edges break the distance formulas.
        ex = np.roll(vx, -1) - vx
        ey = np.roll(vy, -1) - vy
        if np.any(ex * ex + ey * ey == 0.0):
            raise InvalidShapeError("polygon has a repeated consecutive vertex")

    def _vert_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        vx = np.array([v[0] for v in self.vertices], dtype=float)
        vy = np.array([v[1] for v in self.vertices], dtype=float)
        return vx, vy

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        # Crossing-number test, vectorized over grid points, loop over edges.
        vx, vy = self._vert_arrays()
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        n = len(vx)
        for i in range(n):
            x0, y0 = vx[i], vy[i]
            x1, y1 = vx[(i + 1) % n], vy[(i + 1) % n]
            crosses = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (x < xint)
        return inside

    def signed_distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        vx, vy = self._vert_arrays()
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d2 = np.full(x.shape, np.inf)
        n = len(vx)
        for i in range(n):
            x0, y0 = vx[i], vy[i]
            ex, ey = vx[(i + 1) % n] - x0, vy[(i + 1) % n] - y0
            t = ((x - x0) * ex + (y - y0) * ey) / (ex * ex + ey * ey)
            t = np.clip(t, 0.0, 1.0)
            px, py = x0 + t * ex, y0 + t * ey
            d2 = np.minimum(d2, (x - px) ** 2 + (y - py) ** 2)
        d = np.sqrt(d2)
        return np.where(self.contains(x, y), d, -d)

    def bbox(self) -> tuple[float, float, float, float]:
        vx, vy = self._vert_arrays()
        return (vx.min(), vy.min(), vx.max(), vy.max())

    def spec_text(self) -> str:
        pts = ";".join(f"{px:g},{py:g}" for px, py in self.vertices)
        return f"polygon:{pts}"


Shape = Disk | Annulus | Box | Polygon


def _floats(parts: list[str], where: str) -> list[float]:
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise InvalidShapeError(f"bad number in {where}: {e}") from None


def parse_shape(text: str) -> Shape:
    """Parse a shape spec string (see module docstring for the grammar)."""
    s = text.strip()
    if s.endswith(")") and "(" in s:
        name, _, rest = s.partition("(")
        s = f"{name}:{rest[:-1]}"
    name, sep, args = s.partition(":")
    name = name.strip().lower()
    if not sep:
        raise InvalidShapeError(f"shape spec {text!r} has no arguments")
    if name == "disk":
        v = _floats(args.split(","), "disk spec")
        if len(v) != 3:
            raise InvalidShapeError(f"disk wants cx,cy,r; got {args!r}")
        return Disk(*v)
    if name == "annulus":
        v = _floats(args.split(","), "annulus spec")
        if len(v) != 2:
            raise InvalidShapeError(f"annulus wants r0,r1; got {args!r}")
        return Annulus(*v)
    if name == "box":
        v = _floats(args.split(","), "box spec")
        if len(v) != 2:
            raise InvalidShapeError(f"box wants w,h; got {args!r}")
        return Box(*v)
    if name == "polygon":
        pts = []
        for chunk in args.split(";"):
            v = _floats(chunk.split(","), "polygon vertex")
            if len(v) != 2:
                raise InvalidShapeError(f"polygon vertex wants x,y; got {chunk!r}")
            pts.append((v[0], v[1]))
        return Polygon(tuple(pts))
    raise InvalidShapeError(f"unknown shape kind {name!r}")
