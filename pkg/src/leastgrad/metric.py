"""Spatially varying norm families phi(x, xi) and their dual machinery.

Four closed-form kinds, all of the shape phi(x, xi) = a(x) * ||xi||_K with a
positive weight a and a fixed base norm K per kind:

  kind                ||xi||_K              dual norm phi0(x, xi)
  IsotropicEuclidean  |xi|                  |xi| / a
  Riemannian          sqrt(xi' sigma0 xi)   sqrt(xi' sigma0^-1 xi) / a
  CrystallineL1       |xi_1| + |xi_2|       max(|xi_1|, |xi_2|) / a
  CrystallineLinf     max(|xi_1|, |xi_2|)   (|xi_1| + |xi_2|) / a

The dual unit ball {phi0(x, .) <= 1} is respectively a disk of radius a, the
ellipse {eta' sigma0^-1 eta <= a^2}, the box [-a, a]^2, and the l1 ball of
radius a. Each admits an exact Euclidean projection: radial scaling, a
Newton solve on the single Lagrange multiplier in the tensor eigenbasis,
a componentwise clamp, and the two-case l1 shrink. The projection is what
the saddle solver runs every iteration, so the array forms below are written
to vectorize over whole grids.

Weights are floored at a_min and tensor eigenvalues checked against
lambda_min so that near-degenerate data (imaging weights vanish at interior
critical points) degrades gracefully instead of dividing by zero. validate()
reports raw violations without applying the floor.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DimensionMismatchError, InvalidMetricError, NumericalError, ValidationError
from .grid import GridGeometry, ScalarGrid

A_MIN_DEFAULT = 1e-8
LAMBDA_MIN_DEFAULT = 1e-10


class MetricKind(enum.Enum):
    IsotropicEuclidean = "isotropic"
    Riemannian = "riemannian"
    CrystallineL1 = "l1"
    CrystallineLinf = "linf"


_KIND_ALIASES = {
    "isotropic": MetricKind.IsotropicEuclidean,
    "euclidean": MetricKind.IsotropicEuclidean,
    "riemannian": MetricKind.Riemannian,
    "l1": MetricKind.CrystallineL1,
    "crystalline-l1": MetricKind.CrystallineL1,
    "linf": MetricKind.CrystallineLinf,
    "crystalline-linf": MetricKind.CrystallineLinf,
}


def parse_kind(text: str) -> MetricKind:
    try:
        return _KIND_ALIASES[text.strip().lower()]
    except KeyError:
        raise InvalidMetricError(
            f"unknown metric kind {text!r}; choose from {sorted(_KIND_ALIASES)}"
        ) from None


@dataclass
class TensorField:
    """Symmetric 2x2 tensor per cell, stored by component."""

    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray

    def __post_init__(self) -> None:
        self.s11 = np.asarray(self.s11, dtype=float)
        self.s12 = np.asarray(self.s12, dtype=float)
        self.s22 = np.asarray(self.s22, dtype=float)
        if not (self.s11.shape == self.s12.shape == self.s22.shape):
            raise DimensionMismatchError("tensor component shapes differ")

    @classmethod
    def constant(cls, geom: GridGeometry, s11: float, s12: float, s22: float) -> "TensorField":
        shape = (geom.ny, geom.nx)
        return cls(np.full(shape, float(s11)), np.full(shape, float(s12)), np.full(shape, float(s22)))

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """(lambda_max, lambda_min) per cell, by the symmetric 2x2 closed form."""
        mean = 0.5 * (self.s11 + self.s22)
        disc = np.hypot(0.5 * (self.s11 - self.s22), self.s12)
        return mean + disc, mean - disc

    def rotation(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit eigenvector (c, s) of lambda_max; (1, 0) for isotropic cells."""
        lmax, _ = self.eigenvalues()
        # (s12, lmax - s11) and (lmax - s22, s12) are both eigenvectors; pick
        # the larger to avoid cancellation.
        v1x, v1y = self.s12, lmax - self.s11
        v2x, v2y = lmax - self.s22, self.s12
        use2 = v2x * v2x + v2y * v2y > v1x * v1x + v1y * v1y
        vx = np.where(use2, v2x, v1x)
        vy = np.where(use2, v2y, v1y)
        nrm = np.hypot(vx, vy)
        ok = nrm > 0
        c = np.where(ok, np.divide(vx, nrm, where=ok, out=np.ones_like(vx)), 1.0)
        s = np.where(ok, np.divide(vy, nrm, where=ok, out=np.zeros_like(vy)), 0.0)
        return c, s


@dataclass
class MetricField:
    kind: MetricKind
    a: ScalarGrid  # dimensionless weight, positive where the problem lives
    sigma0: TensorField | None = None  # Riemannian kind only
    a_min: float = A_MIN_DEFAULT  # evaluation floor on the weight
    lambda_min: float = LAMBDA_MIN_DEFAULT  # SPD guard on tensor eigenvalues
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind is MetricKind.Riemannian:
            if self.sigma0 is None:
                raise InvalidMetricError("Riemannian metric needs a sigma0 tensor field")
            if self.sigma0.s11.shape != self.a.values.shape:
                raise DimensionMismatchError("sigma0 and weight grids differ in shape")
        elif self.sigma0 is not None:
            raise InvalidMetricError(f"{self.kind.name} metric does not take sigma0")

    # -- cached derived data -------------------------------------------------

    @property
    def geom(self) -> GridGeometry:
        return self.a.geom

    @property
    def a_eff(self) -> np.ndarray:
        if "a_eff" not in self._cache:
            self._cache["a_eff"] = np.maximum(self.a.values, self.a_min)
        return self._cache["a_eff"]

    def _eig(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(lmax, lmin, c, s) of sigma0, with the SPD guard applied."""
        if "eig" not in self._cache:
            assert self.sigma0 is not None
            lmax, lmin = self.sigma0.eigenvalues()
            if np.any(lmin < self.lambda_min):
                bad = int(np.sum(lmin < self.lambda_min))
                raise InvalidMetricError(
                    f"sigma0 has {bad} cells with eigenvalue below {self.lambda_min}"
                )
            c, s = self.sigma0.rotation()
            self._cache["eig"] = (lmax, lmin, c, s)
        return self._cache["eig"]

    def _radial_radius(self) -> np.ndarray | None:
        """Dual-ball radius when the ball is a disk; None when it is not."""
        if "radial" not in self._cache:
            if self.kind is MetricKind.IsotropicEuclidean:
                self._cache["radial"] = self.a_eff
            elif self.kind is MetricKind.Riemannian:
                lmax, lmin, _, _ = self._eig()
                if np.array_equal(lmax, lmin) and not np.any(self.sigma0.s12):
                    self._cache["radial"] = self.a_eff * np.sqrt(lmax)
                else:
                    self._cache["radial"] = None
            else:
                self._cache["radial"] = None
        return self._cache["radial"]

    # -- array evaluations -----------------------------------------------------

    def phi(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """phi(x, g) per cell for component arrays gx, gy."""
        a = self.a_eff
        if self.kind is MetricKind.IsotropicEuclidean:
            return a * np.hypot(gx, gy)
        if self.kind is MetricKind.Riemannian:
            t = self.sigma0
            q = t.s11 * gx * gx + 2.0 * t.s12 * gx * gy + t.s22 * gy * gy
            return a * np.sqrt(np.maximum(q, 0.0))
        if self.kind is MetricKind.CrystallineL1:
            return a * (np.abs(gx) + np.abs(gy))
        return a * np.maximum(np.abs(gx), np.abs(gy))

    def dual(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """phi0(x, g) per cell (closed form per kind)."""
        a = self.a_eff
        if self.kind is MetricKind.IsotropicEuclidean:
            return np.hypot(gx, gy) / a
        if self.kind is MetricKind.Riemannian:
            t = self.sigma0
            lmax, lmin, _, _ = self._eig()  # validates SPD
            det = lmax * lmin
            q = (t.s22 * gx * gx - 2.0 * t.s12 * gx * gy + t.s11 * gy * gy) / det
            return np.sqrt(np.maximum(q, 0.0)) / a
        if self.kind is MetricKind.CrystallineL1:
            return np.maximum(np.abs(gx), np.abs(gy)) / a
        return (np.abs(gx) + np.abs(gy)) / a

    def phi_axis(self, axis: int) -> np.ndarray:
        """phi(x, e_axis) per cell; the face caps used by penalties and slots."""
        if self.kind is MetricKind.Riemannian:
            t = self.sigma0
            return self.a_eff * np.sqrt(t.s11 if axis == 0 else t.s22)
        return self.a_eff.copy()

    def norm_gradient(self, gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """xi-gradient of phi at g, for C1 kinds (isotropic, Riemannian).

        Isotropic: a g/|g|; Riemannian: a sigma0 g / sqrt(g' sigma0 g).
        Cells with g = 0 return 0 (caller masks them). Crystalline kinds have
        no single-valued gradient and are rejected.
        """
        a = self.a_eff
        if self.kind is MetricKind.IsotropicEuclidean:
            nrm = np.hypot(gx, gy)
            safe = np.where(nrm > 0, nrm, 1.0)
            scale = np.where(nrm > 0, a / safe, 0.0)
            return scale * gx, scale * gy
        if self.kind is MetricKind.Riemannian:
            t = self.sigma0
            sx = t.s11 * gx + t.s12 * gy
            sy = t.s12 * gx + t.s22 * gy
            q = np.sqrt(np.maximum(gx * sx + gy * sy, 0.0))
            safe = np.where(q > 0, q, 1.0)
            scale = np.where(q > 0, a / safe, 0.0)
            return scale * sx, scale * sy
        raise InvalidMetricError(
            f"{self.kind.name} is not differentiable in xi; norm_gradient needs a C1 kind"
        )

    def project(self, vx: np.ndarray, vy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Euclidean projection of (vx, vy) onto the dual ball, per cell."""
        radial = self._radial_radius()
        if radial is not None:
            nrm = np.hypot(vx, vy)
            scale = radial / np.maximum(nrm, radial)
            return vx * scale, vy * scale
        if self.kind is MetricKind.CrystallineL1:
            a = self.a_eff
            return np.clip(vx, -a, a), np.clip(vy, -a, a)
        if self.kind is MetricKind.CrystallineLinf:
            return _project_l1_ball(vx, vy, self.a_eff)
        return self._project_ellipse(vx, vy)

    def _project_ellipse(self, vx: np.ndarray, vy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lmax, lmin, c, s = self._eig()
        a = self.a_eff
        # Semi-axes of the dual ball in the eigenbasis.
        p2 = a * a * lmax
        q2 = a * a * lmin
        zx = c * vx + s * vy
        zy = -s * vx + c * vy
        out = zx * zx / p2 + zy * zy / q2 > 1.0
        if np.any(out):
            wx, wy = _ellipse_newton(zx[out], zy[out], p2[out], q2[out])
            zx = zx.copy()
            zy = zy.copy()
            zx[out] = wx
            zy[out] = wy
        return c * zx - s * zy, s * zx + c * zy

    # -- per-cell interface ------------------------------------------------------

    def _cell(self, cell: tuple[int, int]) -> tuple[int, int]:
        j, i = cell
        ny, nx = self.a.values.shape
        if not (0 <= j < ny and 0 <= i < nx):
            raise DimensionMismatchError(f"cell {cell} outside the {ny}x{nx} grid")
        return j, i

    def eval_phi(self, cell: tuple[int, int], xi: Iterable[float]) -> float:
        j, i = self._cell(cell)
        x1, x2 = (float(t) for t in xi)
        return float(self.phi(np.full_like(self.a_eff, x1), np.full_like(self.a_eff, x2))[j, i])

    def eval_dual(self, cell: tuple[int, int], xi: Iterable[float]) -> float:
        j, i = self._cell(cell)
        x1, x2 = (float(t) for t in xi)
        return float(self.dual(np.full_like(self.a_eff, x1), np.full_like(self.a_eff, x2))[j, i])

    def dual_norm_sampled(self, cell: tuple[int, int], xi: Iterable[float], n_dirs: int = 4096) -> float:
        """Brute-force dual norm: max over sampled unit p of xi.p / phi(x, p).

        Independent of the closed forms above (it only calls phi), so it
        serves as the oracle that pins them down in tests.
        """
        if n_dirs < 8:
            raise ValidationError(f"dual_norm_sampled needs n_dirs >= 8, got {n_dirs}")
        j, i = self._cell(cell)
        x1, x2 = (float(t) for t in xi)
        if x1 == 0.0 and x2 == 0.0:
            return 0.0
        theta = np.arange(n_dirs) * (2.0 * np.pi / n_dirs)
        px, py = np.cos(theta), np.sin(theta)
        phis = self._phi_at(j, i, px, py)
        return float(np.max((x1 * px + x2 * py) / phis))

    def phi_at_cell(self, cell: tuple[int, int], gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """phi at one cell for a batch of vectors."""
        j, i = self._cell(cell)
        return self._phi_at(j, i, np.asarray(gx, float), np.asarray(gy, float))

    def _phi_at(self, j: int, i: int, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """phi at one cell for many vectors; used by the sampling oracles."""
        a = self.a_eff[j, i]
        if self.kind is MetricKind.IsotropicEuclidean:
            return a * np.hypot(gx, gy)
        if self.kind is MetricKind.Riemannian:
            t = self.sigma0
            q = t.s11[j, i] * gx * gx + 2 * t.s12[j, i] * gx * gy + t.s22[j, i] * gy * gy
            return a * np.sqrt(np.maximum(q, 0.0))
        if self.kind is MetricKind.CrystallineL1:
            return a * (np.abs(gx) + np.abs(gy))
        return a * np.maximum(np.abs(gx), np.abs(gy))

    def project_dual_ball(self, cell: tuple[int, int], xi: Iterable[float]) -> np.ndarray:
        j, i = self._cell(cell)
        x1, x2 = (float(t) for t in xi)
        vx = np.full_like(self.a_eff, x1)
        vy = np.full_like(self.a_eff, x2)
        px, py = self.project(vx, vy)
        return np.array([px[j, i], py[j, i]])

    def scaled(self, lam: float) -> "MetricField":
        """The metric with weight lam * a (same kind and tensor)."""
        return MetricField(
            self.kind,
            ScalarGrid(self.a.geom, lam * self.a.values),
            self.sigma0,
            a_min=self.a_min,
            lambda_min=self.lambda_min,
        )


def _project_l1_ball(vx: np.ndarray, vy: np.ndarray, radius: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean projection onto {|w1| + |w2| <= radius}, closed form for n=2."""
    ax, ay = np.abs(vx), np.abs(vy)
    inside = ax + ay <= radius
    b1 = np.maximum(ax, ay)
    b2 = np.minimum(ax, ay)
    # Shrink both by t, clipping at zero; t has two regimes.
    t = np.where(b1 - b2 >= radius, b1 - radius, 0.5 * (b1 + b2 - radius))
    w1 = np.maximum(b1 - t, 0.0)
    w2 = np.maximum(b2 - t, 0.0)
    px = np.where(ax >= ay, w1, w2) * np.sign(vx)
    py = np.where(ax >= ay, w2, w1) * np.sign(vy)
    return np.where(inside, vx, px), np.where(inside, vy, py)


def _ellipse_newton(
    zx: np.ndarray, zy: np.ndarray, p2: np.ndarray, q2: np.ndarray,
    tol: float = 1e-12, max_iters: int = 50,
) -> tuple[np.ndarray, np.ndarray]:
    """Project points (zx, zy) outside the axis-aligned ellipse x^2/p2 + y^2/q2 = 1.

    KKT: the projection is (p2 z1/(p2+mu), q2 z2/(q2+mu)) with mu >= 0 the root
    of g(mu) = p2 z1^2/(p2+mu)^2 + q2 z2^2/(q2+mu)^2 - 1. g is convex and
    decreasing for mu > -min(p2,q2), and g(0) > 0 for outside points, so
    Newton from mu = 0 converges monotonically.
    """
    mu = np.zeros_like(zx)
    t1 = p2 * zx * zx
    t2 = q2 * zy * zy
    for _ in range(max_iters):
        d1 = p2 + mu
        d2 = q2 + mu
        g = t1 / (d1 * d1) + t2 / (d2 * d2) - 1.0
        if np.all(np.abs(g) <= tol):
            break
        gp = -2.0 * (t1 / (d1 * d1 * d1) + t2 / (d2 * d2 * d2))
        mu = mu - g / gp
    else:
        worst = float(np.max(np.abs(g)))
        raise NumericalError(
            f"ellipse projection Newton did not reach |g| <= {tol} in "
            f"{max_iters} iterations (worst residual {worst:.3e})"
        )
    return p2 * zx / (p2 + mu), q2 * zy / (q2 + mu)


# ---------------------------------------------------------------------------
# Construction helpers and validation


def constant_metric(
    geom: GridGeometry,
    kind: MetricKind | str = MetricKind.IsotropicEuclidean,
    a: float = 1.0,
    sigma0: tuple[float, float, float] | None = None,
) -> MetricField:
    """Uniform metric on a grid; sigma0 given as (s11, s12, s22)."""
    if isinstance(kind, str):
        kind = parse_kind(kind)
    weight = ScalarGrid.full(geom, a)
    tensor = None
    if kind is MetricKind.Riemannian:
        s11, s12, s22 = sigma0 if sigma0 is not None else (1.0, 0.0, 1.0)
        tensor = TensorField.constant(geom, s11, s12, s22)
    return MetricField(kind, weight, tensor)


@dataclass
class MetricValidation:
    ok: bool
    alpha: float  # sup over cells and sampled directions of phi(x, p)/|p|
    violations: list[str]


def validate(m: MetricField, n_dirs: int = 4096, seed: int = 0) -> MetricValidation:
    """Check the norm-family contract; report violations without raising.

    Positivity of the raw weight, SPD tensor where present, positive
    homogeneity and the triangle inequality on a seeded sample of cells and
    vector pairs (tolerance 1e-12 relative), plus the uniform bound
    alpha = sup phi(x, p)/|p| over sampled unit directions.
    """
    violations: list[str] = []
    raw = m.a.values
    bad = ~(raw > 0) | ~np.isfinite(raw)
    if bad.any():
        jj, ii = np.nonzero(bad)
        violations.append(f"weight not positive at {len(jj)} cells, first at ({jj[0]}, {ii[0]})")
    if m.kind is MetricKind.Riemannian:
        lmax, lmin = m.sigma0.eigenvalues()
        badt = lmin < m.lambda_min
        if badt.any():
            jj, ii = np.nonzero(badt)
            violations.append(
                f"sigma0 not positive definite at {len(jj)} cells, first at ({jj[0]}, {ii[0]})"
            )

    rng = np.random.default_rng(seed)
    ny, nx = raw.shape
    cells = [(int(j), int(i)) for j, i in zip(rng.integers(0, ny, 8), rng.integers(0, nx, 8))]
    for cell in cells:
        j, i = cell
        for _ in range(4):
            xi = rng.standard_normal(2)
            eta = rng.standard_normal(2)
            pxi = m._phi_at(j, i, xi[0], xi[1])
            peta = m._phi_at(j, i, eta[0], eta[1])
            psum = m._phi_at(j, i, xi[0] + eta[0], xi[1] + eta[1])
            scale = max(1.0, float(pxi + peta))
            if psum > pxi + peta + 1e-12 * scale:
                violations.append(f"triangle inequality fails at cell {cell}")
            for t in (0.0, 0.5, 2.0, 10.0):
                pt = m._phi_at(j, i, t * xi[0], t * xi[1])
                if abs(pt - t * pxi) > 1e-12 * max(1.0, t * float(pxi)):
                    violations.append(f"homogeneity fails at cell {cell}, t={t}")

    theta = np.arange(n_dirs) * (2.0 * np.pi / n_dirs)
    px, py = np.cos(theta), np.sin(theta)
    if m.kind is MetricKind.Riemannian:
        alpha = 0.0
        for k0 in range(0, n_dirs, 64):  # chunk to bound the broadcast size
            cx = px[k0 : k0 + 64][:, None, None]
            cy = py[k0 : k0 + 64][:, None, None]
            t = m.sigma0
            q = t.s11 * cx * cx + 2 * t.s12 * cx * cy + t.s22 * cy * cy
            alpha = max(alpha, float(np.max(m.a_eff * np.sqrt(np.maximum(q, 0.0)))))
    else:
        base = {
            MetricKind.IsotropicEuclidean: np.ones_like(px),
            MetricKind.CrystallineL1: np.abs(px) + np.abs(py),
            MetricKind.CrystallineLinf: np.maximum(np.abs(px), np.abs(py)),
        }[m.kind]
        alpha = float(np.max(m.a_eff)) * float(np.max(base))
    return MetricValidation(ok=not violations, alpha=alpha, violations=violations)
