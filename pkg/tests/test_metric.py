"""Norm families: closed forms vs sampling oracles, projections, validation."""
from __future__ import annotations

import numpy as np
import pytest

import leastgrad as lg
from leastgrad.metric import (
    MetricField,
    MetricKind,
    TensorField,
    constant_metric,
    parse_kind,
    validate,
)

GEOM = lg.GridGeometry(8, 8, 0.125, 0.0, 0.0)
ALL_KINDS = list(MetricKind)


def random_metric(kind: MetricKind, rng: np.random.Generator) -> MetricField:
    """Varying positive weight; random SPD tensor for the Riemannian kind."""
    a = lg.ScalarGrid(GEOM, 0.25 + rng.random((GEOM.ny, GEOM.nx)) * 3.0)
    if kind is not MetricKind.Riemannian:
        return MetricField(kind, a)
    th = rng.random((GEOM.ny, GEOM.nx)) * np.pi
    l1 = 0.3 + rng.random((GEOM.ny, GEOM.nx)) * 2.7
    l2 = 0.3 + rng.random((GEOM.ny, GEOM.nx)) * 2.7
    c, s = np.cos(th), np.sin(th)
    s11 = c * c * l1 + s * s * l2
    s22 = s * s * l1 + c * c * l2
    s12 = c * s * (l1 - l2)
    return MetricField(kind, a, TensorField(s11, s12, s22))


def bipolar_sampled(m: MetricField, cell, xi, n_dirs: int = 4096) -> float:
    """sup_p xi.p / phi0(x, p): must recover phi(x, xi)."""
    theta = np.arange(n_dirs) * (2 * np.pi / n_dirs)
    best = 0.0
    for t in theta:
        p = (np.cos(t), np.sin(t))
        best = max(best, (xi[0] * p[0] + xi[1] * p[1]) / m.eval_dual(cell, p))
    return best


# --- closed-form spot values --------------------------------------------------


def test_phi_spot_values():
    iso = constant_metric(GEOM, "isotropic", a=2.0)
    assert iso.eval_phi((3, 3), (3, 4)) == pytest.approx(10.0, abs=1e-14)
    riem = constant_metric(GEOM, "riemannian", a=1.0, sigma0=(4.0, 0.0, 1.0))
    assert riem.eval_phi((0, 0), (1, 0)) == pytest.approx(2.0, abs=1e-14)
    l1 = constant_metric(GEOM, "l1", a=1.0)
    assert l1.eval_phi((2, 5), (1, -2)) == pytest.approx(3.0, abs=1e-14)
    linf = constant_metric(GEOM, "linf", a=1.5)
    assert linf.eval_phi((2, 5), (1, -2)) == pytest.approx(3.0, abs=1e-14)


def test_dual_spot_values():
    iso = constant_metric(GEOM, "isotropic", a=2.0)
    assert iso.eval_dual((1, 1), (1, 0)) == pytest.approx(0.5, abs=1e-14)
    riem = constant_metric(GEOM, "riemannian", a=1.0, sigma0=(4.0, 0.0, 1.0))
    assert riem.eval_dual((1, 1), (1, 0)) == pytest.approx(0.5, abs=1e-14)
    assert riem.dual_norm_sampled((1, 1), (1, 0), 4096) == pytest.approx(0.5, abs=1e-3)
    l1 = constant_metric(GEOM, "l1", a=1.0)
    assert l1.eval_dual((1, 1), (1, -2)) == pytest.approx(2.0, abs=1e-14)


def test_sampled_dual_oracle_spot_values():
    iso = constant_metric(GEOM, "isotropic", a=1.0)
    assert iso.dual_norm_sampled((0, 0), (0.0, 0.0), 64) == 0.0
    assert iso.dual_norm_sampled((0, 0), (1.0, 0.0), 4096) == pytest.approx(1.0, abs=1e-3)
    riem = constant_metric(GEOM, "riemannian", a=2.0, sigma0=(4.0, 0.0, 1.0))
    assert riem.dual_norm_sampled((0, 0), (0.0, 1.0), 4096) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(lg.ValidationError):
        iso.dual_norm_sampled((0, 0), (1.0, 0.0), 4)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_closed_form_dual_matches_sampled_sup(kind):
    rng = np.random.default_rng(3)
    m = random_metric(kind, rng)
    for _ in range(100):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2) * 3.0
        closed = m.eval_dual(cell, xi)
        sampled = m.dual_norm_sampled(cell, xi, 4096)
        assert sampled <= closed + 1e-12
        assert sampled == pytest.approx(closed, rel=1e-3, abs=1e-9)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_bipolar_identity(kind):
    rng = np.random.default_rng(4)
    m = random_metric(kind, rng)
    for _ in range(10):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2) * 2.0
        assert bipolar_sampled(m, cell, xi) == pytest.approx(
            m.eval_phi(cell, xi), rel=1e-3, abs=1e-9
        )


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_generalized_cauchy_schwarz(kind):
    # xi . eta <= phi(xi) phi0(eta), checked on 2500 pairs per kind.
    rng = np.random.default_rng(5)
    m = random_metric(kind, rng)
    for _ in range(2500):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2) * 4.0
        eta = rng.standard_normal(2) * 4.0
        lhs = float(xi @ eta)
        assert lhs <= m.eval_phi(cell, xi) * m.eval_dual(cell, eta) + 1e-12


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_homogeneity(kind):
    rng = np.random.default_rng(6)
    m = random_metric(kind, rng)
    for _ in range(25):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2)
        base = m.eval_phi(cell, xi)
        for t in (0.0, 0.5, 2.0, 10.0):
            assert m.eval_phi(cell, (t * xi[0], t * xi[1])) == pytest.approx(
                t * base, abs=1e-12 * max(1.0, t * base)
            )


# --- projections ---------------------------------------------------------------


def test_projection_spot_values():
    iso = constant_metric(GEOM, "isotropic", a=1.0)
    np.testing.assert_allclose(iso.project_dual_ball((0, 0), (2.0, 0.0)), [1.0, 0.0], atol=1e-14)
    riem = constant_metric(GEOM, "riemannian", a=1.0, sigma0=(4.0, 0.0, 1.0))
    np.testing.assert_allclose(riem.project_dual_ball((0, 0), (4.0, 0.0)), [2.0, 0.0], atol=1e-9)
    l1 = constant_metric(GEOM, "l1", a=1.0)
    np.testing.assert_allclose(l1.project_dual_ball((0, 0), (2.0, -3.0)), [1.0, -1.0], atol=1e-14)
    linf = constant_metric(GEOM, "linf", a=1.0)
    np.testing.assert_allclose(linf.project_dual_ball((0, 0), (2.0, 0.0)), [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(linf.project_dual_ball((0, 0), (1.0, 1.0)), [0.5, 0.5], atol=1e-14)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_projection_feasible_idempotent_nonexpansive(kind):
    rng = np.random.default_rng(7)
    m = random_metric(kind, rng)
    for _ in range(200):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2) * 5.0
        eta = rng.standard_normal(2) * 5.0
        pxi = m.project_dual_ball(cell, xi)
        peta = m.project_dual_ball(cell, eta)
        assert m.eval_dual(cell, pxi) <= 1.0 + 1e-9
        np.testing.assert_allclose(m.project_dual_ball(cell, pxi), pxi, atol=1e-12)
        assert np.linalg.norm(pxi - peta) <= np.linalg.norm(xi - eta) + 1e-12
        if m.eval_dual(cell, xi) <= 1.0:
            np.testing.assert_allclose(pxi, xi, atol=1e-14)


def test_ellipse_projection_against_boundary_sampling():
    # Nearest sampled boundary point cannot beat the Newton projection.
    rng = np.random.default_rng(8)
    m = random_metric(MetricKind.Riemannian, rng)
    th = np.linspace(0, 2 * np.pi, 200_000, endpoint=False)
    for _ in range(20):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2) * 6.0
        if m.eval_dual(cell, xi) <= 1.0:
            continue
        p = m.project_dual_ball(cell, xi)
        assert m.eval_dual(cell, p) == pytest.approx(1.0, abs=1e-9)
        j, i = cell
        lmax, lmin = m.sigma0.eigenvalues()
        a = m.a_eff[j, i]
        # boundary of the dual ball in the eigenbasis, rotated back
        c, s = m.sigma0.rotation()
        cj, sj = c[j, i], s[j, i]
        bx = a * np.sqrt(lmax[j, i]) * np.cos(th)
        by = a * np.sqrt(lmin[j, i]) * np.sin(th)
        wx = cj * bx - sj * by
        wy = sj * bx + cj * by
        dmin = np.min(np.hypot(wx - xi[0], wy - xi[1]))
        assert np.hypot(*(xi - p)) <= dmin + 1e-6


def test_vectorized_project_matches_per_cell():
    rng = np.random.default_rng(9)
    for kind in ALL_KINDS:
        m = random_metric(kind, rng)
        vx = rng.standard_normal((GEOM.ny, GEOM.nx)) * 4.0
        vy = rng.standard_normal((GEOM.ny, GEOM.nx)) * 4.0
        px, py = m.project(vx, vy)
        assert np.max(m.dual(px, py)) <= 1.0 + 1e-9
        for cell in [(0, 0), (3, 5), (7, 7)]:
            expect = m.project_dual_ball(cell, (vx[cell], vy[cell]))
            np.testing.assert_allclose([px[cell], py[cell]], expect, atol=1e-12)


# --- validation and errors ------------------------------------------------------


def test_validate_identity_riemannian():
    m = constant_metric(GEOM, "riemannian", a=1.0, sigma0=(1.0, 0.0, 1.0))
    rep = validate(m)
    assert rep.ok
    assert rep.alpha == pytest.approx(1.0, abs=1e-9)


def test_validate_flags_nonpositive_weight():
    vals = np.ones((GEOM.ny, GEOM.nx))
    vals[4, 4] = 0.0
    m = MetricField(MetricKind.IsotropicEuclidean, lg.ScalarGrid(GEOM, vals))
    rep = validate(m)
    assert not rep.ok
    assert any("weight not positive" in v for v in rep.violations)


def test_validate_alpha_anisotropic():
    m = constant_metric(GEOM, "riemannian", a=3.0, sigma0=(4.0, 0.0, 1.0))
    rep = validate(m, n_dirs=4096)
    assert rep.ok
    assert rep.alpha == pytest.approx(6.0, abs=1e-6)


def test_singular_tensor_raises_on_dual():
    m = constant_metric(GEOM, "riemannian", a=1.0, sigma0=(1.0, 0.0, 0.0))
    with pytest.raises(lg.InvalidMetricError):
        m.eval_dual((0, 0), (1.0, 1.0))
    with pytest.raises(lg.InvalidMetricError):
        m.project_dual_ball((0, 0), (2.0, 2.0))
    rep = validate(m)
    assert any("positive definite" in v for v in rep.violations)


def test_metric_construction_contracts():
    with pytest.raises(lg.InvalidMetricError):
        MetricField(MetricKind.Riemannian, lg.ScalarGrid.full(GEOM, 1.0))
    with pytest.raises(lg.InvalidMetricError):
        MetricField(
            MetricKind.CrystallineL1,
            lg.ScalarGrid.full(GEOM, 1.0),
            TensorField.constant(GEOM, 1, 0, 1),
        )
    with pytest.raises(lg.InvalidMetricError):
        parse_kind("hyperbolic")
    with pytest.raises(lg.DimensionMismatchError):
        constant_metric(GEOM, "isotropic").eval_phi((99, 0), (1, 0))


def test_scaled_metric_scales_phi():
    rng = np.random.default_rng(10)
    m = random_metric(MetricKind.Riemannian, rng)
    m3 = m.scaled(3.0)
    for _ in range(20):
        cell = (int(rng.integers(0, GEOM.ny)), int(rng.integers(0, GEOM.nx)))
        xi = rng.standard_normal(2)
        assert m3.eval_phi(cell, xi) == pytest.approx(3.0 * m.eval_phi(cell, xi), rel=1e-14)


def test_norm_gradient_rejects_crystalline():
    m = constant_metric(GEOM, "l1")
    with pytest.raises(lg.InvalidMetricError):
        m.norm_gradient(np.ones((GEOM.ny, GEOM.nx)), np.ones((GEOM.ny, GEOM.nx)))
