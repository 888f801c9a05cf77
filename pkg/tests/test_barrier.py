"""Signed distance, the boundary curvature indicator, and its classification."""
from __future__ import annotations

import numpy as np
import pytest

import leastgrad as lg
from leastgrad.barrier import (
    FAIL,
    MARGINAL,
    PASS,
    BarrierReport,
    barrier_indicator,
    classify,
    directional_derivative,
    signed_distance,
)
from leastgrad.errors import InvalidMetricError, ValidationError
from leastgrad.metric import MetricField, MetricKind, constant_metric


def disk_setup(n, r=0.8):
    mask = lg.build_mask(lg.Disk(0, 0, r), n)
    d = signed_distance(lg.Disk(0, 0, r), mask.geom)
    return mask, d


# --- signed distance ---------------------------------------------------------------


def test_analytic_disk_distance():
    mask, d = disk_setup(32)
    X, Y = mask.geom.cell_centers()
    assert np.allclose(d.values, 0.8 - np.hypot(X, Y), atol=1e-12)


def test_analytic_shape_needs_geometry():
    with pytest.raises(ValidationError):
        signed_distance(lg.Disk(0, 0, 1))


@pytest.mark.parametrize("n", [16, 32])
def test_eikonal_distance_tracks_exact_disk(n):
    mask = lg.build_mask(lg.Disk(0, 0, 0.75), n)
    h = mask.geom.h
    d = signed_distance(mask)
    X, Y = mask.geom.cell_centers()
    exact = 0.75 - np.hypot(X, Y)
    assert np.all(np.abs(d.values - exact) <= 2 * h)
    # Positive inside, negative outside, never closer than half a cell.
    assert np.all(d.values[mask.interior] >= 0.5 * h - 1e-12)
    assert np.all(d.values[~mask.interior] <= -0.5 * h + 1e-12)


def test_eikonal_flat_run_is_exact():
    # Along the middle of a square's side the update never needs the
    # two-axis branch, so values are exact multiples of the spacing.
    mask = lg.build_mask(lg.Box(1, 1), 16)
    h = mask.geom.h
    d = signed_distance(mask)
    j, i = np.nonzero(mask.interior)
    col = i == 8
    X, Y = mask.geom.cell_centers()
    expected = np.minimum.reduce(
        [X[j, i][col], Y[j, i][col], 1 - X[j, i][col], 1 - Y[j, i][col]]
    )
    near_side = expected <= 4 * h
    assert np.allclose(d.values[j, i][col][near_side], expected[near_side], atol=1e-12)


# --- stencil helper ----------------------------------------------------------------


def test_directional_derivative_order_fallback():
    # Quadratic values: centered and one-sided second order stencils are
    # exact, the first-order fallback is not.
    h = 0.25
    x = np.arange(8) * h
    vals = np.tile(x * x, (3, 1))
    usable = np.zeros_like(vals, dtype=bool)
    usable[1, 2:7] = True
    deriv, have = directional_derivative(vals, usable, h, axis=0)
    assert np.all(have[1, 1:8])
    assert not have[0].any()
    # Two usable cells to one side everywhere in 1..7: exact on a parabola,
    # centered in the middle of the run, second-order one-sided at its ends.
    assert np.allclose(deriv[1, 1:8], 2 * x[1:8], atol=1e-12)

    # A two-cell run leaves its cells a single neighbor: first order only.
    short = np.zeros_like(usable)
    short[1, 2:4] = True
    deriv, have = directional_derivative(vals, short, h, axis=0)
    fwd = (vals[1, 3] - vals[1, 2]) / h
    assert deriv[1, 2] == pytest.approx(fwd, abs=1e-12)
    assert deriv[1, 3] == pytest.approx(fwd, abs=1e-12)
    assert not have[1, 0] and have[1, 1] and have[1, 4] and not have[1, 5]


# --- indicator values ----------------------------------------------------------------


def test_disk_indicator_is_inverse_radius():
    mask, d = disk_setup(128)
    m = constant_metric(mask.geom)
    rep = barrier_indicator(m, d, mask)
    assert rep.trusted.all()
    x, y = mask.faces.midpoints(mask.geom)
    xc = mask.geom.x0 + (mask.faces.cell_i + 0.5) * mask.geom.h
    yc = mask.geom.y0 + (mask.faces.cell_j + 0.5) * mask.geom.h
    curvature = 1.0 / np.hypot(xc, yc)
    assert np.allclose(rep.S.values, curvature, rtol=5e-2)
    assert rep.verdict == "holds"
    assert len(rep.components) == 1
    assert np.all(rep.classification == PASS)
    # The band field carries the same quantity on interior cells near the rim.
    band = mask.interior & (d.values <= 3 * mask.geom.h)
    inner = band & (np.abs(rep.S_band.values) > 0)
    X, Y = mask.geom.cell_centers()
    assert np.allclose(rep.S_band.values[inner], 1.0 / np.hypot(X, Y)[inner], rtol=5e-2)


def test_square_sides_sit_on_the_threshold():
    mask = lg.build_mask(lg.Box(1, 1), 32)
    h = mask.geom.h
    d = signed_distance(lg.Box(1, 1), mask.geom)
    rep = barrier_indicator(constant_metric(mask.geom), d, mask)
    x, y = mask.faces.midpoints(mask.geom)
    corner = np.minimum.reduce([np.hypot(x - cx, y - cy) for cx in (0, 1) for cy in (0, 1)])
    flat = corner > 3 * h
    assert flat.sum() > 0.6 * len(mask.faces)
    # Flat stretches of a straight side have an affine distance: the
    # indicator vanishes there identically and the faces read marginal.
    assert np.all(rep.S.values[flat] == 0.0)
    assert np.all(rep.classification[flat] == MARGINAL)
    assert rep.verdict in ("inconclusive", "fails")


def test_annulus_components_split():
    mask = lg.build_mask(lg.Annulus(0.45, 0.9), 64)
    d = signed_distance(lg.Annulus(0.45, 0.9), mask.geom)
    rep = barrier_indicator(constant_metric(mask.geom), d, mask)
    assert len(rep.components) == 2
    x, y = mask.faces.midpoints(mask.geom)
    r = np.hypot(x, y)
    for comp, frac in zip(rep.components, rep.component_fractions):
        if r[comp].mean() < 0.675:
            # Inner circle bends away from the domain: the test fails there.
            assert frac["verdict"] == "fails"
            assert np.all(rep.classification[comp][rep.trusted[comp]] == FAIL)
        else:
            assert frac["verdict"] == "holds"
            assert np.all(rep.classification[comp] == PASS)
    assert rep.verdict == "fails"
    assert rep.as_dict()["components"][0]["faces"] > 0


def test_indicator_rejects_crystalline_kinds():
    mask, d = disk_setup(16)
    for kind in ("l1", "linf"):
        m = constant_metric(mask.geom, kind)
        with pytest.raises(InvalidMetricError):
            barrier_indicator(m, d, mask)


def test_indicator_rejects_mismatched_grids():
    mask, d = disk_setup(16)
    other = lg.build_mask(lg.Disk(0, 0, 0.8), 24)
    with pytest.raises(ValidationError):
        barrier_indicator(constant_metric(other.geom), d, mask)
    with pytest.raises(ValidationError):
        barrier_indicator(constant_metric(mask.geom), signed_distance(other), mask)


def test_thin_strip_is_all_untrusted():
    # One row of cells: no vertical stencil exists anywhere, so every face
    # stays marginal and the verdict cannot move off inconclusive.
    geom = lg.build_mask(lg.Box(1, 1), 8).geom
    arr = np.zeros((geom.ny, geom.nx), dtype=bool)
    arr[4, 2:7] = True
    mask = lg.mask_from_array(geom, arr)
    rep = barrier_indicator(constant_metric(geom), signed_distance(mask), mask)
    assert not rep.trusted.any()
    assert np.all(rep.classification == MARGINAL)
    assert rep.verdict == "inconclusive"


# --- product rule cross-check --------------------------------------------------------


def shift_pair(arr, axis):
    ax = 1 if axis == 0 else 0
    return np.roll(arr, -1, axis=ax), np.roll(arr, 1, axis=ax)


def centered(arr, h, axis):
    p, m = shift_pair(arr, axis)
    return (p - m) / (2 * h)


def wide_mean(arr, axis):
    p, m = shift_pair(arr, axis)
    return 0.5 * (p + m)


def test_weighted_indicator_obeys_product_rule():
    # For a weight a times the Euclidean norm the field being diverged is
    # a * q with q the unit distance gradient. On cells where every stencil
    # is centered, the discrete derivative splits exactly into the wide
    # average product rule, so the two evaluations must agree to rounding.
    mask, d = disk_setup(48)
    h = mask.geom.h
    X, Y = mask.geom.cell_centers()
    a = 1.0 + 0.25 * np.sin(2 * X) * np.cos(Y)
    m = MetricField(MetricKind.IsotropicEuclidean, lg.ScalarGrid(mask.geom, a))
    rep = barrier_indicator(m, d, mask, band_width=10 * h)

    gx, _ = directional_derivative(d.values, mask.interior, h, axis=0)
    gy, _ = directional_derivative(d.values, mask.interior, h, axis=1)
    nrm = np.hypot(gx, gy)
    qx = np.divide(gx, nrm, out=np.zeros_like(gx), where=nrm > 0)
    qy = np.divide(gy, nrm, out=np.zeros_like(gy), where=nrm > 0)
    manual = -(
        wide_mean(a, 0) * centered(qx, h, 0)
        + wide_mean(qx, 0) * centered(a, h, 0)
        + wide_mean(a, 1) * centered(qy, h, 1)
        + wide_mean(qy, 1) * centered(a, h, 1)
    )

    rr = np.hypot(X, Y)
    sel = mask.interior & (rr > 0.15) & (d.values >= 5 * h) & (d.values <= 8 * h)
    assert sel.sum() > 100
    assert np.max(np.abs(rep.S_band.values[sel] - manual[sel])) <= 1e-10


def test_indicator_scales_with_the_weight():
    mask, d = disk_setup(32)
    X, Y = mask.geom.cell_centers()
    a = 1.0 + 0.3 * np.cos(3 * X + Y)
    m1 = MetricField(MetricKind.IsotropicEuclidean, lg.ScalarGrid(mask.geom, a))
    m2 = MetricField(MetricKind.IsotropicEuclidean, lg.ScalarGrid(mask.geom, 2.0 * a))
    r1 = barrier_indicator(m1, d, mask)
    r2 = barrier_indicator(m2, d, mask)
    # Doubling is exact in floating point, so so is the scaling of S.
    assert np.array_equal(r2.S.values, 2.0 * r1.S.values)
    assert np.array_equal(r2.trusted, r1.trusted)
    assert np.array_equal(
        classify(r2, 2.0 * r1.delta).classification, r1.classification
    )
    m3 = MetricField(MetricKind.IsotropicEuclidean, lg.ScalarGrid(mask.geom, 3.7 * a))
    r3 = barrier_indicator(m3, d, mask)
    assert np.allclose(r3.S.values, 3.7 * r1.S.values, rtol=1e-12, atol=1e-12)


# --- classification ------------------------------------------------------------------


def synthetic_report(s_values, components, trusted=None):
    n = len(s_values)
    geom = lg.build_mask(lg.Box(1, 1), 8).geom
    return BarrierReport(
        S=lg.BoundaryField(np.asarray(s_values, dtype=float)),
        trusted=np.ones(n, dtype=bool) if trusted is None else np.asarray(trusted),
        S_band=lg.ScalarGrid.full(geom),
        components=[np.asarray(c, dtype=int) for c in components],
        boundary_measure_unit=0.125,
        delta=1.0,
        classification=np.zeros(n, dtype=np.int8),
        component_fractions=[],
        verdict="inconclusive",
    )


def test_classify_verdict_table():
    rep = synthetic_report([2.0, 3.0, -2.0, 0.5], [[0, 1], [2, 3]])
    out = classify(rep, 1.0)
    assert [f["verdict"] for f in out.component_fractions] == ["holds", "fails"]
    assert out.verdict == "fails"
    assert np.array_equal(out.classification, [PASS, PASS, FAIL, MARGINAL])
    assert out.component_fractions[1]["measure"] == pytest.approx(0.25)

    out = classify(synthetic_report([2.0, 0.5], [[0, 1]]), 1.0)
    assert out.verdict == "inconclusive"

    out = classify(synthetic_report([2.0, 2.0], [[0, 1]]), 1.0)
    assert out.verdict == "holds"

    # A huge value with an untrusted stencil must not count as a pass.
    out = classify(synthetic_report([9.0, 2.0], [[0, 1]], trusted=[False, True]), 1.0)
    assert out.classification[0] == MARGINAL
    assert out.verdict == "inconclusive"


def test_classify_needs_positive_threshold():
    rep = synthetic_report([1.0], [[0]])
    for bad in (0.0, -0.5):
        with pytest.raises(ValidationError):
            classify(rep, bad)


def test_threshold_defaults_and_override():
    mask, d = disk_setup(16)
    m = constant_metric(mask.geom)
    rep = barrier_indicator(m, d, mask)
    assert rep.delta == pytest.approx(10 * mask.geom.h)
    strict = barrier_indicator(m, d, mask, delta=5.0)
    assert strict.delta == 5.0
    # Far above any achievable S: nothing passes, nothing fails.
    assert np.all(strict.classification == MARGINAL)
    assert strict.verdict == "inconclusive"
