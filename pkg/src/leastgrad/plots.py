"""PNG figures for run outputs.

Everything here is decorative: the delimited files (CSV, PGM, JSON) carry
the actual results, and run() skips this module entirely under
--no-figures. Matplotlib is imported lazily with the Agg backend so the
package works headless and nothing else pays the import cost.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .barrier import BarrierReport, FAIL, MARGINAL, PASS
from .grid import DomainMask, ScalarGrid, VectorGrid

_DPI = 110


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _extent(geom) -> tuple[float, float, float, float]:
    return (geom.x0, geom.x0 + geom.nx * geom.h, geom.y0, geom.y0 + geom.ny * geom.h)


def _masked(values: np.ndarray, mask: DomainMask) -> np.ma.MaskedArray:
    return np.ma.array(values, mask=~mask.interior)


def _save(fig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    _pyplot().close(fig)


def solution_figure(path: str | Path, u: ScalarGrid, mask: DomainMask, n_levels: int = 9) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    vals = _masked(u.values, mask)
    im = ax.imshow(vals, origin="lower", extent=_extent(u.geom), cmap="viridis")
    if vals.max() - vals.min() > 0:
        levels = np.linspace(float(vals.min()), float(vals.max()), n_levels + 2)[1:-1]
        ax.contour(vals, levels=levels, origin="lower", extent=_extent(u.geom),
                   colors="white", linewidths=0.6, alpha=0.8)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title("solution with level lines")
    ax.set_aspect("equal")
    _save(fig, path)


def certificate_figure(path: str | Path, T: VectorGrid, mask: DomainMask) -> None:
    plt = _pyplot()
    geom = T.geom
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    mag = _masked(np.hypot(T.vx, T.vy), mask)
    im = ax.imshow(mag, origin="lower", extent=_extent(geom), cmap="magma")
    step = max(1, geom.nx // 24)
    X, Y = geom.cell_centers()
    pick = np.zeros_like(mask.interior)
    pick[::step, ::step] = True
    pick &= mask.interior
    ax.quiver(X[pick], Y[pick], T.vx[pick], T.vy[pick],
              color="cyan", width=0.004, scale_units="xy")
    fig.colorbar(im, ax=ax, shrink=0.85, label="|T|")
    ax.set_title("dual certificate")
    ax.set_aspect("equal")
    _save(fig, path)


def convergence_figure(path: str | Path, history) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    its = [rec.iteration for rec in history]
    for name, series in (
        ("gap", [rec.gap for rec in history]),
        ("div residual", [rec.div_residual for rec in history]),
    ):
        pts = [(i, v) for i, v in zip(its, series) if v > 0]
        if pts:
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts], label=name)
    ax.set_xlabel("iteration")
    ax.legend()
    ax.grid(True, alpha=0.3)
    ax.set_title("convergence")
    _save(fig, path)


def barrier_figure(path: str | Path, report: BarrierReport, mask: DomainMask) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    band = _masked(report.S_band.values, mask)
    im = ax.imshow(band, origin="lower", extent=_extent(mask.geom), cmap="coolwarm")
    x, y = mask.faces.midpoints(mask.geom)
    cls = report.classification
    for code, color, label in ((PASS, "#2a9d2a", "pass"), (FAIL, "#d03030", "fail"),
                               (MARGINAL, "#888888", "marginal")):
        sel = cls == code
        if sel.any():
            ax.scatter(x[sel], y[sel], s=4, c=color, label=label, linewidths=0)
    fig.colorbar(im, ax=ax, shrink=0.85, label="indicator near boundary")
    ax.legend(loc="upper right", fontsize=7)
    ax.set_title(f"barrier check: {report.verdict}")
    ax.set_aspect("equal")
    _save(fig, path)


def imaging_figure(path: str | Path, c_true: ScalarGrid, c_rec: ScalarGrid, mask: DomainMask) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.9))
    lo = float(np.min(c_true.values[mask.interior]))
    hi = float(np.max(c_true.values[mask.interior]))
    panels = (
        ("true conductivity factor", _masked(c_true.values, mask), lo, hi, "viridis"),
        ("recovered", _masked(c_rec.values, mask), lo, hi, "viridis"),
        ("|error|", _masked(np.abs(c_rec.values - c_true.values), mask), None, None, "magma"),
    )
    for ax, (title, vals, vlo, vhi, cmap) in zip(axes, panels):
        im = ax.imshow(vals, origin="lower", extent=_extent(mask.geom),
                       cmap=cmap, vmin=vlo, vmax=vhi)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(title)
        ax.set_aspect("equal")
    _save(fig, path)
