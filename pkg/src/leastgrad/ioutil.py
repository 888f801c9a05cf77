"""Field file I/O and atomic output helpers.

Field CSV format: first line ``# nx ny h x0 y0``, then ny comma-separated
rows of nx values, row j on line j+1 (row-major, y increasing downward in
the file). Values are printed with 17 significant digits so a write/read
round trip is bit-exact for float64. Mask files use the same layout with
values in {0, 1}.

All writers go through an atomic write-temp-then-rename so a crashed run
never leaves a truncated file behind.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import DomainMask, GridGeometry, ScalarGrid, mask_from_array


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _format_row(row: np.ndarray) -> str:
    return ",".join(f"{v:.17g}" for v in row)


def field_to_text(field: ScalarGrid) -> str:
    g = field.geom
    lines = [f"# {g.nx} {g.ny} {g.h:.17g} {g.x0:.17g} {g.y0:.17g}"]
    lines.extend(_format_row(row) for row in field.values)
    return "\n".join(lines) + "\n"


def write_field(path: str | Path, field: ScalarGrid) -> None:
    atomic_write_text(path, field_to_text(field))


def read_field(path: str | Path) -> ScalarGrid:
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValidationError(f"{path}: missing '# nx ny h x0 y0' header")
            parts = header[1:].split()
            if len(parts) != 5:
                raise ValidationError(f"{path}: malformed header {header.strip()!r}")
            nx, ny = int(parts[0]), int(parts[1])
            h, x0, y0 = float(parts[2]), float(parts[3]), float(parts[4])
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as e:
        raise ValidationError(f"cannot read field file {path}: {e}") from None
    if values.shape != (ny, nx):
        raise ValidationError(
            f"{path}: data shape {values.shape} does not match header ({ny}, {nx})"
        )
    return ScalarGrid(GridGeometry(nx, ny, h, x0, y0), values)


def write_mask(path: str | Path, mask: DomainMask) -> None:
    write_field(path, ScalarGrid(mask.geom, mask.interior.astype(float)))


def read_mask(path: str | Path) -> DomainMask:
    field = read_field(path)
    vals = field.values
    if not np.isin(vals, (0.0, 1.0)).all():
        raise ValidationError(f"{path}: mask values must be 0 or 1")
    return mask_from_array(field.geom, vals.astype(bool))


def pgm_text(field: ScalarGrid, lo: float | None = None, hi: float | None = None) -> str:
    """Render a field as a P2 (ASCII) PGM heatmap, 0..255 linear ramp."""
    v = field.values
    lo = float(np.nanmin(v)) if lo is None else lo
    hi = float(np.nanmax(v)) if hi is None else hi
    if hi > lo:
        scaled = np.clip((v - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    else:
        scaled = np.full_like(v, 128.0)
    px = np.nan_to_num(scaled, nan=0.0).astype(int)
    lines = [
        "P2",
        f"# range {lo:.17g} {hi:.17g}",
        f"{field.geom.nx} {field.geom.ny}",
        "255",
    ]
    # PGM rows run top to bottom; flip so increasing y points up in the image.
    lines.extend(" ".join(str(p) for p in row) for row in px[::-1])
    return "\n".join(lines) + "\n"


def write_pgm(path: str | Path, field: ScalarGrid, lo: float | None = None, hi: float | None = None) -> None:
    atomic_write_text(path, pgm_text(field, lo, hi))


def faces_to_csv_text(mask: DomainMask, columns: dict[str, np.ndarray]) -> str:
    """Per-face table: face index, geometry, then the given value columns."""
    fs = mask.faces
    x, y = fs.midpoints(mask.geom)
    names = ["face", "axis", "sign", "x", "y"] + list(columns)
    lines = [",".join(names)]
    for k in range(len(fs)):
        row = [str(k), str(int(fs.axis[k])), str(int(fs.sign[k])), f"{x[k]:.17g}", f"{y[k]:.17g}"]
        row += [f"{np.asarray(col).ravel()[k]:.17g}" for col in columns.values()]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_faces_csv(path: str | Path, mask: DomainMask, columns: dict[str, np.ndarray]) -> None:
    atomic_write_text(path, faces_to_csv_text(mask, columns))


def polylines_to_csv_text(curves: dict[float, list[np.ndarray]]) -> str:
    """Level-line table: one row per vertex, curves numbered within a level."""
    lines = ["level,curve,vertex,x,y"]
    for level in sorted(curves):
        for c, poly in enumerate(curves[level]):
            pts = np.asarray(poly, dtype=float)
            for k in range(pts.shape[0]):
                lines.append(f"{level:.17g},{c},{k},{pts[k, 0]:.17g},{pts[k, 1]:.17g}")
    return "\n".join(lines) + "\n"


def write_polylines_csv(path: str | Path, curves: dict[float, list[np.ndarray]]) -> None:
    atomic_write_text(path, polylines_to_csv_text(curves))
