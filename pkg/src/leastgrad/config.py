"""Problem descriptions: a flat spec dataclass, INI files, and builders.

A ProblemSpec is the diff-able record of one experiment: every field is a
short string or number, so a config file plus the overriding flags pins the
run down completely. Builders turn a ProblemSpec into the actual grid objects.

Value grammars (all little languages are colon-tagged, comma-separated):
  shape   disk:cx,cy,r | annulus:r0,r1 | box:w,h | polygon:x1,y1;x2,y2;...
  a       const:v | file:path
  sigma0  diag:s11,s22 | const:s11,s12,s22
  data    affine:ax,ay,c | top-edge:value[,slope] | file:path
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .grid import DomainMask, GridGeometry, ScalarGrid, build_mask
from .ioutil import read_field
from .metric import MetricField, TensorField, parse_kind
from .shapes import Shape, parse_shape
from .solver import SolverOptions


@dataclass(frozen=True)
class ProblemSpec:
    shape: str = "box:1,1"
    n: int = 64
    metric: str = "isotropic"
    a: str = "const:1"
    sigma0: str = "diag:1,1"
    data: str = "affine:1,0,0"
    max_iters: int = 200_000
    tol_gap: float = 1e-3
    tol_div: float = 1e-6
    check_every: int = 100
    init: str = "data"
    seed: int = 0
    out: str = "out"
    figures: bool = True

    def validated(self) -> "ProblemSpec":
        if self.n < 8:
            raise ConfigError(f"resolution n must be at least 8, got {self.n}")
        parse_kind(self.metric)
        parse_shape(self.shape)
        for spec, kinds in ((self.a, ("const", "file")),
                            (self.sigma0, ("diag", "const")),
                            (self.data, ("affine", "top-edge", "file"))):
            tag = spec.split(":", 1)[0]
            if tag not in kinds:
                raise ConfigError(f"unknown value spec {spec!r}; expected one of {kinds}")
        return self

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            max_iters=self.max_iters,
            tol_gap=self.tol_gap,
            tol_div=self.tol_div,
            check_every=self.check_every,
            init=self.init,
            seed=self.seed,
        )


# INI section -> spec fields it may set. "dir" is stored as out.
_SECTIONS = {
    "problem": ("shape", "n", "metric", "a", "sigma0", "data"),
    "solver": ("max_iters", "tol_gap", "tol_div", "check_every", "init", "seed"),
    "output": ("dir", "figures"),
}
_RENAME = {"dir": "out"}


def _coerce(name: str, text: str):
    kind = ProblemSpec.__dataclass_fields__[name].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {text!r}") from None


def load_config(path: str | Path) -> ProblemSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    spec = ProblemSpec()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, text in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            name = _RENAME.get(key, key)
            spec = replace(spec, **{name: _coerce(name, text)})
    return spec


def apply_overrides(spec: ProblemSpec, overrides: dict) -> ProblemSpec:
    """Flag values win over the config file; None means flag not given."""
    known = {f.name for f in fields(ProblemSpec)}
    updates = {}
    for name, value in overrides.items():
        if name not in known:
            raise ConfigError(f"unknown spec field {name!r}")
        if value is not None:
            updates[name] = value
    return replace(spec, **updates).validated()


def _floats(spec: str, tag: str, lo: int, hi: int) -> list[float]:
    body = spec.split(":", 1)[1] if ":" in spec else ""
    try:
        vals = [float(p) for p in body.split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad numbers in {spec!r}") from None
    if not lo <= len(vals) <= hi:
        raise ConfigError(f"{tag} spec {spec!r} needs {lo}..{hi} numbers")
    return vals


def _match(field: ScalarGrid, geom: GridGeometry, what: str) -> ScalarGrid:
    if not field.geom.matches(geom):
        raise ValidationError(
            f"{what} grid {field.geom} does not match the problem grid {geom}"
        )
    return field


def build_weight(spec: ProblemSpec, geom: GridGeometry) -> ScalarGrid:
    tag, _, body = spec.a.partition(":")
    if tag == "const":
        return ScalarGrid.full(geom, _floats(spec.a, "a", 1, 1)[0])
    return _match(read_field(body), geom, "weight file")


def build_sigma0(spec: ProblemSpec, geom: GridGeometry) -> TensorField:
    tag = spec.sigma0.split(":", 1)[0]
    if tag == "diag":
        s11, s22 = _floats(spec.sigma0, "sigma0", 2, 2)
        return TensorField.constant(geom, s11, 0.0, s22)
    s11, s12, s22 = _floats(spec.sigma0, "sigma0", 3, 3)
    return TensorField.constant(geom, s11, s12, s22)


def build_metric(spec: ProblemSpec, geom: GridGeometry) -> MetricField:
    kind = parse_kind(spec.metric)
    a = build_weight(spec, geom)
    sigma0 = build_sigma0(spec, geom) if kind.value == "riemannian" else None
    return MetricField(kind, a, sigma0=sigma0)


def build_data(spec: ProblemSpec, shape: Shape, geom: GridGeometry) -> ScalarGrid:
    tag, _, body = spec.data.partition(":")
    X, Y = geom.cell_centers()
    if tag == "affine":
        ax, ay, c = _floats(spec.data, "data", 3, 3)
        return ScalarGrid(geom, ax * X + ay * Y + c)
    if tag == "top-edge":
        vals = _floats(spec.data, "data", 1, 2)
        value, slope = vals[0], (vals[1] if len(vals) == 2 else 0.0)
        top = shape.bbox()[3]
        return ScalarGrid(geom, np.where(Y >= top, value + slope * X, 0.0))
    return _match(read_field(body), geom, "data file")


def build_problem(spec: ProblemSpec) -> tuple[Shape, DomainMask, MetricField, ScalarGrid]:
    shape = parse_shape(spec.shape)
    mask = build_mask(shape, spec.n)
    m = build_metric(spec, mask.geom)
    f = build_data(spec, shape, mask.geom)
    return shape, mask, m, f
