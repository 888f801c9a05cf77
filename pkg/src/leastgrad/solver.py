"""Primal-dual solver for the relaxed least gradient problem.

The saddle-point form couples the interior field u (pinned to the boundary
data on the ghost band) with a flux field V constrained to the pointwise
dual ball. One iteration ascends in V along the lifted gradient of the
extrapolated primal iterate, projects back onto the ball, then descends in
u along the discrete divergence. Because the projection is exact, the dual
iterate is feasible after every step and the final V doubles as the
optimality certificate: its boundary pairing with the data is a true lower
bound up to the reported divergence slack.

Iteration is deterministic and restartable. A SolveState captures the full
loop (u, V, the previous primal iterate, the global iteration counter), and
advancing a state k then m iterations reproduces k+m iterations bit for
bit; checkpoints round-trip the state through the text field format.
Convergence is only ever tested at global iterations divisible by
check_every, so restarts do not shift the measurement schedule.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericalError, StateMismatchError, ValidationError
from .functional import GapReport, duality_gap
from .grid import DomainMask, GridGeometry, ScalarGrid, VectorGrid, divergence, gradient
from .ioutil import read_field, write_field
from .metric import MetricField

# Dual feasibility after an exact projection is rounding noise; anything
# larger signals a projection bug, so it participates in the stop test.
FEAS_TOL = 1e-9


def operator_norm_sq_bound(h: float) -> float:
    """Upper bound 8/h^2 on the squared norm of the lifted gradient."""
    if h <= 0:
        raise ValidationError("cell size must be positive")
    return 8.0 / (h * h)


def estimate_operator_norm_sq(mask: DomainMask, iters: int = 50, seed: int = 0) -> float:
    """Power-method estimate of the squared operator norm (for tests/tuning).

    Runs on the linear part of the lifted gradient (ghost reads zeroed);
    the divergence is its exact negative adjoint, so G*G = -div o G.
    """
    rng = np.random.default_rng(seed)
    zero = ScalarGrid.full(mask.geom, 0.0)
    u = np.where(mask.interior, rng.standard_normal(mask.interior.shape), 0.0)
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(iters):
        g = gradient(ScalarGrid(mask.geom, u), zero, mask)
        w = -divergence(g, mask).values
        lam = float(np.sum(u * w))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        u = w / nrm
    return lam


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 200_000
    tol_gap: float = 1e-3  # relative: gap <= tol_gap * max(1, |primal|)
    tol_div: float = 1e-6  # absolute, max over interior cells
    tau: float | None = None  # primal step; default h/sqrt(8)
    sigma: float | None = None  # dual step; default h/sqrt(8)
    check_every: int = 100
    init: str = "data"  # "data" or "random"
    seed: int = 0

    def steps(self, h: float) -> tuple[float, float]:
        tau = h / np.sqrt(8.0) if self.tau is None else self.tau
        sigma = h / np.sqrt(8.0) if self.sigma is None else self.sigma
        return float(tau), float(sigma)

    def validate(self, h: float) -> None:
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.tol_gap <= 0 or self.tol_div <= 0:
            raise ConfigError("tolerances must be positive")
        if self.check_every < 1:
            raise ConfigError("check_every must be at least 1")
        if self.init not in ("data", "random"):
            raise ConfigError(f"unknown init mode {self.init!r}")
        tau, sigma = self.steps(h)
        if tau <= 0 or sigma <= 0:
            raise ConfigError("step sizes must be positive")
        if tau * sigma * operator_norm_sq_bound(h) > 1.0 + 1e-12:
            raise ConfigError(
                f"step sizes violate tau*sigma*8/h^2 <= 1 (got {tau * sigma * 8 / h**2:.6g})"
            )


class HistoryRecord(NamedTuple):
    iteration: int
    primal: float
    dual: float
    gap: float
    div_residual: float
    feas_residual: float
    dual_error_bound: float


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    primal: float
    dual: float
    gap: float
    div_residual: float
    feas_residual: float
    dual_error_bound: float  # |div V|_1 * |u|_inf, slack in the dual value
    max_principle_excess: float  # overshoot of u beyond the ghost data range
    energy: dict
    history: list[HistoryRecord]
    wall_time: float

    def as_dict(self, include_wall_time: bool = False) -> dict:
        d = {
            "converged": self.converged,
            "iterations": self.iterations,
            "primal": self.primal,
            "dual": self.dual,
            "gap": self.gap,
            "div_residual": self.div_residual,
            "feas_residual": self.feas_residual,
            "dual_error_bound": self.dual_error_bound,
            "max_principle_excess": self.max_principle_excess,
            "energy": dict(self.energy),
            "history": [r._asdict() for r in self.history],
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class SolveState:
    """Mutable loop state; advancing it is the only way it changes."""

    f: ScalarGrid
    metric: MetricField
    mask: DomainMask
    opts: SolverOptions
    u: ScalarGrid
    v: VectorGrid
    u_prev: ScalarGrid
    iteration: int = 0
    converged: bool = False
    wall_time: float = 0.0
    history: list[HistoryRecord] = field(default_factory=list)
    # Cache of the last gap evaluation: (iteration, GapReport, dual_error_bound).
    _last_eval: tuple[int, GapReport, float] | None = None

    @property
    def fingerprint(self) -> str:
        return state_fingerprint(self.f, self.metric, self.mask, self.opts)


def state_fingerprint(
    f: ScalarGrid, m: MetricField, mask: DomainMask, opts: SolverOptions
) -> str:
    """Hash of everything a resumed run must share with the original."""
    tau, sigma = opts.steps(mask.geom.h)
    hsh = hashlib.sha256()
    hsh.update(repr(tuple(mask.geom)).encode())
    hsh.update(mask.interior.tobytes())
    hsh.update(f.values.tobytes())
    hsh.update(m.kind.value.encode())
    hsh.update(m.a.values.tobytes())
    if m.sigma0 is not None:
        for arr in (m.sigma0.s11, m.sigma0.s12, m.sigma0.s22):
            hsh.update(arr.tobytes())
    hsh.update(repr((tau, sigma)).encode())
    return hsh.hexdigest()


def prepare(
    f: ScalarGrid, m: MetricField, mask: DomainMask, opts: SolverOptions | None = None
) -> SolveState:
    """Initial solver state: u from the data (or seeded noise), V = 0."""
    opts = opts or SolverOptions()
    opts.validate(mask.geom.h)
    if not mask.geom.matches(f.geom) or not mask.geom.matches(m.a.geom):
        raise ValidationError("data, metric, and mask must share one grid")
    ghost = f.values[mask.faces.ghost_j, mask.faces.ghost_i]
    if not np.all(np.isfinite(ghost)):
        raise ValidationError("boundary data is not finite on the ghost band")
    vals = f.values.copy()
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        lo, hi = float(ghost.min()), float(ghost.max())
        vals[mask.interior] = rng.uniform(lo, hi, size=mask.n_interior) if hi > lo else lo
    u = ScalarGrid(mask.geom, vals)
    return SolveState(f, m, mask, opts, u, VectorGrid.zeros(mask.geom), u.copy())


def _evaluate(state: SolveState) -> tuple[GapReport, float]:
    if state._last_eval is not None and state._last_eval[0] == state.iteration:
        return state._last_eval[1], state._last_eval[2]
    gp = duality_gap(state.u, state.f, state.metric, state.mask, state.v)
    h = state.mask.geom.h
    div = divergence(state.v, state.mask).values
    div_l1 = h * h * float(np.sum(np.abs(div[state.mask.interior])))
    bound = div_l1 * float(np.max(np.abs(state.u.values)))
    state._last_eval = (state.iteration, gp, bound)
    return gp, bound


def _converged(gp: GapReport, opts: SolverOptions) -> bool:
    # Non-finite values must fail the test, so compare in the passing sense.
    if not (gp.gap <= opts.tol_gap * max(1.0, abs(gp.primal))):
        return False
    return gp.div_residual <= opts.tol_div and gp.feas_residual <= FEAS_TOL


def _snapshot(state: SolveState) -> SolveReport:
    gp, bound = _evaluate(state)
    ghost = state.f.values[state.mask.faces.ghost_j, state.mask.faces.ghost_i]
    ui = state.u.values[state.mask.interior]
    excess = max(0.0, float(ui.max() - ghost.max()), float(ghost.min() - ui.min()))
    return SolveReport(
        converged=state.converged,
        iterations=state.iteration,
        primal=gp.primal,
        dual=gp.dual,
        gap=gp.gap,
        div_residual=gp.div_residual,
        feas_residual=gp.feas_residual,
        dual_error_bound=bound,
        max_principle_excess=excess,
        energy=gp.energy.as_dict(),
        history=list(state.history),
        wall_time=state.wall_time,
    )


def advance(state: SolveState, n_iters: int) -> SolveReport:
    """Run up to n_iters more iterations; stops early once converged."""
    if state.converged or n_iters <= 0:
        return _snapshot(state)
    if state.iteration == 0:
        # Catch problems that are optimal at the starting point (constant
        # data, certificate 0) before spending a whole check window on them.
        if not np.all(np.isfinite(state.u.values)):
            raise NumericalError("non-finite starting point")
        gp, bound = _evaluate(state)
        state.history.append(
            HistoryRecord(0, gp.primal, gp.dual, gp.gap, gp.div_residual, gp.feas_residual, bound)
        )
        if _converged(gp, state.opts):
            state.converged = True
            return _snapshot(state)
    mask, m, opts = state.mask, state.metric, state.opts
    geom = mask.geom
    tau, sigma = opts.steps(geom.h)
    interior = mask.interior
    fvals = state.f.values
    # Caps for the inflow ghost slots, indexed at the slot (arm origin) cell.
    cap_x = np.roll(m.phi_axis(0), -1, axis=1)
    cap_y = np.roll(m.phi_axis(1), -1, axis=0)
    u = state.u.values.copy()
    up = state.u_prev.values.copy()
    vx = state.v.vx.copy()
    vy = state.v.vy.copy()
    t0 = time.perf_counter()
    it = state.iteration
    target = state.iteration + n_iters
    while it < target:
        it += 1
        ubar = 2.0 * u - up
        g = gradient(ScalarGrid(geom, ubar), state.f, mask)
        vx += sigma * g.vx
        vy += sigma * g.vy
        px, py = m.project(vx, vy)
        vx = np.where(interior, px, vx)
        vy = np.where(interior, py, vy)
        vx = np.where(mask.arm_x_in, np.clip(vx, -cap_x, cap_x), vx)
        vy = np.where(mask.arm_y_in, np.clip(vy, -cap_y, cap_y), vy)
        div = divergence(VectorGrid(geom, vx, vy), mask).values
        up = u
        u = np.where(interior, u + tau * div, fvals)
        if it % opts.check_every == 0:
            state.u = ScalarGrid(geom, u)
            state.u_prev = ScalarGrid(geom, up)
            state.v = VectorGrid(geom, vx, vy)
            state.iteration = it
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(vx)) and np.all(np.isfinite(vy))):
                raise NumericalError(f"non-finite iterate at iteration {it}")
            gp, bound = _evaluate(state)
            if not (np.isfinite(gp.primal) and np.isfinite(gp.dual)):
                raise NumericalError(f"non-finite objective at iteration {it}")
            state.history.append(
                HistoryRecord(
                    it, gp.primal, gp.dual, gp.gap, gp.div_residual, gp.feas_residual, bound
                )
            )
            if _converged(gp, opts):
                state.converged = True
                break
    state.u = ScalarGrid(geom, u)
    state.u_prev = ScalarGrid(geom, up)
    state.v = VectorGrid(geom, vx, vy)
    state.iteration = it
    state.wall_time += time.perf_counter() - t0
    return _snapshot(state)


def solve_relaxed(
    f: ScalarGrid, m: MetricField, mask: DomainMask, opts: SolverOptions | None = None
) -> tuple[ScalarGrid, VectorGrid, SolveReport]:
    """Minimize the relaxed energy; returns (u, certificate, report).

    Non-convergence within max_iters is reported (converged=False), not
    raised; only non-finite iterates raise.
    """
    opts = opts or SolverOptions()
    state = prepare(f, m, mask, opts)
    report = advance(state, opts.max_iters)
    return state.u, state.v, report


def resume(state: SolveState, extra_iters: int) -> tuple[ScalarGrid, VectorGrid, SolveReport]:
    """Continue a previous solve; a no-op if it already converged."""
    report = advance(state, extra_iters)
    return state.u, state.v, report


# --- checkpointing ------------------------------------------------------------

_STATE_FILE = "state.json"
_FIELDS = {"u": "u.csv", "u_prev": "u_prev.csv", "vx": "T_x.csv", "vy": "T_y.csv"}


def save_checkpoint(state: SolveState, directory: str) -> None:
    """Write the state as field CSVs plus a JSON sidecar."""
    os.makedirs(directory, exist_ok=True)
    write_field(os.path.join(directory, _FIELDS["u"]), state.u)
    write_field(os.path.join(directory, _FIELDS["u_prev"]), state.u_prev)
    write_field(os.path.join(directory, _FIELDS["vx"]), ScalarGrid(state.mask.geom, state.v.vx))
    write_field(os.path.join(directory, _FIELDS["vy"]), ScalarGrid(state.mask.geom, state.v.vy))
    sidecar = {
        "iteration": state.iteration,
        "converged": state.converged,
        "wall_time": state.wall_time,
        "fingerprint": state.fingerprint,
        "options": {
            "max_iters": state.opts.max_iters,
            "tol_gap": state.opts.tol_gap,
            "tol_div": state.opts.tol_div,
            "tau": state.opts.tau,
            "sigma": state.opts.sigma,
            "check_every": state.opts.check_every,
            "init": state.opts.init,
            "seed": state.opts.seed,
        },
        "history": [r._asdict() for r in state.history],
    }
    path = os.path.join(directory, _STATE_FILE)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
    os.replace(tmp, path)


def load_checkpoint(
    directory: str, f: ScalarGrid, m: MetricField, mask: DomainMask
) -> SolveState:
    """Rebuild a state saved by save_checkpoint; validates data identity."""
    path = os.path.join(directory, _STATE_FILE)
    try:
        with open(path) as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise StateMismatchError(f"cannot read checkpoint sidecar {path}: {exc}") from exc
    opts = SolverOptions(**sidecar["options"])
    if state_fingerprint(f, m, mask, opts) != sidecar["fingerprint"]:
        raise StateMismatchError(
            "checkpoint does not match the given data, metric, mask, and step sizes"
        )
    grids = {}
    for key, name in _FIELDS.items():
        grid = read_field(os.path.join(directory, name))
        if not grid.geom.matches(mask.geom):
            raise StateMismatchError(f"checkpoint field {name} is on a different grid")
        grids[key] = grid
    state = SolveState(
        f,
        m,
        mask,
        opts,
        grids["u"],
        VectorGrid(mask.geom, grids["vx"].values, grids["vy"].values),
        grids["u_prev"],
        iteration=int(sidecar["iteration"]),
        converged=bool(sidecar["converged"]),
        wall_time=float(sidecar["wall_time"]),
        history=[HistoryRecord(**r) for r in sidecar["history"]],
    )
    return state
