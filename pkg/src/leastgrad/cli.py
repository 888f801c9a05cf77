"""Command-line front end.

Subcommands: solve, certify, structure, barrier, perimeter, imaging,
gallery. A problem is described by a config file (INI), flags overriding
it, or a gallery entry id; all three funnel into the same ProblemSpec.

Exit codes: 0 success, 1 bad input (flags, config, specs, files), 2
numerical failure, 3 solver ran out of iterations. Reports are JSON with
sorted keys and no wall-clock content, so a rerun with the same spec and
seed produces byte-identical files; timings go to a separate timing.json.
LG_THREADS is read, validated, and recorded in reports; execution is
single-threaded regardless (the env var is a capacity declaration for
schedulers, not a parallelism switch).
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .barrier import barrier_indicator, signed_distance
from .config import (
    ProblemSpec,
    apply_overrides,
    build_metric,
    build_problem,
    build_sigma0,
    load_config,
)
from .errors import ConfigError, LeastGradError, NumericalError, ValidationError
from .functional import duality_gap, phi_perimeter
from .gallery import gallery_entry, gallery_list, gallery_run
from .grid import ScalarGrid, VectorGrid, build_mask
from .imaging import ImagingProblem, phantom_conductivity, run_pipeline
from .ioutil import (
    read_field,
    write_faces_csv,
    write_field,
    write_mask,
    write_pgm,
    write_polylines_csv,
)
from .metric import parse_kind
from .reports import write_report, write_timing
from .shapes import parse_shape
from .solver import advance, load_checkpoint, prepare, save_checkpoint
from .structure import level_sets, nonexistence_diagnostic, structure_report


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _threads() -> int:
    text = os.environ.get("LG_THREADS", "1")
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"LG_THREADS must be an integer, got {text!r}") from None
    if value < 1:
        raise ConfigError(f"LG_THREADS must be at least 1, got {value}")
    return value


def _add_problem_flags(p: argparse.ArgumentParser, solver: bool = True) -> None:
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--shape", help="domain: disk:cx,cy,r | annulus:r0,r1 | box:w,h | polygon:...")
    p.add_argument("--n", type=int, help="grid cells per unit length")
    p.add_argument("--metric", help="isotropic | riemannian | l1 | linf")
    p.add_argument("--a", help="weight: const:v | file:path")
    p.add_argument("--sigma0", help="anisotropy: diag:s11,s22 | const:s11,s12,s22")
    p.add_argument("--out", help="output directory")
    p.add_argument("--figures", dest="figures", action="store_const", const=True,
                   default=None, help="write PNG figures (default)")
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False,
                   help="skip PNG figures; delimited outputs are always written")
    if solver:
        p.add_argument("--data", help="boundary data: affine:ax,ay,c | top-edge:v[,slope] | file:path")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--tol-gap", type=float, dest="tol_gap")
        p.add_argument("--tol-div", type=float, dest="tol_div")
        p.add_argument("--check-every", type=int, dest="check_every")
        p.add_argument("--init", choices=("data", "random"))
        p.add_argument("--seed", type=int)


_SPEC_FLAGS = ("shape", "n", "metric", "a", "sigma0", "data", "max_iters",
               "tol_gap", "tol_div", "check_every", "init", "seed", "out", "figures")


def _resolve_spec(args) -> ProblemSpec:
    gallery_id = getattr(args, "gallery", None)
    if gallery_id and args.config:
        raise ConfigError("give either --gallery or --config, not both")
    if gallery_id:
        base = gallery_entry(gallery_id).spec
    elif args.config:
        base = load_config(args.config)
    else:
        base = ProblemSpec()
    overrides = {k: getattr(args, k) for k in _SPEC_FLAGS if hasattr(args, k)}
    return apply_overrides(base, overrides)


def _interior_levels(u: ScalarGrid, mask, count: int) -> list[float]:
    vals = u.values[mask.interior]
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        return []
    return [float(v) for v in np.linspace(lo, hi, count + 2)[1:-1]]


def _write_solution_files(out: Path, spec: ProblemSpec, u, T, mask, levels: int) -> None:
    write_field(out / "u.csv", u)
    write_field(out / "T_x.csv", ScalarGrid(mask.geom, T.vx))
    write_field(out / "T_y.csv", ScalarGrid(mask.geom, T.vy))
    write_mask(out / "mask.csv", mask)
    write_pgm(out / "u.pgm", u)
    write_pgm(out / "T_mag.pgm", ScalarGrid(mask.geom, np.hypot(T.vx, T.vy)))
    write_polylines_csv(out / "contours.csv", level_sets(u, mask, _interior_levels(u, mask, levels)))
    if spec.figures:
        from . import plots

        plots.solution_figure(out / "solution.png", u, mask)
        plots.certificate_figure(out / "certificate.png", T, mask)


def _load_fields(fields_dir: str, mask) -> tuple[ScalarGrid, VectorGrid]:
    d = Path(fields_dir)
    u = read_field(d / "u.csv")
    vx = read_field(d / "T_x.csv")
    vy = read_field(d / "T_y.csv")
    for g in (u, vx, vy):
        if not g.geom.matches(mask.geom):
            raise ValidationError(
                f"saved fields in {d} are on grid {g.geom}, problem wants {mask.geom}"
            )
    return u, VectorGrid(mask.geom, vx.values, vy.values)


def cmd_solve(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape, mask, m, f = build_problem(spec)
    opts = spec.solver_options()
    t0 = time.perf_counter()
    if args.resume:
        state = load_checkpoint(args.resume, f, m, mask)
        rep = advance(state, args.extra_iters if args.extra_iters else opts.max_iters)
    else:
        state = prepare(f, m, mask, opts)
        rep = advance(state, opts.max_iters)
    wall = time.perf_counter() - t0
    if args.checkpoint:
        save_checkpoint(state, args.checkpoint)
    u, T = state.u, state.v

    out = Path(spec.out)
    _write_solution_files(out, spec, u, T, mask, args.levels)
    write_report(out / "report.json", {
        "command": "solve",
        "threads": threads,
        "problem": asdict(spec),
        "solve": rep.as_dict(),
    })
    write_timing(out / "timing.json", {"wall_time_s": wall})
    if spec.figures:
        from . import plots

        plots.convergence_figure(out / "convergence.png", rep.history)
    status = "converged" if rep.converged else "NOT converged"
    print(f"{status} after {rep.iterations} iterations: "
          f"primal {rep.primal:.6g}, dual {rep.dual:.6g}, gap {rep.gap:.3e}")
    print(f"residuals: div {rep.div_residual:.3e}, feas {rep.feas_residual:.3e}")
    print(f"wrote {out / 'report.json'}")
    return 0 if rep.converged else 3


def cmd_certify(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape, mask, m, f = build_problem(spec)
    u, T = _load_fields(args.fields, mask)
    gp = duality_gap(u, f, m, mask, T)
    out = Path(spec.out)
    report = gp.as_dict()
    report["primal"] = gp.primal
    write_report(out / "certify.json", {
        "command": "certify",
        "threads": threads,
        "problem": asdict(spec),
        "fields": str(args.fields),
        "certificate": report,
    })
    rel = gp.gap / max(1.0, abs(gp.primal))
    print(f"primal {gp.primal:.6g}, dual {gp.dual:.6g}, gap {gp.gap:.3e} (rel {rel:.3e})")
    print(f"residuals: div {gp.div_residual:.3e}, feas {gp.feas_residual:.3e}")
    print(f"wrote {out / 'certify.json'}")
    return 0


def cmd_structure(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape, mask, m, f = build_problem(spec)
    solved_fresh = False
    if args.fields:
        u, T = _load_fields(args.fields, mask)
        rep = None
    else:
        state = prepare(f, m, mask, spec.solver_options())
        rep = advance(state, spec.max_iters)
        u, T = state.u, state.v
        solved_fresh = True
    srep = structure_report(u, f, T, m, mask, jump_tol=args.jump_tol)
    arcs = nonexistence_diagnostic(srep, f, mask)

    out = Path(spec.out)
    write_field(out / "alignment.csv", srep.alignment_residual)
    write_pgm(out / "alignment.pgm", srep.alignment_residual)
    flagged = np.zeros(len(mask.faces))
    if len(srep.jump_faces):
        flagged[srep.jump_faces] = 1.0
    write_faces_csv(out / "boundary.csv", mask, {
        "jumped": flagged,
        "residual": srep.boundary_residual.values,
    })
    write_polylines_csv(out / "contours.csv",
                        level_sets(u, mask, _interior_levels(u, mask, args.levels)))
    report = {
        "command": "structure",
        "threads": threads,
        "problem": asdict(spec),
        "structure": srep.as_dict(),
        "arcs": [a.as_dict() for a in arcs],
    }
    if rep is not None:
        report["solve"] = rep.as_dict()
    write_report(out / "structure.json", report)
    if spec.figures:
        from . import plots

        plots.solution_figure(out / "solution.png", u, mask)
        plots.certificate_figure(out / "certificate.png", T, mask)
    print(f"attainment fraction {srep.attainment_fraction:.4f}, "
          f"{len(srep.jump_faces)} jump faces in {len(arcs)} arcs")
    for k, arc in enumerate(arcs):
        print(f"arc {k}: measure {arc.measure:.4f}, data variation {arc.variation:.4g} "
              f"-> {arc.verdict}")
    print(f"wrote {out / 'structure.json'}")
    if solved_fresh and not rep.converged:
        return 3
    return 0


def cmd_barrier(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape = parse_shape(spec.shape)
    mask = build_mask(shape, spec.n)
    m = build_metric(spec, mask.geom)
    d = signed_distance(shape, mask.geom)
    rep = barrier_indicator(m, d, mask, band_width=args.band_width, delta=args.delta)
    out = Path(spec.out)
    write_faces_csv(out / "barrier_faces.csv", mask, {
        "S": rep.S.values,
        "trusted": rep.trusted.astype(float),
        "classification": rep.classification.astype(float),
    })
    write_pgm(out / "indicator.pgm", rep.S_band)
    write_report(out / "barrier.json", {
        "command": "barrier",
        "threads": threads,
        "problem": asdict(spec),
        "barrier": rep.as_dict(),
    })
    if spec.figures:
        from . import plots

        plots.barrier_figure(out / "barrier.png", rep, mask)
    print(f"verdict: {rep.verdict}")
    for k, comp in enumerate(rep.component_fractions):
        print(f"component {k}: measure {comp['measure']:.4f}, pass {comp['pass']:.2%}, "
              f"fail {comp['fail']:.2%}, marginal {comp['marginal']:.2%} -> {comp['verdict']}")
    print(f"wrote {out / 'barrier.json'}")
    return 0


def cmd_perimeter(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape = parse_shape(spec.shape)
    mask = build_mask(shape, spec.n)
    m = build_metric(spec, mask.geom)
    subset = parse_shape(args.set)
    X, Y = mask.geom.cell_centers()
    E = ScalarGrid(mask.geom, (mask.interior & subset.contains(X, Y)).astype(float))
    value = phi_perimeter(E, m, mask)
    out = Path(spec.out)
    write_report(out / "perimeter.json", {
        "command": "perimeter",
        "threads": threads,
        "problem": asdict(spec),
        "set": args.set,
        "perimeter": value,
    })
    print(f"perimeter of {args.set} in {spec.shape} under {spec.metric}: {value:.12g}")
    print(f"wrote {out / 'perimeter.json'}")
    return 0


def cmd_imaging(args) -> int:
    spec = _resolve_spec(args)
    threads = _threads()
    shape, mask, _m, f = build_problem(spec)
    c_true = phantom_conductivity(args.phantom, mask.geom)
    problem = ImagingProblem(c_true, build_sigma0(spec, mask.geom), f, mask)
    t0 = time.perf_counter()
    rep = run_pipeline(
        problem,
        opts=spec.solver_options(),
        grad_floor=args.grad_floor,
        forward_refine=args.forward_refine,
    )
    wall = time.perf_counter() - t0
    out = Path(spec.out)
    write_field(out / "c_true.csv", c_true)
    write_field(out / "c_recovered.csv", rep.c_recovered)
    write_field(out / "u_recovered.csv", rep.u_recovered)
    write_field(out / "weight.csv", rep.a)
    write_pgm(out / "c_recovered.pgm", rep.c_recovered)
    write_report(out / "imaging.json", {
        "command": "imaging",
        "threads": threads,
        "problem": asdict(spec),
        "phantom": args.phantom,
        "imaging": rep.as_dict(),
    })
    write_timing(out / "timing.json", {"wall_time_s": wall})
    if spec.figures:
        from . import plots

        plots.imaging_figure(out / "imaging.png", c_true, rep.c_recovered, mask)
    print(f"phantom {args.phantom}: rel L2 error c {rep.rel_l2_error_c:.3e}, "
          f"u {rep.rel_l2_error_u:.3e}, excluded {rep.excluded_fraction:.2%}")
    print(f"wrote {out / 'imaging.json'}")
    return 0 if rep.solve.converged else 3


def cmd_gallery(args) -> int:
    if args.list:
        for entry in gallery_list():
            print(f"{entry.id}: {entry.description}")
        return 0
    ids = [e.id for e in gallery_list()] if args.all else args.ids
    if not ids:
        raise ConfigError("give entry ids, --all, or --list")
    threads = _threads()
    failed = []
    for eid in ids:
        result = gallery_run(eid)
        print(f"{eid}: {'pass' if result['passed'] else 'FAIL'}")
        for check in result["checks"]:
            if not check["ok"]:
                print(f"  {check['name']}: expected {check['expected']}, "
                      f"got {check['actual']!r}")
        if args.out:
            result["threads"] = threads
            write_report(Path(args.out) / f"{eid}.json", result)
        if not result["passed"]:
            failed.append(eid)
    if failed:
        print(f"regressions: {', '.join(failed)}")
        return 1
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="leastgrad",
                     description="Anisotropic least gradient problems on 2-D grids.")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="minimize the relaxed energy, write fields and report")
    _add_problem_flags(p)
    p.add_argument("--gallery", help="start from a gallery entry's problem")
    p.add_argument("--levels", type=int, default=9, help="contour level count")
    p.add_argument("--checkpoint", help="directory to save the solver state into")
    p.add_argument("--resume", help="directory with a saved solver state to continue")
    p.add_argument("--extra-iters", type=int, dest="extra_iters",
                   help="iteration budget when resuming (default: max-iters)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="re-evaluate the duality gap for saved fields")
    _add_problem_flags(p)
    p.add_argument("--gallery", help="problem from a gallery entry")
    p.add_argument("--fields", required=True, help="directory with u.csv, T_x.csv, T_y.csv")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("structure", help="alignment and boundary-jump diagnostics")
    _add_problem_flags(p)
    p.add_argument("--gallery", help="problem from a gallery entry")
    p.add_argument("--fields", help="saved fields to diagnose (default: solve first)")
    p.add_argument("--jump-tol", type=float, dest="jump_tol",
                   help="absolute jump threshold (default: scale-aware)")
    p.add_argument("--levels", type=int, default=9, help="contour level count")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("barrier", help="trace-attainment check for a shape and metric")
    _add_problem_flags(p, solver=False)
    p.add_argument("--band-width", type=float, dest="band_width",
                   help="distance band for the indicator field (default 3h)")
    p.add_argument("--delta", type=float, help="classification threshold (default 10h)")
    p.set_defaults(func=cmd_barrier)

    p = sub.add_parser("perimeter", help="phi-perimeter of a set inside a domain")
    _add_problem_flags(p, solver=False)
    p.add_argument("--set", required=True, help="subset shape spec to measure")
    p.set_defaults(func=cmd_perimeter)

    p = sub.add_parser("imaging", help="conductivity round trip on a phantom")
    _add_problem_flags(p)
    p.add_argument("--phantom", required=True, choices=("constant", "layered", "bump"))
    p.add_argument("--forward-refine", type=int, dest="forward_refine", default=1,
                   choices=(1, 2), help="forward-solve on a 2x finer grid")
    p.add_argument("--grad-floor", type=float, dest="grad_floor",
                   help="gradient exclusion floor (default: scale-aware)")
    p.set_defaults(func=cmd_imaging)

    p = sub.add_parser("gallery", help="run built-in examples against pinned values")
    p.add_argument("ids", nargs="*", help="entry ids to run")
    p.add_argument("--list", action="store_true", help="list entries and exit")
    p.add_argument("--all", action="store_true", help="run every entry")
    p.add_argument("--out", help="directory for per-entry JSON reports")
    p.set_defaults(func=cmd_gallery)

    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except LeastGradError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
