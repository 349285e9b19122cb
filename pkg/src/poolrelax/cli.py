"""Command-line front end: ``poolrelax generate|solve|report|verify``.

Exit codes: 0 success, 1 a ``verify`` check failed, 2 unreadable input,
3 solver failure, 4 a rescheduled schedule is unrepairable.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import io as instance_io
from . import pformulation
from .conic.backends import get_backend
from .conic.certify import certify
from .ffs import DEFAULT_ALPHA
from .generate import FAMILIES, REFERENCE_SHAPES, family_spec, generate, reference_spec
from .pipeline import MODES, PipelineError, PipelineOptions, run_pipeline, run_static
from .qcqp import DEFAULT_DELTA, build_qcqp
from .relax import LP, RELAX_CONFIG, SOCP, RelaxError, complete_to_psd, dual_reduce, solve_relaxation
from .report import from_row, read_csv, to_csv, to_table

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_UNREPAIRABLE = 4

PSD_TOL = 1e-8
SHIFT_TOL = 1e-10


class _InputError(Exception):
    pass


def _shape(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("shape is MS,MI,MP,MT") from None
    if len(vals) != 4 or min(vals) < 1:
        raise argparse.ArgumentTypeError("shape is four positive integers MS,MI,MP,MT")
    return vals


def _spec_from_args(args):
    if args.reference is not None:
        return reference_spec(args.reference, seed=args.seed, family=args.family)
    return family_spec(*args.shape, seed=args.seed, family=args.family)


def _read_problem(path):
    """An :class:`Instance` or a :class:`PFormulation`, chosen by the header line."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror}") from None
    first = next((ln.split("#", 1)[0].strip() for ln in text.splitlines() if ln.split("#", 1)[0].strip()), "")
    try:
        if first == pformulation.HEADER:
            return pformulation.parse(text)
        return instance_io.loads(text)
    except (instance_io.ParseError, pformulation.PFormatError) as exc:
        raise _InputError(f"{path}: {exc}") from None


def _options(args):
    cfg = RELAX_CONFIG
    if args.tol is not None:
        cfg = replace(cfg, tol_gap=args.tol, tol_feas_primal=args.tol, tol_feas_dual=args.tol)
    return PipelineOptions(delta=args.delta, alpha=args.alpha, backend=args.backend, solver_config=cfg,
                           ffs_time_limit=args.ffs_time_limit, also_other_relaxation=args.both)


def _solve_one(job):
    """Worker body; returns ``(report, schedule_arrays_or_None, error)``."""
    problem, relax, mode, opt = job
    try:
        if isinstance(problem, pformulation.PFormulation):
            rep, _ = run_static(problem, relax, opt)
            return rep, None, None
        rep, s, _ = run_pipeline(problem, relax, mode, opt)
        return rep, s, None
    except PipelineError as exc:
        return None, None, str(exc)


def cmd_generate(args):
    inst = generate(_spec_from_args(args))
    text = instance_io.dumps(inst)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args):
    problems = [_read_problem(p) for p in args.files]
    if args.shape is not None or args.reference is not None:
        problems.append(generate(_spec_from_args(args)))
    if not problems:
        raise _InputError("give instance files, --shape or --reference")
    if args.mode != "relax" and any(isinstance(p, pformulation.PFormulation) for p in problems):
        raise _InputError("static P-formulation files support --mode relax only")
    opt = _options(args)
    jobs = [(p, args.relax.upper(), args.mode, opt) for p in problems]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]
    reports = []
    code = EXIT_OK
    for (problem, *_), (rep, s, err) in zip(jobs, results):
        if err is not None:
            print(f"error: {problem.name}: {err}", file=sys.stderr)
            code = EXIT_SOLVER
            continue
        reports.append(rep)
        if s is not None and args.schedule_dir:
            os.makedirs(args.schedule_dir, exist_ok=True)
            instance_io.dump_schedule(problem, s, os.path.join(args.schedule_dir, f"{rep.instance}_{rep.method}.npz"))
        if rep.unrepairable and code == EXIT_OK:
            code = EXIT_UNREPAIRABLE
    if reports:
        sys.stdout.write(to_table(reports))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(to_csv(reports))
    return code


def cmd_report(args):
    reports = []
    for path in args.files:
        try:
            with open(path, encoding="utf-8") as fh:
                rows = read_csv(fh.read())
            reports.extend(from_row(r) for r in rows)
        except OSError as exc:
            raise _InputError(f"{path}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise _InputError(f"{path}: {exc}") from None
    if not reports:
        raise _InputError("no report rows found")
    sys.stdout.write(to_table(reports, digits=args.digits))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(to_csv(reports))
    return EXIT_OK


def _check(label, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    return ok


def cmd_verify(args):
    problem = _read_problem(args.file)
    if isinstance(problem, pformulation.PFormulation):
        qp = pformulation.build_static_qcqp(problem, delta=args.delta)
    else:
        qp = build_qcqp(problem, delta=args.delta)
    tol = args.tol if args.tol is not None else 1e-5
    try:
        lp = solve_relaxation(qp, LP, backend=args.backend)
        if not lp.usable:
            print(f"error: LP relaxation ended with status {lp.status}", file=sys.stderr)
            return EXIT_SOLVER
        zeta = lp.objective
        cert = certify(lp.solution, lp.program, tol=1e-7)
        ok = _check("LP certificate", cert.passed, cert.summary())
        comp = complete_to_psd(lp.moment, lp.w)
        ok &= _check("PSD completion", comp.lambda_min >= -PSD_TOL
                     and abs(comp.objective_change) <= SHIFT_TOL * (1 + abs(zeta)),
                     f"lambda_min {comp.lambda_min:.3e}, objective change {comp.objective_change:.3e}")
        rd = dual_reduce(lp.moment)
        dsol = get_backend(args.backend).solve(rd.program, RELAX_CONFIG)
        if not dsol.usable:
            print(f"error: reduced dual ended with status {dsol.status}", file=sys.stderr)
            return EXIT_SOLVER
        mu = float(dsol.x[rd.program.meta["mu_index"]])
        ok &= _check("duality gap", abs(mu - zeta) / (1 + abs(zeta)) <= tol,
                     f"zeta {zeta:.10g}, mu {mu:.10g}")
        if args.relax.upper() == SOCP:
            so = solve_relaxation(qp, SOCP, backend="reference", mm=lp.moment)
            if not so.usable:
                print(f"error: SOCP relaxation ended with status {so.status}", file=sys.stderr)
                return EXIT_SOLVER
            ok &= _check("LP = SOCP", abs(so.objective - zeta) / (1 + abs(zeta)) <= tol,
                         f"zeta_LP {zeta:.10g}, zeta_SOCP {so.objective:.10g}")
    except RelaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser():
    ap = argparse.ArgumentParser(prog="poolrelax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def gen_flags(p, required):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--shape", type=_shape, help="MS,MI,MP,MT")
        g.add_argument("--reference", type=int, choices=range(1, len(REFERENCE_SHAPES) + 1),
                       help="one of the reference shapes (1-based)")
        p.add_argument("--family", choices=FAMILIES, default="default")
        p.add_argument("--seed", type=int, default=0)

    def solver_flags(p):
        p.add_argument("--relax", choices=("lp", "socp", "LP", "SOCP"), default="lp")
        p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="penalty weight")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--backend", choices=("reference", "highs"), default="reference")

    g = sub.add_parser("generate", help="write a generated instance file")
    gen_flags(g, required=True)
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the pipeline on instance files or a generated instance")
    s.add_argument("files", nargs="*")
    gen_flags(s, required=False)
    solver_flags(s)
    s.add_argument("--mode", choices=MODES, default="relax")
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="weight of the distance term")
    s.add_argument("--ffs-time-limit", type=float, default=60.0)
    s.add_argument("--both", action="store_true", help="also solve the other relaxation (recorded in history)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes across instances")
    s.add_argument("--schedule-dir", help="write each recovered schedule as .npz here")
    s.add_argument("--out", help="CSV report path")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("report", help="merge report CSVs into one table")
    r.add_argument("files", nargs="+")
    r.add_argument("--digits", type=int, default=4)
    r.add_argument("--out", help="merged CSV path")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="completion, certificate and duality-gap checks on the LP relaxation")
    v.add_argument("file")
    solver_flags(v)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
