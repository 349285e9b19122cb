"""End-to-end runs: relaxation, then optional recovery and rescheduling."""

import time
from dataclasses import dataclass

import numpy as np

from .ffs import DEFAULT_ALPHA, FfsError, ffs
from .model import Instance, objective, residuals
from .qcqp import DEFAULT_DELTA, build_qcqp
from .relax import LP, SOCP, RelaxError, solve_relaxation
from .report import RECOVERED, RELAXED, SolveReport
from .reschedule import RescheduleConfig, RescheduleError, _sucs, reschedule

MODES = ("relax", "ffs", "reschedule")
RELAX_KINDS = (LP, SOCP)


class PipelineError(RuntimeError):
    """A phase failed; ``phase`` names it."""

    def __init__(self, phase, message):
        super().__init__(f"{phase}: {message}")
        self.phase = phase


@dataclass
class PipelineOptions:
    delta: float = DEFAULT_DELTA
    alpha: float = DEFAULT_ALPHA
    backend: str = "reference"
    solver_config: object = None
    ffs_time_limit: float = 60.0
    ffs_node_limit: int = 20_000
    also_other_relaxation: bool = False


def run_pipeline(inst, relax=LP, mode="relax", options=None):
    """Run one instance; returns ``(report, schedule_or_None, relax_result)``."""
    if not isinstance(inst, Instance):
        raise TypeError("run_pipeline expects an Instance; parse files with poolrelax.io.load")
    relax = relax.upper()
    if relax not in RELAX_KINDS:
        raise ValueError(f"relax must be one of {RELAX_KINDS}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    opt = options or PipelineOptions()
    t0 = time.perf_counter()
    qp = build_qcqp(inst, delta=opt.delta)
    try:
        rr = solve_relaxation(qp, relax, backend=opt.backend, config=opt.solver_config)
    except RelaxError as exc:
        raise PipelineError("relax", str(exc)) from exc
    if not rr.usable:
        raise PipelineError("relax", f"{relax} relaxation ended with status {rr.status}")
    t_relax = time.perf_counter() - t0
    report = SolveReport(instance=inst.name, relax_kind=relax, mode=mode, relax_obj_start=rr.objective,
                         times={"relax": t_relax}, termination=RELAXED)
    if not rr.optimal:
        report.history.append({"relaxation": relax, "status": rr.status, "reason": rr.solution.info.get("reason")})
    if opt.also_other_relaxation:
        other = SOCP if relax == LP else LP
        ro = solve_relaxation(qp, other, backend="reference", config=opt.solver_config, mm=rr.moment)
        report.history.append({"relaxation": other, "status": ro.status, "objective": ro.objective})
    if mode == "relax":
        report.times["total"] = time.perf_counter() - t0
        return report, None, rr

    ref = qp.meta["varmap"].from_x(rr.x[: qp.n])
    t1 = time.perf_counter()
    try:
        fr = ffs(inst, ref.p, ref.q, opt.alpha, time_limit=opt.ffs_time_limit, node_limit=opt.ffs_node_limit)
    except FfsError as exc:
        raise PipelineError("ffs", str(exc)) from exc
    report.times["ffs"] = time.perf_counter() - t1
    if mode == "ffs":
        s = fr.schedule
        report.recovered_obj = objective(inst, s)
        report.sucs_ratio = _sucs(inst, s)
        report.max_residual = residuals(inst, s).dynamics_max()
        report.termination = RECOVERED
        report.history.append({"ffs_status": fr.bnb.status, "ffs_gap": fr.bnb.gap, "nodes": fr.bnb.nodes})
        report.times["total"] = time.perf_counter() - t0
        return report, s, rr

    cfg = RescheduleConfig(delta=opt.delta, alpha=opt.alpha, backend=opt.backend,
                           solver_config=opt.solver_config, ffs_time_limit=opt.ffs_time_limit,
                           ffs_node_limit=opt.ffs_node_limit)
    try:
        s, rep = reschedule(inst, relax, cfg, initial=(fr.schedule, rr.objective))
    except (RescheduleError, FfsError) as exc:
        raise PipelineError("reschedule", str(exc)) from exc
    rep.relax_obj_start = rr.objective
    rep.times["relax"] += t_relax
    rep.times["ffs"] += report.times["ffs"]
    rep.times["total"] = time.perf_counter() - t0
    rep.sucs_ratio = _sucs(inst, s)
    rep.history = report.history + rep.history
    return rep, s, rr


def run_static(pf, relax=LP, options=None):
    """Relaxation of a static P-formulation problem; returns ``(report, relax_result)``."""
    from .pformulation import build_static_qcqp

    relax = relax.upper()
    if relax not in RELAX_KINDS:
        raise ValueError(f"relax must be one of {RELAX_KINDS}")
    opt = options or PipelineOptions()
    t0 = time.perf_counter()
    qp = build_static_qcqp(pf, delta=opt.delta)
    try:
        rr = solve_relaxation(qp, relax, backend=opt.backend, config=opt.solver_config)
    except RelaxError as exc:
        raise PipelineError("relax", str(exc)) from exc
    if not rr.usable:
        raise PipelineError("relax", f"{relax} relaxation ended with status {rr.status}")
    dt = time.perf_counter() - t0
    report = SolveReport(instance=pf.name, relax_kind=relax, mode="relax", relax_obj_start=rr.objective,
                         times={"relax": dt, "total": dt}, termination=RELAXED)
    if not rr.optimal:
        report.history.append({"relaxation": relax, "status": rr.status, "reason": rr.solution.info.get("reason")})
    return report, rr


def schedule_summary(inst, s):
    """Small dict of headline numbers for a schedule."""
    rep = residuals(inst, s)
    return {"objective": objective(inst, s), "sucs_ratio": _sucs(inst, s),
            "dynamics_residual": rep.dynamics_max(), "total_shortage": float(np.sum(s.v))}
