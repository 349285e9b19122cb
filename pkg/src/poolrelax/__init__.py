"""Conic relaxations and feasible-schedule recovery for the time-discretized pooling problem."""

from .ffs import ffs
from .generate import GeneratorSpec, family_spec, generate, reference_spec
from .io import dump, dumps, load, loads
from .model import Instance, Schedule, objective, residuals, sucs_ratio
from .pipeline import PipelineOptions, run_pipeline
from .qcqp import build_qcqp
from .relax import LP, SOCP, complete_to_psd, dual_reduce, solve_relaxation
from .report import SolveReport, to_csv, to_table
from .reschedule import reschedule

__all__ = [
    "GeneratorSpec", "Instance", "LP", "PipelineOptions", "SOCP", "Schedule", "SolveReport", "build_qcqp",
    "complete_to_psd", "dual_reduce", "dump", "dumps", "family_spec", "ffs", "generate", "load", "loads",
    "objective", "reference_spec", "reschedule", "residuals", "run_pipeline", "solve_relaxation", "sucs_ratio",
    "to_csv", "to_table",
]
