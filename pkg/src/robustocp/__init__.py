"""Robust optimal control of uncertain discrete-time systems by local reduction."""

from .core import (
    BatchRollout,
    DecisionVector,
    DivergedRolloutError,
    GValue,
    ProblemDefinition,
    Rollout,
    Scenario,
    UncertaintyBounds,
    evaluate_G,
    evaluate_G_batch,
    evaluate_G_max,
    rollout,
    rollout_batch,
)
from .nlp import NlpOptions, NlpProblem, NlpResult, NlpStatus, maximize, minimize
from .reduction import (
    Candidate,
    IterationRecord,
    LocalReductionConfig,
    RunResult,
    RunStatus,
    ScenarioSet,
    find_worst_case,
    is_new_scenario,
    run,
    solve_lower,
)
from .validation import ValidationReport, validate

__version__ = "0.1.0"

__all__ = [
    "BatchRollout",
    "Candidate",
    "DecisionVector",
    "DivergedRolloutError",
    "GValue",
    "IterationRecord",
    "LocalReductionConfig",
    "NlpOptions",
    "NlpProblem",
    "NlpResult",
    "NlpStatus",
    "ProblemDefinition",
    "Rollout",
    "RunResult",
    "RunStatus",
    "Scenario",
    "ScenarioSet",
    "UncertaintyBounds",
    "ValidationReport",
    "evaluate_G",
    "evaluate_G_batch",
    "evaluate_G_max",
    "find_worst_case",
    "is_new_scenario",
    "maximize",
    "minimize",
    "rollout",
    "rollout_batch",
    "run",
    "solve_lower",
    "validate",
]
