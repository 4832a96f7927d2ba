"""Decision, scenario-set and history files.

Decisions and scenario sets are JSON documents; floats are written with
``repr`` precision so reading a file back gives bit-identical arrays.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DecisionVector, ProblemDefinition, Scenario
from .reduction import Candidate, IterationRecord, ScenarioSet

__all__ = [
    "ArtifactError",
    "write_decision",
    "read_decision",
    "write_scenario_set",
    "read_scenario_set",
    "write_history_csv",
    "write_candidates_csv",
    "HISTORY_COLUMNS",
]

FORMAT_VERSION = 1
HISTORY_COLUMNS = (
    "iteration",
    "g_max",
    "component",
    "step",
    "gamma",
    "scenario_count",
    "accepted",
    "lower_status",
    "elapsed_s",
    "epsilon",
    "worst_d",
)


class ArtifactError(ValueError):
    pass


def _load(path, kind):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: cannot read {kind} file ({exc})") from None
    if doc.get("format") != f"robustocp.{kind}" or doc.get("version") != FORMAT_VERSION:
        raise ArtifactError(f"{path}: not a version {FORMAT_VERSION} {kind} file")
    return doc


def write_decision(decision: DecisionVector, path: str | Path, model: str | None = None) -> None:
    doc = {
        "format": "robustocp.decision",
        "version": FORMAT_VERSION,
        "model": model,
        "q": decision.q.tolist(),
        "r": decision.r.tolist(),
        "gamma": float(decision.gamma),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_decision(path: str | Path, problem: ProblemDefinition | None = None) -> DecisionVector:
    """Read a decision file; with ``problem``, dimensions are checked."""
    doc = _load(path, "decision")
    decision = DecisionVector(np.array(doc["q"], dtype=float), np.array(doc["r"], dtype=float), float(doc["gamma"]))
    if problem is not None:
        if decision.q.size != problem.n_q or decision.r.size != problem.n_r:
            raise ArtifactError(
                f"{path}: decision has n_q={decision.q.size}, n_r={decision.r.size}; "
                f"model {problem.name} expects n_q={problem.n_q}, n_r={problem.n_r}"
            )
    return decision


def write_scenario_set(scenarios: ScenarioSet | Sequence[Scenario], path: str | Path, epsilon: float | None = None) -> None:
    items = list(getattr(scenarios, "scenarios", scenarios))
    eps = getattr(scenarios, "epsilon", epsilon)
    doc = {
        "format": "robustocp.scenario_set",
        "version": FORMAT_VERSION,
        "epsilon": eps,
        "scenarios": [{"w_shape": list(s.w.shape), "w": s.w.tolist(), "d": s.d.tolist()} for s in items],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_scenario_set(path: str | Path, problem: ProblemDefinition | None = None) -> ScenarioSet:
    doc = _load(path, "scenario_set")
    scenarios = []
    for i, item in enumerate(doc["scenarios"]):
        w = np.array(item["w"], dtype=float).reshape(item["w_shape"])
        sc = Scenario(w, np.array(item["d"], dtype=float))
        if problem is not None:
            try:
                problem.check_scenario(sc)
            except ValueError as exc:
                raise ArtifactError(f"{path}: scenario {i}: {exc}") from None
        scenarios.append(sc)
    eps = doc.get("epsilon")
    return ScenarioSet(scenarios, 1e-3 if eps is None else float(eps))


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def write_history_csv(history: Sequence[IterationRecord], path: str | Path) -> None:
    """One row per outer iteration; ``worst_d`` is space-separated."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in history:
            writer.writerow(
                [
                    rec.iteration,
                    _num(rec.g_max),
                    rec.g_component,
                    "" if rec.g_step is None else rec.g_step,
                    _num(rec.gamma),
                    rec.scenario_count,
                    rec.accepted,
                    rec.lower_status or "",
                    f"{rec.elapsed:.3f}",
                    _num(rec.epsilon),
                    " ".join(repr(float(v)) for v in rec.worst_scenario.d),
                ]
            )


def write_candidates_csv(candidates: Sequence[Candidate], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "G", "component", "step", "d"])
        for i, c in enumerate(candidates):
            writer.writerow(
                [i, _num(c.G), c.component, "" if c.step is None else c.step, " ".join(repr(float(v)) for v in c.scenario.d)]
            )
