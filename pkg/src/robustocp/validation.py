"""Monte Carlo validation of a fixed decision against random realisations."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DecisionVector, ProblemDefinition, Scenario, evaluate_G_batch, rollout_batch

__all__ = ["ValidationReport", "validate", "sample_scenarios", "write_report_csv", "write_trajectories_csv"]


@dataclass(frozen=True)
class ValidationReport:
    """Statistics of ``G`` over i.i.d. uniform samples of the uncertainty box.

    Attributes
    ----------
    max_violation : float
        Largest ``G`` over the samples, signed; ``+inf`` if a rollout diverged.
    max_constraint_violation : float
        Largest constraint value ``g`` over the samples, ignoring the cost part.
    violation_rate : float
        Fraction of samples with ``G > 0`` (diverged samples included).
    step_envelope : ndarray, shape (N,)
        Per step, the largest enforced constraint value over samples and rows.
    row_max : ndarray, shape (n_g,)
        Per constraint row, the largest value over samples and steps.
    G, components, steps : per-sample ``G`` value, maximising component name
        and its step (``-1`` for the cost).
    """

    n_samples: int
    seed: int
    max_violation: float
    max_constraint_violation: float
    violation_rate: float
    step_envelope: np.ndarray
    row_max: np.ndarray
    worst_index: int
    worst_scenario: Scenario
    diverged: int
    G: np.ndarray
    components: tuple[str, ...]
    steps: np.ndarray

    def summary(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "max_violation": self.max_violation,
            "max_constraint_violation": self.max_constraint_violation,
            "violation_rate": self.violation_rate,
            "diverged": self.diverged,
            "worst_index": self.worst_index,
        }


def sample_scenarios(problem: ProblemDefinition, n_samples: int, seed: int) -> np.ndarray:
    """Uniform samples of the stacked ``(vec(w), d)``, one row per sample.

    Rows are drawn in order from one stream, so a smaller ``n_samples``
    with the same seed gives a prefix of a larger draw.
    """
    lo, hi = problem.bounds.flat_box(problem.N)
    u = np.random.default_rng(seed).random((n_samples, lo.size))
    return lo + u * (hi - lo)


def validate(
    problem: ProblemDefinition,
    decision: DecisionVector,
    n_samples: int,
    seed: int = 0,
    batch_size: int = 2000,
) -> ValidationReport:
    """Simulate ``decision`` on ``n_samples`` uniform realisations and collect ``G`` statistics."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    problem.check_decision(decision)
    V = sample_scenarios(problem, n_samples, seed)
    N, n_w, n_g = problem.N, problem.n_w, problem.n_g
    nw = N * n_w
    G = np.empty(n_samples)
    arg = np.empty(n_samples, dtype=int)
    gmax = np.full(n_samples, -np.inf)
    envelope = np.full(N, -np.inf)
    row_max = np.full(n_g, -np.inf)
    diverged = np.zeros(n_samples, dtype=bool)
    for a in range(0, n_samples, batch_size):
        b = min(a + batch_size, n_samples)
        chunk = V[a:b]
        batch = rollout_batch(
            problem, decision.q[None], decision.r[None], chunk[:, :nw].reshape(b - a, N, n_w), chunk[:, nw:]
        )
        G[a:b], arg[a:b] = evaluate_G_batch(batch, decision.gamma)
        div = batch.diverged
        diverged[a:b] = div
        g = batch.g_values[~div]
        if g.size:
            gmax[a:b][~div] = g.reshape(g.shape[0], -1).max(axis=1)
            envelope = np.maximum(envelope, g.max(axis=(0, 2)))
            row_max = np.maximum(row_max, g.max(axis=(0, 1)))
        gmax[a:b][div] = np.inf
    worst = int(np.argmax(G))
    steps = np.where(arg < 0, -1, arg // n_g)
    components = tuple(
        "diverged" if diverged[i] else problem.component_name(None if arg[i] < 0 else int(arg[i] % n_g))
        for i in range(n_samples)
    )
    return ValidationReport(
        n_samples=n_samples,
        seed=seed,
        max_violation=float(G[worst]),
        max_constraint_violation=float(np.max(gmax)),
        violation_rate=float(np.mean(G > 0)),
        step_envelope=envelope,
        row_max=row_max,
        worst_index=worst,
        worst_scenario=Scenario.from_flat(V[worst], N, n_w),
        diverged=int(diverged.sum()),
        G=G,
        components=components,
        steps=np.where(diverged, -1, steps),
    )


def write_report_csv(report: ValidationReport, path: str | Path) -> None:
    """One row per sample after a ``#``-prefixed summary block."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, value in report.summary().items():
            fh.write(f"# {key}: {_fmt(value)}\n")
        fh.write("# step_envelope: " + " ".join(_fmt(v) for v in report.step_envelope) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["sample", "G", "component", "step"])
        for i in range(report.n_samples):
            writer.writerow([i, _fmt(report.G[i]), report.components[i], int(report.steps[i])])


def write_trajectories_csv(
    problem: ProblemDefinition,
    decision: DecisionVector,
    path: str | Path,
    n_samples: int,
    seed: int = 0,
) -> None:
    """Long-format state and input trajectories of the first ``n_samples`` validation samples."""
    V = sample_scenarios(problem, n_samples, seed)
    N, n_w = problem.N, problem.n_w
    batch = rollout_batch(
        problem, decision.q[None], decision.r[None], V[:, : N * n_w].reshape(n_samples, N, n_w), V[:, N * n_w :]
    )
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample", "step"] + [f"x{i}" for i in range(problem.n_x)] + [f"u{i}" for i in range(problem.n_u)]
        )
        for s in range(n_samples):
            for k in range(N + 1):
                u = batch.u[s, k] if k < N else np.full(problem.n_u, np.nan)
                writer.writerow([s, k] + [_fmt(v) for v in batch.x[s, k]] + [_fmt(v) for v in u])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)
