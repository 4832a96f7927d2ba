"""Small problems shared by the test modules."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from robustocp.core import DecisionVector, ProblemDefinition, UncertaintyBounds

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def scalar_problem(
    N: int = 3,
    a: float = 0.9,
    b: float = 1.0,
    x0: float = 0.0,
    w_box: tuple[float, float] = (-0.1, 0.1),
    d_box: tuple[float, float] = (-0.2, 0.2),
    x_max: float = 1.0,
    with_feedback: bool = True,
) -> ProblemDefinition:
    """``x+ = (a + d) x + b u + w`` with ``u_k = q_k + r x_k`` and ``x_k <= x_max``.

    Cost ``sum u_k^2 + (x_k - 1)^2``; one constraint row ``x - x_max``.
    """

    def dynamics(k, x, u, w, d):
        return (a + d[:, :1]) * x + b * u + w

    def policy(k, x_hist, q, r):
        u = q[:, k]
        if with_feedback:
            u = u + r[:, 0] * x_hist[:, k, 0]
        return u[:, None]

    def stage_cost(k, x, u, w, d):
        return u[:, 0] ** 2 + (x[:, 0] - 1.0) ** 2

    def constraints(k, x, u, w, d):
        return x - x_max

    return ProblemDefinition(
        N=N,
        n_x=1,
        n_u=1,
        n_q=N,
        n_r=1 if with_feedback else 0,
        x0=np.array([x0]),
        dynamics=dynamics,
        policy=policy,
        stage_cost=stage_cost,
        constraints=constraints,
        n_g=1,
        bounds=UncertaintyBounds([w_box[0]], [w_box[1]], [d_box[0]], [d_box[1]]),
        constraint_names=("x_high",),
        name="scalar",
    )


def smooth_landscape_problem(seed: int, n_d: int) -> tuple[ProblemDefinition, DecisionVector]:
    """Random two-step problem with ``n_w = 0`` and ``n_d`` constant parameters.

    The constraint and cost depend smoothly and nonlinearly on ``d``, so the
    worst case may sit in the interior of the box or on its boundary.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, size=(4, 2))
    curv = rng.uniform(-1.0, 0.3, size=2)
    freq = rng.uniform(1.0, 3.0, size=2)
    lo = rng.uniform(-1.0, -0.2, size=n_d)
    hi = rng.uniform(0.2, 1.0, size=n_d)

    def _shape(d, i):
        t = d[:, 0] if n_d == 1 else d[:, 0] + 0.5 * c[3, i] * d[:, 1] + c[2, i] * np.sin(freq[i] * d[:, 1])
        return c[0, i] * t + curv[i] * t * t + 0.3 * c[1, i] * np.cos(freq[i] * t)

    def dynamics(k, x, u, w, d):
        return 0.5 * x + u + _shape(d, k)[:, None]

    def policy(k, x_hist, q, r):
        return q[:, k : k + 1]

    def stage_cost(k, x, u, w, d):
        return u[:, 0] ** 2 + 0.1 * _shape(d, 1 - k) ** 2

    def constraints(k, x, u, w, d):
        return dynamics(k, x, u, w, d) - 0.5

    problem = ProblemDefinition(
        N=2,
        n_x=1,
        n_u=1,
        n_q=2,
        n_r=0,
        x0=np.zeros(1),
        dynamics=dynamics,
        policy=policy,
        stage_cost=stage_cost,
        constraints=constraints,
        n_g=1,
        bounds=UncertaintyBounds(np.zeros(0), np.zeros(0), lo, hi),
        name=f"landscape{seed}",
    )
    decision = DecisionVector(rng.uniform(-0.3, 0.3, size=2), np.zeros(0), float(rng.uniform(0.0, 1.0)))
    return problem, decision


def grid_max_G(problem: ProblemDefinition, decision: DecisionVector, points: int = 10_000) -> float:
    """Largest ``G`` on a tensor grid of about ``points`` nodes over the ``d`` box."""
    from robustocp.core import evaluate_G_batch, rollout_batch

    lo, hi = problem.bounds.d_lower, problem.bounds.d_upper
    per_axis = int(round(points ** (1.0 / lo.size)))
    axes = [np.linspace(lo[i], hi[i], per_axis) for i in range(lo.size)]
    D = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    W = np.zeros((D.shape[0], problem.N, 0))
    batch = rollout_batch(problem, decision.q[None], decision.r[None], W, D)
    values, _ = evaluate_G_batch(batch, decision.gamma)
    return float(values.max())


@pytest.fixture
def scalar():
    return scalar_problem()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdicts as a block at the end of the session."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
