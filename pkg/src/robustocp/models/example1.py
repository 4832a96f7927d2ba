"""Scalar system whose worst-case parameter lies inside its interval."""

from __future__ import annotations

import numpy as np

from ..core import DecisionVector, ProblemDefinition, UncertaintyBounds

A = -0.5
B = 1.0
U_REF = np.array([-1.0, 1.0, -1.0, -1.0, 1.0])
D_RANGE = (-0.5, 0.5)


def example1_problem(all_steps: bool = False) -> ProblemDefinition:
    """``x+ = (A + d) x + B u`` over five steps with ``x_5 <= 0``.

    The input is ``u_k = U_REF[k] + q_k``; the initial guess ``q = 0`` is the
    fixed input sequence for which the worst case over ``d in [-0.5, 0.5]``
    sits near ``d = 0.1955``.  The cost is ``sum q_k^2``.  The terminal
    constraint is folded into step ``N - 1`` as ``g_{N-1} = f(x_{N-1}, u_{N-1})``;
    with ``all_steps=True`` every ``x_{k+1} <= 0`` is enforced instead.
    """
    N = U_REF.size

    def dynamics(k, x, u, w, d):
        return (A + d) * x + B * u

    def policy(k, x_hist, q, r):
        return (U_REF[k] + q[:, k])[:, None]

    def stage_cost(k, x, u, w, d):
        return (u[:, 0] - U_REF[k]) ** 2

    def constraints(k, x, u, w, d):
        return dynamics(k, x, u, w, d)

    mask = np.ones((N, 1), dtype=bool)
    if not all_steps:
        mask[:-1] = False
    return ProblemDefinition(
        N=N,
        n_x=1,
        n_u=1,
        n_q=N,
        n_r=0,
        x0=np.zeros(1),
        dynamics=dynamics,
        policy=policy,
        stage_cost=stage_cost,
        constraints=constraints,
        n_g=1,
        bounds=UncertaintyBounds(np.zeros(0), np.zeros(0), [D_RANGE[0]], [D_RANGE[1]]),
        constraint_mask=mask,
        constraint_names=("x_next",),
        initial_guess=DecisionVector(np.zeros(N), np.zeros(0), 0.0),
        name="example1",
    )
