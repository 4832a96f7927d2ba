"""Local reduction for robust optimal control.

The outer loop alternates a scenario-lifted minimisation over the policy
parameters with a multistart search for the uncertainty realisation that
violates the constraints most, until no violating realisation is left.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    DecisionVector,
    ProblemDefinition,
    Scenario,
    evaluate_G_batch,
    rollout_batch,
)
from .nlp import NlpOptions, NlpProblem, NlpResult, NlpStatus, fd_stencil, maximize, minimize

logger = logging.getLogger(__name__)

__all__ = [
    "ScenarioSet",
    "LocalReductionConfig",
    "IterationRecord",
    "LowerSolution",
    "Candidate",
    "RunStatus",
    "RunResult",
    "WorstCaseSearchError",
    "is_new_scenario",
    "scenarios_similar",
    "solve_lower",
    "solve_lower_lifted",
    "find_worst_case",
    "run",
]


# -- scenario bookkeeping ---------------------------------------------------


def scenarios_similar(a: Scenario, b: Scenario, epsilon: float) -> bool:
    """Both similarity tests hold: ``|w_a - w_b|^2 / N <= eps`` and ``|d_a - d_b|^2 <= eps``."""
    N = max(a.w.shape[0], 1)
    dw = float(np.sum((a.w - b.w) ** 2)) / N
    dd = float(np.sum((a.d - b.d) ** 2))
    return dw <= epsilon and dd <= epsilon


def is_new_scenario(scenario_set: "ScenarioSet", candidate: Scenario, epsilon: float | None = None) -> bool:
    """True iff ``candidate`` is not epsilon-similar to any stored scenario."""
    eps = scenario_set.epsilon if epsilon is None else epsilon
    return not any(scenarios_similar(candidate, s, eps) for s in scenario_set.scenarios)


@dataclass
class ScenarioSet:
    """Finite scenario set with no two members epsilon-similar."""

    scenarios: list[Scenario]
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.scenarios = list(self.scenarios)
        for i, a in enumerate(self.scenarios):
            for b in self.scenarios[:i]:
                if scenarios_similar(a, b, self.epsilon):
                    raise ValueError("scenario set contains epsilon-similar scenarios")

    @classmethod
    def nominal(cls, problem: ProblemDefinition, epsilon: float = 1e-3) -> "ScenarioSet":
        return cls([problem.nominal_scenario()], epsilon)

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, i):
        return self.scenarios[i]

    def is_new(self, candidate: Scenario) -> bool:
        return is_new_scenario(self, candidate)

    def add(self, candidate: Scenario) -> bool:
        """Append ``candidate`` if it is new; report whether it was added."""
        if self.is_new(candidate):
            self.scenarios.append(candidate)
            return True
        return False

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return np.stack([s.w for s in self.scenarios]), np.stack([s.d for s in self.scenarios])

    def copy(self) -> "ScenarioSet":
        return ScenarioSet(list(self.scenarios), self.epsilon)


# -- configuration and records ----------------------------------------------


@dataclass
class LocalReductionConfig:
    epsilon: float = 1e-3
    tol_G: float = 1e-6
    max_iterations: int = 100
    multistarts: int = 8
    # pool size factor: multistarts * screening points are scored before the local solves
    screening: int = 16
    scenarios_per_iteration: int = 1
    seed: int = 0
    threads: int = 1
    # "argmax": per constraint row, the step that is worst at the start point;
    # "all": one subproblem per (row, step)
    per_step: str = "argmax"
    lower_tol: float = 1e-6
    lower_max_outer: int = 60
    upper_max_inner: int = 500

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.tol_G > 0:
            raise ValueError("tol_G must be > 0")
        if self.multistarts < 1:
            raise ValueError("multistarts must be at least 1")
        if self.screening < 1:
            raise ValueError("screening must be at least 1")
        if self.scenarios_per_iteration < 1:
            raise ValueError("scenarios_per_iteration must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.per_step not in ("argmax", "all"):
            raise ValueError("per_step must be 'argmax' or 'all'")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    g_max: float
    g_component: str
    g_step: int | None
    worst_scenario: Scenario
    gamma: float | None
    scenario_count: int
    accepted: int
    lower_status: str | None
    elapsed: float
    epsilon: float


@dataclass(frozen=True)
class LowerSolution:
    decision: DecisionVector
    status: NlpStatus
    max_G: float
    nlp: NlpResult | None = None
    multipliers: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def converged(self) -> bool:
        return self.status is NlpStatus.CONVERGED


@dataclass(frozen=True)
class Candidate:
    scenario: Scenario
    G: float
    component: str
    step: int | None


class RunStatus(str, Enum):
    SUCCESS = "success"
    STALL = "stall"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class RunResult:
    decision: DecisionVector
    scenario_set: ScenarioSet
    history: list[IterationRecord]
    status: RunStatus

    @property
    def success(self) -> bool:
        return self.status is RunStatus.SUCCESS

    def __iter__(self):
        # allows ``decision, scenario_set, history = run(...)``
        return iter((self.decision, self.scenario_set, self.history))


class WorstCaseSearchError(RuntimeError):
    def __init__(self, message: str, diagnostics: list[str]):
        super().__init__(message + "\n" + "\n".join(diagnostics))
        self.diagnostics = diagnostics


# -- lower level --------------------------------------------------------------


class _LowerLevel:
    """Scenario-lifted minimisation with trajectories substituted by rollout.

    NLP variables are ``y = (theta / theta_scale, gamma / cost_scale)``.
    Constraints: every unmasked ``g`` entry of every scenario, then
    ``J_i / cost_scale - y_gamma`` for every scenario.
    """

    def __init__(self, problem: ProblemDefinition, scenarios: Sequence[Scenario], cost_scale: float):
        self.problem = problem
        self.W, self.D = np.stack([s.w for s in scenarios]), np.stack([s.d for s in scenarios])
        self.S = len(scenarios)
        self.scale = problem.theta_scale
        self.cost_scale = cost_scale
        mask = problem.constraint_mask
        self.mask = np.ones(problem.N * problem.n_g, bool) if mask is None else mask.ravel()
        self.n_theta = problem.n_theta
        self.lower = np.append(problem.theta_lower / self.scale, -np.inf)
        self.upper = np.append(problem.theta_upper / self.scale, np.inf)
        self._key = None

    def _evaluate(self, y):
        key = y.tobytes()
        if key == self._key:
            return
        p, S = self.problem, self.S
        z = y[:-1]
        points, C = fd_stencil(z, self.lower[:-1], self.upper[:-1])
        thetas = np.vstack([z, points]) * self.scale  # (P, n_theta)
        P = thetas.shape[0]
        q, r = p.split_theta(np.repeat(thetas, S, axis=0))
        batch = rollout_batch(p, q, r, np.tile(self.W, (P, 1, 1)), np.tile(self.D, (P, 1)))
        g = batch.g_values.reshape(P, S, -1)[:, :, self.mask].reshape(P, -1)
        J = batch.cost.reshape(P, S) / self.cost_scale
        vals = np.concatenate([g, J], axis=1)  # (P, m)
        self._c = np.concatenate([vals[0, : g.shape[1]], vals[0, g.shape[1] :] - y[-1]])
        jac = np.zeros((vals.shape[1], self.n_theta + 1))
        if self.n_theta:
            jac[:, :-1] = (C @ (vals - vals[0])).T
        jac[g.shape[1] :, -1] = -1.0
        self._jac = jac
        self._key = key

    def inequality(self, y):
        self._evaluate(np.asarray(y, dtype=float))
        return self._c

    def jacobian(self, y):
        self._evaluate(np.asarray(y, dtype=float))
        return self._jac

    def nlp(self) -> NlpProblem:
        n = self.n_theta + 1
        e = np.zeros(n)
        e[-1] = 1.0
        return NlpProblem(
            n=n,
            objective=lambda y: float(y[-1]),
            gradient=lambda y: e,
            inequality=self.inequality,
            jacobian=self.jacobian,
            box_lower=self.lower,
            box_upper=self.upper,
        )


def _costs(problem, theta, W, D):
    q, r = problem.split_theta(theta[None])
    batch = rollout_batch(problem, q, r, W, D)
    return batch


def solve_lower(
    problem: ProblemDefinition,
    scenario_set: ScenarioSet | Sequence[Scenario],
    warm_start: DecisionVector | None = None,
    config: LocalReductionConfig | None = None,
    multipliers: tuple[np.ndarray, np.ndarray] | None = None,
) -> LowerSolution:
    """Minimise ``gamma`` subject to ``G <= 0`` on every scenario of the set.

    The returned ``gamma`` is the largest scenario cost achieved by the
    returned policy, so the epigraph constraint is tight by construction.
    ``multipliers`` (per-scenario constraint and cost multipliers from a
    previous solve, possibly for fewer scenarios) warm-start the solver.
    """
    config = config or LocalReductionConfig()
    scenarios = list(getattr(scenario_set, "scenarios", scenario_set))
    if not scenarios:
        raise ValueError("lower level needs a nonempty scenario set")
    warm = warm_start or problem.initial_guess or problem.zero_decision()
    problem.check_decision(warm)
    theta0 = np.clip(warm.theta, problem.theta_lower, problem.theta_upper)
    W = np.stack([s.w for s in scenarios])
    D = np.stack([s.d for s in scenarios])

    start = _costs(problem, theta0, W, D)
    if np.any(start.diverged):
        raise ValueError("warm start diverges on a scenario of the set")
    gamma0 = max(warm.gamma, float(np.max(start.cost)))
    m_g = int(lower_mask_count(problem))
    S = len(scenarios)
    lam0 = None
    if multipliers is not None:
        # stored unscaled: constraint multipliers per unit cost, cost multipliers sum to one
        lam_g, lam_J = multipliers
        S_old = lam_J.size
        lam0 = (np.zeros((S, m_g)), np.zeros(S))
        lam0[0][:S_old] = lam_g[:S]
        lam0[1][:S_old] = lam_J[:S]

    # The cost is scaled by its current magnitude.  A start at a trivial
    # policy can have a cost orders of magnitude below the optimum, so an
    # unconverged solve is restarted once with the scale of its result.
    cost_scale = _cost_scale(problem, theta0, W, D, gamma0)
    y_theta = theta0 / problem.theta_scale
    for attempt in range(2):
        lower = _LowerLevel(problem, scenarios, cost_scale)
        y0 = np.append(y_theta, gamma0 / cost_scale)
        init = None
        if lam0 is not None:
            init = np.concatenate([lam0[0].ravel() / cost_scale, lam0[1]])
        opts = NlpOptions(
            tol=config.lower_tol,
            constraint_tol=0.1 * config.tol_G,
            max_outer=config.lower_max_outer,
            multipliers_init=init,
        )
        res = minimize(lower.nlp(), y0, opts)
        lam = res.multipliers
        lam0 = (lam[: S * m_g].reshape(S, m_g) * cost_scale, lam[S * m_g :])
        y_theta = res.x_star[:-1]
        gamma0 = float(res.x_star[-1] * cost_scale)
        new_scale = max(1.0, abs(gamma0))
        if res.converged or abs(np.log10(new_scale / cost_scale)) < 1.0:
            break
        cost_scale = new_scale

    theta = y_theta * problem.theta_scale
    final = _costs(problem, theta, W, D)
    q, r = problem.split_theta(theta)
    gamma = float(np.max(final.cost))
    decision = DecisionVector(q, r, gamma)
    values, _ = evaluate_G_batch(final, gamma)
    if not res.converged:
        logger.warning(
            "lower level %s (kkt %.2e, violation %.2e) with %d scenarios",
            res.status.value,
            res.kkt_residual,
            res.constraint_violation,
            S,
        )
    return LowerSolution(decision, res.status, float(np.max(values)), res, lam0)


def _cost_scale(problem, theta0, W, D, gamma0):
    """Largest finite cost magnitude at the start and at unit steps of the scaled parameters."""
    n = problem.n_theta
    steps = np.vstack([np.eye(n), -np.eye(n)]) * problem.theta_scale
    probes = np.clip(theta0 + steps, problem.theta_lower, problem.theta_upper)
    S = W.shape[0]
    q, r = problem.split_theta(np.repeat(probes, S, axis=0))
    with np.errstate(all="ignore"):
        cost = rollout_batch(problem, q, r, np.tile(W, (2 * n, 1, 1)), np.tile(D, (2 * n, 1))).cost
    finite = np.abs(cost[np.isfinite(cost)])
    return max(1.0, abs(gamma0), float(np.max(finite, initial=0.0)))


def lower_mask_count(problem: ProblemDefinition) -> int:
    """Number of enforced constraint entries per scenario."""
    if problem.constraint_mask is None:
        return problem.N * problem.n_g
    return int(problem.constraint_mask.sum())


def solve_lower_lifted(
    problem: ProblemDefinition,
    scenario_set: ScenarioSet | Sequence[Scenario],
    warm_start: DecisionVector | None = None,
    tol: float = 1e-9,
) -> LowerSolution:
    """Reference solve with explicit per-scenario trajectories as variables.

    Dynamics and policy equalities enter as pairs of opposite inequalities.
    Meant for tiny instances: derivatives are plain finite differences.
    """
    scenarios = list(getattr(scenario_set, "scenarios", scenario_set))
    p = problem
    S, N, n_x, n_u, n_t = len(scenarios), p.N, p.n_x, p.n_u, p.n_theta
    W = np.stack([s.w for s in scenarios])
    D = np.stack([s.d for s in scenarios])
    warm = warm_start or p.initial_guess or p.zero_decision()
    traj = _costs(p, warm.theta, W, D)
    x0 = p.initial_state(D)
    mask = np.ones((N, p.n_g), bool) if p.constraint_mask is None else p.constraint_mask

    def unpack(y):
        theta = y[:n_t]
        gamma = y[n_t]
        off = n_t + 1
        xs = y[off : off + S * N * n_x].reshape(S, N, n_x)
        off += S * N * n_x
        us = y[off:].reshape(S, N, n_u)
        x = np.concatenate([x0[:, None], xs], axis=1)
        return theta, gamma, x, us

    def constraints(y):
        theta, gamma, x, u = unpack(y)
        q, r = p.split_theta(np.broadcast_to(theta, (S, n_t)))
        parts = []
        cost = np.zeros(S)
        for k in range(N):
            gk = p.constraints(k, x[:, k], u[:, k], W[:, k], D)
            parts.append(gk[:, mask[k]].ravel())
            cost += p.stage_cost(k, x[:, k], u[:, k], W[:, k], D)
            dyn = x[:, k + 1] - p.dynamics(k, x[:, k], u[:, k], W[:, k], D)
            pol = u[:, k] - p.policy(k, x[:, : k + 1], q, r)
            parts += [dyn.ravel(), -dyn.ravel(), pol.ravel(), -pol.ravel()]
        cost += p.terminal_cost(x[:, N], W[:, N - 1], D)
        parts.append(cost - gamma)
        return np.concatenate(parts)

    y0 = np.concatenate(
        [warm.theta, [float(np.max(traj.cost))], traj.x[:, 1:].ravel(), traj.u.ravel()]
    )
    nlp = NlpProblem(n=y0.size, objective=lambda y: float(y[n_t]), gradient=lambda y: np.eye(y0.size)[n_t], inequality=constraints)
    res = minimize(nlp, y0, NlpOptions(tol=tol))
    theta, gamma, _, _ = unpack(res.x_star)
    q, r = p.split_theta(theta)
    final = _costs(p, theta, W, D)
    values, _ = evaluate_G_batch(final, gamma)
    return LowerSolution(DecisionVector(q, r, float(gamma)), res.status, float(np.max(values)), res)


# -- upper level ----------------------------------------------------------------


class _Component:
    """One smooth component of ``G`` as a function of the stacked ``(vec(w), d)``."""

    def __init__(self, problem, decision, h, k, lower, upper):
        self.problem, self.decision = problem, decision
        self.h, self.k = h, k
        self.lower, self.upper = lower, upper
        self._key = None

    def _evaluate(self, v):
        key = v.tobytes()
        if key == self._key:
            return
        p = self.problem
        points, C = fd_stencil(v, self.lower, self.upper)
        V = np.vstack([v, points])
        nw = p.N * p.n_w
        batch = rollout_batch(
            p, self.decision.q[None], self.decision.r[None], V[:, :nw].reshape(V.shape[0], p.N, p.n_w), V[:, nw:]
        )
        if self.h is None:
            vals = batch.cost - self.decision.gamma
        else:
            vals = batch.g_values[:, self.k, self.h]
        self._val = float(vals[0])
        self._grad = C @ (vals - vals[0])
        self._key = key

    def value(self, v):
        self._evaluate(np.asarray(v, dtype=float))
        return self._val

    def gradient(self, v):
        self._evaluate(np.asarray(v, dtype=float))
        return self._grad


def _start_pool(problem: ProblemDefinition, count: int, rng: np.random.Generator) -> np.ndarray:
    """Box center, distinct sampled corners and uniform draws (about half each)."""
    lo, hi = problem.bounds.flat_box(problem.N)
    n = lo.size
    n_corner = count // 2
    if n <= 20 and 2**n <= n_corner:
        bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    else:
        bits = rng.integers(0, 2, size=(n_corner, n))
    corners = np.where(bits == 1, hi, lo)
    corners = np.unique(corners, axis=0) if n else corners[:1]
    uniform = rng.uniform(lo, hi, size=(max(count - 1 - corners.shape[0], 0), n))
    return np.vstack([0.5 * (lo + hi), corners, uniform])


def _select_starts(pool, values, components, count):
    """Center, then the pool maximiser of each component, then the best by ``G``."""
    chosen = [0]
    order = np.argsort(-values, kind="stable")
    best_per_component = sorted(
        {int(np.argmax(c)) for c in components.T if np.any(np.isfinite(c))}, key=lambda i: -values[i]
    )
    for i in list(best_per_component) + list(order):
        if len(chosen) >= count:
            break
        if np.isfinite(values[i]) and not any(np.array_equal(pool[i], pool[j]) for j in chosen):
            chosen.append(int(i))
    return pool[chosen]


def _component_tasks(problem, g_start, per_step):
    """``(start, h, k)`` triples; ``h=None`` is the cost component."""
    tasks = []
    mask = np.ones((problem.N, problem.n_g), bool) if problem.constraint_mask is None else problem.constraint_mask
    for s in range(g_start.shape[0]):
        for h in range(problem.n_g):
            steps = np.flatnonzero(mask[:, h])
            if steps.size == 0:
                continue
            if per_step == "all":
                tasks += [(s, h, int(k)) for k in steps]
            else:
                col = g_start[s, steps, h]
                k = int(steps[np.nanargmax(col)]) if np.any(np.isfinite(col)) else int(steps[0])
                tasks.append((s, h, k))
        tasks.append((s, None, None))
    return tasks


def find_worst_case(
    problem: ProblemDefinition,
    decision: DecisionVector,
    config: LocalReductionConfig | None = None,
    stream: int = 0,
) -> list[Candidate]:
    """Multistart local maximisation of ``G`` over the whole uncertainty box.

    A pool of ``multistarts * screening`` points (box center, sampled box
    corners, uniform draws) is scored in one batch; the local solves start
    from the center, the pool maximiser of each component, and the best
    remaining pool points by ``G``.  From each start every constraint row (at
    the step where it is largest at the start, or at every step with
    ``per_step="all"``) and the cost residual are maximised separately, so
    each subproblem is smooth.  Every local maximiser
    is scored with the full ``G``; the result is sorted by ``G`` descending and
    epsilon-similar candidates are collapsed onto the best of them.
    """
    config = config or LocalReductionConfig()
    problem.check_decision(decision)
    rng = np.random.default_rng([config.seed, stream])
    lo, hi = problem.bounds.flat_box(problem.N)
    N, n_w = problem.N, problem.n_w
    nw = N * n_w

    def score(V):
        batch = rollout_batch(problem, decision.q[None], decision.r[None], V[:, :nw].reshape(V.shape[0], N, n_w), V[:, nw:])
        values, arg = evaluate_G_batch(batch, decision.gamma)
        return batch, values, arg

    # screen a larger pool with one batched rollout and start from its best points
    pool = _start_pool(problem, config.multistarts * config.screening, rng)
    pool_batch, pool_values, _ = score(pool)
    components = np.column_stack(
        [pool_batch.g_values.max(axis=1), pool_batch.cost - decision.gamma]
    )
    starts = _select_starts(pool, pool_values, np.where(np.isfinite(components), components, -np.inf), config.multistarts)
    start_batch, _, _ = score(starts)
    tasks = _component_tasks(problem, start_batch.g_values, config.per_step)
    opts = NlpOptions(tol=1e-9, max_outer=3, max_inner=config.upper_max_inner)

    def solve(task):
        s, h, k = task
        comp = _Component(problem, decision, h, k, lo, hi)
        nlp = NlpProblem(n=lo.size, objective=comp.value, gradient=comp.gradient, box_lower=lo, box_upper=hi)
        try:
            res = maximize(nlp, starts[s], opts)
        except ValueError as exc:
            return None, f"start {s}, component {problem.component_name(h)}: {exc}"
        return res.x_star, None

    if config.threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(solve, tasks))
    else:
        results = [solve(t) for t in tasks]

    diagnostics = [msg for _, msg in results if msg]
    points = [x for x, _ in results if x is not None]
    V = np.vstack([starts] + ([np.array(points)] if points else []))
    batch, values, arg = score(V)
    finite = np.isfinite(values)
    if not np.any(finite):
        raise WorstCaseSearchError("every multistart subproblem failed", diagnostics or ["all candidates diverged"])

    order = np.argsort(-np.where(finite, values, -np.inf), kind="stable")
    candidates: list[Candidate] = []
    for i in order:
        if not finite[i]:
            continue
        sc = Scenario.from_flat(V[i], N, n_w)
        if any(_similar(sc, c.scenario, config.epsilon) for c in candidates):
            continue
        h, k = (None, None) if arg[i] < 0 else (int(arg[i] % problem.n_g), int(arg[i] // problem.n_g))
        candidates.append(Candidate(sc, float(values[i]), problem.component_name(h), k))
    return candidates


def _similar(a, b, eps):
    return a == b or scenarios_similar(a, b, eps)


# -- outer loop -------------------------------------------------------------------


def run(
    problem: ProblemDefinition,
    config: LocalReductionConfig | None = None,
    initial_set: ScenarioSet | None = None,
    initial_decision: DecisionVector | None = None,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> RunResult:
    """Alternate worst-case search and lower-level re-solves until robust.

    The first worst-case search uses ``initial_decision``, else the
    problem's ``initial_guess``; if neither is given, the lower level is
    first solved on the initial set (the nominal scenario by default).
    Terminates with

    * ``SUCCESS`` when the best candidate has ``G <= tol_G``;
    * ``STALL`` when every violating candidate is epsilon-similar to a stored
      scenario, even after halving epsilon once for the run;
    * ``MAX_ITERATIONS`` otherwise.
    """
    config = config or LocalReductionConfig()
    H = initial_set.copy() if initial_set is not None else ScenarioSet.nominal(problem, config.epsilon)
    if len(H) == 0:
        raise ValueError("initial scenario set must be nonempty")
    t0 = time.perf_counter()
    multipliers = None
    start = initial_decision if initial_decision is not None else problem.initial_guess
    if start is None:
        sol = solve_lower(problem, H, config=config)
        decision, multipliers = sol.decision, sol.multipliers
    else:
        problem.check_decision(start)
        decision = start
    history: list[IterationRecord] = []
    halved = False
    status = RunStatus.MAX_ITERATIONS

    for j in range(1, config.max_iterations + 1):
        candidates = find_worst_case(problem, decision, config, stream=j)
        top = candidates[0]
        if top.G <= config.tol_G:
            status = RunStatus.SUCCESS
            _record(history, on_iteration, j, top, None, len(H), 0, None, t0, H.epsilon)
            break

        violating = [c for c in candidates if c.G > config.tol_G]
        accepted = _accept(H, violating, config.scenarios_per_iteration)
        if not accepted and not halved:
            halved = True
            H.epsilon *= 0.5
            logger.info("all violating candidates similar to stored ones; epsilon halved to %g", H.epsilon)
            accepted = _accept(H, violating, config.scenarios_per_iteration)
        if not accepted:
            status = RunStatus.STALL
            _record(history, on_iteration, j, top, None, len(H), 0, None, t0, H.epsilon)
            break

        previous_gamma = decision.gamma
        sol = solve_lower(problem, H, warm_start=decision, config=config, multipliers=multipliers)
        decision, multipliers = sol.decision, sol.multipliers
        if sol.converged and decision.gamma < previous_gamma - config.tol_G and j > 1:
            logger.info("gamma decreased from %.6g to %.6g (local solver)", previous_gamma, decision.gamma)
        _record(history, on_iteration, j, top, decision.gamma, len(H), len(accepted), sol.status.value, t0, H.epsilon)

    return RunResult(decision, H, history, status)


def _accept(H: ScenarioSet, violating: Iterable[Candidate], cap: int) -> list[Candidate]:
    accepted = []
    for c in violating:
        if len(accepted) >= cap:
            break
        if H.add(c.scenario):
            accepted.append(c)
    return accepted


def _record(history, callback, j, top, gamma, count, accepted, lower_status, t0, epsilon):
    rec = IterationRecord(
        iteration=j,
        g_max=top.G,
        g_component=top.component,
        g_step=top.step,
        worst_scenario=top.scenario,
        gamma=gamma,
        scenario_count=count,
        accepted=accepted,
        lower_status=lower_status,
        elapsed=time.perf_counter() - t0,
        epsilon=epsilon,
    )
    history.append(rec)
    logger.info(
        "iter %d: G_max %.3e (%s) scenarios %d lower %s", j, rec.g_max, rec.g_component, count, lower_status
    )
    if callback is not None:
        callback(rec)
