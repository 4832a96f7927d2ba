"""Uncertain optimal control problems: types, closed-loop rollout and the
aggregated constraint functional ``G``.

Every model callable is evaluated on a *batch* of independent trajectories at
once.  Arrays passed to them carry a leading batch axis of size ``B``:

``dynamics(k, x, u, w, d)``
    ``x (B, n_x)``, ``u (B, n_u)``, ``w (B, n_w)``, ``d (B, n_d)`` -> ``(B, n_x)``
``policy(k, x_hist, q, r)``
    ``x_hist (B, k + 1, n_x)`` is the state history ``x_0..x_k``;
    ``q (B, n_q)``, ``r (B, n_r)`` -> ``(B, n_u)``
``stage_cost(k, x, u, w, d)`` -> ``(B,)``
``terminal_cost(x_N, w_last, d)`` -> ``(B,)``
    ``w_last`` is ``w_{N-1}``; the horizon carries no ``w_N``.
``constraints(k, x, u, w, d)`` -> ``(B, n_g)``, feasible iff ``<= 0``

Writing them with numpy broadcasting is usually all that is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "UncertaintyBounds",
    "Scenario",
    "DecisionVector",
    "ProblemDefinition",
    "Rollout",
    "BatchRollout",
    "GValue",
    "DivergedRolloutError",
    "rollout",
    "rollout_batch",
    "evaluate_G",
    "evaluate_G_batch",
    "evaluate_G_max",
]


class DivergedRolloutError(RuntimeError):
    """Raised when a trajectory leaves the finite (or physical) state domain."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"rollout diverged at step k={step}")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UncertaintyBounds:
    """Box ``W`` for the per-step disturbance and box ``D`` for constant parameters.

    ``w_lower``/``w_upper`` are either ``(n_w,)`` (same box every step) or
    ``(N, n_w)`` when the box follows a schedule.
    """

    w_lower: np.ndarray
    w_upper: np.ndarray
    d_lower: np.ndarray
    d_upper: np.ndarray

    def __post_init__(self):
        for name in ("w_lower", "w_upper", "d_lower", "d_upper"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.w_lower.shape != self.w_upper.shape:
            raise ValueError("w_lower and w_upper shapes differ")
        if self.d_lower.shape != self.d_upper.shape or self.d_lower.ndim != 1:
            raise ValueError("d_lower and d_upper must be vectors of equal length")
        for lo, hi, name in ((self.w_lower, self.w_upper, "w"), (self.d_lower, self.d_upper, "d")):
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError(f"{name} bounds must be finite")
            if np.any(lo > hi):
                raise ValueError(f"{name}_lower exceeds {name}_upper")

    @property
    def n_w(self) -> int:
        return self.w_lower.shape[-1]

    @property
    def n_d(self) -> int:
        return self.d_lower.shape[0]

    def w_box(self, N: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-step bounds expanded to ``(N, n_w)``."""
        lo = np.broadcast_to(self.w_lower, (N, self.n_w))
        hi = np.broadcast_to(self.w_upper, (N, self.n_w))
        return lo, hi

    def flat_box(self, N: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on the stacked vector ``(vec(w), d)`` of length ``N*n_w + n_d``."""
        wl, wu = self.w_box(N)
        return (
            np.concatenate([wl.ravel(), self.d_lower]),
            np.concatenate([wu.ravel(), self.d_upper]),
        )

    def center(self, N: int) -> "Scenario":
        wl, wu = self.w_box(N)
        return Scenario(0.5 * (wl + wu), 0.5 * (self.d_lower + self.d_upper))

    def contains(self, scenario: "Scenario", atol: float = 1e-12) -> bool:
        wl, wu = self.w_box(scenario.w.shape[0])
        return bool(
            np.all(scenario.w >= wl - atol)
            and np.all(scenario.w <= wu + atol)
            and np.all(scenario.d >= self.d_lower - atol)
            and np.all(scenario.d <= self.d_upper + atol)
        )


@dataclass(frozen=True)
class Scenario:
    """One uncertainty realisation: disturbance trajectory ``w (N, n_w)`` and ``d (n_d,)``."""

    w: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w)
        if w.ndim != 2:
            raise ValueError(f"w must be 2-D (N, n_w), got shape {w.shape}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "d", _frozen(np.atleast_1d(self.d)).ravel())

    @property
    def N(self) -> int:
        return self.w.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.d])

    @classmethod
    def from_flat(cls, v: np.ndarray, N: int, n_w: int) -> "Scenario":
        v = np.asarray(v, dtype=float)
        return cls(v[: N * n_w].reshape(N, n_w), v[N * n_w :])

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return np.array_equal(self.w, other.w) and np.array_equal(self.d, other.d)

    def __hash__(self):
        return hash((self.w.tobytes(), self.d.tobytes()))


@dataclass(frozen=True)
class DecisionVector:
    """Policy parameters ``q`` (time-varying), ``r`` (time-invariant) and epigraph bound ``gamma``."""

    q: np.ndarray
    r: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        q = _frozen(np.atleast_1d(self.q)).ravel()
        r = _frozen(np.atleast_1d(self.r)).ravel()
        gamma = float(self.gamma)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(r)) and np.isfinite(gamma)):
            raise ValueError("decision vector entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "gamma", gamma)

    @property
    def theta(self) -> np.ndarray:
        """Policy parameters stacked as ``(q, r)``."""
        return np.concatenate([self.q, self.r])

    def with_gamma(self, gamma: float) -> "DecisionVector":
        return DecisionVector(self.q, self.r, gamma)

    def __eq__(self, other):
        if not isinstance(other, DecisionVector):
            return NotImplemented
        return (
            np.array_equal(self.q, other.q)
            and np.array_equal(self.r, other.r)
            and self.gamma == other.gamma
        )

    __hash__ = None


def _zero_terminal(xN, w_last, d):
    return np.zeros(xN.shape[0])


@dataclass(frozen=True)
class ProblemDefinition:
    """An uncertain finite-horizon optimal control problem.

    ``x0`` is either a fixed state or a callable ``d (B, n_d) -> (B, n_x)`` for
    problems whose initial state depends on the constant uncertainty.
    ``constraint_mask`` (``(N, n_g)`` bool) switches individual constraint
    entries off; masked entries read as ``-inf``.
    """

    N: int
    n_x: int
    n_u: int
    n_q: int
    n_r: int
    x0: np.ndarray | Callable[[np.ndarray], np.ndarray]
    dynamics: Callable
    policy: Callable
    stage_cost: Callable
    constraints: Callable
    n_g: int
    bounds: UncertaintyBounds
    terminal_cost: Callable = _zero_terminal
    constraint_mask: np.ndarray | None = None
    constraint_names: Sequence[str] | None = None
    theta_scale: np.ndarray | None = None
    theta_lower: np.ndarray | None = None
    theta_upper: np.ndarray | None = None
    state_domain: Callable[[np.ndarray], np.ndarray] | None = None
    initial_guess: "DecisionVector | None" = None
    name: str = "problem"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be a positive integer")
        if not callable(self.x0):
            x0 = _frozen(self.x0).ravel()
            if x0.shape != (self.n_x,):
                raise ValueError(f"x0 has shape {x0.shape}, expected ({self.n_x},)")
            object.__setattr__(self, "x0", x0)
        if self.bounds.w_lower.ndim == 2 and self.bounds.w_lower.shape[0] != self.N:
            raise ValueError("scheduled w bounds must have N rows")
        mask = self.constraint_mask
        if mask is not None:
            mask = _frozen(mask, dtype=bool)
            if mask.shape != (self.N, self.n_g):
                raise ValueError(f"constraint_mask must have shape ({self.N}, {self.n_g})")
            object.__setattr__(self, "constraint_mask", mask)
        n_theta = self.n_q + self.n_r
        for name, default in (
            ("theta_scale", 1.0),
            ("theta_lower", -np.inf),
            ("theta_upper", np.inf),
        ):
            val = getattr(self, name)
            arr = np.full(n_theta, default) if val is None else np.array(val, dtype=float).ravel()
            if arr.shape != (n_theta,):
                raise ValueError(f"{name} must have length n_q + n_r = {n_theta}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_w(self) -> int:
        return self.bounds.n_w

    @property
    def n_d(self) -> int:
        return self.bounds.n_d

    @property
    def n_theta(self) -> int:
        return self.n_q + self.n_r

    def initial_state(self, d: np.ndarray) -> np.ndarray:
        """Initial states for a batch of constant-uncertainty vectors ``d (B, n_d)``."""
        if callable(self.x0):
            return np.asarray(self.x0(d), dtype=float)
        return np.broadcast_to(self.x0, (d.shape[0], self.n_x)).copy()

    def nominal_scenario(self) -> Scenario:
        return self.bounds.center(self.N)

    def zero_decision(self) -> DecisionVector:
        return DecisionVector(np.zeros(self.n_q), np.zeros(self.n_r), 0.0)

    def split_theta(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return theta[..., : self.n_q], theta[..., self.n_q :]

    def component_name(self, h: int | None) -> str:
        if h is None:
            return "cost"
        if self.constraint_names is not None:
            return self.constraint_names[h]
        return f"g{h}"

    def check_scenario(self, scenario: Scenario) -> None:
        if scenario.w.shape != (self.N, self.n_w) or scenario.d.shape != (self.n_d,):
            raise ValueError(
                f"scenario shapes w{scenario.w.shape}, d{scenario.d.shape} do not match "
                f"problem (N={self.N}, n_w={self.n_w}, n_d={self.n_d})"
            )

    def check_decision(self, decision: DecisionVector) -> None:
        if decision.q.shape != (self.n_q,) or decision.r.shape != (self.n_r,):
            raise ValueError(
                f"decision has n_q={decision.q.size}, n_r={decision.r.size}; "
                f"problem expects n_q={self.n_q}, n_r={self.n_r}"
            )


@dataclass(frozen=True)
class Rollout:
    """Closed-loop trajectory of one scenario under one decision."""

    x: np.ndarray
    u: np.ndarray
    g_values: np.ndarray
    cost: float

    def __post_init__(self):
        for name in ("x", "u", "g_values"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "cost", float(self.cost))


@dataclass
class BatchRollout:
    """Trajectories of ``B`` (decision, scenario) pairs propagated together.

    Rows that left the state domain are NaN from the failing step on;
    ``diverged_step`` holds that step (``-1`` when the row stayed finite).
    """

    x: np.ndarray  # (B, N+1, n_x)
    u: np.ndarray  # (B, N, n_u)
    g_values: np.ndarray  # (B, N, n_g)
    cost: np.ndarray  # (B,)
    diverged_step: np.ndarray  # (B,)

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_step >= 0

    def row(self, b: int) -> Rollout:
        if self.diverged_step[b] >= 0:
            raise DivergedRolloutError(int(self.diverged_step[b]))
        return Rollout(self.x[b], self.u[b], self.g_values[b], self.cost[b])


def rollout_batch(
    problem: ProblemDefinition,
    q: np.ndarray,
    r: np.ndarray,
    w: np.ndarray,
    d: np.ndarray,
) -> BatchRollout:
    """Propagate ``B`` closed-loop trajectories at once.

    ``q (B, n_q)``, ``r (B, n_r)``, ``w (B, N, n_w)``, ``d (B, n_d)``; any of
    them may have a leading size of 1 and is broadcast.  Costs and constraints
    are evaluated on the same pass.
    """
    N, n_x, n_u = problem.N, problem.n_x, problem.n_u
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        w = w[None]
    d = np.atleast_2d(np.asarray(d, dtype=float))
    B = max(q.shape[0], r.shape[0], w.shape[0], d.shape[0])
    q = np.broadcast_to(q, (B, problem.n_q))
    r = np.broadcast_to(r, (B, problem.n_r))
    w = np.broadcast_to(w, (B, N, problem.n_w))
    d = np.broadcast_to(d, (B, problem.n_d))

    x = np.empty((B, N + 1, n_x))
    u = np.empty((B, N, n_u))
    g = np.empty((B, N, problem.n_g))
    cost = np.zeros(B)
    diverged_step = np.full(B, -1, dtype=int)

    with np.errstate(all="ignore"):
        x[:, 0] = problem.initial_state(d)
        _mark_diverged(problem, x[:, 0], diverged_step, 0)
        for k in range(N):
            xk = x[:, k]
            uk = np.asarray(problem.policy(k, x[:, : k + 1], q, r), dtype=float).reshape(B, n_u)
            u[:, k] = uk
            wk = w[:, k]
            g[:, k] = np.asarray(problem.constraints(k, xk, uk, wk, d), dtype=float).reshape(
                B, problem.n_g
            )
            cost += problem.stage_cost(k, xk, uk, wk, d)
            x[:, k + 1] = problem.dynamics(k, xk, uk, wk, d)
            _mark_diverged(problem, x[:, k + 1], diverged_step, k + 1)
        cost += problem.terminal_cost(x[:, N], w[:, N - 1], d)

    bad = diverged_step >= 0
    if np.any(bad):
        for b in np.flatnonzero(bad):
            s = diverged_step[b]
            x[b, s:] = np.nan
            u[b, s:] = np.nan
            g[b, s:] = np.nan
        cost[bad] = np.nan
    if problem.constraint_mask is not None:
        g[:, ~problem.constraint_mask] = -np.inf
    return BatchRollout(x, u, g, cost, diverged_step)


def _mark_diverged(problem, xk, diverged_step, k):
    ok = np.all(np.isfinite(xk), axis=1)
    if problem.state_domain is not None:
        ok &= np.asarray(problem.state_domain(np.where(ok[:, None], xk, 0.0)), dtype=bool)
    fresh = ~ok & (diverged_step < 0)
    diverged_step[fresh] = k


def rollout(problem: ProblemDefinition, decision: DecisionVector, scenario: Scenario) -> Rollout:
    """Simulate the closed loop ``z(q, r, w, d)`` for a single scenario.

    Raises
    ------
    DivergedRolloutError
        If a non-finite (or non-physical) state appears; ``.step`` names ``k``.
    """
    problem.check_decision(decision)
    problem.check_scenario(scenario)
    batch = rollout_batch(problem, decision.q, decision.r, scenario.w, scenario.d)
    return batch.row(0)


class GValue(NamedTuple):
    """Value of ``G`` together with the component that attains it.

    ``h`` is the constraint row and ``k`` the step; both are ``None`` when the
    cost-epigraph residual dominates.
    """

    value: float
    h: int | None
    k: int | None

    @property
    def source(self) -> str:
        return "cost" if self.h is None else "constraint"

    def __float__(self):
        return float(self.value)


def evaluate_G(problem: ProblemDefinition, ro: Rollout, gamma: float) -> GValue:
    """``G = max(max_{h,k} g_k[h], J_N - gamma)`` with its argmax."""
    flat = ro.g_values.ravel()
    residual = ro.cost - gamma
    if flat.size:
        i = int(np.argmax(flat))
        if flat[i] >= residual:
            k, h = divmod(i, problem.n_g)
            return GValue(float(flat[i]), h, k)
    return GValue(float(residual), None, None)


def evaluate_G_batch(batch: BatchRollout, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``G`` of a batch; diverged rows give ``+inf``.

    Returns ``(values, flat_argmax)`` where ``flat_argmax`` indexes the
    flattened ``(k, h)`` grid and equals ``-1`` for the cost component.
    """
    B, N, n_g = batch.g_values.shape
    flat = batch.g_values.reshape(B, N * n_g)
    residual = batch.cost - gamma
    if N * n_g:
        idx = np.argmax(flat, axis=1)
        gmax = flat[np.arange(B), idx]
        use_cost = residual > gmax
        values = np.where(use_cost, residual, gmax)
        arg = np.where(use_cost, -1, idx)
    else:
        values, arg = residual, np.full(B, -1)
    values = np.where(batch.diverged, np.inf, values)
    return values, arg


def evaluate_G_max(problem: ProblemDefinition, decision: DecisionVector, scenario_set) -> tuple[float, Scenario]:
    """Exact ``G_max`` over a finite scenario set, by enumeration.

    ``scenario_set`` is a :class:`~robustocp.reduction.ScenarioSet` or any
    sequence of :class:`Scenario`.
    """
    scenarios = list(getattr(scenario_set, "scenarios", scenario_set))
    if not scenarios:
        raise ValueError("G_max needs a nonempty scenario set")
    problem.check_decision(decision)
    W = np.stack([s.w for s in scenarios])
    D = np.stack([s.d for s in scenarios])
    batch = rollout_batch(problem, decision.q[None], decision.r[None], W, D)
    values, _ = evaluate_G_batch(batch, decision.gamma)
    i = int(np.argmax(values))
    return float(values[i]), scenarios[i]
