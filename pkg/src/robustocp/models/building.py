"""Single-zone building: linear three-state thermal model with comfort bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import DecisionVector, ProblemDefinition, Scenario, UncertaintyBounds
from . import defaults as D
from .saturation import smooth_saturation, smooth_saturation_derivative

# layout of the constant uncertainty vector d
N_DELTA = 9  # delta_ij, row-major
N_ETA = 3
IDX_DELTA = slice(0, 9)
IDX_ETA = slice(9, 12)
IDX_WALL = 12
IDX_CORR = 13
N_D = 14


def _beta(saturation: str) -> tuple[float, float, float, float]:
    if saturation == "printed":
        return D.BUILDING_BETA_PRINTED
    lo, hi = D.BUILDING_U_LIMITS
    b1, b2 = D.BUILDING_BETA_FIT
    return ((hi - lo) * b1, b1, b2, lo)


@dataclass(frozen=True, eq=False)
class BuildingModel:
    """Thermal model ``x+ = (A*delta) x + (B*eta) sat(u) + W w``.

    The state is (indoor, wall, corridor) temperature.  The day/night
    schedule is laid over a 48 h horizon starting at 06:00 and compressed
    proportionally when ``N`` differs from 192.
    """

    N: int = D.BUILDING_HORIZON
    A: np.ndarray = field(default_factory=lambda: D.BUILDING_A.copy())
    B: np.ndarray = field(default_factory=lambda: D.BUILDING_B.copy())
    W: np.ndarray = field(default_factory=lambda: D.BUILDING_W.copy())
    x0: np.ndarray = field(default_factory=lambda: D.BUILDING_X0.copy())
    t_min_day: float = D.BUILDING_T_MIN_DAY
    t_min_night: float = D.BUILDING_T_MIN_NIGHT
    t_max: float = D.BUILDING_T_MAX
    saturation: str = "fit"

    @property
    def beta(self):
        return _beta(self.saturation)

    @property
    def saturation_form(self) -> str:
        return "printed" if self.saturation == "printed" else "offset"

    def hours(self) -> np.ndarray:
        """Clock time (h since midnight, unwrapped) at each step."""
        return D.BUILDING_DAY_START_HOUR + np.arange(self.N) * (48.0 / self.N)

    def is_day(self) -> np.ndarray:
        start = D.BUILDING_DAY_START_HOUR
        return ((self.hours() - start) % 24.0) < D.BUILDING_DAY_HOURS

    def t_min(self) -> np.ndarray:
        return np.where(self.is_day(), self.t_min_day, self.t_min_night)

    def w_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        day = self.is_day()[:, None]
        lo = np.where(day, D.BUILDING_W_DAY[0], D.BUILDING_W_NIGHT[0])
        hi = np.where(day, D.BUILDING_W_DAY[1], D.BUILDING_W_NIGHT[1])
        return lo, hi

    def d_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        m_lo, m_hi = D.BUILDING_MULTIPLIER_RANGE
        o_lo, o_hi = D.BUILDING_X0_OFFSET_RANGE
        lo = np.concatenate([np.full(N_DELTA + N_ETA, m_lo), [o_lo, o_lo]])
        hi = np.concatenate([np.full(N_DELTA + N_ETA, m_hi), [o_hi, o_hi]])
        return lo, hi

    def sat(self, u):
        return smooth_saturation(u, self.beta, self.saturation_form)

    # batched model pieces ------------------------------------------------

    def initial_state(self, d):
        d = np.atleast_2d(d)
        x0 = np.broadcast_to(self.x0, (d.shape[0], 3)).copy()
        x0[:, 1] += d[:, IDX_WALL]
        x0[:, 2] += d[:, IDX_CORR]
        return x0

    def dynamics(self, k, x, u, w, d):
        A = self.A[None] * d[:, IDX_DELTA].reshape(-1, 3, 3)
        B = self.B[None] * d[:, IDX_ETA]
        return np.einsum("bij,bj->bi", A, x) + B * self.sat(u[:, :1]) + w @ self.W.T

    def policy(self, k, x_hist, q, r):
        return (r[:, 0] * x_hist[:, k, 0] + q[:, k])[:, None]

    def stage_cost(self, k, x, u, w, d):
        return u[:, 0] ** 2 / self.N

    def constraints(self, k, x, u, w, d):
        t = x[:, 0]
        return np.stack([self.t_min()[k] - t, t - self.t_max], axis=1)

    def problem(self) -> ProblemDefinition:
        w_lo, w_hi = self.w_bounds()
        d_lo, d_hi = self.d_bounds()
        return ProblemDefinition(
            N=self.N,
            n_x=3,
            n_u=1,
            n_q=self.N,
            n_r=1,
            x0=self.initial_state,
            dynamics=self.dynamics,
            policy=self.policy,
            stage_cost=self.stage_cost,
            constraints=self.constraints,
            n_g=2,
            bounds=UncertaintyBounds(w_lo, w_hi, d_lo, d_hi),
            constraint_names=("comfort_low", "comfort_high"),
            theta_scale=np.concatenate([np.full(self.N, 100.0), [10.0]]),
            name="building",
            metadata={"model": self},
        )

    # exact derivatives -----------------------------------------------------

    def cost_gradient(self, decision: DecisionVector, scenario: Scenario) -> np.ndarray:
        """Gradient of the rollout cost w.r.t. ``(q, K)`` by forward sensitivities."""
        if self.saturation_form != "offset":
            raise NotImplementedError("analytic gradient only for the offset saturation form")
        d = scenario.d
        A = self.A * d[IDX_DELTA].reshape(3, 3)
        B = self.B * d[IDX_ETA]
        K = decision.r[0]
        n = self.N + 1
        x = self.initial_state(d[None])[0]
        dx = np.zeros((3, n))  # d x_k / d theta
        grad = np.zeros(n)
        for k in range(self.N):
            u = K * x[0] + decision.q[k]
            du = K * dx[0].copy()
            du[k] += 1.0
            du[-1] += x[0]
            grad += 2.0 * u * du / self.N
            x_next = A @ x + B * self.sat(u) + self.W @ scenario.w[k]
            dx = A @ dx + np.outer(B, smooth_saturation_derivative(u, self.beta) * du)
            x = x_next
        return grad


def building_problem(scale: str = "paper", saturation: str = "fit", **overrides) -> ProblemDefinition:
    """Building case study as a :class:`ProblemDefinition`.

    ``scale="paper"`` uses ``N = 192``; ``scale="desk"`` uses ``N = 24`` with
    the same uncertainty structure and a proportionally compressed schedule.
    Decision: ``q = (q_0..q_{N-1})``, ``r = (K,)`` with ``u_k = K x_temp + q_k``.
    """
    if scale not in ("paper", "desk"):
        raise ValueError(f"unknown scale {scale!r}")
    N = D.BUILDING_HORIZON if scale == "paper" else D.BUILDING_DESK_HORIZON
    kwargs = {"N": N, "saturation": saturation}
    for key, val in overrides.items():
        kwargs[key] = np.asarray(val, dtype=float) if key in ("A", "B", "W", "x0") else val
    return BuildingModel(**kwargs).problem()
