"""Centrifugal compressor with a PI flow controller acting on shaft torque."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import DecisionVector, ProblemDefinition, UncertaintyBounds
from . import defaults as D
from .saturation import smooth_saturation

# state layout
PS, PD, M, OMEGA, MR, INT_M, INT_REC = range(7)
STATE_NAMES = ("p_s", "p_d", "m", "omega", "m_r", "int_m", "int_rec")
# constant-uncertainty layout: valve gains then map coefficients
IDX_K_IN, IDX_K_OUT, IDX_K_REC = 0, 1, 2
IDX_ALPHA = slice(3, 9)


def pressure_ratio(m, omega, alpha):
    """Compressor map ``Pi(m, omega)``; ``alpha`` broadcasts against ``m``."""
    a = np.asarray(alpha, dtype=float)
    return (
        a[..., 0]
        + a[..., 1] * m
        + a[..., 2] * omega
        + a[..., 3] * m * omega
        + a[..., 4] * m * m
        + a[..., 5] * omega * omega
    )


def _smooth_sqrt(a, eps):
    return np.sqrt(0.5 * (a + np.sqrt(a * a + eps * eps)))


def _beta(fit, printed, limits, saturation):
    if saturation == "printed":
        return printed
    lo, hi = limits
    b1, b2 = fit
    return ((hi - lo) * b1, b1, b2, lo)


@dataclass(frozen=True, eq=False)
class CompressorModel:
    """Suction/discharge plenum compressor model, discretised by modified Euler.

    The torque command from the policy is held over each step; the recycle
    valve PI lives inside the plant.
    """

    t_final: float = D.COMPRESSOR_T_FINAL
    step: float = D.COMPRESSOR_STEP
    alpha: np.ndarray = field(default_factory=lambda: D.COMPRESSOR_ALPHA.copy())
    m_target: float = D.COMPRESSOR_M_TARGET
    cost_weights: tuple = D.COMPRESSOR_COST_WEIGHTS
    m_limits: tuple = D.COMPRESSOR_M_LIMITS
    omega_limits: tuple = D.COMPRESSOR_OMEGA_LIMITS
    saturation: str = "fit"
    plant: dict = field(default_factory=lambda: dict(D.COMPRESSOR_PLANT))

    def __post_init__(self):
        object.__setattr__(self, "plant", {**D.COMPRESSOR_PLANT, **self.plant})

    @property
    def N(self) -> int:
        return int(round(self.t_final / self.step))

    @property
    def beta_torque(self):
        return _beta(D.COMPRESSOR_BETA_TORQUE_FIT, D.COMPRESSOR_BETA_TORQUE_PRINTED, D.COMPRESSOR_TORQUE_LIMITS, self.saturation)

    @property
    def beta_recycle(self):
        return _beta(D.COMPRESSOR_BETA_RECYCLE_FIT, D.COMPRESSOR_BETA_RECYCLE_PRINTED, (0.0, 1.0), self.saturation)

    @property
    def _form(self):
        return "printed" if self.saturation == "printed" else "offset"

    def torque(self, command):
        return smooth_saturation(command, self.beta_torque, self._form)

    def nominal_d(self) -> np.ndarray:
        p = self.plant
        return np.concatenate([[p["k_in"], p["k_out"], p["k_rec"]], self.alpha])

    def d_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        nom = self.nominal_d()
        spread = np.concatenate([np.full(3, D.COMPRESSOR_VALVE_GAIN_SPREAD), np.full(6, D.COMPRESSOR_ALPHA_SPREAD)])
        a, b = nom * (1 - spread), nom * (1 + spread)
        return np.minimum(a, b), np.maximum(a, b)

    def initial_operating_point(self) -> tuple[np.ndarray, float]:
        """Nominal equilibrium at ``m_init`` (recycle closed) and its torque."""
        p = self.plant
        m0 = p["m_init"]
        ps = p["p_in"] - (m0 / (D.COMPRESSOR_M_IN_COEFF * p["k_in"] * p["area_in"])) ** 2
        pd = p["p_out"] + (m0 / (D.COMPRESSOR_M_OUT_COEFF * p["k_out"] * p["area_out"])) ** 2
        a = self.alpha
        # Pi(m0, omega) * ps = pd, quadratic in omega
        c2 = a[5]
        c1 = a[2] + a[3] * m0
        c0 = a[0] + a[1] * m0 + a[4] * m0 * m0 - pd / ps
        omega = (-c1 + np.sqrt(c1 * c1 - 4 * c2 * c0)) / (2 * c2)
        x0 = np.array([ps, pd, m0, omega, 0.0, 0.0, 0.0])
        return x0, p["k_torque"] * m0 * omega

    def feedforward(self) -> float:
        """Torque command that reproduces the initial equilibrium torque."""
        _, tau0 = self.initial_operating_point()
        b0, b1, b2, b3 = self.beta_torque
        if self._form != "offset":
            return 0.0
        return float(-np.log(b0 / (tau0 - b3) - b1) / b2)

    # continuous-time right-hand side, batched
    def rhs(self, x, torque, d):
        p = self.plant
        eps = p["sqrt_eps"]
        ps, pd, m, om, mr, _, zr = (x[:, i] for i in range(7))
        m_in = D.COMPRESSOR_M_IN_COEFF * d[:, IDX_K_IN] * p["area_in"] * _smooth_sqrt(p["p_in"] - ps, eps)
        m_out = D.COMPRESSOR_M_OUT_COEFF * d[:, IDX_K_OUT] * p["area_out"] * _smooth_sqrt(pd - p["p_out"], eps)
        u_rec = smooth_saturation(p["kp_recycle"] * (p["m_surge"] - m) + p["ki_recycle"] * zr, self.beta_recycle, self._form)
        m_sp = d[:, IDX_K_REC] * u_rec * p["area_rec"] * _smooth_sqrt(pd - ps, eps)
        pi = pressure_ratio(m, om, d[:, IDX_ALPHA])
        return np.stack(
            [
                p["c_suction"] * (m_in - m + mr),
                p["c_discharge"] * (m - m_out - mr),
                p["c_duct"] * (pi * ps - pd),
                (torque - p["k_torque"] * m * om) / p["inertia"],
                (m_sp - mr) / p["tau_recycle"],
                m - self.m_target,
                p["m_surge"] - m,
            ],
            axis=1,
        )

    def heun_step(self, x, torque, d, h):
        k1 = self.rhs(x, torque, d)
        k2 = self.rhs(x + h * k1, torque, d)
        return x + 0.5 * h * (k1 + k2)

    def dynamics(self, k, x, u, w, d):
        return self.heun_step(x, self.torque(u[:, 0]), d, self.step)

    def policy(self, k, x_hist, q, r):
        x = x_hist[:, k]
        cmd = self.feedforward() + r[:, 0] * (x[:, M] - self.m_target) + r[:, 1] * x[:, INT_M]
        return cmd[:, None]

    def stage_cost(self, k, x, u, w, d):
        wr, wo, wm = self.cost_weights
        return self.step * (wr * x[:, MR] ** 2 + wo * x[:, OMEGA] ** 2 + wm * (x[:, M] - self.m_target) ** 2)

    def constraints(self, k, x, u, w, d):
        m, om = x[:, M], x[:, OMEGA]
        (m_lo, m_hi), (o_lo, o_hi) = self.m_limits, self.omega_limits
        return np.stack([m_lo - m, m - m_hi, o_lo - om, om - o_hi], axis=1)

    def state_domain(self, x):
        return (x[:, PS] > 0) & (x[:, PD] > 0) & (x[:, OMEGA] > 0) & np.all(np.abs(x) < 1e7, axis=1)

    def problem(self) -> ProblemDefinition:
        d_lo, d_hi = self.d_bounds()
        x0, _ = self.initial_operating_point()
        N = self.N
        return ProblemDefinition(
            N=N,
            n_x=7,
            n_u=1,
            n_q=0,
            n_r=2,
            x0=x0,
            dynamics=self.dynamics,
            policy=self.policy,
            stage_cost=self.stage_cost,
            constraints=self.constraints,
            n_g=4,
            bounds=UncertaintyBounds(np.zeros(0), np.zeros(0), d_lo, d_hi),
            constraint_names=("flow_low", "flow_high", "speed_low", "speed_high"),
            theta_scale=np.array([10.0, 1.0]),
            state_domain=self.state_domain,
            initial_guess=None,
            name="compressor",
            metadata={"model": self, "default_gains": D.COMPRESSOR_DEFAULT_GAINS},
        )


def compressor_problem(scale: str = "paper", saturation: str = "fit", **overrides) -> ProblemDefinition:
    """Compressor case study as a :class:`ProblemDefinition`.

    Decision ``r = (K_p, K_i)`` of ``tau = sat(tau_ff + K_p (m - m_d) + K_i int(m - m_d))``;
    ``scale="desk"`` shortens the horizon to 20 s.
    """
    if scale not in ("paper", "desk"):
        raise ValueError(f"unknown scale {scale!r}")
    kwargs = {"t_final": D.COMPRESSOR_T_FINAL if scale == "paper" else D.COMPRESSOR_DESK_T_FINAL, "saturation": saturation}
    for key, val in overrides.items():
        kwargs[key] = np.asarray(val, dtype=float) if key == "alpha" else val
    return CompressorModel(**kwargs).problem()


def default_controller(problem: ProblemDefinition) -> DecisionVector:
    """The untuned PI gains used as the nominal comparison controller."""
    return DecisionVector(np.zeros(0), np.array(problem.metadata["default_gains"]), 0.0)
