"""Smooth inequality-constrained optimisation on a box.

Powell-Hestenes-Rockafellar augmented Lagrangian over the inequality
constraints, with L-BFGS-B solving each bound-constrained inner problem.
The solver is strictly local; multistart belongs to the caller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

logger = logging.getLogger(__name__)

__all__ = [
    "NlpStatus",
    "NlpProblem",
    "NlpOptions",
    "NlpResult",
    "GradientCheckError",
    "minimize",
    "maximize",
    "fd_stencil",
    "finite_difference_gradient",
    "finite_difference_jacobian",
    "check_derivatives",
]


class NlpStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_FAILURE = "line_search_failure"


class GradientCheckError(ValueError):
    pass


class _NonFinite(Exception):
    pass


@dataclass
class NlpProblem:
    """``min objective(x)`` s.t. ``inequality(x) <= 0`` and ``box_lower <= x <= box_upper``.

    ``gradient`` and ``jacobian`` are optional; missing derivatives are
    approximated by finite differences that never leave the box.
    """

    n: int
    objective: Callable[[np.ndarray], float]
    inequality: Callable[[np.ndarray], np.ndarray] | None = None
    box_lower: np.ndarray | None = None
    box_upper: np.ndarray | None = None
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.box_lower = (
            np.full(self.n, -np.inf) if self.box_lower is None else np.asarray(self.box_lower, float).ravel()
        )
        self.box_upper = (
            np.full(self.n, np.inf) if self.box_upper is None else np.asarray(self.box_upper, float).ravel()
        )
        if self.box_lower.shape != (self.n,) or self.box_upper.shape != (self.n,):
            raise ValueError("box bounds must have length n")
        if np.any(self.box_lower > self.box_upper):
            raise ValueError("box_lower exceeds box_upper")

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return finite_difference_gradient(self.objective, x, lower=self.box_lower, upper=self.box_upper)

    def ineq(self, x: np.ndarray) -> np.ndarray:
        if self.inequality is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.inequality(x), dtype=float))

    def jac(self, x: np.ndarray) -> np.ndarray:
        if self.inequality is None:
            return np.zeros((0, self.n))
        if self.jacobian is not None:
            return np.atleast_2d(np.asarray(self.jacobian(x), dtype=float))
        return finite_difference_jacobian(self.ineq, x, lower=self.box_lower, upper=self.box_upper)


@dataclass
class NlpOptions:
    """``constraint_tol`` defaults to ``tol``."""

    tol: float = 1e-8
    constraint_tol: float | None = None
    max_outer: int = 200
    max_inner: int = 2000
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    multiplier_max: float = 1e12
    lbfgs_memory: int = 20
    max_trust_shrinks: int = 12
    check_gradients: bool = False
    multipliers_init: np.ndarray | None = None


@dataclass(frozen=True)
class OuterStep:
    """One augmented-Lagrangian outer iteration.

    ``merit_start``/``merit_end`` are the augmented Lagrangian at fixed
    multipliers and penalty before and after the inner solve.
    """

    merit_start: float
    merit_end: float
    constraint_violation: float
    kkt_residual: float
    penalty: float


@dataclass(frozen=True)
class NlpResult:
    x_star: np.ndarray
    objective_value: float
    kkt_residual: float
    constraint_violation: float
    status: NlpStatus
    multipliers: np.ndarray
    outer_iterations: int
    history: list[OuterStep] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is NlpStatus.CONVERGED


# -- finite differences -----------------------------------------------------


def _fd_step(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-7 * np.abs(x))


def fd_stencil(
    x: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    scheme: str = "central",
) -> tuple[np.ndarray, np.ndarray]:
    """Perturbed points and weights for a finite-difference gradient.

    Returns ``(points, C)`` with ``points`` of shape ``(2n, n)`` and ``C`` of
    shape ``(n, 2n + 1)`` such that ``C @ [f(x), f(points[0]), ...]``
    approximates the gradient.  Every row of ``C`` sums to zero.  Central differences are used where the box
    allows; next to a bound the second-order one-sided formula keeps every
    point inside the box.  Coordinates whose box has zero width get a zero
    derivative.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    h = _fd_step(x)
    points = np.repeat(x[None], 2 * n, axis=0)
    C = np.zeros((n, 2 * n + 1))
    room_up = upper - x
    room_dn = x - lower
    for i in range(n):
        a, b = 1 + 2 * i, 2 + 2 * i
        hi = h[i]
        if scheme == "central" and room_up[i] >= hi and room_dn[i] >= hi:
            points[a - 1, i] += hi
            points[b - 1, i] -= hi
            C[i, a], C[i, b] = 1 / (2 * hi), -1 / (2 * hi)
        elif room_up[i] >= 2 * hi and (scheme != "backward"):
            points[a - 1, i] += hi
            points[b - 1, i] += 2 * hi
            C[i, 0], C[i, a], C[i, b] = -3 / (2 * hi), 4 / (2 * hi), -1 / (2 * hi)
        elif room_dn[i] >= 2 * hi:
            points[a - 1, i] -= hi
            points[b - 1, i] -= 2 * hi
            C[i, 0], C[i, a], C[i, b] = 3 / (2 * hi), -4 / (2 * hi), 1 / (2 * hi)
        elif room_up[i] > 0 or room_dn[i] > 0:
            hp, hm = min(hi, room_up[i]), min(hi, room_dn[i])
            points[a - 1, i] += hp
            points[b - 1, i] -= hm
            C[i, a], C[i, b] = 1 / (hp + hm), -1 / (hp + hm)
    return points, C


def finite_difference_gradient(
    fun: Callable[[np.ndarray], float],
    x: np.ndarray,
    scheme: str = "central",
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> np.ndarray:
    """Finite-difference gradient with step ``max(1e-6, 1e-7|x_i|)``.

    Raises
    ------
    ValueError
        If ``fun`` is not finite at a perturbed point; the message names the
        coordinate.
    """
    x = np.asarray(x, dtype=float)
    points, C = fd_stencil(x, lower, upper, scheme)
    f0 = float(fun(x))
    vals = np.empty(points.shape[0] + 1)
    vals[0] = f0
    for j, p in enumerate(points):
        v = float(fun(p))
        if not np.isfinite(v):
            raise ValueError(f"non-finite function value when perturbing coordinate {j // 2}")
        vals[j + 1] = v
    # rows of C sum to zero, so differencing against f(x) first is exact for constants
    return C @ (vals - f0)


def finite_difference_jacobian(
    fun: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    scheme: str = "central",
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> np.ndarray:
    """Jacobian ``(m, n)`` of a vector function, same stencil as the gradient."""
    x = np.asarray(x, dtype=float)
    points, C = fd_stencil(x, lower, upper, scheme)
    rows = [np.atleast_1d(np.asarray(fun(x), dtype=float))]
    for j, p in enumerate(points):
        v = np.atleast_1d(np.asarray(fun(p), dtype=float))
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite function value when perturbing coordinate {j // 2}")
        rows.append(v)
    rows = np.stack(rows)
    return (C @ (rows - rows[0])).T


def check_derivatives(nlp: NlpProblem, x: np.ndarray, rtol: float = 1e-5) -> float:
    """Compare supplied derivatives against central differences.

    Returns the largest relative discrepancy and raises
    :class:`GradientCheckError` above ``rtol``.
    """
    x = np.asarray(x, dtype=float)
    worst = 0.0
    pairs = []
    if nlp.gradient is not None:
        pairs.append(
            ("gradient", nlp.grad(x), finite_difference_gradient(nlp.objective, x, lower=nlp.box_lower, upper=nlp.box_upper))
        )
    if nlp.jacobian is not None and nlp.inequality is not None:
        pairs.append(
            ("jacobian", nlp.jac(x), finite_difference_jacobian(nlp.ineq, x, lower=nlp.box_lower, upper=nlp.box_upper))
        )
    for name, analytic, numeric in pairs:
        scale = max(1.0, float(np.max(np.abs(numeric), initial=0.0)))
        err = float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale
        worst = max(worst, err)
        if err > rtol:
            raise GradientCheckError(f"{name} disagrees with finite differences (rel. err {err:.2e})")
    return worst


# -- solver -----------------------------------------------------------------


def _kkt(x, grad_lagrangian, lam, c, lo, hi):
    stationarity = np.max(np.abs(x - np.clip(x - grad_lagrangian, lo, hi)), initial=0.0)
    complementarity = np.max(np.abs(lam * c), initial=0.0) if c.size else 0.0
    return float(max(stationarity, complementarity))


def minimize(nlp: NlpProblem, x_init: np.ndarray, options: NlpOptions | None = None) -> NlpResult:
    """Find a local minimiser of ``nlp`` starting from ``x_init``.

    ``status == CONVERGED`` certifies ``kkt_residual <= tol`` and
    ``constraint_violation <= constraint_tol``; otherwise the best iterate is returned
    with an honest status.
    """
    opts = options or NlpOptions()
    ctol = opts.tol if opts.constraint_tol is None else opts.constraint_tol
    lo, hi = nlp.box_lower, nlp.box_upper
    x = np.asarray(x_init, dtype=float).ravel()
    if x.shape != (nlp.n,) or not np.all(np.isfinite(x)):
        raise ValueError("x_init must be a finite vector of length n")
    x = np.clip(x, lo, hi)
    f0 = float(nlp.objective(x))
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at x_init")
    if opts.check_gradients:
        check_derivatives(nlp, x)

    c = nlp.ineq(x)
    m = c.size
    lam = np.zeros(m) if opts.multipliers_init is None else np.clip(np.asarray(opts.multipliers_init, float), 0, opts.multiplier_max)
    rho = opts.penalty_init
    history: list[OuterStep] = []
    status = NlpStatus.MAX_ITERATIONS
    best = (x, lam)
    prev_violation = np.inf
    kkt = np.inf
    violation = max(0.0, float(np.max(c, initial=0.0)))
    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))

    for outer in range(opts.max_outer):

        def merit(z, lam=lam, rho=rho):
            z = np.clip(z, lo, hi)
            f = float(nlp.objective(z))
            g = nlp.grad(z)
            if m:
                cz = nlp.ineq(z)
                s = np.maximum(0.0, lam + rho * cz)
                f += (s @ s - lam @ lam) / (2 * rho)
                g = g + nlp.jac(z).T @ s
            if not (np.isfinite(f) and np.all(np.isfinite(g))):
                raise _NonFinite
            return f, g

        # A trial point with non-finite values (e.g. a diverging simulation)
        # restarts the inner solve inside a trust box around x that shrinks
        # until the line search stays in the finite region.
        radius = np.inf
        for _ in range(opts.max_trust_shrinks + 1):
            try:
                merit_start = merit(x)[0]
                box = bounds
                if np.isfinite(radius):
                    box = list(zip(np.maximum(lo, x - radius), np.minimum(hi, x + radius)))
                res = _scipy_minimize(
                    merit,
                    x,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=box,
                    options={"maxiter": opts.max_inner, "gtol": 0.1 * opts.tol, "ftol": 1e-16, "maxcor": opts.lbfgs_memory},
                )
                x_new = np.clip(res.x, lo, hi)
                merit_end, _ = merit(x_new)
                c = nlp.ineq(x_new)
                lam_new = np.clip(np.maximum(0.0, lam + rho * c), 0.0, opts.multiplier_max)
                grad_l = nlp.grad(x_new) + (nlp.jac(x_new).T @ lam_new if m else 0.0)
                break
            except _NonFinite:
                radius = 1.0 if not np.isfinite(radius) else 0.25 * radius
                logger.debug("non-finite values in inner solve; trust radius %.3g", radius)
        else:
            status = NlpStatus.LINE_SEARCH_FAILURE
            break
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(grad_l))):
            status = NlpStatus.LINE_SEARCH_FAILURE
            break

        stalled = np.array_equal(x_new, x) and (m == 0 or np.array_equal(lam_new, lam))
        x = x_new
        violation = max(0.0, float(np.max(c, initial=0.0)))
        kkt = _kkt(x, grad_l, lam_new, c, lo, hi)
        history.append(OuterStep(merit_start, merit_end, violation, kkt, rho))
        best = (x, lam_new)
        if kkt <= opts.tol and violation <= ctol:
            status = NlpStatus.CONVERGED
            break
        if stalled:
            status = NlpStatus.LINE_SEARCH_FAILURE if res.status == 2 else NlpStatus.MAX_ITERATIONS
            break
        lam = lam_new
        # grow the penalty only while feasibility is both unmet and not improving
        if violation > ctol and violation > 0.25 * prev_violation:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        prev_violation = violation

    x, lam = best
    c = nlp.ineq(x)
    violation = max(0.0, float(np.max(c, initial=0.0)))
    return NlpResult(
        x_star=x,
        objective_value=float(nlp.objective(x)),
        kkt_residual=float(kkt),
        constraint_violation=violation,
        status=status,
        multipliers=lam,
        outer_iterations=len(history),
        history=history,
    )


def maximize(nlp: NlpProblem, x_init: np.ndarray, options: NlpOptions | None = None) -> NlpResult:
    """Maximise ``nlp.objective``; ``objective_value`` is reported unnegated."""
    grad = nlp.gradient
    neg = NlpProblem(
        n=nlp.n,
        objective=lambda x: -float(nlp.objective(x)),
        inequality=nlp.inequality,
        box_lower=nlp.box_lower,
        box_upper=nlp.box_upper,
        gradient=(lambda x: -np.asarray(grad(x), dtype=float)) if grad is not None else None,
        jacobian=nlp.jacobian,
    )
    res = minimize(neg, x_init, options)
    return NlpResult(
        x_star=res.x_star,
        objective_value=-res.objective_value,
        kkt_residual=res.kkt_residual,
        constraint_violation=res.constraint_violation,
        status=res.status,
        multipliers=res.multipliers,
        outer_iterations=res.outer_iterations,
        history=res.history,
    )
