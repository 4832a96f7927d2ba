"""Smooth sigmoid surrogate for hard actuator limits."""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares


def smooth_saturation(u, beta, form: str = "offset"):
    """Evaluate the smooth saturation ``sigma(u)``.

    ``form="offset"`` (default) is ``b0 / (b1 + exp(-b2 u)) + b3``: ``b3`` is
    the lower asymptote and ``b3 + b0/b1`` the upper one.
    ``form="printed"`` is ``b0 / (b1 + exp(-b2 u) + b3)``, kept for comparison.
    """
    b0, b1, b2, b3 = beta
    # exp(-b2 u) overflows to inf for very negative u, which correctly gives b0/inf = 0
    with np.errstate(over="ignore"):
        e = np.exp(-b2 * np.asarray(u, dtype=float))
    if form == "offset":
        return b0 / (b1 + e) + b3
    if form == "printed":
        return b0 / (b1 + e + b3)
    raise ValueError(f"unknown saturation form {form!r}")


def smooth_saturation_derivative(u, beta):
    """``d sigma / d u`` for the offset form."""
    b0, b1, b2, _ = beta
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-b2 * np.asarray(u, dtype=float))
        out = b0 * b2 * e / (b1 + e) ** 2
    return np.where(np.isfinite(out), out, 0.0)


def saturation_limits(beta) -> tuple[float, float]:
    """Asymptotes ``(sigma(-inf), sigma(+inf))`` of the offset form."""
    b0, b1, _, b3 = beta
    a, b = b3, b3 + b0 / b1
    return (a, b) if a <= b else (b, a)


def fit_saturation(lower: float, upper: float, beta_init=(None, None)) -> tuple[float, float, float, float]:
    """Least-squares fit of the offset form to ``clip(u, lower, upper)``.

    The asymptotes are pinned to the limits (``b3 = lower``,
    ``b0 = (upper - lower) * b1``); ``b1`` and ``b2`` are fitted on a grid
    extending half the range beyond each limit.
    """
    span = upper - lower
    u = np.linspace(lower - 0.5 * span, upper + 0.5 * span, 2001)
    target = np.clip(u, lower, upper)
    b1_0 = beta_init[0] or 0.1
    b2_0 = beta_init[1] or 4.0 / span

    def resid(p):
        b1, b2 = np.exp(p)
        return smooth_saturation(u, (span * b1, b1, b2, lower)) - target

    sol = least_squares(resid, np.log([b1_0, b2_0]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    b1, b2 = np.exp(sol.x)
    return (float(span * b1), float(b1), float(b2), float(lower))
