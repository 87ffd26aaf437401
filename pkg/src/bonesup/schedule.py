"""Noise schedule: per-timestep beta/alpha quantities and consistency coefficients.

Timesteps are 1-indexed, t = 1..T. The beta ramp is linear in sqrt-beta
space ("scaled linear"), which reproduces the conventional endpoint values
0.00085 and 0.012 exactly. t = 0 exists only as the boundary argument of
the consistency coefficients c_skip / c_out.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

PAPER_BETA_START = 0.00085
PAPER_BETA_END = 0.012
PAPER_TIMESTEPS = 50
DEFAULT_SIGMA_DATA = 0.5


@dataclass(frozen=True)
class Schedule:
    """Immutable per-timestep noise quantities.

    Arrays are length ``timesteps`` and indexed ``[t - 1]`` for t = 1..T.
    ``alpha_bar`` is the running product of ``alpha``; ``sigma_data`` feeds
    the consistency coefficients.
    """

    timesteps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma_data: float

    def _check_t(self, t: int, low: int) -> None:
        if not low <= t <= self.timesteps:
            raise ValueError(
                f"timestep {t} out of range [{low}, {self.timesteps}]"
            )

    def beta_at(self, t: int) -> float:
        self._check_t(t, 1)
        return float(self.beta[t - 1])

    def alpha_at(self, t: int) -> float:
        self._check_t(t, 1)
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product at t; alpha_bar_at(0) == 1 (empty product)."""
        self._check_t(t, 0)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def c_skip(self, t: int) -> float:
        """Consistency skip coefficient; exactly 1 at the t = 0 boundary."""
        self._check_t(t, 0)
        tau = t / self.timesteps
        s2 = self.sigma_data * self.sigma_data
        return s2 / (tau * tau + s2)

    def c_out(self, t: int) -> float:
        """Consistency output coefficient; exactly 0 at the t = 0 boundary."""
        self._check_t(t, 0)
        tau = t / self.timesteps
        s2 = self.sigma_data * self.sigma_data
        return tau / math.sqrt(tau * tau + s2)


def make_schedule(
    timesteps: int,
    beta_start: float = PAPER_BETA_START,
    beta_end: float = PAPER_BETA_END,
    sigma_data: float = DEFAULT_SIGMA_DATA,
) -> Schedule:
    """Build a scaled-linear schedule (linear interpolation in sqrt-beta).

    Raises ValueError on an invalid range: timesteps < 1, beta outside (0, 1),
    beta_start > beta_end, or non-positive sigma_data.
    """
    if timesteps < 1:
        raise ValueError(f"timesteps must be >= 1, got {timesteps}")
    if not (0.0 < beta_start < 1.0) or not (0.0 < beta_end < 1.0):
        raise ValueError(
            f"beta range must lie in (0, 1), got [{beta_start}, {beta_end}]"
        )
    if beta_start > beta_end:
        raise ValueError(
            f"beta_start {beta_start} exceeds beta_end {beta_end}"
        )
    if sigma_data <= 0.0:
        raise ValueError(f"sigma_data must be positive, got {sigma_data}")

    if timesteps == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        sqrt_beta = np.linspace(
            math.sqrt(beta_start), math.sqrt(beta_end), timesteps
        )
        # sqrt followed by squaring can be off by an ulp; the endpoints are
        # exact by definition and interior values stay inside the range.
        beta = np.clip(sqrt_beta * sqrt_beta, beta_start, beta_end)
        beta[0] = beta_start
        beta[-1] = beta_end
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    for arr in (beta, alpha, alpha_bar):
        arr.flags.writeable = False
    return Schedule(
        timesteps=timesteps,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        sigma_data=sigma_data,
    )


def paper_schedule(sigma_data: float = DEFAULT_SIGMA_DATA) -> Schedule:
    """The 50-step schedule with the conventional beta endpoints."""
    return make_schedule(
        PAPER_TIMESTEPS, PAPER_BETA_START, PAPER_BETA_END, sigma_data
    )


def schedule_table(schedule: Schedule) -> str:
    """Plain-text dump (t, beta, alpha, alpha_bar, c_skip, c_out)."""
    out = io.StringIO()
    out.write(f"# timesteps={schedule.timesteps} "
              f"sigma_data={schedule.sigma_data!r}\n")
    out.write("t beta alpha alpha_bar c_skip c_out\n")
    for t in range(1, schedule.timesteps + 1):
        out.write(
            f"{t} {schedule.beta_at(t):.17e} {schedule.alpha_at(t):.17e} "
            f"{schedule.alpha_bar_at(t):.17e} {schedule.c_skip(t):.17e} "
            f"{schedule.c_out(t):.17e}\n"
        )
    return out.getvalue()
