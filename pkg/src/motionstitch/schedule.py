"""Linear beta schedule, forward noising and the reverse-step noise injection.

Steps are numbered ``t = 1..T`` (``t = 0`` is clean data). Arrays are stored
0-indexed, so ``beta[t - 1]`` is the value for step ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX
    beta: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_bar: np.ndarray = field(init=False, repr=False, compare=False)
    posterior_var: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("schedule needs at least one step")
        if not 0.0 < self.beta_min < self.beta_max < 1.0:
            raise ValueError(f"need 0 < beta_min < beta_max < 1, got {self.beta_min}, {self.beta_max}")
        t = np.arange(1, self.T + 1, dtype=np.float64)
        beta = self.beta_min + t * (self.beta_max - self.beta_min) / self.T
        alpha_bar = np.cumprod(1.0 - beta)
        alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        posterior_var = beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
        posterior_var[0] = beta[0]
        for name, value in (("beta", beta), ("alpha_bar", alpha_bar), ("posterior_var", posterior_var)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def _check(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step {t} outside [1, {self.T}]")

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}


def make_schedule(T: int = 300, beta_min: float = DEFAULT_BETA_MIN, beta_max: float = DEFAULT_BETA_MAX) -> DiffusionSchedule:
    return DiffusionSchedule(T, beta_min, beta_max)


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """``sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps``."""
    sched._check(t)
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if eps.shape != x0.shape:
        raise ValueError(f"noise shape {eps.shape} != data shape {x0.shape}")
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def reverse_step(
    x0_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    x_t: np.ndarray | None = None,
    mode: str = "direct",
) -> np.ndarray:
    """Noisy sample for step ``t - 1`` given the clean prediction at step ``t``.

    ``mode="direct"`` re-noises the prediction directly:
    ``x_{t-1} = x0_hat + sqrt(posterior_var_t) * eps``.
    ``mode="ddpm-posterior"`` uses the usual posterior mean of ``q(x_{t-1} | x_t, x0_hat)``
    instead and needs ``x_t``.
    """
    sched._check(t)
    x0_hat = np.asarray(x0_hat)
    if mode == "direct":
        mean = x0_hat
    elif mode == "ddpm-posterior":
        if x_t is None:
            raise ValueError("ddpm-posterior mode needs x_t")
        ab = sched.alpha_bar[t - 1]
        ab_prev = sched.alpha_bar[t - 2] if t > 1 else 1.0
        beta = sched.beta[t - 1]
        c0 = np.sqrt(ab_prev) * beta / (1.0 - ab)
        ct = np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)
        mean = c0 * x0_hat + ct * np.asarray(x_t)
    else:
        raise ValueError(f"unknown reverse-step mode {mode!r}")
    var = sched.posterior_var[t - 1]
    if var == 0.0:
        return mean.copy()
    noise = rng.standard_normal(x0_hat.shape)
    return (mean + np.sqrt(var) * noise).astype(x0_hat.dtype, copy=False)
