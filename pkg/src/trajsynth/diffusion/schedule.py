"""Noise schedule and the closed-form Gaussian identities of the diffusion process.

Step ``t`` runs from 1 to T. ``alpha[t-1]`` is the retention factor of the
transition ``l_{t-1} -> l_t`` and ``gamma_t`` its cumulative product, with
``gamma_0 = 1``. The functions below only use scalar coefficients, so they
accept numpy arrays and torch tensors alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    alpha: np.ndarray
    gamma: np.ndarray
    beta_start: float | None = None
    beta_end: float | None = None

    @classmethod
    def from_alpha(cls, alpha, beta_start=None, beta_end=None) -> "NoiseSchedule":
        a = np.asarray(alpha, dtype=np.float64).copy()
        if a.ndim != 1 or len(a) < 1:
            raise ValidationError("alpha must be a non-empty 1-D array")
        if not np.all((a > 0) & (a < 1)):
            raise ValidationError("every alpha_t must lie strictly between 0 and 1")
        g = np.cumprod(a)
        a.setflags(write=False)
        g.setflags(write=False)
        return cls(a, g, beta_start, beta_end)

    @property
    def T(self) -> int:
        return len(self.alpha)

    def check_t(self, t: int, lowest: int = 1) -> int:
        t = int(t)
        if not lowest <= t <= self.T:
            raise ValidationError(f"step t={t} outside [{lowest}, {self.T}]")
        return t

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self.check_t(t) - 1])

    def gamma_at(self, t: int) -> float:
        """Cumulative product up to ``t``; ``gamma_at(0) == 1``."""
        t = self.check_t(t, lowest=0)
        return 1.0 if t == 0 else float(self.gamma[t - 1])

    @property
    def terminal_signal(self) -> float:
        """Residual signal scale ``sqrt(gamma_T)``; below 0.05 means l_T is essentially noise."""
        return math.sqrt(self.gamma[-1])

    def to_dict(self) -> dict:
        if self.beta_start is not None:
            return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}
        return {"T": self.T, "alpha": self.alpha.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        if "alpha" in d:
            return cls.from_alpha(d["alpha"])
        return make_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))


def make_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule: ``alpha_t = 1 - beta_t``."""
    if T < 2:
        raise ValidationError("T must be at least 2")
    if not 0 < beta_start <= beta_end < 1:
        raise ValidationError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule.from_alpha(1.0 - beta, float(beta_start), float(beta_end))


def scaled_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02, reference_T: int = 1000) -> NoiseSchedule:
    """Linear schedule whose betas are stretched by ``reference_T / T``.

    Keeps the total noise injected roughly constant when T shrinks, so a
    100-step chain still ends near pure noise (the unscaled [1e-4, 0.02]
    range at T = 100 leaves ``sqrt(gamma_T)`` around 0.6).
    """
    k = reference_T / T
    return make_schedule(T, beta_start * k, min(beta_end * k, 0.999))


def forward_step(l_prev, alpha_t: float, noise):
    """Sample of one noising transition with retention ``alpha_t``."""
    return math.sqrt(alpha_t) * l_prev + math.sqrt(1.0 - alpha_t) * noise


def forward_marginal(l_0, schedule: NoiseSchedule, t: int, eps):
    g = schedule.gamma_at(schedule.check_t(t))
    return math.sqrt(g) * l_0 + math.sqrt(1.0 - g) * eps


def posterior_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """``(c0, ct, sigma2)`` with posterior mean ``c0*l_0 + ct*l_t``."""
    t = schedule.check_t(t)
    a, g, g_prev = schedule.alpha_at(t), schedule.gamma_at(t), schedule.gamma_at(t - 1)
    c0 = math.sqrt(g_prev) * (1.0 - a) / (1.0 - g)
    ct = math.sqrt(a) * (1.0 - g_prev) / (1.0 - g)
    sigma2 = (1.0 - g_prev) * (1.0 - a) / (1.0 - g)
    return c0, ct, sigma2


def posterior_params(l_0, l_t, schedule: NoiseSchedule, t: int):
    """Mean and variance of ``q(l_{t-1} | l_0, l_t)``."""
    c0, ct, sigma2 = posterior_coefficients(schedule, t)
    return c0 * l_0 + ct * l_t, sigma2


def estimate_x0(l_t, eps_hat, schedule: NoiseSchedule, t: int):
    """Invert the marginal for ``l_0`` given a noise estimate."""
    g = schedule.gamma_at(schedule.check_t(t))
    return (l_t - math.sqrt(1.0 - g) * eps_hat) / math.sqrt(g)


def reverse_mean(l_t, eps_hat, schedule: NoiseSchedule, t: int):
    """Mean of the learned reverse transition, parameterised by the noise estimate."""
    t = schedule.check_t(t)
    a, g = schedule.alpha_at(t), schedule.gamma_at(t)
    return (l_t - (1.0 - a) / math.sqrt(1.0 - g) * eps_hat) / math.sqrt(a)


def reverse_step(l_t, eps_hat, schedule: NoiseSchedule, t: int, noise):
    """One ancestral sampling step with variance ``1 - alpha_t``; ``noise`` must be 0 at t = 1."""
    a = schedule.alpha_at(t)
    return reverse_mean(l_t, eps_hat, schedule, t) + math.sqrt(1.0 - a) * noise
