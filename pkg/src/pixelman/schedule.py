"""Noise schedules and the closed-form forward / reverse-prediction maps.

The forward map adds a known amount of Gaussian noise to clean latents;
the reverse map recovers the clean-latent estimate from a noisy latent and
a noise prediction. Both are exact algebraic inverses of each other for a
fixed step of the schedule.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigurationError


@dataclass(frozen=True)
class ScheduleConfig:
    training_steps: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012
    spacing: str = "scaled_linear"  # "linear" | "scaled_linear"
    inference_steps: int = 16


class NoiseSchedule:
    """Per-inference-step cumulative signal coefficients.

    ``alpha_bar[i]`` is the coefficient for inference step ``t = i + 1``;
    t=1 is the least noisy step, t=T the noisiest.
    """

    def __init__(self, alpha_bar: torch.Tensor, step_to_training_index: list[int],
                 config: ScheduleConfig):
        self.alpha_bar = alpha_bar
        self.step_to_training_index = step_to_training_index
        self.config = config

    @property
    def inference_steps(self) -> int:
        return int(self.alpha_bar.numel())

    def alpha_bar_at(self, t: int) -> float:
        """Coefficient for 1-based inference step ``t``."""
        if not 1 <= t <= self.inference_steps:
            raise IndexError(f"step {t} outside [1, {self.inference_steps}]")
        return float(self.alpha_bar[t - 1])


def training_betas(cfg: ScheduleConfig) -> torch.Tensor:
    if cfg.spacing == "linear":
        betas = torch.linspace(cfg.beta_start, cfg.beta_end, cfg.training_steps,
                               dtype=torch.float64)
    elif cfg.spacing == "scaled_linear":
        betas = torch.linspace(cfg.beta_start ** 0.5, cfg.beta_end ** 0.5,
                               cfg.training_steps, dtype=torch.float64) ** 2
    else:
        raise ConfigurationError(f"unknown beta spacing {cfg.spacing!r}")
    return betas


def build_schedule(cfg: ScheduleConfig) -> NoiseSchedule:
    """Subsample a training beta schedule down to ``inference_steps`` steps.

    Leading spacing: training index ``(t-1) * (training_steps // T)`` for
    inference step t, so T == training_steps yields the identity mapping.
    """
    T = cfg.inference_steps
    if T < 1:
        raise ConfigurationError("inference_steps must be >= 1")
    if T > cfg.training_steps:
        raise ConfigurationError("inference_steps cannot exceed training_steps")
    if cfg.training_steps < 1:
        raise ConfigurationError("training_steps must be >= 1")
    if not (0.0 <= cfg.beta_start <= cfg.beta_end < 1.0):
        raise ConfigurationError("betas must satisfy 0 <= beta_start <= beta_end < 1")

    betas = training_betas(cfg)
    alpha_bar_train = torch.cumprod(1.0 - betas, dim=0)

    stride = cfg.training_steps // T
    indices = [i * stride for i in range(T)]
    alpha_bar = alpha_bar_train[indices].to(torch.float32)

    if torch.any(alpha_bar <= 0) or torch.any(alpha_bar > 1):
        raise ConfigurationError("alpha_bar left (0, 1]; beta range too aggressive")
    if torch.any(betas > 0) and T > 1:
        diffs = alpha_bar[1:] - alpha_bar[:-1]
        if not torch.all(diffs < 0):
            raise ConfigurationError("alpha_bar not strictly decreasing")
    return NoiseSchedule(alpha_bar, indices, cfg)


def _coeffs(t: int, sched: NoiseSchedule) -> tuple[float, float]:
    a = sched.alpha_bar_at(t)
    return a ** 0.5, (1.0 - a) ** 0.5


def fdp(z0: torch.Tensor, eps: torch.Tensor, t: int, sched: NoiseSchedule) -> torch.Tensor:
    """Forward diffusion: ``sqrt(a)*z0 + sqrt(1-a)*eps`` at step ``t``."""
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch {tuple(z0.shape)} vs {tuple(eps.shape)}")
    sa, ss = _coeffs(t, sched)
    return sa * z0 + ss * eps


def rgp_predict_x0(z_t: torch.Tensor, eps_hat: torch.Tensor, t: int,
                   sched: NoiseSchedule) -> torch.Tensor:
    """Clean-latent prediction: ``(z_t - sqrt(1-a)*eps_hat) / sqrt(a)``."""
    if z_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {tuple(z_t.shape)} vs {tuple(eps_hat.shape)}")
    sa, ss = _coeffs(t, sched)
    if sa == 0.0:
        raise ConfigurationError("alpha_bar is zero at this step; cannot invert")
    return (z_t - ss * eps_hat) / sa


def ensure_finite(z: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(z).all():
        raise ValueError(f"non-finite latents after {where}")
    return z
