"""Composite editing energy and the inference-time latent-optimization
update, with its time-step schedule.

The energy has four feature-correspondence components over backend feature
taps: edit (object appears at the target region), content (background stays
put), contrast (the vacated region stops resembling the object), and
inpaint (the vacated region blends with its surrounding background ring).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .attention import AttentionDirectives
from .errors import ConfigurationError
from .masks import RegionMaskSet, dilate_mask, resample_mask
from .schedule import NoiseSchedule


@dataclass
class EnergyConfig:
    k1: float = 1.0      # edit
    k2: float = 1.0      # content
    k3: float = 0.2      # contrast
    k4: float = 1.0      # inpaint
    eta: float = 0.1
    dense_frac: float = 0.2
    repeat_lo_frac: float = 0.4
    cutoff_frac: float = 0.6
    repeats: int = 3
    enabled: bool = True

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3, self.k4) < 0:
            raise ConfigurationError("energy weights must be >= 0")
        if self.eta < 0:
            raise ConfigurationError("update step size must be >= 0")
        if not 0 < self.dense_frac <= self.repeat_lo_frac <= self.cutoff_frac <= 1:
            raise ConfigurationError("schedule fractions must be ordered in (0, 1]")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")


def guidance_schedule(t: int, T: int, cfg: EnergyConfig) -> tuple[bool, int]:
    """Whether to run latent optimization at step ``t`` and how many updates.

    Dense region (t <= dense_frac*T): one update every step. Alternating
    region (dense_frac*T <= t < cutoff_frac*T): updates on every other step
    counting down from the region's top step, skipping the topmost;
    ``repeats`` updates per applied step above repeat_lo_frac*T, one below.
    Region bounds are non-strict at the dense/alternating boundary, so a
    step landing exactly on it collects both contributions. This exact
    convention is what reconciles the published forward-evaluation totals
    at 8, 16, and 50 steps (each update costs two denoiser forwards).
    """
    if not 1 <= t <= T:
        raise ConfigurationError(f"step {t} outside [1, {T}]")
    reps = 0
    if t <= cfg.dense_frac * T:
        reps += 1
    t_hi = math.ceil(cfg.cutoff_frac * T) - 1  # largest step below the cutoff
    if cfg.dense_frac * T <= t < cfg.cutoff_frac * T and (t_hi - t) % 2 == 1:
        reps += cfg.repeats if cfg.repeat_lo_frac * T < t < cfg.cutoff_frac * T else 1
    return reps > 0, reps


def schedule_update_total(T: int, cfg: EnergyConfig) -> int:
    """Total latent-optimization updates over a T-step run."""
    return sum(guidance_schedule(t, T, cfg)[1] for t in range(1, T + 1))


@dataclass
class NfeCounter:
    nfe: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def tick(self, n: int = 1) -> None:
        self.nfe += n


def _masked_cosine(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor,
                   eps: float = 1e-8) -> torch.Tensor | None:
    """Mean over masked positions of the channelwise cosine similarity."""
    if not torch.any(mask):
        return None
    av = a[:, mask]
    bv = b[:, mask]
    num = (av * bv).sum(dim=0)
    den = av.norm(dim=0) * bv.norm(dim=0)
    return (num / (den + eps)).mean()


def _mean_feature_cosine(a: torch.Tensor, mask_a: torch.Tensor,
                         b: torch.Tensor, mask_b: torch.Tensor,
                         eps: float = 1e-8) -> torch.Tensor | None:
    if not torch.any(mask_a) or not torch.any(mask_b):
        return None
    u = a[:, mask_a].mean(dim=1)
    v = b[:, mask_b].mean(dim=1)
    return (u @ v) / (u.norm() * v.norm() + eps)


def energy(z_t_tgt: torch.Tensor, z_t_man: torch.Tensor, masks: RegionMaskSet,
           t: int, backend, sched: NoiseSchedule, cfg: EnergyConfig,
           counter: NfeCounter | None = None) -> tuple[float, torch.Tensor]:
    """Energy value and its gradient w.r.t. the target latents.

    Runs one denoiser forward per branch to obtain feature maps (both count
    as forward evaluations), then differentiates through the target-branch
    features with autograd.
    """
    counter = counter if counter is not None else NfeCounter()
    z = z_t_tgt.detach().clone().requires_grad_(True)
    feats_tgt = backend.predict(z, t, sched, AttentionDirectives()).features
    counter.tick()
    with torch.no_grad():
        feats_man = backend.predict(z_t_man, t, sched, AttentionDirectives()).features
    counter.tick()

    total = z.new_zeros(())
    used_graph = False
    for name in backend.feature_layers:
        ft, fm = feats_tgt[name], feats_man[name]
        res = ft.shape[-2:]
        m_new = masks.at_resolution("m_new", res, "nearest")
        m_old = masks.at_resolution("m_old", res, "nearest")
        m_ipt = masks.at_resolution("m_ipt", res, "nearest")
        background = ~(m_old | m_new)

        components = []
        if cfg.k1 > 0:
            c = _masked_cosine(ft, fm, m_new)
            components.append(("edit", cfg.k1, None if c is None else 1.0 - c))
        if cfg.k2 > 0:
            c = _masked_cosine(ft, fm, background)
            components.append(("content", cfg.k2, None if c is None else 1.0 - c))
        if cfg.k3 > 0:
            # similarity inside the vacated region is penalized directly
            components.append(("contrast", cfg.k3, _masked_cosine(ft, fm, m_ipt)))
        if cfg.k4 > 0:
            ring = dilate_mask(m_ipt, 2) & ~masks.at_resolution("leak_union", res, "nearest") \
                if torch.any(m_ipt) else m_ipt
            c = _mean_feature_cosine(ft, m_ipt, fm, ring)
            components.append(("inpaint", cfg.k4, None if c is None else 1.0 - c))

        for comp_name, weight, value in components:
            if value is None:
                counter.diagnostics.append(
                    f"energy component {comp_name} at layer {name}: empty region, "
                    "contributes 0")
                continue
            total = total + weight * value
            used_graph = True

    if used_graph:
        grad = torch.autograd.grad(total, z)[0]
    else:
        grad = torch.zeros_like(z)
    return float(total.detach()), grad.detach()


def gsn_update(z_t_tgt: torch.Tensor, z_t_man: torch.Tensor, masks: RegionMaskSet,
               t: int, backend, sched: NoiseSchedule, cfg: EnergyConfig,
               counter: NfeCounter | None = None, repeats: int = 1) -> torch.Tensor:
    """Gradient-descent refinement of the target latents: z <- z - eta*grad,
    ``repeats`` times. Non-finite gradients abort the step unchanged."""
    z = z_t_tgt
    for _ in range(repeats):
        value, grad = energy(z, z_t_man, masks, t, backend, sched, cfg, counter)
        if not (math.isfinite(value) and torch.isfinite(grad).all()):
            if counter is not None:
                counter.diagnostics.append(
                    f"non-finite energy gradient at step {t}; update skipped")
            return z
        z = z - cfg.eta * grad
    return z
