"""Three-branched inversion-free sampling loop.

Each step shares one Gaussian noise sample across the source, manipulated,
and target branches; the target branch gets the source branch's K/V plus
leak-proof attention masking; clean-latent predictions of the target and
manipulated branches are delta-blended onto the pixel-manipulated anchor.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import torch

from .attention import AttentionDirectives, extract_sim_mask
from .backend import DenoiserBackend, build_backend
from .errors import ConfigurationError, InvalidEditError, JobFailureError, PixelManError
from .guidance import EnergyConfig, NfeCounter, gsn_update, guidance_schedule
from .masks import (EditTransform, RegionMaskSet, blur_mask, derive_mask_set,
                    make_manipulated_image, resample_mask)
from .schedule import (NoiseSchedule, ScheduleConfig, build_schedule, fdp,
                       rgp_predict_x0)


@dataclass
class EditRequest:
    """One edit job: task kind, source image, object mask, and transform."""

    task: str  # "move" | "resize" | "paste"
    image: torch.Tensor       # (3, H, W) in [0, 1]
    object_mask: torch.Tensor  # (H, W) bool
    dx: int = 0
    dy: int = 0
    scale: float = 1.0
    reference: Optional[torch.Tensor] = None
    sim_mask: Optional[torch.Tensor] = None  # manual similar-object seed

    def transform(self) -> EditTransform:
        return EditTransform(kind=self.task, dx=self.dx, dy=self.dy,
                             scale=self.scale, reference=self.reference)


@dataclass
class SamplerConfig:
    steps: int = 16
    unmasked_tail: int = 2
    blur_kernel: int = 9
    sim_threshold: float = 0.1
    seed: int = 0
    backend: str = "toy"
    weights_path: Optional[str] = None
    guidance: EnergyConfig = field(default_factory=EnergyConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    preview_every: int = 4
    kv_injection: bool = True
    leak_proof: bool = True
    source_branch: bool = True
    sim_mask_auto: bool = True

    def __post_init__(self):
        if not 1 <= self.unmasked_tail < self.steps:
            raise ConfigurationError("need 1 <= unmasked_tail < steps")

    def noise_schedule(self) -> NoiseSchedule:
        cfg = self.schedule
        if cfg.inference_steps != self.steps:
            cfg = ScheduleConfig(training_steps=cfg.training_steps,
                                 beta_start=cfg.beta_start, beta_end=cfg.beta_end,
                                 spacing=cfg.spacing, inference_steps=self.steps)
        return build_schedule(cfg)


@dataclass
class StepLog:
    t: int
    energy_updates: int
    sim_cells: int
    leak_cells: int
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class SamplerReport:
    nfe: int
    steps: list[StepLog]
    latency: float
    output: torch.Tensor            # (3, H, W)
    output_latents: torch.Tensor    # (C, h, w)
    previews: list[tuple[int, torch.Tensor]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "nfe": self.nfe,
            "latency_seconds": self.latency,
            "steps": [
                {"t": s.t, "energy_updates": s.energy_updates,
                 "sim_cells": s.sim_cells, "leak_cells": s.leak_cells,
                 "diagnostics": s.diagnostics}
                for s in self.steps
            ],
        }


def blend_step(z0_man: torch.Tensor, z0_tgt_hat: torch.Tensor,
               z0_man_hat: torch.Tensor, m_new_soft: torch.Tensor,
               t: int, unmasked_tail: int = 2) -> torch.Tensor:
    """Anchor plus masked delta: outside the (soft) target mask the delta
    flows through; inside it the anchor wins. The last ``unmasked_tail``
    steps drop the mask entirely for seamless blending."""
    if not (z0_man.shape == z0_tgt_hat.shape == z0_man_hat.shape):
        raise ValueError("latent shape mismatch in blend")
    if z0_man.shape[-2:] != m_new_soft.shape:
        raise ValueError("blend mask resolution mismatch")
    delta = z0_tgt_hat - z0_man_hat
    if t <= unmasked_tail:
        return z0_man + delta
    return z0_man + delta * (1.0 - m_new_soft)


def _validate_request(request: EditRequest, backend: DenoiserBackend) -> None:
    img = request.image
    if img.dim() != 3 or img.shape[0] != 3:
        raise InvalidEditError("image must have shape (3, H, W)")
    f = backend.latent_downscale
    if img.shape[-2] % f or img.shape[-1] % f:
        raise InvalidEditError(f"image dims must be divisible by {f}")
    if request.object_mask.shape != img.shape[-2:]:
        raise InvalidEditError("object mask dims must match the image")
    if request.task == "paste" and request.reference is None:
        raise InvalidEditError("paste requires a reference image")


def run_edit(request: EditRequest, cfg: SamplerConfig,
             backend: Optional[DenoiserBackend] = None,
             on_step: Optional[Callable[[int, int, Optional[torch.Tensor]], None]] = None,
             ) -> SamplerReport:
    """Run one edit job and return the decoded output with a full report.

    Deterministic for a fixed (request, cfg, backend).
    """
    start = time.perf_counter()
    if backend is None:
        backend = build_backend(cfg.backend, source_image=request.image,
                                weights_path=cfg.weights_path, seed=cfg.seed)
    _validate_request(request, backend)

    try:
        transform = request.transform()
        masks = derive_mask_set(request.object_mask, transform, request.sim_mask)
        i_man = make_manipulated_image(request.image, request.object_mask, transform)
    except PixelManError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise JobFailureError(f"[pixel-manipulation] {exc}") from exc

    sched = cfg.noise_schedule()
    T = cfg.steps
    z0_src = backend.encode(request.image)
    z0_man = backend.encode(i_man)
    z0_out = z0_man.clone()
    latent_res = tuple(z0_man.shape[-2:])

    m_new_latent = masks.at_resolution("m_new", latent_res, "nearest")
    m_new_soft = blur_mask(m_new_latent, cfg.blur_kernel)

    layer_res = {spec.name: (latent_res[0] // spec.downscale,
                             latent_res[1] // spec.downscale)
                 for spec in backend.layer_specs}
    m_new_per_tap = {name: masks.at_resolution("m_new", res, "any_overlap")
                     for name, res in layer_res.items()}

    counter = NfeCounter()
    gen = torch.Generator().manual_seed(cfg.seed)
    m_sim = torch.zeros(latent_res, dtype=torch.bool)  # empty at t = T
    step_logs: list[StepLog] = []
    previews: list[tuple[int, torch.Tensor]] = []

    for i, t in enumerate(range(T, 0, -1)):
        diag_start = len(counter.diagnostics)
        eps = torch.randn(z0_man.shape, generator=gen, dtype=z0_man.dtype)

        z_t_src = fdp(z0_src, eps, t, sched)
        z_t_man = fdp(z0_man, eps, t, sched)
        z_t_tgt = fdp(z0_out, eps, t, sched)

        updates = 0
        if cfg.guidance.enabled:
            apply, repeats = guidance_schedule(t, T, cfg.guidance)
            if apply:
                z_t_tgt = gsn_update(z_t_tgt, z_t_man, masks, t, backend, sched,
                                     cfg.guidance, counter, repeats)
                updates = repeats

        eps_man = backend.predict(z_t_man, t, sched, AttentionDirectives()).eps_hat
        counter.tick()

        injected = None
        if cfg.source_branch:
            src_result = backend.predict(z_t_src, t, sched,
                                         AttentionDirectives(mode="capture"))
            counter.tick()
            injected = src_result.capture.kv

        leak_masks = None
        leak_cells = 0
        if cfg.leak_proof:
            leak_masks = {}
            for name, res in layer_res.items():
                layer_mask = masks.at_resolution("leak_union", res, "any_overlap")
                if torch.any(m_sim):
                    layer_mask = layer_mask | resample_mask(m_sim, res, "any_overlap")
                leak_masks[name] = layer_mask.flatten()
            leak_cells = int(leak_masks[backend.layer_specs[0].name].sum())

        tgt_directives = AttentionDirectives(
            mode="inject" if (cfg.kv_injection and injected is not None) else "plain",
            injected_kv=injected if cfg.kv_injection else None,
            leak_masks=leak_masks,
            score_tap=cfg.sim_mask_auto,
        )
        tgt_result = backend.predict(z_t_tgt, t, sched, tgt_directives)
        counter.tick()
        counter.diagnostics.extend(tgt_result.capture.diagnostics)

        if cfg.sim_mask_auto and t > 1:
            # computed at step t, consumed by step t-1's leak directive
            _, m_sim = extract_sim_mask(tgt_result.capture.scores, m_new_per_tap,
                                        masks.at_resolution("m_old", latent_res, "any_overlap")
                                        | m_new_latent,
                                        latent_res, tau=cfg.sim_threshold)

        z0_man_hat = rgp_predict_x0(z_t_man, eps_man, t, sched)
        z0_tgt_hat = rgp_predict_x0(z_t_tgt, tgt_result.eps_hat, t, sched)
        z0_out = blend_step(z0_man, z0_tgt_hat, z0_man_hat, m_new_soft, t,
                            cfg.unmasked_tail)
        if not torch.isfinite(z0_out).all():
            raise JobFailureError(f"[blend] non-finite latents at step {t}")

        step_logs.append(StepLog(t=t, energy_updates=updates,
                                 sim_cells=int(m_sim.sum()), leak_cells=leak_cells,
                                 diagnostics=counter.diagnostics[diag_start:]))

        preview = None
        if cfg.preview_every and (i + 1) % cfg.preview_every == 0 and t > 1:
            preview = backend.decode(z0_out)
            previews.append((t, preview))
        if on_step is not None:
            on_step(i + 1, T, preview)

    output = backend.decode(z0_out)
    return SamplerReport(nfe=counter.nfe, steps=step_logs,
                         latency=time.perf_counter() - start, output=output,
                         output_latents=z0_out, previews=previews)
