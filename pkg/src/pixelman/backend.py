"""Denoiser backends: the pluggable contract, a closed-form toy backend for
desk-scale verification, and the adapter contract for a pretrained latent
diffusion UNet.

The toy backend believes the clean latent is a fixed ``mu`` (derived from
the encoded source image), so its clean-latent prediction is exact by
construction. Its two seeded attention layers exist to exercise KV
capture/injection, leak-proof masking, and feature taps end to end; they
never perturb the noise prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F

from .attention import (AttentionCapture, AttentionDirectives, effective_leak_mask,
                        masked_softmax)
from .errors import BackendUnavailableError
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class LayerSpec:
    name: str
    downscale: int  # extra downscale relative to the latent grid
    head_dim: int


class PredictResult(NamedTuple):
    eps_hat: torch.Tensor
    capture: AttentionCapture
    features: dict[str, torch.Tensor]


class DenoiserBackend:
    """Contract every backend satisfies.

    Attributes: ``latent_downscale`` (pixel -> latent factor),
    ``latent_channels``, ``layer_specs`` (self-attention layers, resolution
    metadata), ``feature_layers`` and ``score_tap_layers`` (names).
    ``predict`` must be deterministic for identical inputs and directives.
    """

    latent_downscale: int
    latent_channels: int
    layer_specs: list[LayerSpec]

    @property
    def layer_names(self) -> list[str]:
        return [s.name for s in self.layer_specs]

    @property
    def feature_layers(self) -> list[str]:
        return self.layer_names

    @property
    def score_tap_layers(self) -> list[str]:
        return self.layer_names

    def layer_resolution(self, spec: LayerSpec, z: torch.Tensor) -> tuple[int, int]:
        h, w = z.shape[-2:]
        return h // spec.downscale, w // spec.downscale

    def predict(self, z_t: torch.Tensor, t: int, sched: NoiseSchedule,
                directives: AttentionDirectives) -> PredictResult:
        raise NotImplementedError

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


def toy_predict(z_t: torch.Tensor, t: int, sched: NoiseSchedule,
                mu: torch.Tensor) -> torch.Tensor:
    """Noise prediction of a denoiser that believes the clean latent is mu.

    Inverts the forward map, so the clean-latent prediction of this output
    is exactly mu. alpha_bar == 1 has no noise to predict; returns zeros.
    """
    a = sched.alpha_bar_at(t)
    if a >= 1.0:
        return torch.zeros_like(z_t)
    return (z_t - math.sqrt(a) * mu) / math.sqrt(1.0 - a)


class ToyBackend(DenoiserBackend):
    """Analytic oracle backend with two seeded attention layers.

    VAE: encode = per-channel average pooling by ``latent_downscale``,
    decode = nearest upsampling. Pooled-space roundtrip is exact.
    """

    def __init__(self, mu: Optional[torch.Tensor] = None, latent_downscale: int = 8,
                 seed: int = 0, head_dim: int = 8):
        self.latent_downscale = latent_downscale
        self.latent_channels = 3
        self.layer_specs = [
            LayerSpec("up0", downscale=1, head_dim=head_dim),
            LayerSpec("up1", downscale=2, head_dim=head_dim),
        ]
        g = torch.Generator().manual_seed(seed)
        self._proj = {}
        for spec in self.layer_specs:
            self._proj[spec.name] = tuple(
                torch.randn(self.latent_channels, spec.head_dim, generator=g) /
                math.sqrt(self.latent_channels)
                for _ in range(3))
        self.mu = mu

    @classmethod
    def from_image(cls, image: torch.Tensor, **kwargs) -> "ToyBackend":
        backend = cls(**kwargs)
        backend.mu = backend.encode(image)
        return backend

    # -- VAE ---------------------------------------------------------------

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        f = self.latent_downscale
        if image.shape[-2] % f or image.shape[-1] % f:
            raise ValueError(f"image dims must be divisible by {f}")
        return F.avg_pool2d(image[None], kernel_size=f)[0]

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        f = self.latent_downscale
        return latents.repeat_interleave(f, dim=-2).repeat_interleave(f, dim=-1).clamp(0.0, 1.0)

    # -- denoiser ----------------------------------------------------------

    def _attention_layer(self, spec: LayerSpec, z: torch.Tensor,
                         directives: AttentionDirectives,
                         capture: AttentionCapture) -> torch.Tensor:
        h, w = self.layer_resolution(spec, z)
        x = z if spec.downscale == 1 else F.avg_pool2d(z[None], spec.downscale)[0]
        tokens = x.reshape(x.shape[0], h * w).T  # (n, C)
        wq, wk, wv = self._proj[spec.name]
        dtype = tokens.dtype
        q = tokens @ wq.to(dtype)
        if directives.mode == "inject":
            k, v = directives.injected_kv[spec.name]
        else:
            k = tokens @ wk.to(dtype)
            v = tokens @ wv.to(dtype)
        if directives.mode == "capture":
            capture.kv[spec.name] = (k.detach(), v.detach())

        scores = (q @ k.T) / math.sqrt(spec.head_dim)
        leak, skipped = effective_leak_mask(
            (directives.leak_masks or {}).get(spec.name))
        if skipped:
            capture.diagnostics.append(
                f"leak mask covers >= 95% of layer {spec.name}; masking skipped")
        weights = masked_softmax(scores, leak)
        if directives.score_tap:
            capture.scores[spec.name] = weights.detach()
        out = weights @ v  # (n, d)
        return out.T.reshape(spec.head_dim, h, w)

    def predict(self, z_t: torch.Tensor, t: int, sched: NoiseSchedule,
                directives: AttentionDirectives) -> PredictResult:
        if self.mu is None:
            raise BackendUnavailableError("toy backend has no reference latents; "
                                          "construct it with ToyBackend.from_image")
        directives.validate_for_layers(self.layer_names)
        capture = AttentionCapture()
        features = {spec.name: self._attention_layer(spec, z_t, directives, capture)
                    for spec in self.layer_specs}
        eps_hat = toy_predict(z_t, t, sched, self.mu.to(z_t.dtype))
        return PredictResult(eps_hat, capture, features)


class LdmAdapter(DenoiserBackend):
    """Adapter contract for a pretrained latent-diffusion UNet (SD v1.5
    style backbone).

    A conforming implementation must expose KV capture/injection for the
    self-attention layers of all upsampling blocks, score taps on the last
    three upsampling blocks, latent_downscale=8, and the backend's latent
    scaling constant as config. Weights are an out-of-repo artifact; without
    them construction fails so the engine stays fully testable on the toy
    backend.
    """

    latent_downscale = 8
    latent_channels = 4

    def __init__(self, weights_path: Optional[str] = None):
        raise BackendUnavailableError(
            "ldm backend requires pretrained weights supplied out-of-band"
            + (f" (not found at {weights_path})" if weights_path else ""))


def build_backend(backend_id: str, source_image: Optional[torch.Tensor] = None,
                  weights_path: Optional[str] = None, seed: int = 0,
                  latent_downscale: int = 8) -> DenoiserBackend:
    if backend_id == "toy":
        if source_image is None:
            return ToyBackend(seed=seed, latent_downscale=latent_downscale)
        return ToyBackend.from_image(source_image, seed=seed,
                                     latent_downscale=latent_downscale)
    if backend_id == "ldm":
        return LdmAdapter(weights_path)
    raise BackendUnavailableError(f"unknown backend {backend_id!r}")
