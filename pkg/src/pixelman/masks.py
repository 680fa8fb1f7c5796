"""Mask algebra, resampling, blurring, and pixel-space object manipulation.

Binary masks are ``torch.bool`` tensors of shape (H, W); images are float
tensors of shape (3, H, W) with values in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, InvalidEditError


@dataclass(frozen=True)
class EditTransform:
    kind: str  # "move" | "resize" | "paste"
    dx: int = 0
    dy: int = 0
    scale: float = 1.0
    reference: Optional[torch.Tensor] = None  # (3, H, W), paste only

    def __post_init__(self):
        if self.kind not in ("move", "resize", "paste"):
            raise InvalidEditError(f"unknown edit kind {self.kind!r}")
        if self.scale <= 0:
            raise InvalidEditError("scale must be positive")
        if self.kind == "move" and self.scale != 1.0:
            raise InvalidEditError("move requires scale == 1")


def shift_mask(m: torch.Tensor, dx: int, dy: int) -> torch.Tensor:
    """Translate set pixels by (dx, dy); pixels leaving the frame are dropped."""
    h, w = m.shape
    if abs(dx) >= w or abs(dy) >= h:
        return torch.zeros_like(m)
    out = torch.zeros_like(m)
    src_r = slice(max(0, -dy), h - max(0, dy))
    src_c = slice(max(0, -dx), w - max(0, dx))
    dst_r = slice(max(0, dy), h - max(0, -dy))
    dst_c = slice(max(0, dx), w - max(0, -dx))
    out[dst_r, dst_c] = m[src_r, src_c]
    return out


def _mask_bbox(m: torch.Tensor) -> tuple[int, int, int, int]:
    rows = torch.any(m, dim=1).nonzero().flatten()
    cols = torch.any(m, dim=0).nonzero().flatten()
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def _scaled_geometry(m: torch.Tensor, scale: float):
    """New bbox size and top-left after scaling about the bbox centroid."""
    r0, r1, c0, c1 = _mask_bbox(m)
    bh, bw = r1 - r0, c1 - c0
    nh = max(1, int(round(bh * scale)))
    nw = max(1, int(round(bw * scale)))
    cy = (r0 + r1 - 1) / 2.0
    cx = (c0 + c1 - 1) / 2.0
    top = int(round(cy - (nh - 1) / 2.0))
    left = int(round(cx - (nw - 1) / 2.0))
    return (r0, r1, c0, c1), (nh, nw), (top, left)


def _paste_clipped(canvas: torch.Tensor, patch: torch.Tensor, top: int, left: int,
                   mask_patch: torch.Tensor) -> None:
    """Write patch pixels where mask_patch is set, clipping to the frame."""
    h, w = canvas.shape[-2:]
    ph, pw = patch.shape[-2:]
    r0, c0 = max(0, top), max(0, left)
    r1, c1 = min(h, top + ph), min(w, left + pw)
    if r0 >= r1 or c0 >= c1:
        return
    pr0, pc0 = r0 - top, c0 - left
    sub = mask_patch[pr0:pr0 + (r1 - r0), pc0:pc0 + (c1 - c0)]
    if canvas.dim() == 3:
        region = canvas[:, r0:r1, c0:c1]
        region[:, sub] = patch[:, pr0:pr0 + (r1 - r0), pc0:pc0 + (c1 - c0)][:, sub]
    else:
        region = canvas[r0:r1, c0:c1]
        region[sub] = patch[pr0:pr0 + (r1 - r0), pc0:pc0 + (c1 - c0)][sub]


def transform_mask(m: torch.Tensor, transform: EditTransform) -> torch.Tensor:
    """Object mask at its target location (scaled about the bbox centroid, shifted)."""
    if transform.kind == "move" or transform.scale == 1.0:
        return shift_mask(m, transform.dx, transform.dy)
    (r0, r1, c0, c1), (nh, nw), (top, left) = _scaled_geometry(m, transform.scale)
    crop = m[r0:r1, c0:c1].float()[None, None]
    scaled = F.interpolate(crop, size=(nh, nw), mode="nearest")[0, 0] > 0.5
    out = torch.zeros_like(m)
    _paste_clipped(out, scaled, top + transform.dy, left + transform.dx, scaled)
    return out


@dataclass
class RegionMaskSet:
    """The four pixel-resolution region masks plus a per-resolution cache."""

    m_old: torch.Tensor
    m_new: torch.Tensor
    m_sim: torch.Tensor
    m_ipt: torch.Tensor
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def leak_union(self) -> torch.Tensor:
        return self.m_old | self.m_new | self.m_sim

    def at_resolution(self, name: str, target: tuple[int, int],
                      policy: str) -> torch.Tensor:
        key = (name, target, policy)
        if key not in self._cache:
            m = getattr(self, name) if name != "leak_union" else self.leak_union
            self._cache[key] = resample_mask(m, target, policy)
        return self._cache[key]


def derive_mask_set(m_obj: torch.Tensor, transform: EditTransform,
                    m_sim_raw: Optional[torch.Tensor] = None) -> RegionMaskSet:
    """Build the region masks for one edit.

    ``m_obj`` marks the object in the source image (move/resize) or in the
    reference image (paste, where no region is vacated).
    """
    if transform.kind == "paste":
        m_old = torch.zeros_like(m_obj)
    else:
        if not torch.any(m_obj):
            raise InvalidEditError("object mask is empty")
        m_old = m_obj
    m_new = transform_mask(m_obj, transform)
    if torch.any(m_obj) and not torch.any(m_new):
        raise InvalidEditError("transform moves the entire object out of frame")
    m_ipt = m_old & ~m_new
    if m_sim_raw is None:
        m_sim = torch.zeros_like(m_obj)
    else:
        m_sim = m_sim_raw & ~(m_old | m_new)
    return RegionMaskSet(m_old=m_old, m_new=m_new, m_sim=m_sim, m_ipt=m_ipt)


def resample_mask(m: torch.Tensor, target: tuple[int, int], policy: str) -> torch.Tensor:
    """Resample a binary grid to ``target`` (h, w).

    ``any_overlap`` sets a target cell iff any source pixel covering it is
    set (downscales only; upscale falls back to nearest, where the two
    policies coincide). ``nearest`` is standard nearest-neighbor.
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise ConfigurationError("target dims must be >= 1")
    h, w = m.shape
    if (th, tw) == (h, w):
        return m.clone()
    if policy == "nearest" or th > h or tw > w:
        return F.interpolate(m[None, None].float(), size=target, mode="nearest")[0, 0] > 0.5
    if policy != "any_overlap":
        raise ConfigurationError(f"unknown resampling policy {policy!r}")
    r_idx = (torch.arange(h) * th) // h
    c_idx = (torch.arange(w) * tw) // w
    out = torch.zeros(th, tw)
    flat_idx = (r_idx[:, None] * tw + c_idx[None, :]).flatten()
    out.view(-1).index_put_((flat_idx,), m.float().flatten(), accumulate=True)
    return out > 0


def gaussian_kernel1d(kernel: int, sigma: float) -> torch.Tensor:
    x = torch.arange(kernel, dtype=torch.float32) - (kernel - 1) / 2.0
    k = torch.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur_mask(m: torch.Tensor, kernel: int = 9, sigma: Optional[float] = None) -> torch.Tensor:
    """Gaussian-blur a binary mask into a soft [0, 1] grid; kernel=1 is identity."""
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigurationError("blur kernel must be odd and >= 1")
    soft = m.float()
    if kernel == 1:
        return soft
    if sigma is None:
        sigma = kernel / 3.0
    k1 = gaussian_kernel1d(kernel, sigma)
    pad = kernel // 2
    x = soft[None, None]
    x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    x = F.conv2d(x, k1.view(1, 1, 1, kernel))
    x = F.conv2d(x, k1.view(1, 1, kernel, 1))
    return x[0, 0].clamp(0.0, 1.0)


def threshold_map(a: torch.Tensor, tau: float = 0.1) -> torch.Tensor:
    """Binary mask of cells strictly above ``tau``."""
    if not 0.0 < tau < 1.0:
        raise ConfigurationError("threshold must lie in (0, 1)")
    return a > tau


def dilate_mask(m: torch.Tensor, radius: int) -> torch.Tensor:
    if radius < 1:
        return m.clone()
    k = 2 * radius + 1
    out = F.max_pool2d(m[None, None].float(), kernel_size=k, stride=1, padding=radius)
    return out[0, 0] > 0.5


def make_manipulated_image(i_src: torch.Tensor, m_obj: torch.Tensor,
                           transform: EditTransform) -> torch.Tensor:
    """Copy the (possibly rescaled) object pixels onto the target location.

    Every pixel outside the transformed mask is bit-identical to the source.
    """
    i_man = i_src.clone()
    if transform.kind == "paste":
        if transform.reference is None:
            raise InvalidEditError("paste requires a reference image")
        if transform.reference.shape != i_src.shape:
            raise InvalidEditError("reference image dims must match the source")
        src_pixels = transform.reference
    else:
        src_pixels = i_src

    if transform.scale == 1.0:
        shifted = torch.zeros_like(src_pixels)
        _paste_clipped(shifted, src_pixels, transform.dy, transform.dx,
                       torch.ones_like(m_obj))
        m_new = shift_mask(m_obj, transform.dx, transform.dy)
        i_man[:, m_new] = shifted[:, m_new]
        return i_man

    (r0, r1, c0, c1), (nh, nw), (top, left) = _scaled_geometry(m_obj, transform.scale)
    crop = src_pixels[:, r0:r1, c0:c1][None]
    scaled = F.interpolate(crop, size=(nh, nw), mode="bilinear", align_corners=False)[0]
    mask_crop = m_obj[r0:r1, c0:c1].float()[None, None]
    scaled_mask = F.interpolate(mask_crop, size=(nh, nw), mode="nearest")[0, 0] > 0.5
    _paste_clipped(i_man, scaled, top + transform.dy, left + transform.dx, scaled_mask)
    return i_man
