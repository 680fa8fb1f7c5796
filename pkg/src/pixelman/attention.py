"""Self-attention control: KV capture/injection directives, leak-proof
column masking, and similar-object mask extraction from attention scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F

from .masks import resample_mask, threshold_map

DEGENERACY_COVERAGE = 0.95


@dataclass
class AttentionDirectives:
    """Per-forward attention behavior for one branch.

    mode "capture" records K/V per layer, "inject" overwrites K/V with the
    supplied capture, "plain" does neither. ``leak_masks`` holds a flattened
    boolean column mask per layer name; masked key columns receive zero
    post-softmax weight.
    """

    mode: str = "plain"
    injected_kv: Optional[dict[str, tuple[torch.Tensor, torch.Tensor]]] = None
    leak_masks: Optional[dict[str, torch.Tensor]] = None
    score_tap: bool = False

    def __post_init__(self):
        if self.mode not in ("capture", "inject", "plain"):
            raise ValueError(f"unknown directive mode {self.mode!r}")

    def validate_for_layers(self, layer_names: list[str]) -> None:
        if self.mode == "inject":
            missing = [n for n in layer_names if n not in (self.injected_kv or {})]
            if missing:
                raise ValueError(f"inject mode lacks K/V for layers {missing}")


@dataclass
class AttentionCapture:
    """K/V matrices and optional post-softmax score matrices per layer."""

    kv: dict[str, tuple[torch.Tensor, torch.Tensor]] = field(default_factory=dict)
    scores: dict[str, torch.Tensor] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)


def apply_leakproof(scores: torch.Tensor, leak_mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Set masked key columns of a pre-softmax score matrix to the most
    negative finite value so they get exactly zero softmax weight."""
    if leak_mask is None or not torch.any(leak_mask):
        return scores
    if leak_mask.numel() != scores.shape[-1]:
        raise ValueError(
            f"leak mask length {leak_mask.numel()} != key count {scores.shape[-1]}")
    fill = torch.finfo(scores.dtype).min
    return scores.masked_fill(leak_mask.view(*([1] * (scores.dim() - 1)), -1), fill)


def masked_softmax(scores: torch.Tensor, leak_mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Softmax over keys with leak-proof masking; masked columns are zeroed
    exactly (large-negative fills alone can leave float dust)."""
    weights = F.softmax(apply_leakproof(scores, leak_mask), dim=-1)
    if leak_mask is not None and torch.any(leak_mask):
        shape = [1] * (scores.dim() - 1) + [-1]
        weights = weights * (~leak_mask).view(*shape).to(weights.dtype)
    return weights


def leak_coverage(leak_mask: torch.Tensor) -> float:
    # exact integer ratio: a float32 mean can round a 95% mask below 0.95
    return int(leak_mask.sum()) / leak_mask.numel()


def effective_leak_mask(leak_mask: Optional[torch.Tensor]) -> tuple[Optional[torch.Tensor], bool]:
    """Degeneracy guard: drop the mask when it covers >= 95% of the key grid."""
    if leak_mask is None:
        return None, False
    if leak_coverage(leak_mask) >= DEGENERACY_COVERAGE:
        return None, True
    return leak_mask, False


def extract_sim_mask(score_taps: dict[str, torch.Tensor],
                     m_new_per_tap: dict[str, torch.Tensor],
                     exclude: torch.Tensor,
                     common_res: tuple[int, int],
                     tau: float = 0.1,
                     normalize: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Similar-object mask from captured row-stochastic attention scores.

    Per tap: average the score rows of cells inside the object's target
    mask, rearrange to a spatial map, then average across taps at a common
    resolution. The map is max-normalized (configurable) before the strict
    threshold, and cells already in the excluded object regions are removed.

    Returns (raw similarity map, binary mask), both at ``common_res``.
    Empty taps yield an empty mask (the first-step contract).
    """
    maps = []
    for name, p in score_taps.items():
        m_new = m_new_per_tap[name]
        h, w = m_new.shape
        if p.dim() == 3:  # heads first: average heads before row selection
            p = p.mean(dim=0)
        rows = p[m_new.flatten()]
        if rows.numel() == 0:
            continue
        spatial = rows.mean(dim=0).reshape(h, w)
        maps.append(F.interpolate(spatial[None, None], size=common_res,
                                  mode="bilinear", align_corners=False)[0, 0])
    if not maps:
        empty = torch.zeros(common_res, dtype=torch.bool)
        return torch.zeros(common_res), empty

    avg = torch.stack(maps).mean(dim=0)
    if normalize:
        peak = float(avg.max())
        if peak > 0:
            avg = avg / peak
    excl = resample_mask(exclude, common_res, "any_overlap") \
        if exclude.shape != torch.Size(common_res) else exclude
    m_sim = threshold_map(avg, tau) & ~excl
    return avg, m_sim
