"""Image and mask ingest/emit helpers (PNG/JPEG via Pillow)."""
from __future__ import annotations

import io as _io
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage


def image_to_tensor(img: PILImage.Image) -> torch.Tensor:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def tensor_to_image(t: torch.Tensor) -> PILImage.Image:
    arr = (t.clamp(0, 1).permute(1, 2, 0).numpy() * 255.0).round().astype(np.uint8)
    return PILImage.fromarray(arr)


def load_image(path: str | Path) -> torch.Tensor:
    return image_to_tensor(PILImage.open(path))


def save_image(t: torch.Tensor, path: str | Path) -> None:
    tensor_to_image(t).save(path)


def load_mask(path: str | Path) -> torch.Tensor:
    """Single-channel PNG; any nonzero pixel counts as set."""
    arr = np.asarray(PILImage.open(path).convert("L"))
    return torch.from_numpy(arr > 0)


def save_mask(m: torch.Tensor, path: str | Path) -> None:
    arr = (m.numpy().astype(np.uint8)) * 255
    PILImage.fromarray(arr, mode="L").save(path)


def encode_png_bytes(t: torch.Tensor) -> bytes:
    buf = _io.BytesIO()
    tensor_to_image(t).save(buf, format="PNG")
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> torch.Tensor:
    return image_to_tensor(PILImage.open(_io.BytesIO(data)))


def decode_mask_bytes(data: bytes) -> torch.Tensor:
    arr = np.asarray(PILImage.open(_io.BytesIO(data)).convert("L"))
    return torch.from_numpy(arr > 0)


def dump_latents(z: torch.Tensor, path: str | Path) -> None:
    """Debug dump: little-endian float32, C-order, dims in a JSON header."""
    path = Path(path)
    path.with_suffix(".json").write_text(json.dumps({
        "dims": list(z.shape), "dtype": "float32-le", "order": "C"}))
    path.write_bytes(z.to(torch.float32).numpy().astype("<f4").tobytes())


def load_latents(path: str | Path) -> torch.Tensor:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    arr = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(header["dims"])
    return torch.from_numpy(arr.copy())
