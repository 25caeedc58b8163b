"""Input validation helpers and numpy/torch boundary conversions.

Images cross the public API as numpy ``H x W x C`` float arrays in
[0, 1] (C is 1 or 3, RGB order).  All internal math runs on channels-first
float64 torch tensors; ``image_to_tensor`` / ``tensor_to_image`` are the
only sanctioned crossings.
"""

from __future__ import annotations

import numpy as np
import torch


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an image array and return it as float64.

    Enforces the shared invariants: finite values in [0, 1], H and W at
    least 2, channel count 1 or 3.
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected H x W x C array, got shape {arr.shape}")
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValueError(f"{name}: channel count must be 1 or 3, got {c}")
    if h < 2 or w < 2:
        raise ValueError(f"{name}: spatial dims must be >= 2, got {h} x {w}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name}: values outside [0, 1] (min {arr.min():.4g}, max {arr.max():.4g})"
        )
    return arr


def check_even_dims(img: np.ndarray, name: str = "image") -> np.ndarray:
    h, w = img.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"{name}: H and W must be even for the wavelet transform, got {h} x {w}")
    return img


def check_same_shape(a, b, name_a: str = "a", name_b: str = "b") -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch: {name_a} {tuple(a.shape)} vs {name_b} {tuple(b.shape)}")


def center_crop_even(img: np.ndarray) -> np.ndarray:
    """Center-crop an image so both spatial dims are even."""
    h, w = img.shape[:2]
    nh, nw = h - h % 2, w - w % 2
    oy, ox = (h - nh) // 2, (w - nw) // 2
    return img[oy : oy + nh, ox : ox + nw]


def image_to_tensor(img: np.ndarray) -> torch.Tensor:
    """H x W x C numpy image -> (C, H, W) float64 tensor."""
    arr = check_image(img)
    return torch.from_numpy(np.ascontiguousarray(np.moveaxis(arr, -1, 0)))


def tensor_to_image(t: torch.Tensor, clamp: bool = True) -> np.ndarray:
    """(C, H, W) or (1, C, H, W) tensor -> H x W x C float64 numpy image."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError(f"expected a single image, got batch of {t.shape[0]}")
        t = t[0]
    if t.dim() != 3:
        raise ValueError(f"expected (C, H, W) tensor, got shape {tuple(t.shape)}")
    arr = np.moveaxis(t.detach().cpu().double().numpy(), 0, -1)
    if clamp:
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def batch_to_tensor(imgs) -> torch.Tensor:
    """List of H x W x C images (same shape) -> (B, C, H, W) float64 tensor."""
    ts = [image_to_tensor(im) for im in imgs]
    for t in ts[1:]:
        check_same_shape(ts[0], t, "batch[0]", "batch[i]")
    return torch.stack(ts, dim=0)
