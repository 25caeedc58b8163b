"""Deterministic frequency-domain transforms.

One-level orthonormal Haar DWT/IDWT, per-channel 2-D DFT amplitude/phase,
and the discrete Laplacian edge operator.  Everything here is a pure,
differentiable function of torch tensors whose last two dims are spatial
(any leading batch/channel dims); use ``validation.image_to_tensor`` to
bring numpy images in.

Conventions fixed for bit-stable tests: orthonormal Haar (a constant
image c maps to LL = 2c), unnormalized forward DFT, Laplacian kernel
[[0,1,0],[1,-4,1],[0,1,0]] with replicate padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class WaveletPyramid:
    """One decomposition level: approximation plus the three detail subbands."""

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor

    def __post_init__(self):
        shapes = {tuple(b.shape) for b in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise ValueError(f"subband shapes differ: {sorted(shapes)}")

    @property
    def details(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return self.lh, self.hl, self.hh


@dataclass(frozen=True)
class Spectrum:
    """DFT magnitude (>= 0) and principal-argument phase in (-pi, pi]."""

    amp: torch.Tensor
    pha: torch.Tensor


def _as_spatial_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    if t.dim() < 2:
        raise ValueError(f"need at least 2 spatial dims, got shape {tuple(t.shape)}")
    return t


def dwt2(x) -> WaveletPyramid:
    """One-level orthonormal separable Haar transform over the last two dims.

    Energy-preserving: the squared norm of the four subbands equals the
    squared norm of the input.
    """
    t = _as_spatial_tensor(x)
    h, w = t.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"H and W must be even, got {h} x {w}")
    lo_w = (t[..., :, 0::2] + t[..., :, 1::2]) / _SQRT2
    hi_w = (t[..., :, 0::2] - t[..., :, 1::2]) / _SQRT2
    ll = (lo_w[..., 0::2, :] + lo_w[..., 1::2, :]) / _SQRT2
    lh = (lo_w[..., 0::2, :] - lo_w[..., 1::2, :]) / _SQRT2
    hl = (hi_w[..., 0::2, :] + hi_w[..., 1::2, :]) / _SQRT2
    hh = (hi_w[..., 0::2, :] - hi_w[..., 1::2, :]) / _SQRT2
    return WaveletPyramid(ll=ll, lh=lh, hl=hl, hh=hh)


def idwt2(pyr: WaveletPyramid) -> torch.Tensor:
    """Exact left-inverse of :func:`dwt2`.

    Output may transiently leave [0, 1]; callers clamp where that matters.
    """
    ll, lh, hl, hh = pyr.ll, pyr.lh, pyr.hl, pyr.hh
    lo_w_even = (ll + lh) / _SQRT2
    lo_w_odd = (ll - lh) / _SQRT2
    hi_w_even = (hl + hh) / _SQRT2
    hi_w_odd = (hl - hh) / _SQRT2
    hh2, ww2 = ll.shape[-2:]
    lo_w = torch.stack((lo_w_even, lo_w_odd), dim=-2).reshape(*ll.shape[:-2], 2 * hh2, ww2)
    hi_w = torch.stack((hi_w_even, hi_w_odd), dim=-2).reshape(*ll.shape[:-2], 2 * hh2, ww2)
    even = (lo_w + hi_w) / _SQRT2
    odd = (lo_w - hi_w) / _SQRT2
    out = torch.stack((even, odd), dim=-1).reshape(*ll.shape[:-2], 2 * hh2, 2 * ww2)
    return out


def dft_amp_pha(x) -> Spectrum:
    """Unnormalized forward 2-D DFT over the last two dims, as (amplitude, phase).

    amp[..., 0, 0] of a non-negative real input is the sum of its values with
    zero phase.  ``amp * exp(i * pha)`` inverts back through ``ifft2``.
    """
    t = _as_spatial_tensor(x)
    if not torch.isfinite(t.detach()).all():
        raise ValueError("input contains non-finite values")
    spec = torch.fft.fft2(t, dim=(-2, -1), norm="backward")
    amp = torch.abs(spec)
    pha = torch.angle(spec)
    # torch.angle returns [-pi, pi]; fold the closed lower end onto +pi
    pha = torch.where(pha <= -math.pi, pha + 2.0 * math.pi, pha)
    return Spectrum(amp=amp, pha=pha)


_LAPLACIAN_KERNEL = torch.tensor(
    [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]], dtype=torch.float64
)


def laplacian(x) -> torch.Tensor:
    """Discrete Laplacian (4-neighbor kernel) with replicate-padded borders."""
    t = _as_spatial_tensor(x)
    h, w = t.shape[-2:]
    if h < 3 or w < 3:
        raise ValueError(f"H and W must be >= 3 for the Laplacian, got {h} x {w}")
    lead = t.shape[:-2]
    flat = t.reshape(-1, 1, h, w)
    padded = F.pad(flat, (1, 1, 1, 1), mode="replicate")
    kern = _LAPLACIAN_KERNEL.to(dtype=t.dtype, device=t.device).view(1, 1, 3, 3)
    out = F.conv2d(padded, kern)
    return out.reshape(*lead, h, w)
