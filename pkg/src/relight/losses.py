"""Objective functions: diffusion fit, illumination smoothing, appearance
reconstruction (SSIM content + spectral), color constancy, spatial
consistency, and their weighted compositions.

Every per-element norm is reported as a mean so magnitudes stay
resolution-independent; defaults were chosen against that convention.
All functions are differentiable torch ops on channels-first tensors,
batched (B, C, H, W) or single (C, H, W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

from .frequency import dft_amp_pha, dwt2, laplacian
from .validation import check_same_shape

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LossWeights:
    omega: float = 0.1            # illumination-smoothing weight
    varpi: float = 0.2            # semantic-guidance weight
    vartheta1: float = 1.0        # spectral amplitude weight
    vartheta2: float = 1.0        # spectral phase weight
    gamma_sigma: float = 0.1      # bandwidth of the smoothing weights
    ssim_window: int = 11
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    spa_region: int = 4           # local region side for spatial consistency

    def __post_init__(self):
        for name in ("omega", "varpi", "vartheta1", "vartheta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.gamma_sigma <= 0:
            raise ValueError(f"gamma_sigma must be positive, got {self.gamma_sigma}")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError(f"ssim_window must be odd and >= 3, got {self.ssim_window}")
        if self.spa_region < 1:
            raise ValueError(f"spa_region must be >= 1, got {self.spa_region}")


def _batched(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        return x[None]
    if x.dim() != 4:
        raise ValueError(f"expected (B, C, H, W) or (C, H, W), got {tuple(x.shape)}")
    return x


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return g[:, None] * g[None, :]


def ssim_index(
    x: torch.Tensor,
    y: torch.Tensor,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> torch.Tensor:
    """Mean SSIM with a Gaussian window, valid-mode, per-channel then averaged.

    The single source of truth: the content loss and the evaluation metric
    both call this.
    """
    check_same_shape(x, y, "x", "y")
    x, y = _batched(x), _batched(y)
    h, w = x.shape[-2:]
    if h < window or w < window:
        raise ValueError(f"image {h} x {w} smaller than SSIM window {window}")
    c = x.shape[1]
    kern = _gaussian_window(window, sigma, x.dtype, x.device).expand(c, 1, window, window)

    def blur(z):
        return F.conv2d(z, kern, groups=c)

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def diffusion_loss(
    eps_true: torch.Tensor,
    eps_pred: torch.Tensor,
    illum_hat: torch.Tensor | None = None,
    illum: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean-squared noise error plus mean-squared illumination-fit error.

    The illumination pair may be omitted (ablations isolate the noise term).
    """
    check_same_shape(eps_true, eps_pred, "eps_true", "eps_pred")
    loss = ((eps_true - eps_pred) ** 2).mean()
    if illum_hat is not None or illum is not None:
        if illum_hat is None or illum is None:
            raise ValueError("illum_hat and illum must be given together")
        check_same_shape(illum_hat, illum, "illum_hat", "illum")
        loss = loss + ((illum_hat - illum) ** 2).mean()
    return loss


def smooth_loss(
    illum_hat: torch.Tensor,
    illum: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Edge-aware smoothing over 5x5 neighborhoods, as a mean over all
    contributing neighbor pairs.

    Neighbor weights fall off with the squared channel-summed difference of
    the initial illumination (Gaussian of bandwidth ``gamma_sigma``);
    boundary pixels use only their existing neighbors.
    """
    check_same_shape(illum_hat, illum, "illum_hat", "illum")
    a_hat, a_ref = _batched(illum_hat), _batched(illum)
    h, w = a_hat.shape[-2:]
    inv_two_sigma_sq = 1.0 / (2.0 * weights.gamma_sigma**2)
    total = a_hat.new_zeros(())
    n_pairs = 0
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            if dy == 0 and dx == 0:
                continue
            ys0, ys1 = max(0, dy), h + min(0, dy)
            xs0, xs1 = max(0, dx), w + min(0, dx)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            ch = a_hat[..., ys0:ys1, xs0:xs1]
            nh = a_hat[..., ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx]
            cm = a_ref[..., ys0:ys1, xs0:xs1]
            nm = a_ref[..., ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx]
            gamma = torch.exp(-((cm - nm) ** 2).sum(dim=1) * inv_two_sigma_sq)
            l1 = (ch - nh).abs().sum(dim=1) + (cm - nm).abs().sum(dim=1)
            total = total + (gamma * l1).sum(dim=(-2, -1)).mean()
            n_pairs += (ys1 - ys0) * (xs1 - xs0)
    return total / float(n_pairs)


def content_loss(
    enhanced: torch.Tensor,
    structural: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Structural-similarity content loss at the edge level plus the raw level."""
    check_same_shape(enhanced, structural, "enhanced", "structural")
    kw = dict(window=weights.ssim_window, k1=weights.ssim_k1, k2=weights.ssim_k2)
    edge = 1.0 - ssim_index(laplacian(enhanced), laplacian(structural), **kw)
    raw = 1.0 - ssim_index(enhanced, structural, **kw)
    return edge + raw


def spectral_loss(
    enhanced: torch.Tensor,
    structural: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """L1 amplitude/phase gap between the DFT spectra of the wavelet
    high-frequency subbands (stacked along channels); phase differences are
    wrapped to (-pi, pi]."""
    check_same_shape(enhanced, structural, "enhanced", "structural")
    spec_e = dft_amp_pha(torch.cat(dwt2(enhanced).details, dim=-3))
    spec_r = dft_amp_pha(torch.cat(dwt2(structural).details, dim=-3))
    amp_term = (spec_e.amp - spec_r.amp).abs().mean()
    dpha = spec_e.pha - spec_r.pha
    dpha = dpha - _TWO_PI * torch.round(dpha / _TWO_PI)
    pha_term = dpha.abs().mean()
    return weights.vartheta1 * amp_term + weights.vartheta2 * pha_term


def color_loss(enhanced: torch.Tensor) -> torch.Tensor:
    """Gray-world color constancy: squared gaps between channel means."""
    x = _batched(enhanced)
    if x.shape[1] != 3:
        raise ValueError(f"color loss needs 3 channels, got {x.shape[1]}")
    means = x.mean(dim=(-2, -1))
    r, g, b = means[:, 0], means[:, 1], means[:, 2]
    return ((r - g) ** 2 + (r - b) ** 2 + (g - b) ** 2).mean()


def spa_loss(
    enhanced: torch.Tensor,
    low: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Spatial consistency: contrast between 4-neighbor region means must
    match between the enhanced image and the input."""
    check_same_shape(enhanced, low, "enhanced", "low")
    e, i = _batched(enhanced), _batched(low)
    r = weights.spa_region
    h, w = e.shape[-2:]
    if h % r or w % r:
        raise ValueError(f"spa_region {r} must divide image dims {h} x {w}")
    em = F.avg_pool2d(e.mean(dim=1, keepdim=True), r)
    im = F.avg_pool2d(i.mean(dim=1, keepdim=True), r)
    n_regions = em.shape[-2] * em.shape[-1]
    total = em.new_zeros(())
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        hh, ww = em.shape[-2:]
        ys0, ys1 = max(0, dy), hh + min(0, dy)
        xs0, xs1 = max(0, dx), ww + min(0, dx)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        de = (em[..., ys0:ys1, xs0:xs1] - em[..., ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx]).abs()
        di = (im[..., ys0:ys1, xs0:xs1] - im[..., ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx]).abs()
        total = total + ((de - di) ** 2).sum(dim=(-2, -1)).mean()
    return total / float(n_regions)


def rec_loss(
    content: torch.Tensor,
    spectral: torch.Tensor,
    prob: torch.Tensor,
    clip: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Appearance reconstruction total: content + spectral + varpi * (prob + clip)."""
    return content + spectral + weights.varpi * (prob + clip)


@dataclass
class LossBreakdown:
    """Scalar values of every component, for logging and the loss CSV."""

    diff: float = 0.0
    smooth: float = 0.0
    rec: float = 0.0
    col: float = 0.0
    spa: float = 0.0
    total: float = 0.0
    content: float = 0.0
    spectral: float = 0.0
    clip: float = 0.0
    prob: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def total_loss(
    diff: torch.Tensor,
    smooth: torch.Tensor,
    rec: torch.Tensor,
    col: torch.Tensor,
    spa: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, LossBreakdown]:
    """Training objective: diff + omega * smooth + rec + col + spa.

    Returns the differentiable total and a float breakdown record.
    """
    total = diff + weights.omega * smooth + rec + col + spa
    breakdown = LossBreakdown(
        diff=float(diff.detach()) if isinstance(diff, torch.Tensor) else float(diff),
        smooth=float(smooth.detach()) if isinstance(smooth, torch.Tensor) else float(smooth),
        rec=float(rec.detach()) if isinstance(rec, torch.Tensor) else float(rec),
        col=float(col.detach()) if isinstance(col, torch.Tensor) else float(col),
        spa=float(spa.detach()) if isinstance(spa, torch.Tensor) else float(spa),
        total=float(total.detach()),
    )
    return total, breakdown
