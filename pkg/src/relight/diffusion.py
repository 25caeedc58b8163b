"""Conditional diffusion on the wavelet LL band of the illumination map.

The forward process corrupts the LL band of the estimated illumination;
the reverse chain, conditioned on the LL bands of the structural and
low-light images, samples a refined illumination whose detail subbands
are carried over from the initial estimate.  The sampled illumination
then acts as the learned degradation field: enhancement is elementwise
division by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .frequency import WaveletPyramid, dwt2, idwt2
from .illumination import DEFAULT_EPSILON_DIV
from .validation import check_same_shape

DEFAULT_TIMESTEPS = 200
# the classic 1000-step (1e-4, 0.02) range rescaled by 1000/T so that
# alpha_bar[T-1] stays below 0.05 at the default T
DEFAULT_BETA_START = 5e-4
DEFAULT_BETA_END = 0.1
DEFAULT_SAMPLE_STEPS = 20


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta/alpha/alpha_bar/sigma arrays, 1-based timesteps.

    ``timestep_map[t-1]`` is the original-schedule timestep fed to the noise
    predictor, so respaced (strided) schedules reuse the embeddings the
    model was trained with.
    """

    beta: np.ndarray
    timestep_map: np.ndarray | None = None
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D array")
        if not np.all((beta > 0.0) & (beta < 1.0)):
            raise ValueError("every beta_t must lie in (0, 1)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", 1.0 - beta)
        object.__setattr__(self, "alpha_bar", np.cumprod(1.0 - beta))
        object.__setattr__(self, "sigma", np.sqrt(beta))
        if not np.all(np.diff(self.alpha_bar) < 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if self.timestep_map is not None:
            tmap = np.asarray(self.timestep_map, dtype=np.int64)
            if tmap.shape != beta.shape:
                raise ValueError("timestep_map must match beta in length")
            object.__setattr__(self, "timestep_map", tmap)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def model_timestep(self, t: int) -> int:
        """Original-schedule timestep for 1-based step ``t`` of this schedule."""
        self._check_t(t)
        if self.timestep_map is None:
            return t
        return int(self.timestep_map[t - 1])

    def _check_t(self, t) -> None:
        t_arr = np.asarray(t)
        if np.any(t_arr < 1) or np.any(t_arr > self.T):
            raise IndexError(f"timestep {t} out of range [1, {self.T}]")


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule over t = 1..T."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule(beta=np.linspace(beta_start, beta_end, T))


def default_schedule() -> NoiseSchedule:
    return make_schedule(DEFAULT_TIMESTEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)


def respace_schedule(sched: NoiseSchedule, steps: int) -> NoiseSchedule:
    """Uniformly strided sub-schedule with ``steps`` timesteps.

    Betas are recomputed from ratios of the retained alpha_bar values, so the
    strided chain targets the same marginals; the final alpha_bar (and hence
    the pure-noise start) is preserved because the last original step is
    always kept.
    """
    if not (1 <= steps <= sched.T):
        raise ValueError(f"steps must be in [1, {sched.T}], got {steps}")
    idx = np.unique(np.round(np.arange(1, steps + 1) * (sched.T / steps)).astype(np.int64))
    idx[-1] = sched.T
    bar = sched.alpha_bar[idx - 1]
    prev = np.concatenate(([1.0], bar[:-1]))
    beta = 1.0 - bar / prev
    base_map = sched.timestep_map if sched.timestep_map is not None else np.arange(1, sched.T + 1)
    return NoiseSchedule(beta=beta, timestep_map=base_map[idx - 1])


def _coef(values: np.ndarray, t, like: torch.Tensor) -> torch.Tensor:
    """Gather per-timestep coefficients, broadcastable against ``like``."""
    t_arr = np.asarray(t, dtype=np.int64)
    picked = values[t_arr - 1]
    out = torch.as_tensor(picked, dtype=like.dtype, device=like.device)
    if out.dim() == 0:
        return out
    return out.view(-1, *([1] * (like.dim() - 1)))


def q_sample(x0: torch.Tensor, t, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward corruption: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    ``t`` is a 1-based int or a length-B vector of ints for per-sample
    timesteps.
    """
    check_same_shape(x0, eps, "x0", "eps")
    sched._check_t(t)
    bar = _coef(sched.alpha_bar, t, x0)
    return torch.sqrt(bar) * x0 + torch.sqrt(1.0 - bar) * eps


# LL coefficients of a unit-range image live in [0, 2] under the
# orthonormal Haar convention
LL_RANGE = (0.0, 2.0)


def p_sample_step(
    x_t: torch.Tensor,
    t: int,
    cond: tuple[torch.Tensor, torch.Tensor],
    model,
    sched: NoiseSchedule,
    noise: torch.Tensor | None = None,
    x0_range: tuple[float, float] | None = LL_RANGE,
) -> torch.Tensor:
    """One reverse step: posterior mean from the predicted noise, plus
    sigma_t * noise (sigma forced to 0 at t = 1).

    ``model`` is called with the conditioning channels concatenated:
    ``model(cat([x_t, cond_r, cond_l], dim=1), t_model)``.

    The mean is computed through the implied clean sample, which is
    range-guarded to ``x0_range`` (the LL data domain).  For a consistent
    predictor the guard is inactive and the step is exactly the
    noise-predictor mean; with an untrained one it stops the chain from
    amplifying (the raw mean recursion grows like 1/sqrt(alpha_bar)).
    """
    sched._check_t(t)
    cond_r, cond_l = cond
    check_same_shape(x_t, cond_r, "x_t", "cond[0]")
    check_same_shape(x_t, cond_l, "x_t", "cond[1]")
    t_model = torch.full(
        (x_t.shape[0],), sched.model_timestep(t), dtype=torch.int64, device=x_t.device
    )
    eps = model(torch.cat([x_t, cond_r, cond_l], dim=1), t_model)
    beta = float(sched.beta[t - 1])
    alpha = float(sched.alpha[t - 1])
    bar = float(sched.alpha_bar[t - 1])
    x0_hat = (x_t - math.sqrt(1.0 - bar) * eps) / math.sqrt(bar)
    if x0_range is not None:
        x0_hat = torch.clamp(x0_hat, *x0_range)
    bar_prev = float(sched.alpha_bar[t - 2]) if t > 1 else 1.0
    # q-posterior mean in terms of (x0_hat, x_t); identical to the
    # noise-predictor mean when the guard is inactive
    mean = (
        math.sqrt(alpha) * (1.0 - bar_prev) / (1.0 - bar) * x_t
        + math.sqrt(bar_prev) * beta / (1.0 - bar) * x0_hat
    )
    if t == 1 or noise is None:
        return mean
    return mean + float(sched.sigma[t - 1]) * noise


def sample_illumination(
    structural: torch.Tensor,
    low: torch.Tensor,
    illum: torch.Tensor,
    model,
    sched: NoiseSchedule,
    seed: int | torch.Generator = 0,
) -> torch.Tensor:
    """Run the full reverse chain on the LL band and rebuild the refined
    illumination map.

    The chain starts from pure Gaussian noise, conditioned on the LL bands
    of the structural and low-light images; the detail subbands of the
    initial estimate ``illum`` are carried over unchanged, and the result is
    clamped into [low, 1].
    """
    check_same_shape(structural, low, "structural", "low")
    check_same_shape(illum, low, "illum", "low")
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    cond = (dwt2(structural).ll, dwt2(low).ll)
    pyr_m = dwt2(illum)
    x = torch.randn(pyr_m.ll.shape, generator=gen, dtype=low.dtype, device=low.device)
    for t in range(sched.T, 0, -1):
        noise = None
        if t > 1:
            noise = torch.randn(x.shape, generator=gen, dtype=x.dtype, device=x.device)
        x = p_sample_step(x, t, cond, model, sched, noise)
    refined = idwt2(WaveletPyramid(ll=x, lh=pyr_m.lh, hl=pyr_m.hl, hh=pyr_m.hh))
    return torch.maximum(torch.minimum(refined, torch.ones_like(refined)), low)


def enhance(
    low: torch.Tensor,
    illum_hat: torch.Tensor,
    epsilon_div: float = DEFAULT_EPSILON_DIV,
) -> torch.Tensor:
    """Enhanced image: ``low / max(illum_hat, eps)`` clamped to [0, 1].

    Monotone in the illumination: a pointwise smaller (still >= eps) field
    never produces a darker output.
    """
    check_same_shape(low, illum_hat, "low", "illum_hat")
    return torch.clamp(low / torch.clamp(illum_hat, min=epsilon_div), 0.0, 1.0)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / (half - 1)
    )
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class _ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.proj_t = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(8, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, t_emb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.proj_t(self.act(t_emb))[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class NoisePredictor(nn.Module):
    """Small conditional U-Net predicting the injected noise on the LL band.

    Input is the noisy LL band concatenated with the two conditioning LL
    bands (9 channels total); three resolution levels at widths
    (base, 2*base, 2*base) with sinusoidal timestep embeddings.
    """

    def __init__(self, base_width: int = 32, channels: int = 3, seed: int | None = None):
        super().__init__()
        if seed is not None:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(seed)
                self._build(base_width, channels)
        else:
            self._build(base_width, channels)
        self.double()

    def _build(self, w: int, channels: int) -> None:
        self.channels = channels
        t_dim = 4 * w
        self.t_dim = t_dim
        self.time_mlp = nn.Sequential(nn.Linear(w, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))
        self.emb_width = w
        self.stem = nn.Conv2d(3 * channels, w, 3, padding=1)
        self.enc0 = _ResBlock(w, w, t_dim)
        self.down0 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.enc1 = _ResBlock(2 * w, 2 * w, t_dim)
        self.down1 = nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1)
        self.mid = _ResBlock(2 * w, 2 * w, t_dim)
        self.up1 = nn.Conv2d(2 * w, 2 * w, 3, padding=1)
        self.dec1 = _ResBlock(4 * w, 2 * w, t_dim)
        self.up0 = nn.Conv2d(2 * w, w, 3, padding=1)
        self.dec0 = _ResBlock(2 * w, w, t_dim)
        self.out_norm = nn.GroupNorm(8, w)
        self.out_conv = nn.Conv2d(w, channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, z: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if z.dim() != 4 or z.shape[1] != 3 * self.channels:
            raise ValueError(
                f"expected (B, {3 * self.channels}, h, w) input, got {tuple(z.shape)}"
            )
        t_emb = self.time_mlp(timestep_embedding(t, self.emb_width))
        h0 = self.enc0(self.stem(z), t_emb)
        h1 = self.enc1(self.down0(h0), t_emb)
        h2 = self.mid(self.down1(h1), t_emb)
        u1 = F.interpolate(h2, size=h1.shape[-2:], mode="nearest")
        u1 = self.dec1(torch.cat([self.up1(u1), h1], dim=1), t_emb)
        u0 = F.interpolate(u1, size=h0.shape[-2:], mode="nearest")
        u0 = self.dec0(torch.cat([self.up0(u0), h0], dim=1), t_emb)
        return self.out_conv(self.act(self.out_norm(u0)))
