"""Initial optimization network: illumination estimation and Retinex split.

A lightweight convolutional estimator maps a low-light image to its
illumination component, constrained so the decomposition is always a
valid reflectance: the network emits s in (0, 1) and the illumination is
I_L + (1 - I_L) * s, which pins it into [I_L, 1] elementwise.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .validation import check_same_shape

DEFAULT_EPSILON_DIV = 1e-4


class IlluminationNet(nn.Module):
    """Three 3x3 conv layers (3 -> width -> width -> 3) with smooth activations.

    Smooth nonlinearities (SiLU, sigmoid) keep every parameter finite-
    difference checkable.  Parameter count stays under 10k at the default
    width of 16.
    """

    def __init__(self, width: int = 16, seed: int | None = None):
        super().__init__()
        if seed is not None:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(seed)
                self._build(width)
        else:
            self._build(width)
        self.double()

    def _build(self, width: int) -> None:
        self.body = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 3, 3, padding=1),
        )

    def forward(self, low: torch.Tensor) -> torch.Tensor:
        """Estimate the illumination map of a (B, 3, H, W) low-light batch."""
        if low.dim() != 4 or low.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) input, got {tuple(low.shape)}")
        s = torch.sigmoid(self.body(low))
        return low + (1.0 - low) * s


def estimate_illumination(net: IlluminationNet, low: torch.Tensor) -> torch.Tensor:
    """Forward pass wrapper; output shares the input's shape and satisfies
    ``low <= illum <= 1`` elementwise."""
    return net(low)


def retinex_decompose(
    low: torch.Tensor,
    illum: torch.Tensor,
    epsilon_div: float = DEFAULT_EPSILON_DIV,
) -> torch.Tensor:
    """Structural (reflectance-like) image: ``low / max(illum, eps)``, clamped.

    With ``illum >= low`` the quotient is already in [0, 1]; the clamp only
    absorbs floating fuzz.  Reconstruction ``result * illum`` returns ``low``
    wherever ``illum >= epsilon_div``.
    """
    check_same_shape(low, illum, "low", "illum")
    if epsilon_div <= 0:
        raise ValueError(f"epsilon_div must be positive, got {epsilon_div}")
    return torch.clamp(low / torch.clamp(illum, min=epsilon_div), 0.0, 1.0)
