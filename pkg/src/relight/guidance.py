"""Semantic guidance: prompt pairs, encoder backends, and latent-space losses.

Two interchangeable backends produce unit-norm 512-D embeddings: a
deterministic dependency-free stub (seeded random projections, so the
whole pipeline trains with zero downloaded weights) and an optional
adapter around a pretrained CLIP checkpoint.  Image encoding is
differentiable w.r.t. pixels in both.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import BackendError, ConfigError

EMBED_DIM = 512
DEFAULT_POSITIVE_PROMPT = "a bright, well-exposed, clear photo"
DEFAULT_NEGATIVE_PROMPT = "a dark, underexposed, noisy photo"
DEFAULT_UPSILON = 0.9
# chosen so the stub orders brightness the way a real CLIP would:
# dark images land closer to the negative prompt (pinned in tests)
DEFAULT_STUB_SEED = 16


@dataclass(frozen=True)
class PromptPair:
    positive: str = DEFAULT_POSITIVE_PROMPT
    negative: str = DEFAULT_NEGATIVE_PROMPT

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise ConfigError("prompts must be non-empty")
        if self.positive == self.negative:
            raise ConfigError("positive and negative prompts must differ")


class StubEncoder:
    """Deterministic stand-in for a pretrained text/image encoder.

    Text: a seeded hash of the prompt selects a fixed random unit vector.
    Image: bilinear resize to 224x224, 8x8 average pooling, then a fixed
    seeded dense projection and L2 normalization - linear-then-normalize,
    so embeddings respond to brightness changes and stay differentiable.
    """

    kind = "stub"
    resolution = 224
    pool = 8

    def __init__(self, seed: int = DEFAULT_STUB_SEED, dim: int = EMBED_DIM):
        self.seed = int(seed)
        self.dim = int(dim)
        self._text_cache: dict[str, torch.Tensor] = {}
        n_in = 3 * (self.resolution // self.pool) ** 2
        rng = np.random.default_rng(self.seed)
        w = rng.standard_normal((n_in, self.dim)) / np.sqrt(n_in)
        self._proj = torch.from_numpy(w)

    def encode_text(self, prompt: str) -> torch.Tensor:
        if not prompt:
            raise ConfigError("prompt must be non-empty")
        cached = self._text_cache.get(prompt)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}|{prompt}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.standard_normal(self.dim)
        out = torch.from_numpy(vec / np.linalg.norm(vec))
        self._text_cache[prompt] = out
        return out

    def encode_image(self, img: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) or (3, H, W) float tensor -> (B, D) or (D,) unit vectors."""
        single = img.dim() == 3
        if single:
            img = img[None]
        if img.dim() != 4 or img.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) image tensor, got {tuple(img.shape)}")
        x = F.interpolate(
            img.double(), size=(self.resolution, self.resolution),
            mode="bilinear", align_corners=False,
        )
        x = F.avg_pool2d(x, self.pool).reshape(img.shape[0], -1)
        emb = F.normalize(x @ self._proj, dim=1, eps=1e-12)
        return emb[0] if single else emb


class PretrainedEncoder:
    """Adapter around a local pretrained CLIP checkpoint (same contract as the stub).

    Weights are never downloaded; absence raises a BackendError that points
    at the stub.
    """

    kind = "pretrained"
    _CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
    _CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

    def __init__(self, weights_path: str = "openai/clip-vit-base-patch32"):
        try:
            from transformers import CLIPModel, CLIPTokenizer
        except ImportError as exc:
            raise BackendError(
                "transformers is not installed; use the stub backend "
                "(guidance.backend = 'stub') or install the 'clip' extra"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(weights_path, local_files_only=True)
            self._tokenizer = CLIPTokenizer.from_pretrained(weights_path, local_files_only=True)
        except Exception as exc:
            raise BackendError(
                f"pretrained CLIP weights not available at {weights_path!r}; "
                "use the stub backend (guidance.backend = 'stub') or point "
                "guidance.weights_path at a local checkpoint"
            ) from exc
        self._model.eval()
        self.resolution = self._model.config.vision_config.image_size

    def encode_text(self, prompt: str) -> torch.Tensor:
        if not prompt:
            raise ConfigError("prompt must be non-empty")
        tokens = self._tokenizer([prompt], padding=True, return_tensors="pt")
        with torch.no_grad():
            feat = self._model.get_text_features(**tokens)[0]
        return F.normalize(feat, dim=0).double()

    def encode_image(self, img: torch.Tensor) -> torch.Tensor:
        single = img.dim() == 3
        if single:
            img = img[None]
        x = F.interpolate(
            img.float(), size=(self.resolution, self.resolution),
            mode="bilinear", align_corners=False,
        )
        mean = torch.tensor(self._CLIP_MEAN, dtype=x.dtype).view(1, 3, 1, 1)
        std = torch.tensor(self._CLIP_STD, dtype=x.dtype).view(1, 3, 1, 1)
        feat = self._model.get_image_features(pixel_values=(x - mean) / std)
        emb = F.normalize(feat, dim=1).double()
        return emb[0] if single else emb


def make_backend(kind: str, stub_seed: int = DEFAULT_STUB_SEED, weights_path: str | None = None):
    if kind == "stub":
        return StubEncoder(seed=stub_seed)
    if kind == "pretrained":
        return PretrainedEncoder(weights_path or "openai/clip-vit-base-patch32")
    raise ConfigError(f"unknown guidance backend {kind!r} (expected 'stub' or 'pretrained')")


def _image_text_cos(backend, img: torch.Tensor, text_emb: torch.Tensor) -> torch.Tensor:
    emb = backend.encode_image(img)
    if emb.dim() == 1:
        emb = emb[None]
    return emb @ text_emb


def clip_loss(backend, prompts: PromptPair, structural: torch.Tensor, enhanced: torch.Tensor) -> torch.Tensor:
    """Two-term softmax similarity loss in the shared latent space.

    For each of the structural and enhanced images, the probability mass the
    softmax over {positive, negative} cosine similarities assigns to the
    negative prompt; summed over both images, so the value lies in (0, 2).
    Batches are averaged per image.
    """
    t_pos = backend.encode_text(prompts.positive)
    t_neg = backend.encode_text(prompts.negative)
    total = None
    for img in (structural, enhanced):
        cos_p = _image_text_cos(backend, img, t_pos)
        cos_n = _image_text_cos(backend, img, t_neg)
        term = torch.exp(cos_n) / (torch.exp(cos_p) + torch.exp(cos_n))
        total = term.mean() if total is None else total + term.mean()
    return total


def prob_loss(
    backend,
    prompts: PromptPair,
    enhanced: torch.Tensor,
    upsilon: float = DEFAULT_UPSILON,
    target: str = "negative",
) -> torch.Tensor:
    """Distance between a prompt-similarity and the target light level upsilon.

    Uses the negative prompt as printed; ``target='positive'`` switches to
    the positive prompt.
    """
    if not 0.0 <= upsilon <= 1.0:
        raise ConfigError(f"upsilon must be in [0, 1], got {upsilon}")
    if target not in ("negative", "positive"):
        raise ConfigError(f"prob_loss target must be 'negative' or 'positive', got {target!r}")
    prompt = prompts.negative if target == "negative" else prompts.positive
    cos = _image_text_cos(backend, enhanced, backend.encode_text(prompt))
    return torch.abs(cos - upsilon).mean()
