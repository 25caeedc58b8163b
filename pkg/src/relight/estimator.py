"""Scikit-learn style estimator facade over the training pipeline.

``LowLightEnhancer`` is a transformer: ``fit`` trains the illumination
estimator and the diffusion noise predictor on a folder (or list) of
low-light images only, and ``transform`` maps dark images to enhanced
ones.  Parameters follow sklearn conventions (stored verbatim in
``__init__``, discoverable through ``get_params``), so the model composes
with pipelines and search utilities.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .guidance import (
    DEFAULT_NEGATIVE_PROMPT,
    DEFAULT_POSITIVE_PROMPT,
    DEFAULT_STUB_SEED,
    DEFAULT_UPSILON,
    PromptPair,
)
from .imaging import DatasetSpec, save_image
from .losses import LossWeights
from .pipeline import Checkpoint, TrainConfig, checkpoint_to_state, enhance_image, state_to_checkpoint, train
from .validation import check_image


class LowLightEnhancer(BaseEstimator, TransformerMixin):
    """Zero-reference low-light enhancer with a fit/transform interface.

    Parameters mirror the training configuration; see ``TrainConfig`` for
    semantics.  After ``fit``, the trained snapshot is available as
    ``checkpoint_`` and can be saved with ``save``.
    """

    def __init__(
        self,
        iterations: int = 500,
        learning_rate: float = 1e-4,
        batch_size: int = 4,
        patch_size: int = 256,
        seed: int = 0,
        timesteps: int = 200,
        beta_start: float = 5e-4,
        beta_end: float = 0.1,
        sample_steps: int = 20,
        rec_sample_steps: int = 4,
        omega: float = 0.1,
        varpi: float = 0.2,
        vartheta1: float = 1.0,
        vartheta2: float = 1.0,
        gamma_sigma: float = 0.1,
        spa_region: int = 4,
        guidance_backend: str = "stub",
        stub_seed: int = DEFAULT_STUB_SEED,
        positive_prompt: str = DEFAULT_POSITIVE_PROMPT,
        negative_prompt: str = DEFAULT_NEGATIVE_PROMPT,
        upsilon: float = DEFAULT_UPSILON,
        file_glob: str = "*.png",
    ):
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.seed = seed
        self.timesteps = timesteps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.sample_steps = sample_steps
        self.rec_sample_steps = rec_sample_steps
        self.omega = omega
        self.varpi = varpi
        self.vartheta1 = vartheta1
        self.vartheta2 = vartheta2
        self.gamma_sigma = gamma_sigma
        self.spa_region = spa_region
        self.guidance_backend = guidance_backend
        self.stub_seed = stub_seed
        self.positive_prompt = positive_prompt
        self.negative_prompt = negative_prompt
        self.upsilon = upsilon
        self.file_glob = file_glob

    def _config(self, root: str, glob: str) -> TrainConfig:
        return TrainConfig(
            dataset=DatasetSpec(
                root=root,
                glob=glob,
                patch_size=self.patch_size,
                batch_size=self.batch_size,
                shuffle_seed=self.seed,
            ),
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            seed=self.seed,
            timesteps=self.timesteps,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            sample_steps=self.sample_steps,
            rec_sample_steps=self.rec_sample_steps,
            weights=LossWeights(
                omega=self.omega,
                varpi=self.varpi,
                vartheta1=self.vartheta1,
                vartheta2=self.vartheta2,
                gamma_sigma=self.gamma_sigma,
                spa_region=self.spa_region,
            ),
            prompts=PromptPair(positive=self.positive_prompt, negative=self.negative_prompt),
            upsilon=self.upsilon,
            guidance_backend=self.guidance_backend,
            stub_seed=self.stub_seed,
        )

    def fit(self, X, y=None):
        """Train on low-light images: a directory path or a list of arrays.

        In-memory arrays are staged as 8-bit PNGs so training always flows
        through the same dataset machinery as file input.
        """
        if isinstance(X, (str, Path)):
            config = self._config(str(X), self.file_glob)
            self.checkpoint_ = train(config)
        else:
            imgs = [check_image(im, f"X[{i}]") for i, im in enumerate(X)]
            with tempfile.TemporaryDirectory(prefix="relight_fit_") as staging:
                for i, im in enumerate(imgs):
                    save_image(im, Path(staging) / f"img_{i:04d}.png")
                config = self._config(staging, "*.png")
                self.checkpoint_ = train(config)
        self._state = checkpoint_to_state(self.checkpoint_)
        return self

    def transform(self, X):
        """Enhance one image (H x W x C array) or a list of them."""
        self._check_fitted()
        if isinstance(X, np.ndarray) and X.ndim in (2, 3):
            out, _ = enhance_image(self._state, X, seed=self.seed)
            return out
        return [enhance_image(self._state, im, seed=self.seed)[0] for im in X]

    def transform_with_illumination(self, img: np.ndarray, seed: int | None = None):
        """Enhance a single image and also return the sampled illumination map."""
        self._check_fitted()
        return enhance_image(self._state, img, seed=self.seed if seed is None else seed)

    def save(self, path) -> None:
        self._check_fitted()
        state_to_checkpoint(self._state).save(path)

    @classmethod
    def from_checkpoint(cls, path) -> "LowLightEnhancer":
        """Rebuild a fitted enhancer from a saved checkpoint."""
        ckpt = Checkpoint.load(path)
        cfg = ckpt.to_config()
        est = cls(
            iterations=cfg.iterations,
            learning_rate=cfg.learning_rate,
            batch_size=cfg.dataset.batch_size,
            patch_size=cfg.dataset.patch_size,
            seed=cfg.seed,
            timesteps=cfg.timesteps,
            beta_start=cfg.beta_start,
            beta_end=cfg.beta_end,
            sample_steps=cfg.sample_steps,
            rec_sample_steps=cfg.rec_sample_steps,
            omega=cfg.weights.omega,
            varpi=cfg.weights.varpi,
            vartheta1=cfg.weights.vartheta1,
            vartheta2=cfg.weights.vartheta2,
            gamma_sigma=cfg.weights.gamma_sigma,
            spa_region=cfg.weights.spa_region,
            guidance_backend=cfg.guidance_backend,
            stub_seed=cfg.stub_seed,
            positive_prompt=cfg.prompts.positive,
            negative_prompt=cfg.prompts.negative,
            upsilon=cfg.upsilon,
            file_glob=cfg.dataset.glob,
        )
        est.checkpoint_ = ckpt
        est._state = checkpoint_to_state(ckpt)
        return est

    def _check_fitted(self) -> None:
        if not hasattr(self, "_state"):
            raise RuntimeError("this LowLightEnhancer is not fitted yet; call fit first")
