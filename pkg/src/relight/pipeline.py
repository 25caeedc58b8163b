"""Bidirectional training loop, checkpointing, and end-to-end enhancement.

One optimizer step per iteration updates both networks from the same
total-loss gradient: the diffusion objective refines the illumination
estimator (through the illumination-fit term and the conditioning), and
the estimator shapes what the diffusion model is trained to denoise.
Every random draw derives its seed from (root seed, purpose, iteration),
so checkpoints only need the seed and the iteration counter to resume a
bit-identical trajectory.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .diffusion import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_SAMPLE_STEPS,
    DEFAULT_TIMESTEPS,
    NoisePredictor,
    NoiseSchedule,
    enhance,
    make_schedule,
    q_sample,
    respace_schedule,
    sample_illumination,
)
from .errors import CheckpointError, ConfigError, TrainingError
from .frequency import dwt2
from .guidance import DEFAULT_STUB_SEED, DEFAULT_UPSILON, PromptPair, clip_loss, make_backend, prob_loss
from .illumination import DEFAULT_EPSILON_DIV, IlluminationNet, retinex_decompose
from .imaging import DatasetSpec, sample_batch
from .losses import (
    LossBreakdown,
    LossWeights,
    color_loss,
    content_loss,
    diffusion_loss,
    rec_loss,
    smooth_loss,
    spa_loss,
    spectral_loss,
    total_loss,
)
from .validation import batch_to_tensor, center_crop_even, check_image, image_to_tensor, tensor_to_image

CHECKPOINT_MAGIC = b"RLCP"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("iteration", "diff", "smooth", "rec", "col", "spa", "total")


def derive_seed(root_seed: int, purpose: str, index: int) -> int:
    """Stable 63-bit seed for one stochastic draw of the run."""
    digest = hashlib.sha256(f"{root_seed}|{purpose}|{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on; hashable to a config digest."""

    dataset: DatasetSpec
    iterations: int = 500                 # full runs want ~5e4; default suits CPU experiments
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    timesteps: int = DEFAULT_TIMESTEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    sample_steps: int = DEFAULT_SAMPLE_STEPS   # inference reverse chain
    rec_sample_steps: int = 4                  # truncated chain inside training
    eps_draws: int = 4                         # (t, eps) draws per batch element
    checkpoint_every: int = 250
    grad_clip: float = 1.0
    update_mode: str = "joint"                 # or "alternating"
    weights: LossWeights = field(default_factory=LossWeights)
    prompts: PromptPair = field(default_factory=PromptPair)
    upsilon: float = DEFAULT_UPSILON
    prob_target: str = "negative"
    guidance_backend: str = "stub"
    stub_seed: int = DEFAULT_STUB_SEED
    clip_weights_path: str | None = None
    illum_width: int = 16
    unet_width: int = 32
    epsilon_div: float = DEFAULT_EPSILON_DIV
    disable_illumnet: bool = False             # ablation "#1"
    disable_arm: bool = False                  # ablation ARM_1
    disable_semantic: bool = False             # ablation ARM_2

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 1 <= self.rec_sample_steps <= self.timesteps:
            raise ConfigError(
                f"rec_sample_steps must be in [1, timesteps], got {self.rec_sample_steps}"
            )
        if not 1 <= self.sample_steps <= self.timesteps:
            raise ConfigError(
                f"sample_steps must be in [1, timesteps], got {self.sample_steps}"
            )
        if self.eps_draws < 1:
            raise ConfigError(f"eps_draws must be >= 1, got {self.eps_draws}")
        if self.update_mode not in ("joint", "alternating"):
            raise ConfigError(f"update_mode must be 'joint' or 'alternating', got {self.update_mode!r}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.dataset.patch_size % self.weights.spa_region:
            raise ConfigError(
                f"spa_region {self.weights.spa_region} must divide patch_size {self.dataset.patch_size}"
            )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.as_dict(), sort_keys=True).encode()
        ).hexdigest()


@dataclass(frozen=True)
class LossMask:
    """Which objective components participate; defaults keep everything on.

    The ablations map here: #1 clears ``illumnet``, ARM_1 clears ``rec``,
    ARM_2 clears ``semantic``.
    """

    illumnet: bool = True
    illum_fit: bool = True
    smooth: bool = True
    rec: bool = True
    semantic: bool = True
    color: bool = True
    spa: bool = True

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "LossMask":
        return cls(
            illumnet=not cfg.disable_illumnet,
            rec=not cfg.disable_arm,
            semantic=not (cfg.disable_arm or cfg.disable_semantic),
        )


@dataclass
class TrainState:
    config: TrainConfig
    illum_net: IlluminationNet
    predictor: NoisePredictor
    optimizer: torch.optim.Adam
    sched: NoiseSchedule
    rec_sched: NoiseSchedule
    backend: object
    loss_mask: LossMask
    iteration: int = 0


def init_state(config: TrainConfig) -> TrainState:
    illum_net = IlluminationNet(config.illum_width, seed=derive_seed(config.seed, "illum-init", 0))
    predictor = NoisePredictor(config.unet_width, seed=derive_seed(config.seed, "unet-init", 0))
    optimizer = torch.optim.Adam(
        list(illum_net.parameters()) + list(predictor.parameters()),
        lr=config.learning_rate,
        betas=config.adam_betas,
    )
    sched = make_schedule(config.timesteps, config.beta_start, config.beta_end)
    return TrainState(
        config=config,
        illum_net=illum_net,
        predictor=predictor,
        optimizer=optimizer,
        sched=sched,
        rec_sched=respace_schedule(sched, config.rec_sample_steps),
        backend=make_backend(config.guidance_backend, config.stub_seed, config.clip_weights_path),
        loss_mask=LossMask.from_config(config),
    )


def _estimate(state: TrainState, low: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Illumination, structural image, and the conditioning source.

    With the illumination network disabled (#1), conditioning falls back to
    the low-light image itself and the illumination is the identity field.
    """
    if state.loss_mask.illumnet:
        illum = state.illum_net(low)
        structural = retinex_decompose(low, illum, state.config.epsilon_div)
        return illum, structural, structural
    illum = torch.ones_like(low)
    return illum, low, low


def train_step(state: TrainState, batch) -> tuple[TrainState, LossBreakdown]:
    """One bidirectional optimization step on a batch of low-light patches."""
    cfg = state.config
    mask = state.loss_mask
    weights = cfg.weights
    low = batch if isinstance(batch, torch.Tensor) else batch_to_tensor(batch)
    low = low.double()
    it = state.iteration

    illum, structural, cond_source = _estimate(state, low)
    ll_illum = dwt2(illum).ll
    cond = (dwt2(cond_source).ll, dwt2(low).ll)

    # Monte-Carlo estimate of the noise-matching expectation: eps_draws
    # independent (t, eps) pairs per batch element, evaluated in one forward
    k = cfg.eps_draws
    t_rng = np.random.default_rng(derive_seed(cfg.seed, "timestep", it))
    t_vec = t_rng.integers(1, cfg.timesteps + 1, size=k * low.shape[0])
    eps_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "eps", it))
    x0_rep = ll_illum.repeat(k, 1, 1, 1)
    eps = torch.randn(x0_rep.shape, generator=eps_gen, dtype=low.dtype)
    x_t = q_sample(x0_rep, t_vec, eps, state.sched)
    eps_pred = state.predictor(
        torch.cat([x_t, cond[0].repeat(k, 1, 1, 1), cond[1].repeat(k, 1, 1, 1)], dim=1),
        torch.as_tensor(t_vec, dtype=torch.int64),
    )

    need_chain = mask.illum_fit or mask.smooth or mask.rec or mask.color or mask.spa
    zero = low.new_zeros(())
    illum_hat = None
    if need_chain:
        illum_hat = sample_illumination(
            cond_source, low, illum, state.predictor, state.rec_sched,
            derive_seed(cfg.seed, "chain", it),
        )
        enhanced = enhance(low, illum_hat, cfg.epsilon_div)

    try:
        if mask.illum_fit and illum_hat is not None:
            diff = diffusion_loss(eps, eps_pred, illum_hat, illum)
        else:
            diff = diffusion_loss(eps, eps_pred)
        smooth = smooth_loss(illum_hat, illum, weights) if mask.smooth else zero
        content = spectral = clip = prob = zero
        if mask.rec:
            content = content_loss(enhanced, structural, weights)
            spectral = spectral_loss(enhanced, structural, weights)
            if mask.semantic:
                clip = clip_loss(state.backend, cfg.prompts, structural, enhanced)
                prob = prob_loss(state.backend, cfg.prompts, enhanced, cfg.upsilon, cfg.prob_target)
        rec = rec_loss(content, spectral, prob, clip, weights) if mask.rec else zero
        col = color_loss(enhanced) if mask.color else zero
        spa = spa_loss(enhanced, low, weights) if mask.spa else zero
    except ValueError as exc:
        if "non-finite" in str(exc):
            raise TrainingError(f"non-finite values while computing losses at iteration {it}: {exc}") from exc
        raise

    total, breakdown = total_loss(diff, smooth, rec, col, spa, weights)
    breakdown.content = float(content.detach())
    breakdown.spectral = float(spectral.detach())
    breakdown.clip = float(clip.detach())
    breakdown.prob = float(prob.detach())
    if not math.isfinite(breakdown.total):
        raise TrainingError(f"non-finite loss at iteration {it}: {breakdown.as_dict()}")

    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    params = list(state.illum_net.parameters()) + list(state.predictor.parameters())
    torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
    if cfg.update_mode == "alternating":
        frozen = state.illum_net if it % 2 == 0 else state.predictor
        for p in frozen.parameters():
            p.grad = None
    state.optimizer.step()
    state.iteration = it + 1
    return state, breakdown


# ---------------------------------------------------------------------------
# Checkpoints


def _tree_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return ("__tensor__", obj.detach().cpu().numpy().copy())
    if isinstance(obj, dict):
        return {k: _tree_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        out = [_tree_to_numpy(v) for v in obj]
        return out if isinstance(obj, list) else tuple(out)
    return obj


def _tree_to_torch(obj):
    if isinstance(obj, tuple) and len(obj) == 2 and obj[0] == "__tensor__":
        return torch.from_numpy(np.array(obj[1]))
    if isinstance(obj, dict):
        return {k: _tree_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_tree_to_torch(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_tree_to_torch(v) for v in obj)
    return obj


@dataclass(frozen=True)
class Checkpoint:
    """Serialized parameters of both networks plus optimizer, schedule, and
    the (seed, iteration) pair that stands in for RNG state."""

    config_dict: dict
    config_hash: str
    iteration: int
    illum_state: dict
    predictor_state: dict
    optimizer_state: dict
    schedule_beta: np.ndarray

    def save(self, path) -> None:
        # config serialized as canonical JSON text: pickling the nested dict
        # directly would make the bytes depend on string-interning identity
        payload = pickle.dumps(
            {
                "config_json": json.dumps(self.config_dict, sort_keys=True),
                "config_hash": self.config_hash,
                "iteration": self.iteration,
                "illum_state": self.illum_state,
                "predictor_state": self.predictor_state,
                "optimizer_state": self.optimizer_state,
                "schedule_beta": self.schedule_beta,
            },
            protocol=4,
        )
        header = CHECKPOINT_MAGIC + CHECKPOINT_VERSION.to_bytes(4, "little")
        header += bytes.fromhex(self.config_hash)
        Path(path).write_bytes(header + payload)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint not found: {path}")
        raw = path.read_bytes()
        if len(raw) < 40 or raw[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        version = int.from_bytes(raw[4:8], "little")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header_hash = raw[8:40].hex()
        try:
            payload = pickle.loads(raw[40:])
        except Exception as exc:
            raise CheckpointError(f"corrupted checkpoint {path}: {exc}") from exc
        if payload["config_hash"] != header_hash:
            raise CheckpointError(f"checkpoint header/payload hash mismatch in {path}")
        payload["config_dict"] = json.loads(payload.pop("config_json"))
        return cls(**payload)

    def to_config(self) -> TrainConfig:
        d = dict(self.config_dict)
        d["dataset"] = DatasetSpec(**d["dataset"])
        d["weights"] = LossWeights(**d["weights"])
        d["prompts"] = PromptPair(**d["prompts"])
        d["adam_betas"] = tuple(d["adam_betas"])
        return TrainConfig(**d)


def state_to_checkpoint(state: TrainState) -> Checkpoint:
    return Checkpoint(
        config_dict=state.config.as_dict(),
        config_hash=state.config.config_hash(),
        iteration=state.iteration,
        illum_state={k: v.detach().cpu().numpy().copy() for k, v in state.illum_net.state_dict().items()},
        predictor_state={
            k: v.detach().cpu().numpy().copy() for k, v in state.predictor.state_dict().items()
        },
        optimizer_state=_tree_to_numpy(state.optimizer.state_dict()),
        schedule_beta=state.sched.beta.copy(),
    )


def checkpoint_to_state(ckpt: Checkpoint) -> TrainState:
    config = ckpt.to_config()
    state = init_state(config)
    state.illum_net.load_state_dict(
        {k: torch.from_numpy(np.array(v)) for k, v in ckpt.illum_state.items()}
    )
    state.predictor.load_state_dict(
        {k: torch.from_numpy(np.array(v)) for k, v in ckpt.predictor_state.items()}
    )
    state.optimizer.load_state_dict(_tree_to_torch(ckpt.optimizer_state))
    state.iteration = ckpt.iteration
    return state


# ---------------------------------------------------------------------------
# Training driver


def train(config: TrainConfig, out_dir=None, resume_from=None) -> Checkpoint:
    """Run the full loop; optionally write checkpoints, the loss CSV, and a
    final checkpoint under ``out_dir``.  ``resume_from`` restores a saved
    checkpoint of the same config and continues bit-exactly."""
    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else Checkpoint.load(resume_from)
        if ckpt.config_hash != config.config_hash():
            raise CheckpointError(
                "checkpoint was produced by a different config "
                f"({ckpt.config_hash[:12]} != {config.config_hash()[:12]})"
            )
        state = checkpoint_to_state(ckpt)
    else:
        state = init_state(config)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = csv_writer = log_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "loss_log.csv"
        fresh = state.iteration == 0 or not log_path.exists()
        log_file = open(log_path, "w" if fresh else "a", newline="")
        csv_writer = csv.writer(log_file)
        if fresh:
            csv_writer.writerow(LOG_COLUMNS)

    final = None
    try:
        while state.iteration < config.iterations:
            it = state.iteration
            batch = sample_batch(config.dataset, derive_seed(config.seed, "batch", it))
            state, breakdown = train_step(state, batch)
            if csv_writer is not None:
                csv_writer.writerow(
                    [state.iteration] + [getattr(breakdown, c) for c in LOG_COLUMNS[1:]]
                )
            if state.iteration % config.checkpoint_every == 0 and state.iteration < config.iterations:
                if out_dir is not None:
                    state_to_checkpoint(state).save(
                        out_dir / f"checkpoint_iter{state.iteration:06d}.ckpt"
                    )
                if log_file is not None:
                    log_file.flush()
        final = state_to_checkpoint(state)
        if out_dir is not None:
            final.save(out_dir / "checkpoint.ckpt")
    finally:
        if log_file is not None:
            log_file.close()
    return final


def enhance_image(source, img: np.ndarray, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Enhance one low-light image with a trained checkpoint or state.

    Odd dimensions are center-cropped to even.  Returns (enhanced,
    illumination); division by an illumination field bounded by 1 means the
    output is never darker than the input.
    """
    state = checkpoint_to_state(source) if isinstance(source, Checkpoint) else source
    img = center_crop_even(check_image(img))
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    low = image_to_tensor(img)[None]
    infer_sched = respace_schedule(state.sched, state.config.sample_steps)
    with torch.no_grad():
        illum, structural, cond_source = _estimate(state, low)
        illum_hat = sample_illumination(
            cond_source, low, illum, state.predictor, infer_sched, seed
        )
        enhanced = enhance(low, illum_hat, state.config.epsilon_div)
    return tensor_to_image(enhanced), tensor_to_image(illum_hat)
