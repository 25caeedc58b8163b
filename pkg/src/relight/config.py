"""Run configuration: TOML files, CLI overrides, and resolved snapshots.

The schema is flat (one level of sections), every spec default is
overridable, and unknown keys are rejected by name.  A resolved snapshot
written next to a run's outputs is itself a valid config file, so any run
is reproducible from its snapshot alone.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diffusion import DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_SAMPLE_STEPS, DEFAULT_TIMESTEPS
from .errors import ConfigError
from .guidance import (
    DEFAULT_NEGATIVE_PROMPT,
    DEFAULT_POSITIVE_PROMPT,
    DEFAULT_STUB_SEED,
    DEFAULT_UPSILON,
)
from .illumination import DEFAULT_EPSILON_DIV
from .imaging import DatasetSpec
from .losses import LossWeights
from .guidance import PromptPair
from .pipeline import TrainConfig

# section -> key -> (type, default); None default means "no value"
_SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "dataset": {
        "root": (str, None),
        "glob": (str, "*.png"),
        "patch_size": (int, 256),
        "batch_size": (int, 4),
        "shuffle_seed": (int, 0),
    },
    "training": {
        "iterations": (int, 500),
        "learning_rate": (float, 1e-4),
        "seed": (int, 0),
        "rec_sample_steps": (int, 4),
        "eps_draws": (int, 4),
        "checkpoint_every": (int, 250),
        "grad_clip": (float, 1.0),
        "update_mode": (str, "joint"),
        "disable_illumnet": (bool, False),
        "disable_arm": (bool, False),
        "disable_semantic": (bool, False),
    },
    "schedule": {
        "timesteps": (int, DEFAULT_TIMESTEPS),
        "beta_start": (float, DEFAULT_BETA_START),
        "beta_end": (float, DEFAULT_BETA_END),
        "sample_steps": (int, DEFAULT_SAMPLE_STEPS),
    },
    "losses": {
        "omega": (float, 0.1),
        "varpi": (float, 0.2),
        "vartheta1": (float, 1.0),
        "vartheta2": (float, 1.0),
        "gamma_sigma": (float, 0.1),
        "ssim_window": (int, 11),
        "ssim_k1": (float, 0.01),
        "ssim_k2": (float, 0.03),
        "spa_region": (int, 4),
    },
    "guidance": {
        "backend": (str, "stub"),
        "stub_seed": (int, DEFAULT_STUB_SEED),
        "positive_prompt": (str, DEFAULT_POSITIVE_PROMPT),
        "negative_prompt": (str, DEFAULT_NEGATIVE_PROMPT),
        "upsilon": (float, DEFAULT_UPSILON),
        "prob_target": (str, "negative"),
        "weights_path": (str, None),
    },
    "model": {
        "illum_width": (int, 16),
        "unet_width": (int, 32),
        "epsilon_div": (float, DEFAULT_EPSILON_DIV),
    },
    "paths": {
        "output_dir": (str, None),
        "checkpoint": (str, None),
        "niqe_model": (str, None),
    },
}


def _defaults() -> dict:
    return {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in _SCHEMA.items()}


def _coerce(section: str, key: str, value):
    typ, _ = _SCHEMA[section][key]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected a boolean, got {value!r}")
        return value
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    if not isinstance(value, typ):
        raise ConfigError(f"{section}.{key}: expected {typ.__name__}, got {value!r}")
    return value


def _parse_override_value(section: str, key: str, raw: str):
    typ, _ = _SCHEMA[section][key]
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def _resolve_key(dotted: str) -> tuple[str, str]:
    if "." in dotted:
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        return section, key
    hits = [(sec, dotted) for sec, keys in _SCHEMA.items() if dotted in keys]
    if not hits:
        raise ConfigError(f"unknown config key {dotted!r}")
    if len(hits) > 1:
        options = ", ".join(f"{s}.{k}" for s, k in hits)
        raise ConfigError(f"ambiguous config key {dotted!r}: could be {options}")
    return hits[0]


class RunConfig:
    """Validated, fully-resolved configuration for one CLI run."""

    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def load(cls, path=None, overrides=None) -> "RunConfig":
        values = _defaults()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                with open(path, "rb") as fh:
                    raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
            for section, keys in raw.items():
                if section not in _SCHEMA:
                    raise ConfigError(f"unknown config section {section!r} in {path}")
                if not isinstance(keys, dict):
                    raise ConfigError(f"{section}: expected a table of keys")
                for key, val in keys.items():
                    if key not in _SCHEMA[section]:
                        raise ConfigError(f"unknown config key {section}.{key!r} in {path}")
                    values[section][key] = _coerce(section, key, val)
        for dotted, raw_val in overrides or []:
            section, key = _resolve_key(dotted.lstrip("-"))
            values[section][key] = _parse_override_value(section, key, raw_val)
        return cls(values)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def to_train_config(self) -> TrainConfig:
        v = self.values
        if v["dataset"]["root"] is None:
            raise ConfigError("dataset.root is required for training")
        return TrainConfig(
            dataset=DatasetSpec(
                root=v["dataset"]["root"],
                glob=v["dataset"]["glob"],
                patch_size=v["dataset"]["patch_size"],
                batch_size=v["dataset"]["batch_size"],
                shuffle_seed=v["dataset"]["shuffle_seed"],
            ),
            iterations=v["training"]["iterations"],
            learning_rate=v["training"]["learning_rate"],
            seed=v["training"]["seed"],
            timesteps=v["schedule"]["timesteps"],
            beta_start=v["schedule"]["beta_start"],
            beta_end=v["schedule"]["beta_end"],
            sample_steps=v["schedule"]["sample_steps"],
            rec_sample_steps=v["training"]["rec_sample_steps"],
            eps_draws=v["training"]["eps_draws"],
            checkpoint_every=v["training"]["checkpoint_every"],
            grad_clip=v["training"]["grad_clip"],
            update_mode=v["training"]["update_mode"],
            weights=LossWeights(**{k: v["losses"][k] for k in _SCHEMA["losses"]}),
            prompts=PromptPair(
                positive=v["guidance"]["positive_prompt"],
                negative=v["guidance"]["negative_prompt"],
            ),
            upsilon=v["guidance"]["upsilon"],
            prob_target=v["guidance"]["prob_target"],
            guidance_backend=v["guidance"]["backend"],
            stub_seed=v["guidance"]["stub_seed"],
            clip_weights_path=v["guidance"]["weights_path"],
            illum_width=v["model"]["illum_width"],
            unet_width=v["model"]["unet_width"],
            epsilon_div=v["model"]["epsilon_div"],
            disable_illumnet=v["training"]["disable_illumnet"],
            disable_arm=v["training"]["disable_arm"],
            disable_semantic=v["training"]["disable_semantic"],
        )

    def save_snapshot(self, path) -> None:
        """Write the resolved values back out as a loadable TOML file."""
        lines = []
        for section in _SCHEMA:
            entries = [
                (k, v) for k, v in self.values[section].items() if v is not None
            ]
            if not entries:
                continue
            lines.append(f"[{section}]")
            for key, val in entries:
                if isinstance(val, bool):
                    rendered = "true" if val else "false"
                elif isinstance(val, (int, float)):
                    rendered = repr(val)
                else:
                    rendered = json.dumps(val)  # JSON escaping is valid TOML
                lines.append(f"{key} = {rendered}")
            lines.append("")
        Path(path).write_text("\n".join(lines))
