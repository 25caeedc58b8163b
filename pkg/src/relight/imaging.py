"""Image file IO, dataset description, and training patch sampling.

Training ingests only low-light images: the sampler never sees a paired
normal-light file, which is what makes the whole method zero-reference.
"""

from __future__ import annotations

import functools
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError
from .validation import center_crop_even, check_image

_GRAY16_MODES = ("I;16", "I;16B", "I;16L", "I")


def load_image(path, crop_to_even: bool = False) -> np.ndarray:
    """Read an 8-bit or 16-bit PNG/JPEG into an H x W x C float array in [0, 1].

    Stored integers are divided by the maximum integer value (255 or 65535).
    Palette images are expanded to RGB; images with alpha or exotic channel
    layouts are rejected.  With ``crop_to_even`` the image is center-cropped
    so both dims are even (one-level wavelet requirement).
    """
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode in _GRAY16_MODES:
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = arr[:, :, None]
            elif im.mode == "L":
                arr = np.asarray(im, dtype=np.float64)[:, :, None] / 255.0
            elif im.mode == "RGB":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                raise ValueError(
                    f"{path}: unsupported image mode {im.mode!r} (need L, 16-bit gray, or RGB)"
                )
    except (OSError, PILImage.UnidentifiedImageError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    arr = np.clip(arr, 0.0, 1.0)
    if crop_to_even:
        arr = center_crop_even(arr)
    return check_image(arr, str(path))


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit PNG, quantizing with round-half-up."""
    arr = check_image(img)
    # round-half-up: 0.5 -> 128, not banker's rounding
    q = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        pil = PILImage.fromarray(q[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(q, mode="RGB")
    try:
        pil.save(Path(path), format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


@dataclass(frozen=True)
class DatasetSpec:
    """A flat directory of low-light images matched by a glob."""

    root: str
    glob: str = "*.png"
    patch_size: int = 256
    batch_size: int = 4
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.patch_size % 2:
            raise ValueError(f"patch_size must be even, got {self.patch_size}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def files(self) -> list[Path]:
        return sorted(Path(self.root).glob(self.glob))


@functools.lru_cache(maxsize=64)
def _load_rgb_cached(path: str, mtime_ns: int, size: int) -> np.ndarray:
    img = load_image(path, crop_to_even=True)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    img.setflags(write=False)
    return img


def _eligible_files(spec: DatasetSpec) -> list[Path]:
    files = spec.files()
    if not files:
        raise DataError(f"no images match {spec.glob!r} under {spec.root}")
    keep = []
    for f in files:
        with PILImage.open(f) as im:
            w, h = im.size
        if h >= spec.patch_size and w >= spec.patch_size:
            keep.append(f)
        else:
            warnings.warn(
                f"skipping {f.name}: {h}x{w} smaller than patch size {spec.patch_size}",
                stacklevel=3,
            )
    if not keep:
        raise DataError(
            f"all {len(files)} images under {spec.root} are smaller than "
            f"patch size {spec.patch_size}"
        )
    return keep


def sample_batch(spec: DatasetSpec, seed: int | None = None) -> list[np.ndarray]:
    """Draw ``batch_size`` random ``patch_size`` RGB crops from the dataset.

    A pure function of (dataset contents, spec, seed): the same seed always
    returns byte-identical patches.  Crop offsets are uniform; grayscale
    files are replicated to three channels.
    """
    if seed is None:
        seed = spec.shuffle_seed
    files = _eligible_files(spec)
    rng = np.random.default_rng(seed)
    p = spec.patch_size
    patches = []
    for _ in range(spec.batch_size):
        f = files[int(rng.integers(len(files)))]
        st = os.stat(f)
        img = _load_rgb_cached(str(f), st.st_mtime_ns, st.st_size)
        h, w = img.shape[:2]
        oy = int(rng.integers(h - p + 1))
        ox = int(rng.integers(w - p + 1))
        patches.append(np.array(img[oy : oy + p, ox : ox + p], copy=True))
    return patches
