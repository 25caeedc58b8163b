"""Evaluation metrics: PSNR, SSIM (full-reference), NIQE, LOE (no-reference).

All metrics take numpy H x W x C images in [0, 1].  SSIM delegates to the
same implementation the content loss uses.  NIQE scores an image by the
Mahalanobis-style distance between its natural-scene-statistics features
and a pristine-image model shipped as a small binary asset (refit with
``relight fit-niqe`` or scripts/fit_niqe_model.py).
"""

from __future__ import annotations

import csv
import hashlib
import importlib.resources
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage
from scipy.special import gamma as gamma_fn

from .errors import ConfigError, DataError
from .imaging import load_image
from .losses import ssim_index
from .validation import check_image, check_same_shape, image_to_tensor

LOE_GRID = 50
LOE_SCALE = 1000.0
NIQE_PATCH = 96
NIQE_DIM = 36

_LUMA = np.array([0.299, 0.587, 0.114])  # ITU-R 601


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images; inf when equal."""
    a, b = check_image(a, "a"), check_image(b, "b")
    check_same_shape(a, b, "a", "b")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM, identical to the implementation inside the content loss."""
    a, b = check_image(a, "a"), check_image(b, "b")
    check_same_shape(a, b, "a", "b")
    return float(ssim_index(image_to_tensor(a), image_to_tensor(b)))


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = check_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ _LUMA


# ---------------------------------------------------------------------------
# NIQE


@dataclass(frozen=True)
class NiqeModel:
    """Multivariate Gaussian over 36-D natural-scene-statistics features."""

    mu: np.ndarray
    cov: np.ndarray
    patch_size: int = NIQE_PATCH

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mu.shape != (NIQE_DIM,) or cov.shape != (NIQE_DIM, NIQE_DIM):
            raise ValueError(f"model must be {NIQE_DIM}-dimensional, got {mu.shape}, {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    def save(self, path) -> None:
        np.savez(Path(path), mu=self.mu, cov=self.cov, patch_size=np.int64(self.patch_size))

    @classmethod
    def load(cls, path) -> "NiqeModel":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"NIQE model file not found: {p}")
        with np.load(p) as data:
            return cls(mu=data["mu"], cov=data["cov"], patch_size=int(data["patch_size"]))

    @classmethod
    def bundled(cls) -> "NiqeModel":
        ref = importlib.resources.files("relight") / "assets" / "niqe_model.npz"
        with importlib.resources.as_file(ref) as p:
            return cls.load(p)


_GAM_GRID = np.linspace(0.2, 10.0, 9801)
_R_GAM = (gamma_fn(2.0 / _GAM_GRID) ** 2) / (gamma_fn(1.0 / _GAM_GRID) * gamma_fn(3.0 / _GAM_GRID))


def _fit_aggd(vec: np.ndarray) -> tuple[float, float, float]:
    """Moment-matched asymmetric generalized Gaussian fit: (alpha, beta_l, beta_r)."""
    vec = vec.ravel()
    left = vec[vec < 0]
    right = vec[vec > 0]
    left_std = math.sqrt(float(np.mean(left**2))) if left.size else 1e-6
    right_std = math.sqrt(float(np.mean(right**2))) if right.size else 1e-6
    gamma_hat = left_std / right_std
    sq_mean = float(np.mean(vec**2))
    if sq_mean <= 0:
        return 2.0, 1e-6, 1e-6
    r_hat = float(np.mean(np.abs(vec))) ** 2 / sq_mean
    r_hat_norm = r_hat * (gamma_hat**3 + 1.0) * (gamma_hat + 1.0) / (gamma_hat**2 + 1.0) ** 2
    alpha = float(_GAM_GRID[np.argmin((_R_GAM - r_hat_norm) ** 2)])
    scale = math.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    return alpha, left_std * scale, right_std * scale


def _gaussian_kernel_7(sigma: float = 7.0 / 6.0) -> np.ndarray:
    ax = np.arange(7, dtype=np.float64) - 3.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


_MSCN_KERNEL = _gaussian_kernel_7()


def _mscn(gray: np.ndarray) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients (7x7 Gaussian window)."""
    mu = scipy.ndimage.correlate(gray, _MSCN_KERNEL, mode="nearest")
    var = scipy.ndimage.correlate(gray * gray, _MSCN_KERNEL, mode="nearest") - mu * mu
    sigma = np.sqrt(np.abs(var))
    return (gray - mu) / (sigma + 1.0)


def _nss_features(mscn: np.ndarray) -> np.ndarray:
    """18 AGGD features: the MSCN field itself plus four neighbor products."""
    feats = []
    alpha, bl, br = _fit_aggd(mscn)
    feats.extend([alpha, (bl + br) / 2.0])
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        shifted = np.roll(np.roll(mscn, dy, axis=0), dx, axis=1)
        alpha, bl, br = _fit_aggd(mscn * shifted)
        eta = (br - bl) * (gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha))
        feats.extend([alpha, eta, bl, br])
    return np.array(feats)


def _half_scale(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    h2, w2 = h - h % 2, w - w % 2
    g = gray[:h2, :w2]
    return 0.25 * (g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2])


def _patch_features(
    gray: np.ndarray, patch: int, sharpness_select: bool = False
) -> np.ndarray:
    """Per-patch 36-D features over two scales; optionally keep only the
    sharpest patches (used when fitting the pristine model)."""
    h, w = gray.shape
    if h < patch or w < patch:
        raise ValueError(f"image {h} x {w} smaller than NIQE patch size {patch}")
    ny, nx = h // patch, w // patch
    mu = scipy.ndimage.correlate(gray, _MSCN_KERNEL, mode="nearest")
    var = scipy.ndimage.correlate(gray * gray, _MSCN_KERNEL, mode="nearest") - mu * mu
    sigma_field = np.sqrt(np.abs(var))
    mscn1 = (gray - mu) / (sigma_field + 1.0)
    mscn2 = _mscn(_half_scale(gray))

    rows = []
    sharpness = []
    for iy in range(ny):
        for ix in range(nx):
            sl1 = np.s_[iy * patch : (iy + 1) * patch, ix * patch : (ix + 1) * patch]
            sl2 = np.s_[iy * patch // 2 : (iy + 1) * patch // 2, ix * patch // 2 : (ix + 1) * patch // 2]
            rows.append(np.concatenate([_nss_features(mscn1[sl1]), _nss_features(mscn2[sl2])]))
            sharpness.append(float(sigma_field[sl1].mean()))
    feats = np.asarray(rows)
    if sharpness_select and len(rows) > 1:
        sharp = np.asarray(sharpness)
        feats = feats[sharp > 0.75 * sharp.max()]
    return feats


def fit_niqe_model(images, patch_size: int = NIQE_PATCH) -> NiqeModel:
    """Fit the pristine multivariate-Gaussian model from a corpus of images."""
    rows = []
    for img in images:
        rows.append(_patch_features(_to_gray(img), patch_size, sharpness_select=True))
    if not rows:
        raise DataError("no images given to fit the NIQE model")
    feats = np.concatenate(rows, axis=0)
    if feats.shape[0] < 2 * NIQE_DIM:
        raise DataError(
            f"only {feats.shape[0]} pristine patches; need at least {2 * NIQE_DIM}"
        )
    return NiqeModel(
        mu=feats.mean(axis=0), cov=np.cov(feats, rowvar=False), patch_size=patch_size
    )


def niqe(img: np.ndarray, model: NiqeModel | None = None) -> float:
    """Natural-image quality score (lower is closer to the pristine model)."""
    if model is None:
        model = NiqeModel.bundled()
    feats = _patch_features(_to_gray(img), model.patch_size)
    mu_img = feats.mean(axis=0)
    cov_img = np.cov(feats, rowvar=False) if feats.shape[0] > 1 else np.zeros_like(model.cov)
    pooled = np.linalg.pinv((model.cov + cov_img) / 2.0)
    d = model.mu - mu_img
    return math.sqrt(max(float(d @ pooled @ d), 0.0))


# ---------------------------------------------------------------------------
# LOE


def loe(enhanced: np.ndarray, original: np.ndarray, grid: int = LOE_GRID) -> float:
    """Lightness order error: fraction of pixel pairs whose relative lightness
    order flips after enhancement, scaled by 1000.

    Both images are reduced to max-channel lightness and nearest-sampled on a
    ``grid x grid`` lattice; invariant under any strictly monotone global
    remapping of the enhanced image.
    """
    enhanced, original = check_image(enhanced, "enhanced"), check_image(original, "original")
    check_same_shape(enhanced, original, "enhanced", "original")
    h, w = enhanced.shape[:2]
    iy = np.minimum(((np.arange(grid) + 0.5) * h / grid).astype(np.int64), h - 1)
    ix = np.minimum(((np.arange(grid) + 0.5) * w / grid).astype(np.int64), w - 1)
    le = enhanced.max(axis=2)[np.ix_(iy, ix)].ravel()
    lo = original.max(axis=2)[np.ix_(iy, ix)].ravel()
    order_e = le[:, None] >= le[None, :]
    order_o = lo[:, None] >= lo[None, :]
    return float(np.mean(order_e != order_o)) * LOE_SCALE


# ---------------------------------------------------------------------------
# Directory evaluation and reports


def _finite_mean(values) -> float | None:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def _json_value(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return v


def evaluate_pairs(
    enhanced_dir,
    reference_dir=None,
    original_dir=None,
    model: NiqeModel | None = None,
    glob: str = "*.png",
) -> dict:
    """Score every image in a directory; full-reference metrics need a
    reference directory with matching filenames.

    LOE compares against the original (pre-enhancement) images when an
    ``original_dir`` is given, else against the references; it is null
    without either.  Infinite PSNR is excluded from the mean and counted in
    ``means.psnr_inf_count``.
    """
    enhanced_dir = Path(enhanced_dir)
    files = sorted(enhanced_dir.glob(glob))
    if not files:
        raise DataError(f"no images match {glob!r} under {enhanced_dir}")

    def _match(other_dir, label):
        if other_dir is None:
            return None
        other = Path(other_dir)
        orphans = [f.name for f in files if not (other / f.name).exists()]
        if orphans:
            raise DataError(f"missing {label} for: {', '.join(orphans)}")
        return other

    reference_dir = _match(reference_dir, "reference")
    original_dir = _match(original_dir, "original")
    if model is None:
        model = NiqeModel.bundled()

    rows = []
    for f in files:
        img = load_image(f)
        row = {"name": f.name, "psnr": None, "ssim": None, "niqe": niqe(img, model), "loe": None}
        ref = load_image(reference_dir / f.name) if reference_dir else None
        if ref is not None:
            row["psnr"] = psnr(img, ref)
            row["ssim"] = ssim(img, ref)
        loe_base = None
        if original_dir is not None:
            loe_base = load_image(original_dir / f.name)
        elif ref is not None:
            loe_base = ref
        if loe_base is not None:
            row["loe"] = loe(img, loe_base)
        rows.append(row)

    psnr_vals = [r["psnr"] for r in rows if r["psnr"] is not None]
    means = {
        "psnr": _finite_mean(psnr_vals),
        "ssim": _finite_mean(r["ssim"] for r in rows),
        "niqe": _finite_mean(r["niqe"] for r in rows),
        "loe": _finite_mean(r["loe"] for r in rows),
        "psnr_inf_count": sum(1 for v in psnr_vals if math.isinf(v)),
    }
    digest = hashlib.sha256(
        json.dumps(
            {
                "enhanced": str(enhanced_dir),
                "reference": str(reference_dir) if reference_dir else None,
                "original": str(original_dir) if original_dir else None,
                "files": [f.name for f in files],
            },
            sort_keys=True,
        ).encode()
    ).hexdigest()
    return {"per_image": rows, "means": means, "config_hash": digest}


def write_report(report: dict, json_path) -> None:
    """Write the JSON report plus an aligned CSV next to it."""
    json_path = Path(json_path)
    payload = {
        "per_image": [
            {k: _json_value(v) if k != "name" else v for k, v in row.items()}
            for row in report["per_image"]
        ],
        "means": {k: _json_value(v) for k, v in report["means"].items()},
        "config_hash": report["config_hash"],
    }
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    csv_path = json_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "psnr", "ssim", "niqe", "loe"])
        for row in report["per_image"]:
            writer.writerow(
                [row["name"]] + ["" if row[k] is None else _json_value(row[k]) for k in ("psnr", "ssim", "niqe", "loe")]
            )
        m = report["means"]
        writer.writerow(
            ["mean"] + ["" if m[k] is None else m[k] for k in ("psnr", "ssim", "niqe", "loe")]
        )
