#!/usr/bin/env python3
"""Fit the bundled NIQE pristine model and regenerate the bundled test photos.

The pristine corpus is procedurally generated here: layered soft-edged
shapes over 1/f texture, which gives natural-scene-statistics features
with enough spread for a well-conditioned covariance.  Rerun after any
change to the feature extraction:

    python scripts/fit_niqe_model.py

Equivalent fitting from a real pristine-image directory is available via
``relight fit-niqe --images DIR --out model.npz``.
"""

import argparse
from pathlib import Path

import numpy as np
from scipy.special import expit

from relight.imaging import save_image
from relight.metrics import fit_niqe_model

ASSETS = Path(__file__).resolve().parent.parent / "src" / "relight" / "assets"


def pink_noise(rng, size, alpha=1.4):
    f = np.fft.fftfreq(size)
    fy, fx = np.meshgrid(f, f, indexing="ij")
    radius = np.sqrt(fy**2 + fx**2)
    radius[0, 0] = 1.0
    spec = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size)))
    out = np.fft.ifft2(spec / radius**alpha).real
    out -= out.mean()
    return out / (out.std() + 1e-12)


def soft_shapes(rng, size, n):
    yy, xx = np.mgrid[0:size, 0:size] / size
    canvas = np.zeros((size, size))
    for _ in range(n):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.05, 0.35, 2)
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dy * np.cos(theta) + dx * np.sin(theta)
        v = -dy * np.sin(theta) + dx * np.cos(theta)
        d = (u / ry) ** 2 + (v / rx) ** 2
        sharpness = rng.uniform(8, 80)
        canvas += rng.uniform(-0.6, 0.6) * expit(-sharpness * (d - 1.0))
    return canvas


def random_scene(rng, size=256):
    n_shapes = int(rng.integers(6, 22))
    w_mid = rng.uniform(0.15, 0.35)
    w_fine = rng.uniform(0.02, 0.10)
    lum = (
        0.55 * soft_shapes(rng, size, n_shapes)
        + w_mid * pink_noise(rng, size)
        + w_fine * pink_noise(rng, size, alpha=0.6)
    )
    lum = (lum - lum.min()) / (lum.max() - lum.min() + 1e-12)
    lum = 0.08 + 0.84 * lum
    img = np.repeat(lum[:, :, None], 3, axis=2)
    cast = rng.uniform(0.82, 1.0, 3)
    shift = rng.uniform(-0.03, 0.03, 3)
    return np.clip(img * cast[None, None, :] + shift[None, None, :], 0.0, 1.0)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus-size", type=int, default=40)
    parser.add_argument("--image-size", type=int, default=288)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--model-out", default=str(ASSETS / "niqe_model.npz"))
    parser.add_argument("--photos-out", default=str(ASSETS / "photos"))
    parser.add_argument("--n-photos", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    corpus = [random_scene(rng, args.image_size) for _ in range(args.corpus_size)]
    model = fit_niqe_model(corpus)
    Path(args.model_out).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.model_out)
    print(f"model -> {args.model_out}")

    photos = Path(args.photos_out)
    photos.mkdir(parents=True, exist_ok=True)
    photo_rng = np.random.default_rng(args.seed + 1)
    for i in range(args.n_photos):
        save_image(random_scene(photo_rng, 192), photos / f"photo_{i:02d}.png")
    print(f"{args.n_photos} test photos -> {photos}")


if __name__ == "__main__":
    main()
