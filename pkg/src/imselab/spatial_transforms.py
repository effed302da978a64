"""Random spatial transformations and self-supervised training-pair synthesis.

A training pair takes one source image x, warps it with two independent
random transformations into x1 and x2, keeps the exact difference x2 - x1 as
the label, and then restyles x1 with intensity noise (Shuffle Remap or a
Bezier shift).  The label is computed before the noise, so it stays exact no
matter how far the noise pushes the moving image's distribution.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import BadRange
from .image_core import warp
from .shuffle_remap import bezier_shift, apply_remap, sample_remap
from .validation import check_image

NOISE_MODES = ("shuffle_remap", "bezier", "none")

__all__ = [
    "AffineParams",
    "TransformConfig",
    "TrainingPairConfig",
    "TrainingSample",
    "sample_affine",
    "affine_to_field",
    "sample_elastic_field",
    "sample_transform_field",
    "make_training_pair",
]


@dataclass(frozen=True)
class AffineParams:
    rotation: float  # degrees
    translation: tuple  # (fraction of height, fraction of width)
    scale: float


@dataclass(frozen=True)
class TransformConfig:
    """Ranges for one random spatial transformation.

    deformation_strength is a single knob multiplying the affine ranges and
    the elastic magnitude, used to shrink the full-size augmentation ranges
    to something proportionate for small phantoms.
    """

    rotation_range: tuple = (-3.0, 3.0)
    translation_range: tuple = (-0.08, 0.08)
    scale_range: tuple = (0.92, 1.08)
    elastic_alpha: float = 80.0
    elastic_sigma: float = 12.0
    deformation_strength: float = 0.25

    def scaled(self):
        """Apply deformation_strength to the ranges (scale deviates around 1)."""
        s = self.deformation_strength
        return replace(
            self,
            rotation_range=(self.rotation_range[0] * s, self.rotation_range[1] * s),
            translation_range=(self.translation_range[0] * s, self.translation_range[1] * s),
            scale_range=(1.0 + (self.scale_range[0] - 1.0) * s, 1.0 + (self.scale_range[1] - 1.0) * s),
            elastic_alpha=self.elastic_alpha * s,
            deformation_strength=1.0,
        )


@dataclass(frozen=True)
class TrainingPairConfig(TransformConfig):
    noise: str = "shuffle_remap"
    n_min: int = 2
    n_max: int = 50


@dataclass(frozen=True)
class TrainingSample:
    noisy_moving: np.ndarray  # x1 + noise
    reference: np.ndarray  # x2, unchanged
    label: np.ndarray  # x2 - x1, exact


def _check_range(lo, hi, name):
    if lo > hi:
        raise BadRange(f"{name} range is inverted: [{lo}, {hi}]")


def sample_affine(rng, rotation_range=(-3.0, 3.0), translation_range=(-0.08, 0.08), scale_range=(0.92, 1.08)):
    """Draw affine parameters uniformly from their ranges."""
    _check_range(*rotation_range, "rotation")
    _check_range(*translation_range, "translation")
    _check_range(*scale_range, "scale")
    return AffineParams(
        rotation=float(rng.uniform(*rotation_range)),
        translation=(float(rng.uniform(*translation_range)), float(rng.uniform(*translation_range))),
        scale=float(rng.uniform(*scale_range)),
    )


def affine_to_field(params, height, width):
    """Displacement field realizing rotate/scale about the center plus translation.

    The field is in pull-warp convention: sampling positions are
    p + field(p), so a positive translation moves the sampling window, and
    composing warp with this field equals direct affine resampling.
    """
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    theta = np.deg2rad(params.rotation)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    ty = params.translation[0] * height
    tx = params.translation[1] * width
    ys = np.arange(height, dtype=np.float64)[:, None] - cy
    xs = np.arange(width, dtype=np.float64)[None, :] - cx
    new_y = params.scale * (cos_t * ys + sin_t * xs) + cy + ty
    new_x = params.scale * (-sin_t * ys + cos_t * xs) + cx + tx
    fld = np.empty((height, width, 2), dtype=np.float64)
    fld[..., 0] = new_y - (ys + cy)
    fld[..., 1] = new_x - (xs + cx)
    return fld


def sample_elastic_field(rng, alpha=80.0, sigma=12.0, height=128, width=128):
    """Smoothed random displacement field.

    Per-pixel uniform displacements in [-1, 1] are Gaussian-smoothed with the
    given radius (separable kernel truncated at 3 sigma) and rescaled so the
    maximum displacement magnitude equals alpha * min(H, W) / 128.
    """
    if alpha < 0:
        raise BadRange(f"alpha must be >= 0, got {alpha}")
    if sigma <= 0:
        raise BadRange(f"sigma must be > 0, got {sigma}")
    noise = rng.uniform(-1.0, 1.0, size=(height, width, 2))
    if alpha == 0:
        return np.zeros((height, width, 2), dtype=np.float64)
    fld = np.empty_like(noise)
    for c in range(2):
        fld[..., c] = gaussian_filter(noise[..., c], sigma=sigma, mode="reflect", truncate=3.0)
    max_norm = np.sqrt((fld**2).sum(axis=2)).max()
    if max_norm == 0.0:
        return np.zeros((height, width, 2), dtype=np.float64)
    return fld * (alpha * min(height, width) / 128.0 / max_norm)


def sample_transform_field(rng, config, height, width):
    """One random transformation: affine plus elastic, displacements added."""
    cfg = config.scaled()
    params = sample_affine(rng, cfg.rotation_range, cfg.translation_range, cfg.scale_range)
    fld = affine_to_field(params, height, width)
    fld += sample_elastic_field(rng, cfg.elastic_alpha, cfg.elastic_sigma, height, width)
    return fld


def make_training_pair(x, rng, config=TrainingPairConfig()):
    """Synthesize one (noisy moving, reference, exact label) sample from x."""
    if config.noise not in NOISE_MODES:
        raise BadRange(f"noise must be one of {NOISE_MODES}, got {config.noise!r}")
    x = check_image(x, "source image")
    h, w = x.shape
    t1 = sample_transform_field(rng, config, h, w)
    t2 = sample_transform_field(rng, config, h, w)
    x1 = warp(x, t1)
    x2 = warp(x, t2)
    label = x2 - x1
    if config.noise == "shuffle_remap":
        noisy = apply_remap(x1, sample_remap(rng, config.n_min, config.n_max))
    elif config.noise == "bezier":
        noisy = bezier_shift(x1, rng)
    else:
        noisy = x1
    return TrainingSample(noisy_moving=noisy, reference=x2, label=label)
