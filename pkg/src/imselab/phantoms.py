"""Procedural multi-modal registration phantoms with known ground truth.

A phantom is a smooth random blob structure cut into tissue classes by
quantile thresholds; a modality map renders those classes with its own
intensity levels, per-pixel jitter, and an optional monotone nonlinearity.
Rendering one phantom under two modality maps with different class orderings
produces a genuinely multi-modal pair whose spatial alignment is known
exactly.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import BadConfig
from .evaluation import dice
from .image_core import normalize, warp, warp_nearest
from .io import read_mask_pgm, read_raw, write_mask_pgm, write_raw
from .spatial_transforms import TransformConfig, sample_transform_field

__all__ = [
    "Phantom",
    "ModalityMap",
    "GroundTruthPair",
    "generate_phantom",
    "random_modality_map",
    "default_modality_pair",
    "simulate_modality",
    "invert_field",
    "generate_ground_truth_pair",
    "write_pair_dir",
    "read_pair_dir",
]


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray  # continuous anatomy field in [-1, 1]
    class_map: np.ndarray  # (H, W) small integers, a partition
    masks: dict  # name -> bool array, one per class

    def largest_structure(self):
        return max(self.masks, key=lambda k: int(self.masks[k].sum()))


@dataclass(frozen=True)
class ModalityMap:
    class_levels: tuple  # target intensity per class, in [-1, 1]
    jitter: float = 0.08  # per-pixel texture amplitude
    nonlinearity_gain: float = 0.0  # 0 disables the global tanh curve


@dataclass(frozen=True)
class GroundTruthPair:
    moving: np.ndarray
    target: np.ndarray
    masks_moving: dict
    masks_target: dict
    true_field: np.ndarray  # correction field: warp(moving, true_field) realigns to target
    applied_field: np.ndarray  # field that produced the moving image
    largest: str = ""


def generate_phantom(rng, size=64, classes=5):
    """Nested blob anatomy: a randomly placed radial bowl plus smooth noise.

    Classes are quantile bands of the field, so every class is non-empty;
    the named structures are the superlevel sets ("organ_k" = class >= k),
    which are compact nested blobs rather than thin annuli, giving Dice a
    meaningful dynamic range.
    """
    if size < 32:
        raise BadConfig(f"size must be >= 32, got {size}")
    if not 2 <= classes <= 8:
        raise BadConfig(f"classes must be in [2, 8], got {classes}")
    cy, cx = rng.uniform(0.3 * size, 0.7 * size, size=2)
    ys, xs = np.mgrid[0:size, 0:size]
    bowl = -np.hypot(ys - cy, xs - cx) / (0.55 * size)
    noise = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 8.0, mode="reflect")
    noise += 0.5 * gaussian_filter(rng.standard_normal((size, size)), sigma=size / 16.0, mode="reflect")
    blobs = bowl + 0.35 * noise / max(noise.std(), 1e-12)
    # Organ areas shrink toward the center: ~55%, 35%, 20%, 8% for 5 classes.
    fractions = np.linspace(0.45, 0.92, classes - 1)
    thresholds = np.quantile(blobs, fractions)
    class_map = np.searchsorted(thresholds, blobs).astype(np.int8)
    masks = {f"organ_{k}": class_map >= k for k in range(1, classes)}
    assert all(m.any() for m in masks.values())
    return Phantom(image=normalize(blobs, blobs.min(), blobs.max()), class_map=class_map, masks=masks)


def random_modality_map(rng, classes, jitter=0.08, nonlinearity_gain=0.0):
    levels = np.linspace(-0.85, 0.85, classes)[rng.permutation(classes)]
    return ModalityMap(class_levels=tuple(levels), jitter=jitter, nonlinearity_gain=nonlinearity_gain)


def default_modality_pair(rng, classes=5, jitter=0.08):
    """Two maps whose class orderings differ and whose levels sit far apart."""
    map_a = random_modality_map(rng, classes, jitter)
    for _ in range(100):
        map_b = random_modality_map(rng, classes, jitter, nonlinearity_gain=0.8)
        gap = np.abs(np.array(map_a.class_levels) - np.array(map_b.class_levels)).mean()
        same_order = np.argsort(map_a.class_levels).tolist() == np.argsort(map_b.class_levels).tolist()
        if gap > 0.25 and not same_order:
            return map_a, map_b
    raise BadConfig("could not draw modality maps with a distribution gap")


def simulate_modality(phantom, modality, rng):
    """Render the phantom's classes under one modality map; output in [-1, 1]."""
    levels = np.asarray(modality.class_levels, dtype=np.float64)
    img = levels[phantom.class_map]
    if modality.jitter > 0:
        texture = gaussian_filter(rng.standard_normal(img.shape), sigma=0.7, mode="reflect")
        img = img + modality.jitter * texture / max(np.abs(texture).max(), 1e-12)
    if modality.nonlinearity_gain > 0:
        g = modality.nonlinearity_gain
        img = np.tanh(g * img) / np.tanh(g)
    return np.clip(img, -1.0, 1.0)


def invert_field(fld, iterations=10):
    """Fixed-point displacement inversion: g(p) = -fld(p + g(p))."""
    g = -fld
    for _ in range(iterations):
        g = -np.stack([warp(fld[..., 0], g), warp(fld[..., 1], g)], axis=-1)
    return g


def generate_ground_truth_pair(phantom, modalities, config=None, rng=None, min_misalignment_dice=0.9, max_retries=10):
    """Cross-modality pair: deformed moving image, clean target, exact truth.

    The sampled field deforms the moving image and its masks; the returned
    true_field is its (fixed-point) inverse, i.e. the correction registration
    should recover.  Fields are resampled a bounded number of times until the
    largest structure is genuinely misaligned, unless deformation is disabled.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    cfg = config if config is not None else TransformConfig(deformation_strength=0.25)
    h, w = phantom.class_map.shape
    mod_a, mod_b = modalities
    target = simulate_modality(phantom, mod_a, rng)
    moving_clean = simulate_modality(phantom, mod_b, rng)
    largest = phantom.largest_structure()
    for _ in range(max_retries):
        fld = sample_transform_field(rng, cfg, h, w)
        if np.abs(fld).max() < 1e-9:
            break
        if dice(warp_nearest(phantom.masks[largest], fld), phantom.masks[largest]) < min_misalignment_dice:
            break
    masks_moving = {k: warp_nearest(m, fld) for k, m in phantom.masks.items()}
    return GroundTruthPair(
        moving=warp(moving_clean, fld),
        target=target,
        masks_moving=masks_moving,
        masks_target=dict(phantom.masks),
        true_field=invert_field(fld),
        applied_field=fld,
        largest=largest,
    )


def write_pair_dir(path, pair):
    """Dataset layout: pair dir with raw images, PGM masks, and the true field."""
    path = Path(path)
    write_raw(path / "moving.raw", pair.moving)
    write_raw(path / "target.raw", pair.target)
    write_raw(path / "true_field.raw", pair.true_field)
    write_raw(path / "applied_field.raw", pair.applied_field)
    for name, mask in pair.masks_moving.items():
        write_mask_pgm(path / "masks" / f"moving_{name}.pgm", mask)
    for name, mask in pair.masks_target.items():
        write_mask_pgm(path / "masks" / f"target_{name}.pgm", mask)
    meta = {"largest": pair.largest, "structures": sorted(pair.masks_target)}
    (path / "pair.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_pair_dir(path):
    path = Path(path)
    meta = json.loads((path / "pair.json").read_text())
    masks_moving, masks_target = {}, {}
    for name in meta["structures"]:
        masks_moving[name] = read_mask_pgm(path / "masks" / f"moving_{name}.pgm")
        masks_target[name] = read_mask_pgm(path / "masks" / f"target_{name}.pgm")
    return GroundTruthPair(
        moving=read_raw(path / "moving.raw"),
        target=read_raw(path / "target.raw"),
        masks_moving=masks_moving,
        masks_target=masks_target,
        true_field=read_raw(path / "true_field.raw"),
        applied_field=read_raw(path / "applied_field.raw"),
        largest=meta["largest"],
    )
