"""Registration-quality metrics and the evaluator-as-assessor experiment.

The alignment score turns the evaluator into a label-free quality proxy: the
mean absolute predicted error over the union of the two structure masks,
flipped and normalized to [0, 1] (error maps live in [-2, 2], so score =
1 - mean|E| / 2).  The correlation experiment perturbs an aligned pair with
random transforms of varying severity and checks that the score tracks Dice.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage, stats

from .errors import BothEmpty, DegenerateScores, EmptyMask, EmptyRegion
from .image_core import warp, warp_nearest
from .registration import smoothness_loss
from .spatial_transforms import TransformConfig, sample_transform_field
from .validation import check_mask, check_same_shape

__all__ = [
    "dice",
    "hd95",
    "field_smoothness",
    "imse_alignment_score",
    "CorrelationReport",
    "correlation_experiment",
]


def dice(a, b):
    """Overlap 2|a&b| / (|a|+|b|) in [0, 1]."""
    a = check_mask(a, "a")
    b = check_mask(b, "b")
    check_same_shape(a, b, "a", "b")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        raise BothEmpty("dice undefined: both masks are empty")
    return 2.0 * int((a & b).sum()) / total


def _boundary(mask):
    eroded = ndimage.binary_erosion(mask, structure=np.ones((3, 3), bool))
    return mask & ~eroded


def hd95(a, b):
    """95th percentile of symmetric boundary-to-boundary nearest distances, in pixels."""
    a = check_mask(a, "a")
    b = check_mask(b, "b")
    check_same_shape(a, b, "a", "b")
    if not a.any() or not b.any():
        raise EmptyMask("hd95 needs two non-empty masks")
    ba, bb = _boundary(a), _boundary(b)
    dist_to_b = ndimage.distance_transform_edt(~bb)
    dist_to_a = ndimage.distance_transform_edt(~ba)
    d = np.concatenate([dist_to_b[ba], dist_to_a[bb]])
    return float(np.percentile(d, 95))


def field_smoothness(field):
    """Mean squared field gradient; same quantity the registration loss penalizes."""
    return smoothness_loss(field)


def imse_alignment_score(model, moving, target, mask_m, mask_t):
    """Label-free registration quality score in [0, 1] from the evaluator."""
    mask_m = check_mask(mask_m, "mask_m")
    mask_t = check_mask(mask_t, "mask_t")
    region = mask_m | mask_t
    if not region.any():
        raise EmptyRegion("mask union is empty")
    err = model.predict(target, moving)
    return 1.0 - float(np.abs(err)[region].mean()) / 2.0


@dataclass(frozen=True)
class CorrelationReport:
    points: tuple  # ((alignment score, dice), ...)
    spearman: float
    pearson: float
    seed: int
    transform_count: int

    def to_dict(self):
        return {
            "points": [[s, d] for s, d in self.points],
            "spearman": self.spearman,
            "pearson": self.pearson,
            "seed": self.seed,
            "transform_count": self.transform_count,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(
            points=tuple((float(s), float(v)) for s, v in d["points"]),
            spearman=float(d["spearman"]),
            pearson=float(d["pearson"]),
            seed=int(d["seed"]),
            transform_count=int(d["transform_count"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


def correlation_experiment(model, base_pairs, transform_count, seed, config=None):
    """Score-vs-Dice study over randomly perturbed copies of aligned pairs.

    base_pairs: sequence of (moving, target, mask_m, mask_t).  Each sampled
    transform perturbs one pair's moving image and mask with a severity drawn
    uniformly between zero and the configured strength, so the points sweep
    from aligned to badly misaligned.
    """
    base_pairs = list(base_pairs)
    if not base_pairs:
        raise EmptyRegion("need at least one base pair")
    if transform_count < 3:
        raise DegenerateScores("need at least 3 transforms")
    cfg = config if config is not None else TransformConfig()
    points = []
    for t in range(transform_count):
        rng = np.random.default_rng((seed, t))
        moving, target, mask_m, mask_t = base_pairs[t % len(base_pairs)]
        severity = rng.uniform(0.0, 1.0)
        fld = sample_transform_field(rng, replace(cfg, deformation_strength=cfg.deformation_strength * severity), *moving.shape)
        moved = warp(moving, fld)
        mask_moved = warp_nearest(mask_m, fld)
        score = imse_alignment_score(model, moved, target, mask_moved, mask_t)
        points.append((score, dice(mask_moved, mask_t)))
    scores = np.array([p[0] for p in points])
    dices = np.array([p[1] for p in points])
    if np.ptp(scores) == 0.0 or np.ptp(dices) == 0.0:
        raise DegenerateScores("all scores identical; correlation undefined")
    spearman = float(stats.spearmanr(scores, dices).statistic)
    pearson = float(stats.pearsonr(scores, dices).statistic)
    return CorrelationReport(
        points=tuple((float(s), float(d)) for s, d in points),
        spearman=spearman,
        pearson=pearson,
        seed=seed,
        transform_count=transform_count,
    )
