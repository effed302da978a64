"""Shuffle Remap style augmentation and the Bezier histogram-shift baseline.

Shuffle Remap cuts the intensity range [-1, 1] into random segments and
permutes them: each pixel value is affinely moved from its source segment
into the segment the permutation assigns.  The result keeps per-segment
structure but scrambles the global intensity ordering, which is exactly what
a cross-modality intensity relationship looks like.  The Bezier variant is
the classical monotone histogram shift used as a baseline: it rescales the
distribution but never reorders it.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import BadRange, InvalidSpec
from .validation import check_image

MIN_GAP = 1e-4

__all__ = [
    "RemapSpec",
    "BezierSpec",
    "sample_remap",
    "apply_remap",
    "sample_bezier",
    "apply_bezier",
    "bezier_shift",
    "ShuffleRemap",
    "BezierShift",
]


@dataclass(frozen=True)
class RemapSpec:
    """Sorted control points on [-1, 1] plus a permutation of the segments."""

    control_points: np.ndarray  # shape (n_segments + 1,), strictly increasing, endpoints -1 and 1
    permutation: np.ndarray  # shape (n_segments,), bijection over segment indices

    def __post_init__(self):
        object.__setattr__(self, "control_points", np.asarray(self.control_points, dtype=np.float64))
        object.__setattr__(self, "permutation", np.asarray(self.permutation, dtype=np.intp))

    @property
    def n_segments(self):
        return len(self.control_points) - 1

    def validate(self):
        cp, perm = self.control_points, self.permutation
        if len(cp) < 2 or len(perm) != len(cp) - 1:
            raise InvalidSpec(f"need n+1 control points for n segments, got {len(cp)} and {len(perm)}")
        if cp[0] != -1.0 or cp[-1] != 1.0:
            raise InvalidSpec("control points must start at -1 and end at 1")
        if not (np.diff(cp) > 0).all():
            raise InvalidSpec("control points must be strictly increasing")
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise InvalidSpec("permutation must be a bijection over segment indices")
        return self

    def to_dict(self):
        return {
            "control_points": self.control_points.tolist(),
            "permutation": self.permutation.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["control_points"]), np.array(d["permutation"])).validate()

    @classmethod
    def identity(cls, control_points):
        cp = np.asarray(control_points, dtype=np.float64)
        return cls(cp, np.arange(len(cp) - 1))


def sample_remap(rng, n_min=2, n_max=50):
    """Draw a random RemapSpec.

    The interior control-point count is uniform in [n_min, n_max]; interior
    points are uniform in (-1, 1), resampled until all gaps are at least
    MIN_GAP so the per-segment affine map never divides by zero.  The segment
    permutation is uniform over all bijections.
    """
    if n_min < 1 or n_min > n_max:
        raise BadRange(f"need 1 <= n_min <= n_max, got [{n_min}, {n_max}]")
    count = int(rng.integers(n_min, n_max + 1))
    while True:
        interior = np.sort(rng.uniform(-1.0, 1.0, size=count))
        cp = np.concatenate(([-1.0], interior, [1.0]))
        if np.diff(cp).min() >= MIN_GAP:
            break
    perm = rng.permutation(count + 1)
    return RemapSpec(cp, perm).validate()


def _segment_index(values, control_points):
    # Segments are half-open [p_i, p_{i+1}) except the last, which includes 1.
    idx = np.searchsorted(control_points, values, side="right") - 1
    return np.clip(idx, 0, len(control_points) - 2)


def apply_remap(image, spec):
    """Remap intensities per segment: affine from segment i onto segment perm(i)."""
    spec.validate()
    image = check_image(image, min_size=1)
    cp = spec.control_points
    i = _segment_index(image, cp)
    j = spec.permutation[i]
    lo_src, hi_src = cp[i], cp[i + 1]
    lo_dst, hi_dst = cp[j], cp[j + 1]
    return (image - lo_src) / (hi_src - lo_src) * (hi_dst - lo_dst) + lo_dst


@dataclass(frozen=True)
class BezierSpec:
    """Four non-decreasing control ordinates in [-1, 1] with fixed endpoints."""

    ordinates: np.ndarray = field(default_factory=lambda: np.array([-1.0, -1 / 3, 1 / 3, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "ordinates", np.asarray(self.ordinates, dtype=np.float64))

    def validate(self):
        y = self.ordinates
        if len(y) != 4 or y[0] != -1.0 or y[-1] != 1.0 or (np.diff(y) < 0).any():
            raise InvalidSpec("need 4 non-decreasing ordinates with endpoints -1 and 1")
        return self


# Abscissas of the curve's control points; evenly spaced so that ordinates
# (-1, -1/3, 1/3, 1) give the exact identity curve.
_BEZIER_X = np.array([-1.0, -1 / 3, 1 / 3, 1.0])
_LUT_SIZE = 1024


def sample_bezier(rng):
    """Draw a random monotone curve: two interior ordinates uniform, sorted."""
    interior = np.sort(rng.uniform(-1.0, 1.0, size=2))
    return BezierSpec(np.concatenate(([-1.0], interior, [1.0]))).validate()


def apply_bezier(image, spec):
    """Apply a monotone cubic Bezier intensity curve via a 1024-point lookup."""
    spec.validate()
    image = check_image(image, min_size=1)
    t = np.linspace(0.0, 1.0, _LUT_SIZE)
    b = np.stack([(1 - t) ** 3, 3 * (1 - t) ** 2 * t, 3 * (1 - t) * t**2, t**3])
    xs = _BEZIER_X @ b
    ys = spec.ordinates @ b
    return np.interp(image, xs, ys)


def bezier_shift(image, rng):
    """Random monotone histogram shift; preserves intensity ordering."""
    return apply_bezier(image, sample_bezier(rng))


class ShuffleRemap(BaseEstimator, TransformerMixin):
    """Transformer applying a fresh Shuffle Remap spec to each image.

    transform accepts a single (H, W) image or a stack (N, H, W); image k
    gets the spec drawn from seed (seed, k), so calls are deterministic and
    repeatable.
    """

    def __init__(self, n_min=2, n_max=50, seed=0):
        self.n_min = n_min
        self.n_max = n_max
        self.seed = seed

    def fit(self, X, y=None):
        if self.n_min < 1 or self.n_min > self.n_max:
            raise BadRange(f"need 1 <= n_min <= n_max, got [{self.n_min}, {self.n_max}]")
        return self

    def transform(self, X):
        self.fit(X)
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 2
        stack = X[None] if single else X
        out = np.empty_like(stack)
        for k, img in enumerate(stack):
            rng = np.random.default_rng((self.seed, k))
            out[k] = apply_remap(img, sample_remap(rng, self.n_min, self.n_max))
        return out[0] if single else out


class BezierShift(BaseEstimator, TransformerMixin):
    """Transformer applying a fresh random Bezier intensity curve per image."""

    def __init__(self, seed=0):
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 2
        stack = X[None] if single else X
        out = np.empty_like(stack)
        for k, img in enumerate(stack):
            out[k] = bezier_shift(img, np.random.default_rng((self.seed, k)))
        return out[0] if single else out
