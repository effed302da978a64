"""Input validation helpers.

Images are 2-D float arrays with intensities in [-1, 1], deformation fields
are (H, W, 2) float arrays holding (dy, dx) displacements in pixel units, and
masks are 2-D boolean arrays.  These helpers normalize dtypes and enforce the
invariants once at API boundaries so the numeric code can assume clean input.
"""

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch

RANGE_TOL = 1e-6


def check_image(x, name="image", min_size=2):
    """Validate a 2-D intensity image and return it as float64.

    Values must be finite and inside [-1, 1] up to a small tolerance
    (bilinear arithmetic may overshoot by a few ulps); they are clipped
    back into range.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {x.shape}")
    if x.shape[0] < min_size or x.shape[1] < min_size:
        raise ShapeMismatch(f"{name} must be at least {min_size}x{min_size}, got {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    if x.min() < -1.0 - RANGE_TOL or x.max() > 1.0 + RANGE_TOL:
        raise ValueError(f"{name} values must lie in [-1, 1], got [{x.min():.4g}, {x.max():.4g}]")
    return np.clip(x, -1.0, 1.0)


def check_field(field, name="field"):
    """Validate an (H, W, 2) displacement field and return it as float64."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ShapeMismatch(f"{name} must have shape (H, W, 2), got {field.shape}")
    if not np.isfinite(field).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return field


def check_same_shape(a, b, name_a="a", name_b="b"):
    if a.shape[:2] != b.shape[:2]:
        raise ShapeMismatch(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def check_mask(mask, name="mask"):
    """Validate a 2-D mask and return it as bool."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {mask.shape}")
    return mask.astype(bool)


def check_error_map(e, name="error map"):
    """Validate a 2-D signed error map with values in [-2, 2]."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {e.shape}")
    if not np.isfinite(e).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    if e.min() < -2.0 - RANGE_TOL or e.max() > 2.0 + RANGE_TOL:
        raise ValueError(f"{name} values must lie in [-2, 2]")
    return np.clip(e, -2.0, 2.0)
