"""Core image and deformation-field operations.

All public functions take and return numpy arrays.  The *_tensor variants
operate on torch tensors and are differentiable; they are what the training
and iterative-optimization code calls.
"""

import numpy as np
import torch

from .errors import DegenerateRange, NonFiniteInput, ShapeMismatch
from .validation import check_field, check_image

__all__ = [
    "normalize",
    "warp",
    "warp_tensor",
    "warp_nearest",
    "spatial_gradient",
    "spatial_gradient_tensor",
]


def normalize(raw, lo, hi):
    """Affinely map raw intensities from [lo, hi] to [-1, 1].

    Values outside [lo, hi] are clamped first, so re-normalizing after
    arithmetic is safe.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise NonFiniteInput("raw image contains NaN or Inf")
    if not (lo < hi):
        raise DegenerateRange(f"need lo < hi, got lo={lo}, hi={hi}")
    clipped = np.clip(raw, lo, hi)
    return 2.0 * (clipped - lo) / (hi - lo) - 1.0


def warp_tensor(image, field):
    """Bilinear pull-warp of a 2-D tensor: out(p) = image(p + field(p)).

    Sampling coordinates are clamped to the image border.  Differentiable
    with respect to both the image values and the displacements.

    image: (H, W) tensor, field: (H, W, 2) tensor of (dy, dx) in pixels.
    """
    if image.shape != field.shape[:2]:
        raise ShapeMismatch(f"image shape {tuple(image.shape)} != field shape {tuple(field.shape[:2])}")
    h, w = image.shape
    dtype, device = field.dtype, field.device
    base_y = torch.arange(h, dtype=dtype, device=device).view(h, 1)
    base_x = torch.arange(w, dtype=dtype, device=device).view(1, w)
    ys = (base_y + field[..., 0]).clamp(0, h - 1)
    xs = (base_x + field[..., 1]).clamp(0, w - 1)

    y0 = ys.floor().long().clamp(0, h - 1)
    x0 = xs.floor().long().clamp(0, w - 1)
    y1 = (y0 + 1).clamp(0, h - 1)
    x1 = (x0 + 1).clamp(0, w - 1)
    wy = ys - y0.to(dtype)
    wx = xs - x0.to(dtype)

    v00 = image[y0, x0]
    v01 = image[y0, x1]
    v10 = image[y1, x0]
    v11 = image[y1, x1]
    top = v00 + (v01 - v00) * wx
    bot = v10 + (v11 - v10) * wx
    return top + (bot - top) * wy


def warp(image, field):
    """Bilinear pull-warp on numpy arrays; see warp_tensor."""
    image = np.asarray(image, dtype=np.float64)
    field = check_field(field)
    if image.ndim != 2:
        raise ShapeMismatch(f"image must be 2-D, got {image.shape}")
    if image.shape != field.shape[:2]:
        raise ShapeMismatch(f"image shape {image.shape} != field shape {field.shape[:2]}")
    with torch.no_grad():
        out = warp_tensor(torch.from_numpy(image), torch.from_numpy(field))
    return out.numpy()


def warp_nearest(mask, field):
    """Nearest-neighbor pull-warp; keeps label/mask images discrete."""
    mask = np.asarray(mask)
    field = check_field(field)
    if mask.shape != field.shape[:2]:
        raise ShapeMismatch(f"mask shape {mask.shape} != field shape {field.shape[:2]}")
    h, w = mask.shape
    ys = np.arange(h)[:, None] + field[..., 0]
    xs = np.arange(w)[None, :] + field[..., 1]
    yi = np.clip(np.rint(ys), 0, h - 1).astype(np.intp)
    xi = np.clip(np.rint(xs), 0, w - 1).astype(np.intp)
    return mask[yi, xi]


def spatial_gradient_tensor(field):
    """Forward finite differences of a field, zero on the trailing border.

    field: (H, W, C) tensor.  Returns (H, W, C, 2) with the difference along
    y in [..., 0] and along x in [..., 1].
    """
    h, w = field.shape[:2]
    grad = torch.zeros(field.shape + (2,), dtype=field.dtype, device=field.device)
    grad[: h - 1, :, :, 0] = field[1:, :, :] - field[: h - 1, :, :]
    grad[:, : w - 1, :, 1] = field[:, 1:, :] - field[:, : w - 1, :]
    return grad


def spatial_gradient(field):
    """Forward finite differences on a numpy (H, W, 2) field -> (H, W, 2, 2)."""
    field = check_field(field)
    with torch.no_grad():
        g = spatial_gradient_tensor(torch.from_numpy(field))
    return g.numpy()
