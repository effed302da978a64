"""Classical similarity measures used as registration losses and baselines.

Each measure has a differentiable torch core (*_tensor, used when the
measure drives gradient-based registration) and a numpy wrapper returning a
MetricValue with its improvement direction.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeMismatch
from .validation import check_image, check_same_shape

MI_BINS = 32
NCC_WINDOW = 9
NCC_EPS = 1e-5
MIND_FLOOR = 1e-6

__all__ = [
    "MetricValue",
    "mae",
    "mse",
    "ncc",
    "mutual_information",
    "mind_loss",
    "mae_tensor",
    "mse_tensor",
    "ncc_tensor",
    "mutual_information_tensor",
    "mind_loss_tensor",
    "metric_loss",
    "METRIC_KEYS",
]


@dataclass(frozen=True)
class MetricValue:
    value: float
    higher_is_better: bool


def mae_tensor(a, b):
    return (a - b).abs().mean()


def mse_tensor(a, b):
    return ((a - b) ** 2).mean()


def _window_means(img, window):
    """Per-pixel windowed means with correct counts at the borders.

    Accepts (H, W) or batched (B, H, W) input.
    """
    k = torch.ones(1, 1, window, window, dtype=img.dtype, device=img.device)
    pad = window // 2
    x = img.reshape(-1, 1, *img.shape[-2:])
    sums = F.conv2d(x, k, padding=pad)
    counts = F.conv2d(torch.ones_like(x), k, padding=pad)
    return (sums / counts).view(img.shape), counts.view(img.shape)


def ncc_tensor(a, b, window=NCC_WINDOW, eps=NCC_EPS):
    """Mean local zero-normalized cross-correlation; in [-1, 1]."""
    mu_a, _ = _window_means(a, window)
    mu_b, _ = _window_means(b, window)
    mu_aa, _ = _window_means(a * a, window)
    mu_bb, _ = _window_means(b * b, window)
    mu_ab, _ = _window_means(a * b, window)
    var_a = (mu_aa - mu_a**2).clamp_min(0.0)
    var_b = (mu_bb - mu_b**2).clamp_min(0.0)
    cross = mu_ab - mu_a * mu_b
    return (cross / torch.sqrt((var_a + eps) * (var_b + eps))).mean()


def _soft_bin_weights(img, bins):
    """Linear partial-volume weights: each value splits over its two bins."""
    u = ((img.reshape(-1) + 1.0) * 0.5 * (bins - 1)).clamp(0.0, bins - 1.0)
    k0 = u.detach().floor().long().clamp(0, bins - 2)
    w = u - k0.to(u.dtype)
    weights = torch.zeros(u.shape[0], bins, dtype=img.dtype, device=img.device)
    weights.scatter_(1, k0.view(-1, 1), (1.0 - w).view(-1, 1))
    weights.scatter_add_(1, (k0 + 1).view(-1, 1), w.view(-1, 1))
    return weights


def mutual_information_tensor(a, b, bins=MI_BINS):
    """MI of the soft joint histogram over [-1, 1]^2; differentiable."""
    wa = _soft_bin_weights(a, bins)
    wb = _soft_bin_weights(b, bins)
    joint = wa.t() @ wb / wa.shape[0]
    px = joint.sum(dim=1, keepdim=True)
    py = joint.sum(dim=0, keepdim=True)
    eps = 1e-12
    return (joint * (torch.log(joint + eps) - torch.log(px @ py + eps))).sum()


_MIND_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _gauss_kernel3(dtype, device, sigma=0.5):
    xs = torch.tensor([-1.0, 0.0, 1.0], dtype=dtype, device=device)
    g = torch.exp(-(xs**2) / (2 * sigma**2))
    k = g.view(3, 1) * g.view(1, 3)
    return (k / k.sum()).view(1, 1, 3, 3)


def _mind_descriptors(img):
    """Per-pixel descriptors over the 4-connected neighborhood, in (0, 1].

    Accepts (H, W) or batched (B, H, W) input.
    """
    kernel = _gauss_kernel3(img.dtype, img.device)
    h, w = img.shape[-2:]
    x = img.reshape(-1, 1, h, w)
    dists = []
    for dy, dx in _MIND_OFFSETS:
        shifted = F.pad(x, (1, 1, 1, 1), mode="replicate")[:, :, 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        diff2 = (x - shifted) ** 2
        d = F.conv2d(F.pad(diff2, (1, 1, 1, 1), mode="replicate"), kernel)
        dists.append(d)
    d = torch.cat(dists, dim=1)
    v = d.mean(dim=1, keepdim=True).clamp_min(MIND_FLOOR)
    return torch.exp(-d / v)


def mind_loss_tensor(a, b):
    return (_mind_descriptors(a) - _mind_descriptors(b)).abs().mean()


def _pair(a, b):
    a = check_image(a, "a", min_size=1)
    b = check_image(b, "b", min_size=1)
    check_same_shape(a, b, "a", "b")
    return torch.from_numpy(a), torch.from_numpy(b)


def mae(a, b):
    ta, tb = _pair(a, b)
    return MetricValue(float(mae_tensor(ta, tb)), higher_is_better=False)


def mse(a, b):
    ta, tb = _pair(a, b)
    return MetricValue(float(mse_tensor(ta, tb)), higher_is_better=False)


def ncc(a, b, window=NCC_WINDOW):
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    ta, tb = _pair(a, b)
    with torch.no_grad():
        v = ncc_tensor(ta, tb, window)
    return MetricValue(float(v), higher_is_better=True)


def mutual_information(a, b, bins=MI_BINS):
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    ta, tb = _pair(a, b)
    with torch.no_grad():
        v = mutual_information_tensor(ta, tb, bins)
    return MetricValue(max(float(v), 0.0), higher_is_better=True)


def mind_loss(a, b):
    ta, tb = _pair(a, b)
    with torch.no_grad():
        v = mind_loss_tensor(ta, tb)
    return MetricValue(float(v), higher_is_better=False)


METRIC_KEYS = ("mae", "mse", "ncc", "mi", "mind")

_TENSOR_LOSSES = {
    "mae": lambda a, b: mae_tensor(a, b),
    "mse": lambda a, b: mse_tensor(a, b),
    "ncc": lambda a, b: -ncc_tensor(a, b),
    "mi": lambda a, b: -mutual_information_tensor(a, b),
    "mind": lambda a, b: mind_loss_tensor(a, b),
}


def metric_loss(key):
    """Differentiable loss (lower is better) for a metric key."""
    if key not in _TENSOR_LOSSES:
        raise KeyError(f"unknown metric {key!r}; choose from {sorted(_TENSOR_LOSSES)}")
    return _TENSOR_LOSSES[key]
