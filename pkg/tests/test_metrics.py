import numpy as np
import pytest
import torch

from imselab import mae, mind_loss, mse, mutual_information, ncc
from imselab.errors import ShapeMismatch
from imselab.metrics import (
    mind_loss_tensor,
    mutual_information_tensor,
    ncc_tensor,
    _mind_descriptors,
)
from imselab.shuffle_remap import apply_remap, sample_remap


def _rand(seed, shape=(16, 16)):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


def test_mae_hand_values():
    a = _rand(0)
    assert mae(a, a).value == 0.0
    assert mae(np.full((4, 4), -1.0), np.full((4, 4), 1.0)).value == pytest.approx(2.0)
    assert mae(np.array([[0.0], [1.0]]), np.array([[1.0], [0.0]])).value == pytest.approx(1.0)
    assert not mae(a, a).higher_is_better


def test_mse_basic():
    assert mse(np.full((4, 4), -1.0), np.full((4, 4), 1.0)).value == pytest.approx(4.0)


def test_metrics_shape_mismatch():
    for fn in (mae, mse, ncc, mutual_information, mind_loss):
        with pytest.raises(ShapeMismatch):
            fn(np.zeros((4, 4)), np.zeros((5, 4)))


def test_ncc_self_and_anti_correlation():
    a = _rand(1)
    assert ncc(a, a).value == pytest.approx(1.0, abs=1e-4)
    assert ncc(a, -a).value == pytest.approx(-1.0, abs=1e-4)
    assert ncc(a, a).higher_is_better


def test_ncc_affine_intensity_invariance():
    a = _rand(2)
    b = np.clip(0.5 * a + 0.1, -1, 1)
    assert ncc(a, b).value == pytest.approx(1.0, abs=1e-3)


def test_ncc_bounded():
    for seed in range(10):
        v = ncc(_rand(seed), _rand(seed + 100)).value
        assert -1.0 <= v <= 1.0


def test_ncc_window_validation():
    with pytest.raises(ValueError):
        ncc(_rand(0), _rand(1), window=4)


def _bin_centered_image(seed, bins=32, shape=(12, 12)):
    centers = np.linspace(-1, 1, bins)
    return centers[np.random.default_rng(seed).integers(0, bins, shape)]


def test_mi_self_equals_entropy():
    # Independent oracle: hard-histogram entropy on bin-centered values.
    a = _bin_centered_image(3)
    mi = mutual_information(a, a).value
    hist, _ = np.histogram(a, bins=32, range=(-1 - 1e-9, 1 + 1e-9))
    p = hist / hist.sum()
    p = p[p > 0]
    entropy = float(-(p * np.log(p)).sum())
    assert mi == pytest.approx(entropy, abs=1e-6)


def test_mi_bin_permutation_invariance():
    # Relabeling one image's bins (an intensity permutation that respects the
    # bin grid) must not change MI.
    bins = 32
    a = _bin_centered_image(4, bins)
    b = _bin_centered_image(5, bins)
    centers = np.linspace(-1, 1, bins)
    perm = np.random.default_rng(6).permutation(bins)
    index = np.rint((b + 1) / 2 * (bins - 1)).astype(int)
    b_permuted = centers[perm[index]]
    before = mutual_information(a, b).value
    after = mutual_information(a, b_permuted).value
    assert after == pytest.approx(before, abs=1e-6)


def test_mi_independent_noise_small():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, (100, 100))
        b = rng.uniform(-1, 1, (100, 100))
        assert mutual_information(a, b).value < 0.05


def test_mi_nonnegative():
    for seed in range(5):
        assert mutual_information(_rand(seed), _rand(seed + 50)).value >= 0.0


def test_mi_remap_keeps_dependence_shuffle_destroys_it():
    rng = np.random.default_rng(7)
    a = _rand(8)
    shuffled = rng.permutation(a.ravel()).reshape(a.shape)
    for seed in range(5):
        spec = sample_remap(np.random.default_rng(seed), 2, 20)
        assert mutual_information(a, apply_remap(a, spec)).value >= mutual_information(a, shuffled).value


def test_mind_self_zero_and_descriptor_range():
    a = _rand(9)
    assert mind_loss(a, a).value == 0.0
    desc = _mind_descriptors(torch.from_numpy(a))
    assert float(desc.min()) > 0.0
    assert float(desc.max()) <= 1.0


def test_mind_discounts_intensity_scaling():
    a = _rand(10)
    assert mind_loss(a, 0.5 * a).value < mae(a, 0.5 * a).value


def test_metric_symmetry():
    a, b = _rand(11), _rand(12)
    assert mae(a, b).value == mae(b, a).value
    assert abs(ncc(a, b).value - ncc(b, a).value) < 1e-12
    assert abs(mutual_information(a, b).value - mutual_information(b, a).value) < 1e-9
    assert abs(mind_loss(a, b).value - mind_loss(b, a).value) < 1e-6


@pytest.mark.parametrize(
    "loss_fn,needs_safe_values",
    [(ncc_tensor, False), (mutual_information_tensor, True), (mind_loss_tensor, False)],
)
def test_metric_gradients_match_finite_differences(loss_fn, needs_safe_values):
    rng = np.random.default_rng(13)
    a_np = rng.uniform(-0.9, 0.9, (8, 8))
    b_np = rng.uniform(-0.9, 0.9, (8, 8))
    if needs_safe_values:
        # keep values away from soft-bin knots so the finite-difference
        # window stays inside one linear piece
        bins = 32
        u = (a_np + 1) / 2 * (bins - 1)
        a_np = (np.floor(u) + np.clip(u - np.floor(u), 0.1, 0.9)) / (bins - 1) * 2 - 1
    a = torch.tensor(a_np, requires_grad=True)
    b = torch.tensor(b_np)
    loss_fn(a, b).backward()
    analytic = a.grad.numpy()
    step = 1e-4
    for idx in [(0, 0), (3, 5), (7, 7), (2, 6), (5, 1)]:
        plus, minus = a_np.copy(), a_np.copy()
        plus[idx] += step
        minus[idx] -= step
        fd = (float(loss_fn(torch.tensor(plus), b)) - float(loss_fn(torch.tensor(minus), b))) / (2 * step)
        rel = abs(fd - analytic[idx]) / max(abs(fd), abs(analytic[idx]), 1e-7)
        assert rel < 1e-3, (idx, fd, analytic[idx])
