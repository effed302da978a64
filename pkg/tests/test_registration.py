import numpy as np
import pytest
import torch

from imselab import (
    IterativeRegistration,
    NetworkRegistration,
    SpatialErrorEvaluator,
    smoothness_loss,
    warp,
)
from imselab.errors import BadConfig, EmptyDataset, ShapeMismatch
from imselab.image_core import warp_tensor
from imselab.registration import smoothness_loss_tensor


def _phantom_image(seed=0, size=32):
    from imselab import default_modality_pair, generate_phantom, simulate_modality

    rng = np.random.default_rng(seed)
    ph = generate_phantom(rng, size, 4)
    mod, _ = default_modality_pair(rng, 4)
    return simulate_modality(ph, mod, rng)


def test_smoothness_zero_and_constant():
    assert smoothness_loss(np.zeros((6, 6, 2))) == 0.0
    assert smoothness_loss(np.full((6, 6, 2), 5.0)) == 0.0


def test_smoothness_ramp_hand_value():
    h, w = 5, 7
    fld = np.zeros((h, w, 2))
    fld[..., 1] = np.arange(w)[None, :]
    # dx has unit x-gradient at h*(w-1) positions; mean over h*w*2*2 terms.
    expected = h * (w - 1) / (h * w * 2 * 2)
    assert smoothness_loss(fld) == pytest.approx(expected)


def test_iterative_identity_pair_keeps_field_near_zero():
    img = _phantom_image(0)
    reg = IterativeRegistration(loss="mae", iterations=30, learning_rate=0.5)
    result = reg.register(img, img)
    assert np.sqrt((result.field**2).sum(axis=2)).mean() < 0.1
    assert np.array_equal(result.warped, warp(img, result.field))


def test_iterative_recovers_constant_shift():
    img = _phantom_image(1, size=32)
    shift = np.zeros((32, 32, 2))
    shift[..., 1] = 3.0
    moving = warp(img, shift)  # content of img sampled 3 px to the right
    reg = IterativeRegistration(loss="mae", smoothness_weight=1.0, iterations=200, learning_rate=1.0)
    result = reg.register(moving, img)
    # correcting field should approximate the inverse shift (0, -3) interior
    interior = result.field[4:-4, 4:-4]
    err = np.sqrt(((interior - np.array([0.0, -3.0])) ** 2).sum(axis=2)).mean()
    assert err < 0.5, err


def test_iterative_best_iterate_tracking():
    img = _phantom_image(2)
    reg = IterativeRegistration(loss="mae", iterations=50, learning_rate=1.0)
    result = reg.register(warp(img, np.full((32, 32, 2), 1.5)), img)
    best_so_far = np.minimum.accumulate(result.trace)
    assert (np.diff(best_so_far) <= 0).all()
    assert min(result.trace) <= result.trace[-1]


def test_iterative_shape_mismatch_and_bad_config():
    with pytest.raises(ShapeMismatch):
        IterativeRegistration().register(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(BadConfig):
        IterativeRegistration(iterations=0).register(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(BadConfig):
        IterativeRegistration(loss="nope").register(np.zeros((8, 8)), np.zeros((8, 8)))


def test_iterative_imse_requires_evaluator():
    with pytest.raises(BadConfig):
        IterativeRegistration(loss="imse").register(np.zeros((8, 8)), np.zeros((8, 8)))


def test_network_zero_initialized_field():
    net = NetworkRegistration(loss="mae").build()
    img = _phantom_image(3)
    result = net.register(img, np.roll(img, 2, axis=1))
    assert np.all(result.field == 0.0)
    assert np.array_equal(result.warped, img)


def test_network_fit_improves_same_modality_alignment():
    rng = np.random.default_rng(4)
    pairs = []
    for seed in range(6):
        img = _phantom_image(seed + 10)
        shift = np.zeros((32, 32, 2))
        shift[..., 1] = rng.uniform(1.0, 3.0)
        pairs.append((warp(img, shift), img))
    net = NetworkRegistration(loss="mae", smoothness_weight=0.5, steps=150, learning_rate=1e-3, batch_size=3, seed=0)
    net.fit(pairs)
    before, after = [], []
    for moving, target in pairs[:3]:
        result = net.register(moving, target)
        before.append(np.abs(moving - target).mean())
        after.append(np.abs(result.warped - target).mean())
    assert np.mean(after) < np.mean(before)


def test_network_training_freezes_evaluator():
    evaluator = SpatialErrorEvaluator(steps=2, batch_size=2, seed=0).fit(np.random.default_rng(0).uniform(-1, 1, (2, 16, 16)))
    weights_before = evaluator.parameter_vector()
    img = _phantom_image(5)
    pairs = [(warp(img, np.full((32, 32, 2), 1.0)), img)]
    NetworkRegistration(loss="imse", evaluator=evaluator, steps=10, batch_size=1, seed=1).fit(pairs)
    assert np.array_equal(evaluator.parameter_vector(), weights_before)


def test_network_fit_empty_dataset():
    with pytest.raises(EmptyDataset):
        NetworkRegistration(loss="mae").fit([])


def test_network_checkpoint_roundtrip(tmp_path):
    img = _phantom_image(6)
    pairs = [(np.roll(img, 1, axis=0), img)]
    net = NetworkRegistration(loss="mae", steps=5, batch_size=1, seed=2).fit(pairs)
    path = net.save(tmp_path / "reg.ckpt")
    back = NetworkRegistration.load(path)
    assert np.array_equal(back.parameter_vector(), net.parameter_vector())
    a = net.register(pairs[0][0], pairs[0][1])
    b = back.register(pairs[0][0], pairs[0][1])
    assert np.array_equal(a.field, b.field)


def test_both_registration_directions_run():
    a, b = _phantom_image(7), _phantom_image(8)
    reg = IterativeRegistration(loss="mae", iterations=5)
    assert reg.register(a, b).field.shape == (32, 32, 2)
    assert reg.register(b, a).field.shape == (32, 32, 2)


def test_end_to_end_gradient_matches_finite_differences():
    # similarity(E) + smoothness wrt field entries, float64, 8x8
    torch.manual_seed(0)
    evaluator = SpatialErrorEvaluator(channels=(4, 8, 8), residual_blocks=1, seed=0).build()
    rng = np.random.default_rng(9)
    moving = torch.tensor(rng.uniform(-1, 1, (8, 8)))
    target = torch.tensor(rng.uniform(-1, 1, (8, 8)))
    base = rng.uniform(0.1, 0.4, (8, 8, 2)) * rng.choice([-1.0, 1.0], (8, 8, 2))

    def objective(field_t):
        warped = warp_tensor(moving, field_t)
        err = evaluator.predict_tensor(target, warped)
        return err.abs().mean() + smoothness_loss_tensor(field_t)

    fld = torch.tensor(base, requires_grad=True)
    objective(fld).backward()
    analytic = fld.grad.numpy()
    step = 1e-4
    for idx in [(0, 0, 0), (3, 5, 1), (7, 7, 0), (2, 6, 1), (4, 4, 0)]:
        plus, minus = base.copy(), base.copy()
        plus[idx] += step
        minus[idx] -= step
        fd = (float(objective(torch.tensor(plus))) - float(objective(torch.tensor(minus)))) / (2 * step)
        rel = abs(fd - analytic[idx]) / max(abs(fd), abs(analytic[idx]), 1e-7)
        assert rel < 1e-3, (idx, fd, analytic[idx])
