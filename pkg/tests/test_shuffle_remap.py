import numpy as np
import pytest

from imselab import (
    BezierShift,
    BezierSpec,
    RemapSpec,
    ShuffleRemap,
    apply_bezier,
    apply_remap,
    bezier_shift,
    sample_bezier,
    sample_remap,
)
from imselab.errors import BadRange, InvalidSpec
from imselab.shuffle_remap import MIN_GAP, _segment_index


def test_sample_remap_deterministic():
    a = sample_remap(np.random.default_rng(42))
    b = sample_remap(np.random.default_rng(42))
    assert np.array_equal(a.control_points, b.control_points)
    assert np.array_equal(a.permutation, b.permutation)


def test_sample_remap_counts_and_gaps():
    for seed in range(50):
        spec = sample_remap(np.random.default_rng(seed), 2, 50)
        interior = spec.n_segments - 1
        assert 2 <= interior <= 50
        assert spec.control_points[0] == -1.0 and spec.control_points[-1] == 1.0
        assert np.diff(spec.control_points).min() >= MIN_GAP


def test_sample_remap_single_interior_point():
    spec = sample_remap(np.random.default_rng(0), 1, 1)
    assert spec.n_segments == 2
    assert len(spec.control_points) == 3


def test_sample_remap_bad_range():
    with pytest.raises(BadRange):
        sample_remap(np.random.default_rng(0), 5, 2)
    with pytest.raises(BadRange):
        sample_remap(np.random.default_rng(0), 0, 3)


def test_apply_remap_hand_example():
    # Segments [-1,0) and [0,1] swapped: -0.5 lands at 0.5.
    spec = RemapSpec(np.array([-1.0, 0.0, 1.0]), np.array([1, 0]))
    out = apply_remap(np.array([[-0.5, 0.5]]), spec)
    assert out[0, 0] == pytest.approx(0.5)
    assert out[0, 1] == pytest.approx(-0.5)


def test_apply_remap_identity_permutation():
    rng = np.random.default_rng(0)
    img = rng.uniform(-1, 1, (32, 32))
    spec = sample_remap(rng, 2, 50)
    identity = RemapSpec.identity(spec.control_points)
    assert np.abs(apply_remap(img, identity) - img).max() <= 1e-6


def test_apply_remap_range_and_value_one():
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, (16, 16))
    img[0, 0] = 1.0  # the closed end of the last segment
    img[0, 1] = -1.0
    for seed in range(20):
        out = apply_remap(img, sample_remap(np.random.default_rng(seed)))
        assert out.min() >= -1.0 - 1e-12 and out.max() <= 1.0 + 1e-12


def test_apply_remap_per_segment_order_preserved():
    rng = np.random.default_rng(2)
    spec = sample_remap(rng, 3, 8)
    values = rng.uniform(-1, 1, 512)
    seg = _segment_index(values, spec.control_points)
    out = apply_remap(values.reshape(16, 32), spec).ravel()
    for s in np.unique(seg):
        inside = values[seg == s]
        mapped = out[seg == s]
        order = np.argsort(inside)
        assert (np.diff(mapped[order]) >= 0).all()


def test_apply_remap_swap_breaks_global_order():
    spec = RemapSpec(np.array([-1.0, 0.0, 1.0]), np.array([1, 0]))
    out = apply_remap(np.array([[-0.5, 0.5]]), spec)
    assert out[0, 0] > out[0, 1]  # order flipped across segments


def test_apply_remap_segment_mass_conserved():
    rng = np.random.default_rng(3)
    img = rng.uniform(-1, 1, (32, 32))
    spec = sample_remap(rng, 2, 20)
    cp = spec.control_points
    src_seg = _segment_index(img, cp)
    dst_seg = _segment_index(apply_remap(img, spec), cp)
    for i in range(spec.n_segments):
        assert (src_seg == i).sum() == (dst_seg == spec.permutation[i]).sum()


def test_apply_remap_invalid_specs():
    with pytest.raises(InvalidSpec):
        apply_remap(np.zeros((2, 2)), RemapSpec(np.array([-1.0, 0.5]), np.array([0, 0])))
    with pytest.raises(InvalidSpec):
        apply_remap(np.zeros((2, 2)), RemapSpec(np.array([-1.0, 0.0, 1.0]), np.array([0, 0])))
    with pytest.raises(InvalidSpec):
        apply_remap(np.zeros((2, 2)), RemapSpec(np.array([-1.0, 0.5, 0.2, 1.0]), np.array([0, 1, 2])))


def test_remap_spec_json_roundtrip():
    spec = sample_remap(np.random.default_rng(9))
    back = RemapSpec.from_dict(spec.to_dict())
    assert np.array_equal(back.control_points, spec.control_points)
    assert np.array_equal(back.permutation, spec.permutation)


def test_bezier_identity_curve():
    rng = np.random.default_rng(4)
    img = rng.uniform(-1, 1, (16, 16))
    out = apply_bezier(img, BezierSpec(np.array([-1.0, -1 / 3, 1 / 3, 1.0])))
    assert np.abs(out - img).max() < 1e-3


def test_bezier_monotone_and_deterministic():
    rng = np.random.default_rng(5)
    values = np.sort(rng.uniform(-1, 1, 256)).reshape(16, 16)
    for seed in range(10):
        out = bezier_shift(values, np.random.default_rng(seed))
        assert (np.diff(out.ravel()) >= -1e-12).all()
        assert out.min() >= -1 - 1e-12 and out.max() <= 1 + 1e-12
    a = bezier_shift(values, np.random.default_rng(77))
    b = bezier_shift(values, np.random.default_rng(77))
    assert np.array_equal(a, b)


def test_sample_bezier_valid():
    for seed in range(20):
        sample_bezier(np.random.default_rng(seed)).validate()


def test_shuffle_remap_transformer():
    rng = np.random.default_rng(6)
    stack = rng.uniform(-1, 1, (3, 8, 8))
    tf = ShuffleRemap(n_min=2, n_max=10, seed=1)
    out1 = tf.fit_transform(stack)
    out2 = ShuffleRemap(n_min=2, n_max=10, seed=1).transform(stack)
    assert np.array_equal(out1, out2)
    assert out1.shape == stack.shape
    single = tf.transform(stack[0])
    assert single.shape == (8, 8)
    assert tf.get_params() == {"n_min": 2, "n_max": 10, "seed": 1}


def test_bezier_shift_transformer():
    rng = np.random.default_rng(7)
    stack = rng.uniform(-1, 1, (2, 8, 8))
    out = BezierShift(seed=3).transform(stack)
    assert out.shape == stack.shape
    assert np.array_equal(out, BezierShift(seed=3).transform(stack))
