import numpy as np
import pytest
import torch

from imselab import SpatialErrorEvaluator
from imselab.errors import BadConfig, EmptyDataset, ShapeMismatch


def _images(n=3, size=16, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (n, size, size))


def test_build_deterministic():
    a = SpatialErrorEvaluator(seed=7).build().parameter_vector()
    b = SpatialErrorEvaluator(seed=7).build().parameter_vector()
    assert np.array_equal(a, b)
    c = SpatialErrorEvaluator(seed=8).build().parameter_vector()
    assert not np.array_equal(a, c)


def test_untrained_forward_shape_and_bounds():
    est = SpatialErrorEvaluator().build()
    rng = np.random.default_rng(1)
    ref, mov = rng.uniform(-1, 1, (2, 64, 64))
    out = est.predict(ref, mov)
    assert out.shape == (64, 64)
    assert out.min() >= -2.0 and out.max() <= 2.0


def test_forward_handles_sizes_not_divisible_by_four():
    est = SpatialErrorEvaluator().build()
    rng = np.random.default_rng(2)
    ref, mov = rng.uniform(-1, 1, (2, 37, 45))
    assert est.predict(ref, mov).shape == (37, 45)


def test_predict_shape_mismatch():
    est = SpatialErrorEvaluator().build()
    with pytest.raises(ShapeMismatch):
        est.predict(np.zeros((8, 8)), np.zeros((8, 9)))


def test_predict_before_build_raises():
    with pytest.raises(BadConfig):
        SpatialErrorEvaluator().predict(np.zeros((8, 8)), np.zeros((8, 8)))


def test_fit_empty_dataset():
    with pytest.raises(EmptyDataset):
        SpatialErrorEvaluator(steps=1).fit([])


def test_fit_bad_noise_mode():
    with pytest.raises(BadConfig):
        SpatialErrorEvaluator(noise="saltpepper", steps=1).fit(_images())


def test_fit_deterministic_and_traces_loss():
    kwargs = dict(steps=4, batch_size=2, seed=3)
    a = SpatialErrorEvaluator(**kwargs).fit(_images())
    b = SpatialErrorEvaluator(**kwargs).fit(_images())
    assert a.loss_trace_ == b.loss_trace_
    assert len(a.loss_trace_) == 4
    assert a.steps_trained_ == 4
    assert np.array_equal(a.parameter_vector(), b.parameter_vector())


def test_translate_is_reference_minus_error():
    est = SpatialErrorEvaluator(steps=2, batch_size=2, seed=0).fit(_images())
    rng = np.random.default_rng(4)
    ref, mov = rng.uniform(-1, 1, (2, 16, 16))
    expected = np.clip(ref - est.predict(ref, mov), -1, 1)
    assert np.allclose(est.translate(ref, mov), expected)


def test_checkpoint_roundtrip(tmp_path):
    est = SpatialErrorEvaluator(steps=3, batch_size=2, seed=5, modality_tag="mod_b").fit(_images())
    path = est.save(tmp_path / "eval.ckpt")
    back = SpatialErrorEvaluator.load(path)
    assert np.array_equal(back.parameter_vector(), est.parameter_vector())
    assert back.steps_trained_ == 3
    assert back.modality_tag == "mod_b"
    assert back.get_params()["noise"] == est.get_params()["noise"]
    rng = np.random.default_rng(6)
    ref, mov = rng.uniform(-1, 1, (2, 16, 16))
    assert np.array_equal(back.predict(ref, mov), est.predict(ref, mov))
    assert (tmp_path / "eval.trace.csv").exists()


def test_checkpoint_rejects_wrong_kind(tmp_path):
    p = tmp_path / "bogus.ckpt"
    p.write_bytes(b'{"kind": "something_else"}\n')
    with pytest.raises(BadConfig):
        SpatialErrorEvaluator.load(p)


def test_predict_tensor_batched_and_differentiable():
    est = SpatialErrorEvaluator().build()
    ref = torch.rand(2, 16, 16) * 2 - 1
    mov = (torch.rand(2, 16, 16) * 2 - 1).requires_grad_(True)
    out = est.predict_tensor(ref, mov)
    assert out.shape == (2, 16, 16)
    out.abs().mean().backward()
    assert mov.grad is not None and torch.isfinite(mov.grad).all()
    # frozen-weights contract: no parameter picked up a gradient
    assert all(p.grad is None for p in est.net_.parameters())


def test_sklearn_get_set_params():
    est = SpatialErrorEvaluator(n_min=4)
    assert est.get_params()["n_min"] == 4
    est.set_params(n_max=12)
    assert est.n_max == 12
