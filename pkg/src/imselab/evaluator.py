"""Self-supervised spatial-error evaluator.

A small residual encoder-decoder takes a stacked (reference, moving) pair
and predicts the signed per-pixel error map the pair would have if both
images shared the reference's intensity distribution.  Training needs only
single-modality images: pairs are synthesized on the fly with exact labels
(spatial_transforms.make_training_pair), and intensity noise on the moving
image teaches the net to ignore distribution differences.

Subtracting the predicted error from the reference also yields a translation
of the moving image into the reference's distribution.
"""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from sklearn.base import BaseEstimator

from .errors import BadConfig, DivergedTraining, EmptyDataset
from .spatial_transforms import NOISE_MODES, TrainingPairConfig, make_training_pair
from .validation import check_image, check_same_shape

__all__ = ["SpatialErrorEvaluator", "ErrorMapNet"]


class _ResidualBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1, padding_mode="reflect")
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1, padding_mode="reflect")
        self.norm1 = nn.InstanceNorm2d(ch)
        self.norm2 = nn.InstanceNorm2d(ch)
        self.act = nn.ReLU()

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class ErrorMapNet(nn.Module):
    """3-stage encoder, residual bottleneck, 3-stage decoder, tanh output in [-2, 2].

    Normalization lives only inside the residual branches so absolute
    intensity information survives to the output, which a signed difference
    prediction needs.
    """

    def __init__(self, channels=(16, 32, 64), residual_blocks=4):
        super().__init__()
        c1, c2, c3 = channels
        self.stem = nn.Conv2d(2, c1, 7, padding=3, padding_mode="reflect")
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.res = nn.Sequential(*[_ResidualBlock(c3) for _ in range(residual_blocks)])
        self.up1 = nn.ConvTranspose2d(c3, c2, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(c2, c1, 4, stride=2, padding=1)
        self.head = nn.Conv2d(c1, 1, 7, padding=3, padding_mode="reflect")
        self.act = nn.ReLU()

    def forward(self, x):
        h, w = x.shape[-2:]
        pad_h = (-h) % 4
        pad_w = (-w) % 4
        if pad_h or pad_w:
            x = nn.functional.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
        y = self.act(self.stem(x))
        y = self.act(self.down1(y))
        y = self.act(self.down2(y))
        y = self.res(y)
        y = self.act(self.up1(y))
        y = self.act(self.up2(y))
        y = 2.0 * torch.tanh(self.head(y))
        return y[..., :h, :w]


def _as_image_list(X):
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return [X[i] for i in range(X.shape[0])]
    return list(X)


class SpatialErrorEvaluator(BaseEstimator):
    """Learned error-map predictor with a fit/predict interface.

    Parameters mirror the training protocol: architecture sizes, optimizer
    settings, and the augmentation used to synthesize pairs (noise mode plus
    the Shuffle Remap control-point range).
    """

    def __init__(
        self,
        channels=(16, 32, 64),
        residual_blocks=4,
        learning_rate=2e-4,
        steps=2000,
        batch_size=8,
        noise="shuffle_remap",
        n_min=2,
        n_max=50,
        transform_config=None,
        seed=0,
        modality_tag="",
    ):
        self.channels = channels
        self.residual_blocks = residual_blocks
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.noise = noise
        self.n_min = n_min
        self.n_max = n_max
        self.transform_config = transform_config
        self.seed = seed
        self.modality_tag = modality_tag

    def _check_config(self):
        if len(self.channels) != 3 or any(c < 1 for c in self.channels):
            raise BadConfig(f"channels must be three positive stage widths, got {self.channels}")
        if self.residual_blocks < 0 or self.steps < 0 or self.batch_size < 1:
            raise BadConfig("residual_blocks/steps must be >= 0 and batch_size >= 1")
        if self.noise not in NOISE_MODES:
            raise BadConfig(f"noise must be one of {NOISE_MODES}, got {self.noise!r}")

    def _pair_config(self):
        base = self.transform_config if self.transform_config is not None else TrainingPairConfig()
        if not isinstance(base, TrainingPairConfig):
            base = TrainingPairConfig(**vars(base))
        return replace(base, noise=self.noise, n_min=self.n_min, n_max=self.n_max)

    def build(self):
        """Deterministically initialize the network without training."""
        self._check_config()
        torch.manual_seed(self.seed)
        self.net_ = ErrorMapNet(tuple(self.channels), self.residual_blocks)
        self.net_.eval()
        self.net_.requires_grad_(False)
        self.loss_trace_ = []
        self.steps_trained_ = 0
        self.final_loss_ = None
        return self

    def fit(self, X, y=None):
        """Train on a set of single-modality images with on-the-fly pairs."""
        images = [check_image(x, "source image") for x in _as_image_list(X)]
        if not images:
            raise EmptyDataset("need at least one source image")
        self.build()
        net = self.net_
        net.train()
        net.requires_grad_(True)
        opt = torch.optim.Adam(net.parameters(), lr=self.learning_rate)
        rng = np.random.default_rng(self.seed)
        cfg = self._pair_config()
        trace = []
        for step in range(self.steps):
            idx = rng.integers(0, len(images), size=self.batch_size)
            inputs, labels = [], []
            for i in idx:
                s = make_training_pair(images[i], rng, cfg)
                inputs.append(np.stack([s.reference, s.noisy_moving]))
                labels.append(s.label[None])
            x = torch.from_numpy(np.stack(inputs)).float()
            t = torch.from_numpy(np.stack(labels)).float()
            opt.zero_grad()
            loss = (net(x) - t).abs().mean()
            if not torch.isfinite(loss):
                raise DivergedTraining(f"loss became non-finite at step {step}")
            loss.backward()
            opt.step()
            trace.append(float(loss.detach()))
        net.eval()
        net.requires_grad_(False)
        self.loss_trace_ = trace
        self.steps_trained_ = self.steps
        self.final_loss_ = trace[-1] if trace else None
        return self

    def _require_net(self):
        if not hasattr(self, "net_"):
            raise BadConfig("evaluator is not initialized; call build() or fit() first")
        return self.net_

    def predict_tensor(self, reference, moving):
        """Differentiable error-map prediction on torch tensors.

        Accepts (H, W) or batched (B, H, W) tensors; weights are frozen, so
        gradients flow only into the inputs.
        """
        net = self._require_net()
        single = reference.dim() == 2
        ref = reference[None] if single else reference
        mov = moving[None] if single else moving
        x = torch.stack([ref, mov], dim=1)
        if x.dtype != next(net.parameters()).dtype:
            net = net.to(x.dtype)
        out = net(x)[:, 0]
        return out[0] if single else out

    def predict(self, reference, moving):
        """Predicted signed error map reference - moving', in [-2, 2]."""
        reference = check_image(reference, "reference")
        moving = check_image(moving, "moving")
        check_same_shape(reference, moving, "reference", "moving")
        with torch.no_grad():
            out = self.predict_tensor(torch.from_numpy(reference).float(), torch.from_numpy(moving).float())
        return out.double().numpy()

    def translate(self, reference, source):
        """Re-express source in the reference's distribution: ref - E(ref, source)."""
        e = self.predict(reference, source)
        reference = check_image(reference, "reference")
        return np.clip(reference - e, -1.0, 1.0)

    def parameter_vector(self):
        net = self._require_net()
        return np.concatenate([p.detach().numpy().ravel() for p in net.parameters()])

    def save(self, path):
        """Checkpoint: one JSON header line, then little-endian float32 weights."""
        net = self._require_net()
        state = net.state_dict()
        header = {
            "kind": "spatial_error_evaluator",
            "params": self.get_params(deep=False),
            "state_keys": [[k, list(v.shape)] for k, v in state.items()],
            "steps_trained": self.steps_trained_,
            "final_loss": self.final_loss_,
            "modality_tag": self.modality_tag,
        }
        header["params"].pop("transform_config", None)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = np.concatenate([v.numpy().astype("<f4").ravel() for v in state.values()])
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(blob.tobytes())
        if self.loss_trace_:
            from .io import write_trace_csv

            write_trace_csv(path.with_suffix(".trace.csv"), self.loss_trace_)
        return path

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            blob = np.frombuffer(f.read(), dtype="<f4")
        if header.get("kind") != "spatial_error_evaluator":
            raise BadConfig(f"{path} is not an evaluator checkpoint")
        params = dict(header["params"])
        params["channels"] = tuple(params["channels"])
        est = cls(**params)
        est.build()
        state, offset = {}, 0
        for key, shape in header["state_keys"]:
            n = int(np.prod(shape)) if shape else 1
            state[key] = torch.from_numpy(blob[offset : offset + n].reshape(shape).copy())
            offset += n
        est.net_.load_state_dict(state)
        est.net_.eval()
        est.net_.requires_grad_(False)
        est.steps_trained_ = header["steps_trained"]
        est.final_loss_ = header["final_loss"]
        est.modality_tag = header.get("modality_tag", "")
        return est
