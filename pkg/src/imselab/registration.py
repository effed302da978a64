"""Deformable registration: per-pair iterative optimization and a trained network.

Both pathways minimize similarity(warp(moving, field), target) plus a
smoothness penalty on the field.  The similarity is either a classical
metric or the learned evaluator; in the evaluator case the reference slot
differs between the two pathways:

* network training scores E(warped_moving, target) and expects the moving
  images to come from the evaluator's source modality,
* iterative optimization scores E(target, warped_moving) and expects the
  target to come from the source modality.

Either way the evaluator's weights stay frozen and gradients flow through it
into the field or the network only.
"""

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import BadConfig, DivergedTraining, EmptyDataset, NonFiniteLoss
from .image_core import spatial_gradient_tensor, warp, warp_tensor
from .metrics import METRIC_KEYS, metric_loss
from .validation import check_field, check_image, check_same_shape

from sklearn.base import BaseEstimator

LOSS_KEYS = METRIC_KEYS + ("imse",)

__all__ = [
    "RegistrationResult",
    "smoothness_loss",
    "smoothness_loss_tensor",
    "RegistrationUNet",
    "IterativeRegistration",
    "NetworkRegistration",
    "LOSS_KEYS",
]


@dataclass
class RegistrationResult:
    field: np.ndarray  # (H, W, 2) displacement, pixels
    warped: np.ndarray  # warp(moving, field), exact
    trace: list = dataclass_field(default_factory=list)
    metrics: dict = dataclass_field(default_factory=dict)


def smoothness_loss_tensor(field):
    """Mean squared forward-difference gradient over components and directions."""
    return (spatial_gradient_tensor(field) ** 2).mean()


def smoothness_loss(field):
    field = check_field(field)
    with torch.no_grad():
        v = smoothness_loss_tensor(torch.from_numpy(field))
    return float(v)


def _similarity_fn(loss, evaluator, reference_slot):
    """Resolve a loss key to fn(warped, target) on tensors, lower is better.

    reference_slot chooses which image feeds the evaluator's reference
    channel: "target" (iterative form) or "warped" (network-training form).
    """
    if loss == "imse":
        if evaluator is None:
            raise BadConfig('loss="imse" needs a trained evaluator')
        if reference_slot == "target":
            return lambda warped, target: evaluator.predict_tensor(target, warped).abs().mean()
        return lambda warped, target: evaluator.predict_tensor(warped, target).abs().mean()
    if loss not in METRIC_KEYS:
        raise BadConfig(f"loss must be one of {LOSS_KEYS}, got {loss!r}")
    fn = metric_loss(loss)
    return lambda warped, target: fn(warped, target)


class IterativeRegistration(BaseEstimator):
    """Classic per-pair registration: optimize a dense field with Adam.

    The field starts at zero and the best-loss iterate is kept, since at the
    default learning rate of 1.0 the loss oscillates near convergence.
    """

    def __init__(self, loss="mae", evaluator=None, smoothness_weight=1.0, iterations=200, learning_rate=1.0, track_best=True, seed=0):
        self.loss = loss
        self.evaluator = evaluator
        self.smoothness_weight = smoothness_weight
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.track_best = track_best
        self.seed = seed

    def register(self, moving, target):
        if self.smoothness_weight < 0 or self.iterations < 1:
            raise BadConfig("need smoothness_weight >= 0 and iterations >= 1")
        moving = check_image(moving, "moving")
        target = check_image(target, "target")
        check_same_shape(moving, target, "moving", "target")
        sim = _similarity_fn(self.loss, self.evaluator, reference_slot="target")
        mov_t = torch.from_numpy(moving).float()
        tgt_t = torch.from_numpy(target).float()
        fld = torch.zeros(moving.shape + (2,), dtype=torch.float32, requires_grad=True)
        opt = torch.optim.Adam([fld], lr=self.learning_rate)
        best_loss, best_field = np.inf, fld.detach().clone()
        trace = []
        for it in range(self.iterations):
            opt.zero_grad()
            warped = warp_tensor(mov_t, fld)
            total = sim(warped, tgt_t) + self.smoothness_weight * smoothness_loss_tensor(fld)
            if not torch.isfinite(total):
                raise NonFiniteLoss(f"loss became non-finite at iteration {it}")
            value = float(total.detach())
            trace.append(value)
            if value < best_loss:
                best_loss, best_field = value, fld.detach().clone()
            total.backward()
            opt.step()
        final = best_field if self.track_best else fld.detach()
        out_field = final.double().numpy()
        return RegistrationResult(field=out_field, warped=warp(moving, out_field), trace=trace)


class RegistrationUNet(nn.Module):
    """Small U-Net mapping a stacked (moving, target) pair to a field.

    The final layer is zero-initialized, so an untrained network produces
    the identity transform.
    """

    def __init__(self, base_channels=16):
        super().__init__()
        c = base_channels
        self.enc1 = nn.Conv2d(2, c, 3, padding=1)
        self.enc2 = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.enc3 = nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1)
        self.mid = nn.Conv2d(4 * c, 4 * c, 3, padding=1)
        self.up2 = nn.ConvTranspose2d(4 * c, 2 * c, 4, stride=2, padding=1)
        self.dec2 = nn.Conv2d(4 * c, 2 * c, 3, padding=1)
        self.up1 = nn.ConvTranspose2d(2 * c, c, 4, stride=2, padding=1)
        self.dec1 = nn.Conv2d(2 * c, c, 3, padding=1)
        self.flow = nn.Conv2d(c, 2, 3, padding=1)
        nn.init.zeros_(self.flow.weight)
        nn.init.zeros_(self.flow.bias)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x):
        h, w = x.shape[-2:]
        pad_h = (-h) % 4
        pad_w = (-w) % 4
        if pad_h or pad_w:
            x = nn.functional.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
        e1 = self.act(self.enc1(x))
        e2 = self.act(self.enc2(e1))
        e3 = self.act(self.enc3(e2))
        m = self.act(self.mid(e3))
        d2 = self.act(self.dec2(torch.cat([self.act(self.up2(m)), e2], dim=1)))
        d1 = self.act(self.dec1(torch.cat([self.act(self.up1(d2)), e1], dim=1)))
        fld = self.flow(d1)[..., :h, :w]
        return fld.permute(0, 2, 3, 1)  # (B, H, W, 2)


def _warp_batch(images, fields):
    """Batched bilinear pull-warp: images (B, H, W), fields (B, H, W, 2)."""
    b, h, w = images.shape
    dtype, device = fields.dtype, fields.device
    base_y = torch.arange(h, dtype=dtype, device=device).view(1, h, 1)
    base_x = torch.arange(w, dtype=dtype, device=device).view(1, 1, w)
    ys = (base_y + fields[..., 0]).clamp(0, h - 1)
    xs = (base_x + fields[..., 1]).clamp(0, w - 1)
    y0 = ys.floor().long().clamp(0, h - 1)
    x0 = xs.floor().long().clamp(0, w - 1)
    y1 = (y0 + 1).clamp(0, h - 1)
    x1 = (x0 + 1).clamp(0, w - 1)
    wy = ys - y0.to(dtype)
    wx = xs - x0.to(dtype)
    bi = torch.arange(b).view(b, 1, 1)
    v00 = images[bi, y0, x0]
    v01 = images[bi, y0, x1]
    v10 = images[bi, y1, x0]
    v11 = images[bi, y1, x1]
    top = v00 + (v01 - v00) * wx
    bot = v10 + (v11 - v10) * wx
    return top + (bot - top) * wy


def _as_pair_arrays(pairs):
    movings, targets = [], []
    for moving, target in pairs:
        m = check_image(moving, "moving")
        t = check_image(target, "target")
        check_same_shape(m, t, "moving", "target")
        movings.append(m)
        targets.append(t)
    if not movings:
        raise EmptyDataset("need at least one (moving, target) pair")
    return np.stack(movings), np.stack(targets)


class NetworkRegistration(BaseEstimator):
    """Learned registration: one network amortizes the field over many pairs."""

    def __init__(self, loss="imse", evaluator=None, smoothness_weight=1.0, base_channels=16, steps=1000, learning_rate=1e-4, batch_size=4, seed=0):
        self.loss = loss
        self.evaluator = evaluator
        self.smoothness_weight = smoothness_weight
        self.base_channels = base_channels
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def build(self):
        if self.smoothness_weight < 0:
            raise BadConfig("smoothness_weight must be >= 0")
        torch.manual_seed(self.seed)
        self.net_ = RegistrationUNet(self.base_channels)
        self.net_.eval()
        self.net_.requires_grad_(False)
        self.loss_trace_ = []
        return self

    def fit(self, pairs, y=None):
        """Train on (moving, target) pairs; the evaluator stays frozen."""
        movings, targets = _as_pair_arrays(pairs)
        self.build()
        sim = _similarity_fn(self.loss, self.evaluator, reference_slot="warped")
        net = self.net_
        net.train()
        net.requires_grad_(True)
        opt = torch.optim.Adam(net.parameters(), lr=self.learning_rate)
        rng = np.random.default_rng(self.seed)
        mov_all = torch.from_numpy(movings).float()
        tgt_all = torch.from_numpy(targets).float()
        trace = []
        for step in range(self.steps):
            idx = torch.from_numpy(rng.integers(0, len(movings), size=self.batch_size))
            mov, tgt = mov_all[idx], tgt_all[idx]
            opt.zero_grad()
            fields = net(torch.stack([mov, tgt], dim=1))
            warped = _warp_batch(mov, fields)
            total = sim(warped, tgt) + self.smoothness_weight * smoothness_loss_tensor(fields)
            if not torch.isfinite(total):
                raise DivergedTraining(f"loss became non-finite at step {step}")
            total.backward()
            opt.step()
            trace.append(float(total.detach()))
        net.eval()
        net.requires_grad_(False)
        self.loss_trace_ = trace
        return self

    def _require_net(self):
        if not hasattr(self, "net_"):
            raise BadConfig("network is not initialized; call build() or fit() first")
        return self.net_

    def predict_field(self, moving, target):
        net = self._require_net()
        moving = check_image(moving, "moving")
        target = check_image(target, "target")
        check_same_shape(moving, target, "moving", "target")
        x = torch.stack([torch.from_numpy(moving).float(), torch.from_numpy(target).float()])[None]
        with torch.no_grad():
            fld = net(x)[0]
        return fld.double().numpy()

    def register(self, moving, target):
        """Single forward pass producing field and warped image."""
        fld = self.predict_field(moving, target)
        return RegistrationResult(field=fld, warped=warp(np.asarray(moving, dtype=np.float64), fld), trace=list(self.loss_trace_))

    def parameter_vector(self):
        net = self._require_net()
        return np.concatenate([p.detach().numpy().ravel() for p in net.parameters()])

    def save(self, path):
        net = self._require_net()
        state = net.state_dict()
        params = self.get_params(deep=False)
        params.pop("evaluator", None)
        header = {
            "kind": "registration_network",
            "params": params,
            "state_keys": [[k, list(v.shape)] for k, v in state.items()],
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = np.concatenate([v.numpy().astype("<f4").ravel() for v in state.values()])
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(blob.tobytes())
        return path

    @classmethod
    def load(cls, path, evaluator=None):
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            blob = np.frombuffer(f.read(), dtype="<f4")
        if header.get("kind") != "registration_network":
            raise BadConfig(f"{path} is not a registration-network checkpoint")
        est = cls(evaluator=evaluator, **header["params"])
        est.build()
        state, offset = {}, 0
        for key, shape in header["state_keys"]:
            n = int(np.prod(shape)) if shape else 1
            state[key] = torch.from_numpy(blob[offset : offset + n].reshape(shape).copy())
            offset += n
        est.net_.load_state_dict(state)
        est.net_.eval()
        est.net_.requires_grad_(False)
        return est
