import time, numpy as np, torch, torch.nn as nn
from imselab import *
from imselab.evaluator import _ResidualBlock
from imselab.benchmark import BenchmarkSuite, build_problem_set

suite = BenchmarkSuite(n_sources=60)
sources, _, _, (ma, mb) = build_problem_set(suite)
cfg = TrainingPairConfig()

class Net(nn.Module):
    def __init__(self, skips, residual_head, channels=(16,32,64), blocks=4):
        super().__init__()
        c1,c2,c3 = channels
        self.skips, self.residual_head = skips, residual_head
        self.stem = nn.Conv2d(2, c1, 7, padding=3, padding_mode="reflect")
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.res = nn.Sequential(*[_ResidualBlock(c3) for _ in range(blocks)])
        self.up1 = nn.ConvTranspose2d(c3, c2, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(c2 * (2 if skips else 1), c1, 4, stride=2, padding=1)
        self.head = nn.Conv2d(c1 * (2 if skips else 1), 1, 7, padding=3, padding_mode="reflect")
        self.act = nn.ReLU()
    def forward(self, x):
        ref = x[:, :1]
        s = self.act(self.stem(x))
        d1 = self.act(self.down1(s))
        d2 = self.act(self.down2(d1))
        r = self.res(d2)
        u1 = self.act(self.up1(r))
        if self.skips: u1 = torch.cat([u1, d1], 1)
        u2 = self.act(self.up2(u1))
        if self.skips: u2 = torch.cat([u2, s], 1)
        h = self.head(u2)
        if self.residual_head:
            return ref - torch.tanh(h)
        return 2.0 * torch.tanh(h)

def run(skips, residual_head, steps=600, seed=0):
    torch.manual_seed(seed)
    net = Net(skips, residual_head)
    nparam = sum(p.numel() for p in net.parameters())
    opt = torch.optim.Adam(net.parameters(), lr=2e-4)
    rng = np.random.default_rng(seed)
    t0=time.time()
    for step in range(steps):
        idx = rng.integers(0, len(sources), size=8)
        ins, labs = [], []
        for i in idx:
            smp = make_training_pair(sources[i], rng, cfg)
            ins.append(np.stack([smp.reference, smp.noisy_moving])); labs.append(smp.label[None])
        x = torch.from_numpy(np.stack(ins)).float(); t = torch.from_numpy(np.stack(labs)).float()
        opt.zero_grad(); loss = (net(x)-t).abs().mean(); loss.backward(); opt.step()
    net.eval()
    errs, aligned = [], []
    with torch.no_grad():
        for i in range(20):
            r = np.random.default_rng((7777, i))
            ph = generate_phantom(r, 64, 5)
            src = simulate_modality(ph, mb, r)
            s2 = make_training_pair(src, r, cfg)
            x = torch.from_numpy(np.stack([np.stack([s2.reference, s2.noisy_moving])])).float()
            pred = net(x)[0,0].numpy()
            errs.append(np.abs(pred - s2.label).mean())
            xx = warp(src, sample_transform_field(r, cfg, 64, 64))
            xr = apply_remap(xx, sample_remap(r, 2, 50))
            xa = torch.from_numpy(np.stack([np.stack([xx, xr])])).float()
            aligned.append(np.abs(net(xa)[0,0].numpy()).mean())
    print(f"skips={skips} residual={residual_head} params={nparam} heldout={np.mean(errs):.4f} aligned={np.mean(aligned):.4f} loss_end={float(loss):.4f} time={time.time()-t0:.0f}s", flush=True)


print("--- lr sweep ---", flush=True)
import itertools
def run_lr(skips, residual_head, lr, steps=600, seed=0):
    torch.manual_seed(seed)
    net = Net(skips, residual_head)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    for step in range(steps):
        idx = rng.integers(0, len(sources), size=8)
        ins, labs = [], []
        for i in idx:
            smp = make_training_pair(sources[i], rng, cfg)
            ins.append(np.stack([smp.reference, smp.noisy_moving])); labs.append(smp.label[None])
        x = torch.from_numpy(np.stack(ins)).float(); t = torch.from_numpy(np.stack(labs)).float()
        opt.zero_grad(); loss = (net(x)-t).abs().mean(); loss.backward(); opt.step()
    net.eval()
    errs, aligned = [], []
    with torch.no_grad():
        for i in range(20):
            r = np.random.default_rng((7777, i))
            ph = generate_phantom(r, 64, 5)
            src = simulate_modality(ph, mb, r)
            s2 = make_training_pair(src, r, cfg)
            x = torch.from_numpy(np.stack([np.stack([s2.reference, s2.noisy_moving])])).float()
            errs.append(np.abs(net(x)[0,0].numpy() - s2.label).mean())
            xx = warp(src, sample_transform_field(r, cfg, 64, 64))
            xr = apply_remap(xx, sample_remap(r, 2, 50))
            xa = torch.from_numpy(np.stack([np.stack([xx, xr])])).float()
            aligned.append(np.abs(net(xa)[0,0].numpy()).mean())
    print(f"skips={skips} residual={residual_head} lr={lr} heldout={np.mean(errs):.4f} aligned={np.mean(aligned):.4f} loss_end={float(loss.detach()):.4f}", flush=True)

run_lr(True, True, 1e-3)
run_lr(True, False, 1e-3)
run_lr(True, True, 5e-4)
run_lr(True, True, 2e-3)
