import time, numpy as np
from imselab import *
from imselab.benchmark import BenchmarkSuite, build_problem_set, train_suite_evaluator

suite = BenchmarkSuite()  # full: 200 sources, 2000 steps, batch 8, 64x64
t0 = time.time()
sources, train_pairs, test_pairs, (ma, mb) = build_problem_set(suite)
print(f"problem set built in {time.time()-t0:.1f}s", flush=True)

t0 = time.time()
ev = train_suite_evaluator(suite, sources, "shuffle_remap")
t_train = time.time() - t0
print(f"SR evaluator trained in {t_train/60:.2f} min; first loss {ev.loss_trace_[0]:.4f}, final {ev.final_loss_:.4f}", flush=True)
print(f"loss halved? {ev.final_loss_ < 0.5*ev.loss_trace_[0]}", flush=True)

# held-out label L1: fresh pairs from held-out sources (new phantoms)
rng = np.random.default_rng(999)
cfg = TrainingPairConfig()
errs, aligned_errs = [], []
for i in range(30):
    r = np.random.default_rng((7777, i))
    ph = generate_phantom(r, 64, 5)
    src = simulate_modality(ph, mb, r)
    s = make_training_pair(src, r, cfg)
    pred = ev.predict(s.reference, s.noisy_moving)
    errs.append(np.abs(pred - s.label).mean())
    # aligned cross-distribution: (x, remap(x))
    x = warp(src, sample_transform_field(r, cfg, 64, 64))
    xr = apply_remap(x, sample_remap(r, 2, 50))
    aligned_errs.append(np.abs(ev.predict(x, xr)).mean())
print(f"held-out label L1: {np.mean(errs):.4f} (target <= 0.10)", flush=True)
print(f"aligned |E|: {np.mean(aligned_errs):.4f} (target <= 0.05)", flush=True)
ev.save(".calib/sr_evaluator.ckpt")
print("saved .calib/sr_evaluator.ckpt", flush=True)
