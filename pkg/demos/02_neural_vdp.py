"""Neural Lyapunov certificate for Van der Pol, end to end.

Labels trajectories with the Zubov transform, trains the network on the
residual plus data loss, and certifies the sandwich conditions that let the
network's sublevel set extend the quadratic region of attraction.
Takes about a minute and a half on one core.

    python demos/02_neural_vdp.py
"""

# %%
import time

import numpy as np

from zubovroa import builtin
from zubovroa.net import TrainConfig, train
from zubovroa.quadratic import (c2_upper_bound, default_eps, linearize, search_c1, solve_dlyap,
                                vp_eval)
from zubovroa.verify import bisect_level, calibrate_neural, verify_quadratic
from zubovroa.zubov import AlphaSpec, LabelConfig, SafetySpec, pilot_c_max, sample_dataset

sys_ = builtin("vdp")
safety = SafetySpec.of(sys_)

# %% Labels: the pilot run fixes the scale mu of the Zubov transform
cfg = LabelConfig(c_max=pilot_c_max(sys_, safety, LabelConfig()))
aspec = AlphaSpec(sys_.dt, cfg.mu)
t = time.perf_counter()
data = sample_dataset(sys_, safety, aspec, cfg, 5000, seed=1)
statuses, counts = np.unique(data.status, return_counts=True)
print(f"mu = {cfg.mu:.4f}; labeled {len(data)} points in {time.perf_counter() - t:.1f}s:",
      dict(zip(statuses, counts)))

# %% Training
t = time.perf_counter()
res = train(sys_, safety, aspec, data, TrainConfig(epochs=1000))
best = res.history[res.best_epoch]
print(f"trained in {time.perf_counter() - t:.0f}s: residual {best.residual:.2e}, "
      f"data {best.data:.2e}")
net = res.net

# %% Quadratic certificate
Q = np.eye(2)
P = solve_dlyap(linearize(sys_), Q)
cert = search_c1(sys_, sys_.safety, P, Q, default_eps(Q))
upper = c2_upper_bound(P, sys_.domain)
c2 = bisect_level(lambda c: verify_quadratic(sys_, sys_.safety, cert, c),
                  cert.c1 * (1 + 1e-6), upper, 1e-3 * upper)
print(f"quadratic: c1 = {cert.c1:.4f}, c2 = {c2:.4f}")

# %% Neural sandwich levels
t = time.perf_counter()
nc = calibrate_neural(sys_, sys_.safety, net, cert, c2)
print(f"neural: c = {nc.c:.4f}, w1 = {nc.w1:.4f}, w2 = {nc.w2:.4f}, {nc.status} "
      f"in {time.perf_counter() - t:.1f}s")

# %% Compare the two certified regions by Monte Carlo
x = sys_.domain.sample(np.random.default_rng(0), 400_000)
vol = float(np.prod(sys_.domain.width))
print(f"area {{W_N <= w2}} ~ {vol * np.mean(net(x) <= nc.w2):.3f}")
print(f"area {{V_P <= c2}} ~ {vol * np.mean(vp_eval(P, x) <= c2):.3f}")
