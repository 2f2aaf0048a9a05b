"""
The cosine noise schedule
=========================

Betas follow the offset cosine formula with r = 0.008, clipped at 0.999.
For T = 1000 the cumulative product alpha_bar drops below the smallest
float64, so the schedule also keeps its logarithm.
"""

import numpy as np

from pfgn import diffusion
from pfgn.rng import Stream

sched = diffusion.build_schedule(1000, 0.008)
for t in (1, 10, 100, 500, 900, 990, 1000):
    beta, alpha, ab = sched.at(t)
    print(f"t={t:4d}  beta={beta:.6f}  alpha_bar={ab:.3e}  log alpha_bar={sched.log_alpha_bar[t - 1]:.3f}")

###############################################################################
# Forward noising in one shot, then one reverse step at t = 1 with the true
# noise: the clean field comes back.

y = Stream(0).uniform((6, 3)).astype(np.float32)
y1, eps = diffusion.forward_noise(y, 1, sched, Stream(1))
back = diffusion.reverse_step(y1, eps, *sched.at(1))
print("one-step recovery error:", np.abs(back - y).max())

###############################################################################
# Noising statistics at t = 60 over many scalar draws.

c = 0.7
yt, _ = diffusion.forward_noise(np.full((10_000, 1), c, np.float32), 60, sched, Stream(2))
ab = sched.alpha_bar[59]
print(f"mean {yt.mean():.4f} vs {np.sqrt(ab) * c:.4f}; var {yt.var():.4f} vs {1 - ab:.4f}")
