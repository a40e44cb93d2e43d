#!/usr/bin/env python3
# The O(N) recursive kernel against the O(N^2) direct sum, and the
# pointwise gradient law |v_x| <= sqrt(lam) v.

import math
import time

import numpy as np

from kslab import Grid, ModelParams, elliptic_residual, psi_direct, psi_fast

p = ModelParams(chi=0.3, a=1.0, b=1.0, lam=2.0, mu=1.0)
rng = np.random.default_rng(0)

for n in (256, 1024, 4096):
    g = Grid(40.0, n)
    u = rng.random(g.n_nodes)
    t0 = time.perf_counter()
    v, vx = psi_fast(g, u, p)
    t1 = time.perf_counter()
    vd = psi_direct(g, u, p)
    t2 = time.perf_counter()
    inner = g.interior_mask(10 / math.sqrt(p.lam))
    law = float((np.abs(vx) - math.sqrt(p.lam) * v)[inner].max())
    print(f"n={n:5d}: fast {1e3 * (t1 - t0):6.2f} ms, direct {1e3 * (t2 - t1):8.2f} ms, "
          f"gap {np.abs(v - vd).max() / vd.max():.1e}, max(|v_x| - sqrt(lam) v) {law:.2e}")

for n in (200, 400, 800, 1600):
    g = Grid(20.0, n)
    u = np.exp(-g.x ** 2)
    v, _ = psi_fast(g, u, p)
    print(f"h={g.h:.4f}: residual {elliptic_residual(g, u, v, p):.3e}")
