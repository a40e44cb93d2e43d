#!/usr/bin/env python3
# Attractive chemotaxis does not speed the front up while (H) holds: the
# measured speed stays at 2 sqrt(a) for every chi with chi*mu small enough.
# Past (H) only the bracket [2 sqrt(a), c*] is known.

from kslab import (Grid, ModelParams, SolverConfig, estimate_speed, hypothesis_H, make_initial,
                   simulate, speed_constants, track_level)

grid = Grid.from_spacing(250.0, 0.1)
u0 = make_initial("compact", grid)
cfg = SolverConfig(dt=0.02, t_end=100.0)

print(" chi    (H)    c0*     c*     c_hat")
for chi in (0.0, 0.2, 0.4, 0.6):
    p = ModelParams(chi=chi, a=1.0, b=1.0, lam=1.0, mu=1.0)
    sc = speed_constants(p)
    c_hat = estimate_speed(track_level(simulate(u0, grid, p, cfg))).c_hat
    print(f"{chi:4.1f}  {str(hypothesis_H(p)):5s}  {sc.c0_star:5.3f}  {sc.c_star:5.3f}  {c_hat:6.4f}")

# with lam < a the factor in (H) exceeds one and a* can drop below sqrt(a)
p = ModelParams(chi=1.0, a=4.0, b=1.2, lam=0.25, mu=1.0)
sc = speed_constants(p)
print(f"\na=4, lam=0.25, chi*mu=1, b=1.2: (H) {hypothesis_H(p)}, a* = {sc.a_star:.6f}, "
      f"c* = {sc.c_star:.6f} (2 sqrt(a) = {sc.c0_star})")
