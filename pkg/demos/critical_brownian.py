"""How far does a critical branching Brownian motion reach?

Particles move as standard Brownian motion, live an Exp(1) time and split in
two or die with equal odds.  The population dies out, yet the maximum it ever
reaches has a polynomial tail: u(x) = P(M >= x) decays like 1/x^2.

This script solves for u on [0, 400], checks the solution against a direct
simulation at a few levels, and prints gamma(x) = x W(x) u(x) = 2 x^2 u(x),
which should hover around 12.

    python demos/critical_brownian.py
"""
import numpy as np

from branchmax import LevyModel, SimConfig, binary, estimate_survival, predict, solve_u

model = LevyModel.brownian(0.0, 1.0)
law = binary(0.5)

curve, report = solve_u(model, law)
print(f"solved on [0, {curve.x_max:g}] with step {curve.h}: "
      f"{report.iterations} sweeps, {report.newton_iterations} Newton steps")

levels = (1.0, 2.0, 3.0, 5.0)
est = estimate_survival(SimConfig(model, law, levels, n_reps=50_000, seed=1))
print("\n   x    solver    simulated (95% CI)")
for x, u_hat, lo, hi in zip(levels, est.u_hat, est.ci_low, est.ci_high):
    print(f"{x:4g}  {float(curve(x)):.5f}   {u_hat:.5f} ({lo:.5f}, {hi:.5f})")

target = predict(model, law).gamma_limit
print(f"\ngamma(x) = x W(x) u(x); predicted visits near {target:g}")
for x in (10, 20, 50, 100, 200):
    print(f"  x = {x:3d}   gamma = {float(curve.gamma(np.array([x]))[0]):.3f}")
