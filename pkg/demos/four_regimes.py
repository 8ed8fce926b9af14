"""The tail of the maximum in each of the four regimes.

Same Brownian particles, different drift and offspring law.  For each case
the script prints what the asymptotic theory predicts and what the solved
curve shows:

* subcritical offspring: exponential decay at rate Phi(1 - m),
* critical, drifting up: x u(x) tends to 2 psi'(0+) / sigma^2,
* critical, no drift: x W(x) u(x) stays in a band around 2 / (sigma^2 B(2, 2)),
* critical, drifting down: exponential decay at rate Phi(0).

    python demos/four_regimes.py
"""
import numpy as np

from branchmax import LevyModel, OffspringLaw, binary, fit_exp_rate, fit_power_product, predict, solve_u

cases = [
    ("subcritical, no drift", LevyModel.brownian(0.0, 1.0), OffspringLaw((0.75, 0.0, 0.25))),
    ("critical, drift up", LevyModel.brownian(0.2, 1.0), binary(0.5)),
    ("critical, no drift", LevyModel.brownian(0.0, 1.0), binary(0.5)),
    ("critical, drift down", LevyModel.brownian(-0.5, 1.0), binary(0.5)),
]

for title, model, law in cases:
    pred = predict(model, law)
    curve, _ = solve_u(model, law)
    print(f"{title} ({pred.regime})")
    if pred.kind == "exponential":
        rate, err = fit_exp_rate(curve.points(), (0.1 * curve.x_max, curve.x_max))
        print(f"  decay rate: predicted {pred.rate:.4f}, fitted {rate:.4f} +- {err:.1e}")
    elif pred.kind == "inverse_linear":
        for x in (50.0, 100.0, 200.0, 400.0):
            print(f"  x u(x) at x = {x:3g}: {x * float(curve(x)):.4f}  (limit {pred.x_u_limit:g})")
        print("  the approach to the limit is slow (see the README on criterion 6)")
    else:
        fit = fit_power_product(curve.points(), curve.w0, (20.0, 200.0), pred.gamma_limit)
        print(f"  x W(x) u(x) on [20, 200]: between {fit.low:.3f} and {fit.high:.3f}, "
              f"target {pred.gamma_limit:g}")
    print()
