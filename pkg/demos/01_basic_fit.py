#!/usr/bin/env python3
"""Fit the robust reduced-rank effect model on one simulated trial.

Simulates a randomized trial with ten outcomes, a sparse rank-1 treatment
effect (covariates 1-4 acting on outcomes 1-4), and fifteen grossly
contaminated subjects, then fits the estimator and prints what it found.
The penalty values used here are in the range five-fold CV typically
selects for this design; demo 04 shows the selection itself.
"""

import numpy as np

from multicate import FitConfig, ScenarioSpec, fit, generate_truth, mse, rct_weights

SEED = 8

spec = ScenarioSpec(scenario=3, n=300, p=10, q=10, tau_pct=5.0, design="rct",
                    replications=1, seed=SEED)
truth = generate_truth(spec, np.random.default_rng(SEED))
d = truth.dataset

model = fit(d, rct_weights(d.n), FitConfig(rank=1, lambda_w=80.0, phi_c=20.0))

print(f"scenario: {spec.scenario_id}")
print(f"converged: {model.trace.converged} after {model.trace.n_outer} outer sweeps")

print("\nloadings on the single factor (true pattern: rows 1-4 active):")
for j, w in enumerate(model.W[:, 0]):
    mark = " <-- true" if 1 <= j <= 4 else ""
    if abs(w) > 1e-8:
        print(f"  x{j}: {w:+.2f}{mark}")

print("\noutcome factor (true pattern: outcomes 1-4):")
print("  " + "  ".join(f"{v:+.2f}" for v in model.V[:, 0]))

# With a moderate offset penalty many subjects carry a small offset (soft
# trimming), but the contaminated ones stand far out by offset norm.
norms = np.linalg.norm(model.C, axis=1)
top = np.argsort(-norms)[:15]
true_rows = set(truth.outlier_rows.tolist())
print(f"\ntrue contaminated subjects:  {sorted(true_rows)}")
print(f"largest 15 offset rows:      {sorted(top.tolist())}")
print(f"exact match: {set(top.tolist()) == true_rows}")
print(f"offset norms 14th-17th largest: "
      + ", ".join(f"{v:.1f}" for v in np.sort(norms)[-17:][::-1][13:17])
      + "  (the gap separates contaminated from clean)")

print(f"\neffect-surface mse on fresh subjects: "
      f"{mse(truth.X_test, model.gamma, truth.gamma_true):.3f}")
