"""Fit the transfer estimators on one synthetic multi-source problem.

Generates a target task plus three shifted sources, fits the target-only
LASSO, the pooled LASSO, and the one- and two-step transfer estimators,
then prints how far each lands from the true coefficients.
"""

import numpy as np

from transfusion import (
    SolverConfig,
    TuningGrid,
    desk_config,
    fit_one_step,
    fit_two_step,
    gen_scenario,
    lasso_baseline,
    pooled_baseline,
)

cfg = desk_config(p=80, s=4, n_T=60, n_S=100, K=3,
                  shift_kind="diverse", design_kind="heterogeneous", seed=2)
problem, truth = gen_scenario(cfg)
print(f"target: n={problem.target.n}, p={cfg.p}, sources: K={problem.K} "
      f"with n_S={cfg.n_S} rows each")
print(f"true support size: {np.count_nonzero(truth.beta0)}, "
      f"per-source shift budgets h={[round(h, 1) for h in truth.realized_h]}")

grid = TuningGrid(folds=5, n_points=12, ratio=30.0)
solver = SolverConfig(accelerated=True)

fits = {
    "target-only lasso": lasso_baseline(problem.target, grid, solver),
    "pooled lasso": pooled_baseline(problem, grid, solver),
    "one-step transfer": fit_one_step(problem, grid, solver),
    "two-step transfer": fit_two_step(problem, grid, solver),
}

print()
print(f"{'estimator':<20} {'l2 error':>9} {'support':>8}  strategy")
for name, res in fits.items():
    err = np.linalg.norm(res.beta_target - truth.beta0)
    nnz = np.count_nonzero(res.beta_target)
    print(f"{name:<20} {err:9.4f} {nnz:8d}  {res.strategy}")

one = fits["one-step transfer"]
print()
print(f"one-step picked lambda0={one.lambda0:.4f} "
      f"with the {one.fusion_family} weight family")
two = fits["two-step transfer"]
print(f"two-step added a correction of size "
      f"{np.linalg.norm(two.delta_hat):.4f} at tilde_lambda={two.tilde_lambda:.4f}")
print()
print("with diverse shifts the sources cancel on average, so the fused")
print("one-step fit is the winner and the correction step has little to add")
