"""Small benchmark sweep: does adding sources help, and when?

Runs the harness over K in {1, 3, 5} with a handful of paired trials per
cell and prints the summary table. With diverse shifts and heterogeneous
designs the one-step transfer fit should pull ahead of the target-only
LASSO as sources accumulate, while the pooled fit pays a bias penalty.
"""

from transfusion import (
    BenchPlan,
    SolverConfig,
    TuningGrid,
    desk_config,
    run_bench,
    summarize,
)

base = desk_config(p=60, s=4, n_T=50, n_S=80,
                   shift_kind="diverse", design_kind="heterogeneous", seed=5)
plan = BenchPlan(base, "K", (1, 3, 5), ("lasso", "pooled", "tf1"), trials=5)

print(f"sweeping K over {plan.sweep_values} with {plan.trials} trials per cell")
records = run_bench(plan, grid=TuningGrid(folds=5, n_points=12, ratio=30.0),
                    cfg=SolverConfig(accelerated=True))
print(f"{len(records)} fits done, all methods share each trial's draw")

print()
print(f"{'method':<8} {'K':>3} {'mean error':>11} {'stderr':>8} {'median':>8}")
for row in summarize(records):
    print(f"{row.method:<8} {row.K:>3} {row.mean:>11.4f} "
          f"{row.stderr:>8.4f} {row.median:>8.4f}")

print()
print("expect: lasso flat in K, tf1 improving on it by K=3+, pooled drifting")
