"""Simulation harness: sweep plans, per-trial records, summaries, CSV I/O.

A plan is a base scenario plus one swept knob (number of sources, or source
sample size at a fixed number of sources). Every (sweep point, method, trial)
cell produces one TrialRecord; seeds are derived per (sweep point, trial) so
all methods inside a cell see the same data and reruns are reproducible.
"""

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributed import D_ONE, D_TWO, dtransfusion_fit, source_precompute
from .estimators import (TuningGrid, fit_one_step, fit_two_step,
                         lasso_baseline, pooled_baseline)
from .scenarios import ScenarioConfig, config_from_pairs, gen_scenario, parse_pairs
from .solver import SolverConfig

METHODS = ("lasso", "pooled", "tf1", "tf2", "dtf1", "dtf2")
SWEEP_PARAMETERS = ("K", "n_S")

CSV_HEADER = ("scenario_id,method,K,n_S,trial_seed,"
              "l2_error,runtime_ms,strategy,converged")


@dataclass(frozen=True)
class TrialRecord:
    """One fitted method on one synthetic draw."""

    scenario_id: str
    method: str
    K: int
    n_S: int
    trial_seed: int
    l2_error: float
    runtime_ms: float
    strategy_tag: str
    converged: bool

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.l2_error >= 0.0:          # also rejects nan
            raise ValueError("l2_error must be >= 0")
        if self.K < 0 or self.n_S < 0 or self.trial_seed < 0:
            raise ValueError("K, n_S and trial_seed must be nonnegative")
        if "," in self.scenario_id or "," in self.strategy_tag:
            raise ValueError("scenario_id and strategy_tag must be comma-free")


@dataclass(frozen=True)
class BenchPlan:
    """Base scenario plus one swept knob, a method list and a trial count.

    sweep_parameter "K" varies the number of sources; "n_S" varies the
    per-source sample size with the base K held fixed. base.seed is the
    master seed all per-trial seeds derive from.
    """

    base: ScenarioConfig
    sweep_parameter: str
    sweep_values: tuple
    methods: tuple = METHODS
    trials: int = 1

    def __post_init__(self):
        if self.sweep_parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep_parameter must be one of {SWEEP_PARAMETERS}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be nonempty")
        low = 0 if self.sweep_parameter == "K" else 1
        if any(int(v) != v or v < low for v in self.sweep_values):
            raise ValueError(f"sweep_values must be integers >= {low}")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must be distinct")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def cell_config(self, j: int) -> ScenarioConfig:
        """Scenario for sweep point j (seed still the base seed)."""
        value = int(self.sweep_values[j])
        return dataclasses.replace(self.base, **{self.sweep_parameter: value})


def derive_seed(base_seed: int, cell: int, trial: int) -> int:
    """Independent per-cell-and-trial seed; distinct inputs, distinct streams."""
    seq = np.random.SeedSequence((int(base_seed), int(cell), int(trial)))
    return int(seq.generate_state(1, np.uint64)[0])


def _scenario_id(cfg: ScenarioConfig) -> str:
    return (f"{cfg.shift_kind}-{cfg.design_kind}"
            f"-p{cfg.p}-K{cfg.K}-nS{cfg.n_S}-nT{cfg.n_T}")


def fit_method(problem, method: str, grid=None, cfg=None, seed: int = 0):
    """Dispatch one harness method name onto the fitting entry points."""
    if method == "lasso":
        return lasso_baseline(problem.target, grid=grid, cfg=cfg, seed=seed)
    if method == "pooled":
        return pooled_baseline(problem, grid=grid, cfg=cfg, seed=seed)
    if method == "tf1":
        return fit_one_step(problem, grid=grid, cfg=cfg, seed=seed)
    if method == "tf2":
        return fit_two_step(problem, grid=grid, cfg=cfg, seed=seed)
    if method in ("dtf1", "dtf2"):
        messages = [source_precompute(s, cfg=cfg) for s in problem.sources]
        strategy = D_ONE if method == "dtf1" else D_TWO
        return dtransfusion_fit(problem.target, messages, grid=grid, cfg=cfg,
                                strategy=strategy, seed=seed)
    raise ValueError(f"unknown method {method!r}")


def _run_one(plan: BenchPlan, grid, cfg, j: int, method: str, trial: int,
             timings: bool) -> TrialRecord:
    scenario = plan.cell_config(j)
    seed = derive_seed(plan.base.seed, j, trial)
    scenario = dataclasses.replace(scenario, seed=seed)
    problem, truth = gen_scenario(scenario)
    started = time.perf_counter()
    try:
        result = fit_method(problem, method, grid=grid, cfg=cfg, seed=seed)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError):
        # hard solver failure: record it and let the rest of the plan run
        return TrialRecord(_scenario_id(scenario), method, scenario.K,
                           scenario.n_S, seed, np.inf, 0.0, "failed", False)
    elapsed_ms = (time.perf_counter() - started) * 1e3 if timings else 0.0
    err = float(np.linalg.norm(result.beta_target - truth.beta0))
    return TrialRecord(_scenario_id(scenario), method, scenario.K,
                       scenario.n_S, seed, err, elapsed_ms,
                       result.strategy, bool(result.converged))


def _worker(payload):
    return _run_one(*payload)


def run_bench(plan: BenchPlan, grid: TuningGrid | None = None,
              cfg: SolverConfig | None = None, threads: int = 1,
              timings: bool = False) -> list:
    """Run every (sweep point, method, trial) cell of a plan.

    Records come back in plan order (sweep point outermost, trial innermost)
    no matter how many workers run them. With timings off the output is a
    pure function of the plan, so reruns match exactly.
    """
    grid = grid if grid is not None else TuningGrid()
    cfg = cfg if cfg is not None else SolverConfig()
    tasks = [(plan, grid, cfg, j, method, trial, timings)
             for j in range(len(plan.sweep_values))
             for method in plan.methods
             for trial in range(plan.trials)]
    if threads <= 1:
        return [_run_one(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(_worker, tasks))


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class SummaryRow:
    """Aggregate of one method at one sweep point."""

    method: str
    K: int
    n_S: int
    n_trials: int
    mean: float
    stderr: float
    median: float


def summarize(records) -> list:
    """Per-(method, sweep point) mean / stderr / median of the l2 errors.

    Ordering is canonical (method in METHODS order, then K, then n_S) so the
    same records always summarize to the same rows.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.K, rec.n_S), []).append(rec.l2_error)
    rows = []
    for key in sorted(groups, key=lambda k: (METHODS.index(k[0]), k[1], k[2])):
        errs = np.asarray(groups[key], dtype=float)
        n = errs.size
        stderr = float(errs.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rows.append(SummaryRow(key[0], key[1], key[2], n,
                               float(errs.mean()), stderr,
                               float(np.median(errs))))
    return rows


# ---------------------------------------------------------------- CSV I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_records_csv(records, path) -> None:
    """Fixed-schema CSV, 17 significant digits so parse-back is lossless."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([r.scenario_id, r.method, str(r.K), str(r.n_S),
                               str(r.trial_seed), _fmt(r.l2_error),
                               _fmt(r.runtime_ms), r.strategy_tag,
                               str(r.converged)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_records_csv(path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a bench records file (bad header)")
    records = []
    for ln, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise ValueError(f"line {ln}: expected 9 fields, got {len(parts)}")
        if parts[8] not in ("True", "False"):
            raise ValueError(f"line {ln}: bad converged flag {parts[8]!r}")
        records.append(TrialRecord(parts[0], parts[1], int(parts[2]),
                                   int(parts[3]), int(parts[4]),
                                   float(parts[5]), float(parts[6]),
                                   parts[7], parts[8] == "True"))
    return records


def write_summary_csv(rows, path) -> None:
    lines = ["method,K,n_S,n_trials,mean,stderr,median"]
    for r in rows:
        lines.append(",".join([r.method, str(r.K), str(r.n_S), str(r.n_trials),
                               _fmt(r.mean), _fmt(r.stderr), _fmt(r.median)]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- plan files


_PLAN_KEYS = ("sweep_parameter", "sweep_values", "methods", "trials")


def read_plan(path) -> BenchPlan:
    """Parse a key=value plan file: the plan keys plus base scenario keys.

    sweep_values and methods are comma lists; anything that is not a plan
    key is handed to the scenario config (unknown keys still error there).
    """
    pairs = parse_pairs(Path(path).read_text())
    if "sweep_parameter" not in pairs or "sweep_values" not in pairs:
        raise ValueError("plan needs sweep_parameter and sweep_values")
    parameter = pairs.pop("sweep_parameter")
    values = tuple(int(v) for v in pairs.pop("sweep_values").split(",") if v.strip())
    methods = METHODS
    if "methods" in pairs:
        methods = tuple(m.strip() for m in pairs.pop("methods").split(",") if m.strip())
    trials = int(pairs.pop("trials", 1))
    base = config_from_pairs(pairs)
    return BenchPlan(base, parameter, values, methods, trials)


def write_plan(plan: BenchPlan, path) -> None:
    lines = [f"sweep_parameter={plan.sweep_parameter}",
             "sweep_values=" + ",".join(str(v) for v in plan.sweep_values),
             "methods=" + ",".join(plan.methods),
             f"trials={plan.trials}"]
    lines += [f"{f.name}={getattr(plan.base, f.name)}"
              for f in dataclasses.fields(plan.base)]
    Path(path).write_text("\n".join(lines) + "\n")
