"""Centralized two-step estimator, baselines, and cross-validation.

Step 1 fits every task jointly under the fused penalty and averages the
per-task coefficients into w_hat; step 2 corrects w_hat with a target-only
LASSO on the residuals.  Model selection (penalty levels and the choice
between one-step / two-step weight families) is resolved by target-only
cross-validation; the theorem-form weight formulas are available for
controlled experiments where the constants are supplied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .solver import (
    SolverConfig,
    StackedOperator,
    lipschitz_upper,
    solve_weighted_lasso,
)
from .types import (
    BlockParams,
    FitResult,
    PenaltyWeights,
    TaskSample,
    TransferProblem,
    w_average,
)

GRID_POINTS = 30
GRID_RATIO = 1e3


@dataclass(frozen=True)
class RegimeChoice:
    """Selects the penalty-weight family for the fused co-training step.

    Regime "A" is the small-target regime (contrast estimation is limited by
    the source sample), regime "Ac" its complement; they differ in how the
    fusion weights a_k scale with n_S/N.
    """

    regime: str = "A"

    def __post_init__(self):
        if self.regime not in ("A", "Ac"):
            raise ValueError("regime must be 'A' or 'Ac'")

    def a_value(self, n_S: int, N: int) -> float:
        frac = n_S / N
        return 8.0 * np.sqrt(frac) if self.regime == "A" else 8.0 * frac


@dataclass(frozen=True)
class TuningGrid:
    """Penalty grids for CV. None means derive from the data at fit time,
    using n_points log-spaced values from the all-zero threshold down by
    the given ratio."""

    lambda0_grid: np.ndarray | None = None
    tilde_lambda_grid: np.ndarray | None = None
    folds: int = 10
    n_points: int = GRID_POINTS
    ratio: float = GRID_RATIO

    def __post_init__(self):
        for name in ("lambda0_grid", "tilde_lambda_grid"):
            g = getattr(self, name)
            if g is None:
                continue
            g = np.asarray(g, dtype=float)
            if g.size == 0 or np.any(g <= 0):
                raise ValueError(f"{name} must be nonempty and strictly positive")
            if g.size > 1 and np.any(np.diff(g) >= 0):
                raise ValueError(f"{name} must be sorted strictly descending")
            object.__setattr__(self, name, g)
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.n_points < 1 or self.ratio <= 1:
            raise ValueError("need n_points >= 1 and ratio > 1")


def theorem_weights(p, K, n_S, n_T, regime: RegimeChoice = RegimeChoice("A"),
                    c0: float = 1.0) -> PenaltyWeights:
    """Theory-form penalty levels for the co-training step.

    Regime A: lambda0 = c0*sqrt(log p / N) with a_k = 8*sqrt(n_S/N);
    regime Ac: lambda0 = c0*sqrt(log p / n_S) with a_k = 8*n_S/N.
    tilde_lambda is left unset; the correction step is tuned separately.
    """
    N = K * n_S + n_T
    if regime.regime == "A":
        lam0 = c0 * np.sqrt(np.log(p) / N)
    else:
        lam0 = c0 * np.sqrt(np.log(p) / n_S)
    a = tuple(regime.a_value(n_S, N) for _ in range(K))
    return PenaltyWeights(lam0, a)


# ------------------------------------------------------------------ pieces


def stacked_responses(problem: TransferProblem) -> np.ndarray:
    """Responses in operator row order: sources 1..K, then the target."""
    return np.concatenate([s.responses for s in problem.sources]
                          + [problem.target.responses])


def log_grid(top: float, n_points: int = GRID_POINTS, ratio: float = GRID_RATIO) -> np.ndarray:
    top = max(float(top), 1e-12)
    if n_points == 1:
        return np.array([top])
    return np.geomspace(top, top / ratio, n_points)


def lambda0_grid_for(op: StackedOperator, y, a=None, n_points: int = GRID_POINTS,
                     ratio: float = GRID_RATIO) -> np.ndarray:
    """Descending lambda0 grid whose top zeroes the whole fit.

    The all-zero threshold per block is ||(1/N) X_b' y||_inf / a_b; taking the
    max over blocks makes the grid's first point the exact boundary.
    """
    g = np.abs(op.adjoint(np.asarray(y, dtype=float))) / op.N
    a_full = np.append(np.asarray(a, dtype=float) if a is not None else np.ones(op.K), 1.0)
    top = 0.0
    for b in range(op.K + 1):
        if a_full[b] <= 0:
            continue
        blk = g[b * op.p : (b + 1) * op.p]
        top = max(top, float(blk.max(initial=0.0)) / a_full[b])
    return log_grid(top, n_points, ratio)


@dataclass(frozen=True)
class Step1Result:
    """Co-training output: per-task betas (target first), their average, and
    the raw solve."""

    blocks: np.ndarray  # (K+1, p)
    w_hat: np.ndarray
    theta: BlockParams
    info: object


def step1_cotrain(problem: TransferProblem, weights: PenaltyWeights,
                  cfg: SolverConfig | None = None, theta0=None,
                  lipschitz: float | None = None) -> Step1Result:
    """Jointly fit all tasks under the fused penalty and average the blocks."""
    if weights.K != problem.K:
        raise ValueError(f"weights carry {weights.K} source levels, problem has K={problem.K}")
    op = StackedOperator.from_problem(problem)
    y = stacked_responses(problem)
    bp, info = solve_weighted_lasso(op, y, weights.block_levels(), cfg,
                                    theta0=theta0, lipschitz=lipschitz)
    blocks = bp.beta_view()
    w_hat = w_average(blocks, problem.n_S, problem.n_T) if problem.K else blocks[0]
    return Step1Result(blocks, w_hat, bp, info)


@dataclass(frozen=True)
class Step2Result:
    delta_hat: np.ndarray
    beta_target: np.ndarray
    info: object


def step2_debias(target: TaskSample, w_hat, tilde_lambda: float,
                 cfg: SolverConfig | None = None, theta0=None,
                 lipschitz: float | None = None) -> Step2Result:
    """Target-only LASSO on the residuals of w_hat; returns w_hat + delta."""
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.shape != (target.p,):
        raise ValueError("w_hat length must match the target dimension")
    op = StackedOperator([], target.design)
    resid = target.responses - target.design @ w_hat
    bp, info = solve_weighted_lasso(op, resid, [tilde_lambda], cfg,
                                    theta0=theta0, lipschitz=lipschitz)
    delta = bp.target_block
    return Step2Result(delta, w_hat + delta, info)


# ---------------------------------------------------------------- CV core


def fold_labels(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Deterministic fold assignment; falls back to leave-one-out when
    there are fewer rows than folds."""
    if n < 2:
        raise ValueError("need at least 2 rows to cross-validate")
    folds = min(folds, n)
    rng = np.random.default_rng(np.random.SeedSequence((seed, n)))
    labels = np.empty(n, dtype=int)
    labels[rng.permutation(n)] = np.arange(n) % folds
    return labels


def cross_validate(X, y, path_fit, grid, folds: int = 10, seed: int = 0,
                   fold_assignment=None):
    """Select a penalty level by held-out prediction error on (X, y).

    path_fit(train_idx, grid) must return one coefficient row per grid value,
    fitted on the given rows (plus whatever fixed auxiliary data the closure
    carries).  Returns (best_lambda, cv_curve) where cv_curve is the mean
    held-out squared prediction error per grid point.  The grid is descending
    and ties go to the first (largest) minimizer.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    n = y.shape[0]
    if fold_assignment is None:
        fold_assignment = fold_labels(n, folds, seed)
    else:
        fold_assignment = np.asarray(fold_assignment, dtype=int)
    n_folds = int(fold_assignment.max()) + 1
    per_fold = np.zeros((n_folds, grid.size))
    for f in range(n_folds):
        val = np.where(fold_assignment == f)[0]
        train = np.where(fold_assignment != f)[0]
        B = np.asarray(path_fit(train, grid))
        pred = X[val] @ B.T  # (n_val, G)
        per_fold[f] = np.mean((y[val, None] - pred) ** 2, axis=0)
    curve = per_fold.mean(axis=0)
    return float(grid[int(np.argmin(curve))]), curve


def _cv_config(cfg: SolverConfig) -> SolverConfig:
    # tuning passes tolerate a looser certificate; final refits stay tight
    return replace(cfg, kkt_tol=max(cfg.kkt_tol, 1e-4),
                   objective_tol=max(cfg.objective_tol, 1e-9),
                   max_iter=min(cfg.max_iter, 4000))


def _column_subop(op: StackedOperator, cols_idx) -> StackedOperator:
    """The stacked operator restricted to one coordinate subset in every
    block. Valid because the fused layout only couples blocks at matching
    coordinates, so dropping a coordinate drops it everywhere at once."""
    X0 = op.target[:, cols_idx]
    if op.K == 0:
        return StackedOperator([], X0)
    if op.scales is not None:
        eye_cols = np.eye(op.p)[:, cols_idx]
        mats = [s * eye_cols for s in op.scales]
    else:
        mats = [X[:, cols_idx] for X in op.source_mats]
    return StackedOperator(mats, X0)


class _PathStepper:
    """Warm-started point-at-a-time penalized solver for descending paths.

    Each point is solved on a screened coordinate subset (sequential
    strong rule plus the warm support), then certified against the full
    KKT conditions; violators are added back and the point re-solved, so
    the screen never changes what the point converges to. Keeping the
    state across steps lets callers advance several related paths in
    lockstep and stop all of them early.
    """

    def __init__(self, op, y, levels_for, cfg, lipschitz=None, start=None):
        self.op = op
        self.y = np.asarray(y, dtype=float)
        self.levels_for = levels_for
        self.cfg = cfg
        self.L = lipschitz if lipschitz is not None else lipschitz_upper(
            op, cfg.power_probes, cfg.rng_seed)
        self.theta = np.zeros(op.cols) if start is None else np.asarray(start, dtype=float).copy()
        self._g = op.adjoint(op.apply(self.theta) - self.y) / op.N
        self._prev_levels = None

    def step(self, lam: float) -> np.ndarray:
        op, cfg = self.op, self.cfg
        B, p = op.K + 1, op.p
        levels = np.asarray(self.levels_for(lam), dtype=float)
        Gm = np.abs(self._g).reshape(B, p)
        if self._prev_levels is None:
            cand = Gm >= levels[:, None] * (1.0 - 1e-9)
        else:
            cand = Gm >= (2.0 * levels - self._prev_levels)[:, None]
        mask = np.any(cand, axis=0) | np.any(self.theta.reshape(B, p) != 0.0, axis=0)
        while True:
            cols = np.flatnonzero(mask)
            cand_theta = np.zeros((B, p))
            tol_eff = cfg.kkt_tol
            if cols.size:
                sub = _column_subop(op, cols)
                bp, info = solve_weighted_lasso(
                    sub, self.y, levels, cfg,
                    theta0=self.theta.reshape(B, p)[:, cols].ravel(), lipschitz=self.L)
                cand_theta[:, cols] = bp.to_flat().reshape(B, cols.size)
                tol_eff = max(info.kkt_residual, cfg.kkt_tol)
            g_cand = op.adjoint(op.apply(cand_theta.ravel()) - self.y) / op.N
            viol = (np.abs(g_cand).reshape(B, p) - levels[:, None]) > tol_eff + 1e-12
            viol[:, mask] = False
            bad = np.any(viol, axis=0)
            if not bad.any():
                self.theta = cand_theta.ravel()
                self._g = g_cand
                break
            mask |= bad
        self._prev_levels = levels
        return self.theta.copy()


def _solve_path(op, y, levels_for, grid, cfg, lipschitz=None, start=None):
    """Warm-started descending-penalty path; returns ((G, cols) flats, L)."""
    stepper = _PathStepper(op, y, levels_for, cfg, lipschitz=lipschitz, start=start)
    out = np.empty((len(grid), op.cols))
    for i, lam in enumerate(grid):
        out[i] = stepper.step(lam)
    return out, stepper.L


# ------------------------------------------------------------ family fits


@dataclass
class _FamilyFit:
    """Step-1 CV artifacts for one weight family."""

    a: np.ndarray
    grid0: np.ndarray
    curve: np.ndarray
    best_idx: int
    w_full: np.ndarray      # (G, p) full-data averaged estimates
    theta_full: np.ndarray  # (G, cols)
    w_fold: np.ndarray      # (F, G, p)
    lipschitz: float

    @property
    def lambda0(self) -> float:
        return float(self.grid0[self.best_idx])

    @property
    def cv_error(self) -> float:
        return float(self.curve[self.best_idx])


# the CV paths stop descending once the curve has clearly passed its
# minimum: this many points past the best with at least this blow-up.
CV_STOP_LOOKAHEAD = 3
CV_STOP_FACTOR = 1.25


def _run_cv_paths(full, folds, vals, trains, X0, y0, grid0, w_of):
    """Advance the full-data stepper and the fold steppers in lockstep and
    stop the descent once the CV curve is well past its minimum.

    w_of(theta_flat, n_target_rows) maps a flat solution to the averaged
    coefficient vector used for held-out prediction. Returns arrays covering
    only the explored grid prefix.
    """
    n_folds = len(folds)
    theta_full, w_full, w_fold, curve = [], [], [], []
    for i, lam in enumerate(grid0):
        t = full.step(lam)
        theta_full.append(t)
        w_full.append(w_of(t, len(y0)))
        w_i = np.empty((n_folds, w_full[-1].size))
        err_i = 0.0
        for f in range(n_folds):
            w_i[f] = w_of(folds[f].step(lam), len(trains[f]))
            r = y0[vals[f]] - X0[vals[f]] @ w_i[f]
            err_i += np.mean(r * r)
        w_fold.append(w_i)
        curve.append(err_i / n_folds)
        best = int(np.argmin(curve))
        if i - best >= CV_STOP_LOOKAHEAD and curve[i] > CV_STOP_FACTOR * curve[best]:
            break
    return (np.stack(theta_full), np.stack(w_full),
            np.stack(w_fold, axis=1), np.asarray(curve))


def _target_folds(labels):
    """Per-fold held-out and kept row indices from a label vector."""
    n_folds = int(labels.max()) + 1
    vals = [np.where(labels == f)[0] for f in range(n_folds)]
    trains = [np.where(labels != f)[0] for f in range(n_folds)]
    return vals, trains


def _family_step1_cv(problem, a_vec, grid: TuningGrid, labels, cfg_cv):
    """Run the co-training lambda0 path on full data and per fold.

    The full-data and fold paths advance one grid point at a time in
    lockstep so the whole descent can stop early once the CV curve is
    well past its minimum; the returned arrays cover only the explored
    prefix of the grid.
    """
    X0, y0 = problem.target.design, problem.target.responses
    src_designs = [s.design for s in problem.sources]
    src_y = [s.responses for s in problem.sources]
    K, p = problem.K, problem.p

    def w_of(theta_flat, n_T_rows):
        bp = BlockParams.from_flat(theta_flat, K, p)
        blocks = bp.beta_view()
        return w_average(blocks, problem.n_S, n_T_rows) if K else blocks[0]

    op_full = StackedOperator(src_designs, X0)
    y_full = np.concatenate(src_y + [y0])
    grid0 = grid.lambda0_grid
    if grid0 is None:
        grid0 = lambda0_grid_for(op_full, y_full, a_vec, grid.n_points, grid.ratio)
    grid0 = np.asarray(grid0, dtype=float)
    levels_for = (lambda lam: np.append(a_vec * lam, lam)) if K else (lambda lam: [lam])

    full = _PathStepper(op_full, y_full, levels_for, cfg_cv)
    vals, trains = _target_folds(labels)
    folds = [_PathStepper(StackedOperator(src_designs, X0[train]),
                          np.concatenate(src_y + [y0[train]]),
                          levels_for, cfg_cv)
             for train in trains]

    theta_full, w_full, w_fold, curve = _run_cv_paths(
        full, folds, vals, trains, X0, y0, grid0, w_of)
    best = int(np.argmin(curve))
    return _FamilyFit(np.asarray(a_vec, dtype=float), grid0[: curve.size], curve, best,
                      w_full, theta_full, w_fold, full.L)


def _tilde_grid_for(target: TaskSample, w_star, grid: TuningGrid):
    if grid.tilde_lambda_grid is not None:
        return grid.tilde_lambda_grid
    resid = target.responses - target.design @ w_star
    top = float(np.max(np.abs(target.design.T @ resid)) / target.n)
    return log_grid(top, grid.n_points, grid.ratio)


def _cv_tilde(target: TaskSample, w_fold_star, labels, grid_t, cfg_cv):
    """CV the correction penalty given the per-fold step-1 estimates."""
    X0, y0 = target.design, target.responses
    n_folds = int(labels.max()) + 1
    per_fold = np.zeros((n_folds, grid_t.size))
    for f in range(n_folds):
        val = np.where(labels == f)[0]
        train = np.where(labels != f)[0]
        op_f = StackedOperator([], X0[train])
        resid = y0[train] - X0[train] @ w_fold_star[f]
        deltas, _ = _solve_path(op_f, resid, lambda lam: [lam], grid_t, cfg_cv)
        pred = X0[val] @ (w_fold_star[f][None, :] + deltas).T
        per_fold[f] = np.mean((y0[val, None] - pred) ** 2, axis=0)
    curve = per_fold.mean(axis=0)
    return int(np.argmin(curve)), curve


def _refit_step1(problem, fam: _FamilyFit, cfg) -> Step1Result:
    weights = PenaltyWeights(fam.lambda0, tuple(fam.a * 1.0))
    return step1_cotrain(problem, weights, cfg,
                         theta0=fam.theta_full[fam.best_idx], lipschitz=fam.lipschitz)


def _result_from_candidate(problem, cand) -> FitResult:
    step1: Step1Result = cand["step1"]
    if cand.get("step2") is None:
        info = step1.info
        return FitResult(
            beta_target=step1.w_hat, w_hat=step1.w_hat,
            per_task_betas=step1.blocks, objective_trace=info.objective_trace,
            kkt_residual=info.kkt_residual, iterations=info.iterations,
            converged=info.converged, strategy=cand["tag"],
            delta_hat=None, lambda0=cand["lambda0"], tilde_lambda=None,
            fusion_family=cand["family"])
    step2: Step2Result = cand["step2"]
    return FitResult(
        beta_target=step2.beta_target, w_hat=step1.w_hat,
        per_task_betas=step1.blocks,
        objective_trace=step2.info.objective_trace,
        kkt_residual=max(step1.info.kkt_residual, step2.info.kkt_residual),
        iterations=step1.info.iterations + step2.info.iterations,
        converged=step1.info.converged and step2.info.converged,
        strategy=cand["tag"], delta_hat=step2.delta_hat,
        lambda0=cand["lambda0"], tilde_lambda=cand["tilde_lambda"],
        fusion_family=cand["family"])


ONE_STEP, TWO_A, TWO_AC = "one_step", "two_step_regime_A", "two_step_regime_Ac"

# a_k menu for the one-step candidate: the theory family plus the uniform
# weighting that standard penalized-regression software defaults to; CV on
# the target picks between them the same way it picks the penalty level.
ONE_STEP_FAMILIES = ("regime_A", "uniform")


def _fit_engine(problem: TransferProblem, grid: TuningGrid | None,
                cfg: SolverConfig | None, seed: int, candidates,
                folds: int | None = None, return_report: bool = False):
    cfg = cfg or SolverConfig()
    grid = grid or TuningGrid()
    cfg_cv = _cv_config(cfg)
    if folds is None:
        folds = grid.folds
    labels = fold_labels(problem.n_T, folds, seed)
    if problem.K == 0:
        candidates = (ONE_STEP,)

    fams = {}

    def family(name: str) -> _FamilyFit:
        if name not in fams:
            if name == "uniform":
                a = np.ones(problem.K)
            else:
                choice = RegimeChoice(name.removeprefix("regime_"))
                a = np.full(problem.K, choice.a_value(problem.n_S, problem.N))
            fams[name] = _family_step1_cv(problem, a, grid, labels, cfg_cv)
        return fams[name]

    evaluated = []
    for tag in candidates:
        if tag == ONE_STEP:
            menu = ONE_STEP_FAMILIES if problem.K else ("regime_A",)
            best_name = min(menu, key=lambda nm: family(nm).cv_error)
            fam = family(best_name)
            evaluated.append({"tag": ONE_STEP, "fam": fam, "family": best_name,
                              "cv_error": fam.cv_error,
                              "lambda0": fam.lambda0, "tilde_idx": None,
                              "grid_t": None, "tilde_lambda": None})
        else:
            fam_name = "regime_A" if tag == TWO_A else "regime_Ac"
            fam = family(fam_name)
            w_star_full = fam.w_full[fam.best_idx]
            grid_t = _tilde_grid_for(problem.target, w_star_full, grid)
            tidx, curve_t = _cv_tilde(problem.target, fam.w_fold[:, fam.best_idx],
                                      labels, grid_t, cfg_cv)
            evaluated.append({"tag": tag, "fam": fam, "family": fam_name,
                              "cv_error": float(curve_t[tidx]),
                              "lambda0": fam.lambda0, "tilde_idx": tidx,
                              "grid_t": grid_t,
                              "tilde_lambda": float(grid_t[tidx])})
    winner = min(evaluated, key=lambda c: c["cv_error"])

    step1 = _refit_step1(problem, winner["fam"], cfg)
    cand = {"tag": winner["tag"], "step1": step1, "lambda0": winner["lambda0"],
            "tilde_lambda": winner["tilde_lambda"], "step2": None,
            "family": winner["family"]}
    if winner["tag"] != ONE_STEP:
        grid_t = winner["grid_t"]
        tidx = winner["tilde_idx"]
        # warm along the path on the full target, then certify at the pick
        op0 = StackedOperator([], problem.target.design)
        resid = problem.target.responses - problem.target.design @ step1.w_hat
        warm, L0 = _solve_path(op0, resid, lambda lam: [lam], grid_t[: tidx + 1], cfg_cv)
        cand["step2"] = step2_debias(problem.target, step1.w_hat,
                                     float(grid_t[tidx]), cfg,
                                     theta0=warm[-1], lipschitz=L0)
    result = _result_from_candidate(problem, cand)
    if not result.converged:
        raise RuntimeError("selected candidate did not converge; loosen tolerances "
                           "or raise max_iter")
    if return_report:
        report = {c["tag"]: c["cv_error"] for c in evaluated}
        return result, report
    return result


def fit_auto(problem: TransferProblem, grid: TuningGrid | None = None,
             cfg: SolverConfig | None = None, validation: int | None = None,
             seed: int = 0) -> FitResult:
    """Fit one-step and both two-step weight families, return the CV winner.

    validation is the number of target-only folds used both for penalty
    tuning and for picking the strategy (defaults to the grid's fold count;
    sources never enter the held-out sets). Deterministic given seed.
    """
    folds = (grid or TuningGrid()).folds if validation is None else int(validation)
    return _fit_engine(problem, grid, cfg, seed,
                       (ONE_STEP, TWO_A, TWO_AC), folds=folds)


def fit_one_step(problem: TransferProblem, grid: TuningGrid | None = None,
                 cfg: SolverConfig | None = None, validation: int | None = None,
                 seed: int = 0) -> FitResult:
    """CV-tuned co-training average without the correction step.

    Both the penalty level and the a_k family (ONE_STEP_FAMILIES) are picked
    by target-only CV; FitResult.fusion_family records the pick.
    """
    folds = (grid or TuningGrid()).folds if validation is None else int(validation)
    return _fit_engine(problem, grid, cfg, seed, (ONE_STEP,), folds=folds)


def fit_two_step(problem: TransferProblem, grid: TuningGrid | None = None,
                 cfg: SolverConfig | None = None, validation: int | None = None,
                 seed: int = 0) -> FitResult:
    """Co-training plus correction, with the weight-family dichotomy resolved
    by validation error (the two regimes are fit and the better one kept)."""
    folds = (grid or TuningGrid()).folds if validation is None else int(validation)
    return _fit_engine(problem, grid, cfg, seed, (TWO_A, TWO_AC), folds=folds)


def fit_strategy(problem: TransferProblem, strategy: str,
                 grid: TuningGrid | None = None, cfg: SolverConfig | None = None,
                 validation: int | None = None, seed: int = 0) -> FitResult:
    """Fit one named strategy with CV-tuned penalties (no selection step).

    With no sources every strategy degenerates to the target LASSO and the
    result is tagged one_step.
    """
    if strategy not in (ONE_STEP, TWO_A, TWO_AC):
        raise ValueError(f"unknown strategy {strategy!r}")
    folds = (grid or TuningGrid()).folds if validation is None else int(validation)
    return _fit_engine(problem, grid, cfg, seed, (strategy,), folds=folds)


# ---------------------------------------------------------------- baselines


def lasso_baseline(target: TaskSample, grid: TuningGrid | None = None,
                   cfg: SolverConfig | None = None, seed: int = 0) -> FitResult:
    """CV-tuned LASSO on the target sample alone."""
    problem = TransferProblem(target)
    res = _fit_engine(problem, grid, cfg, seed, (ONE_STEP,),
                      folds=(grid or TuningGrid()).folds)
    return replace(res, strategy="baseline_lasso")


def pooled_baseline(problem: TransferProblem, grid: TuningGrid | None = None,
                    cfg: SolverConfig | None = None, seed: int = 0) -> FitResult:
    """One LASSO on all rows pooled, then the target-only correction step.

    This ignores which task a row came from, so covariate heterogeneity
    leaks the sources' contrast signal into the pooled estimate; the
    correction step cannot fully remove it. With K=0 the pooled design is
    the target sample itself and the correction is redundant, so this
    reduces to the plain CV LASSO.
    """
    cfg = cfg or SolverConfig()
    grid = grid or TuningGrid()
    if problem.K == 0:
        return replace(lasso_baseline(problem.target, grid, cfg, seed), strategy="pooled")
    cfg_cv = _cv_config(cfg)
    X0, y0 = problem.target.design, problem.target.responses
    A = np.vstack([s.design for s in problem.sources] + [X0])
    yp = np.concatenate([s.responses for s in problem.sources] + [y0])
    n_src = A.shape[0] - X0.shape[0]
    labels = fold_labels(problem.n_T, grid.folds, seed)
    n_folds = int(labels.max()) + 1

    op_full = StackedOperator([], A)
    grid0 = grid.lambda0_grid
    if grid0 is None:
        grid0 = lambda0_grid_for(op_full, yp, None, grid.n_points, grid.ratio)
    grid0 = np.asarray(grid0, dtype=float)

    full = _PathStepper(op_full, yp, lambda lam: [lam], cfg_cv)
    steppers, vals = [], []
    for f in range(n_folds):
        val = np.where(labels == f)[0]
        train = np.where(labels != f)[0]
        rows = np.concatenate([np.arange(n_src), n_src + train])
        vals.append(val)
        steppers.append(_PathStepper(StackedOperator([], A[rows]), yp[rows],
                                     lambda lam: [lam], cfg_cv))
    beta_full, w_fold, curve = [], [], []
    for i, lam in enumerate(grid0):
        beta_full.append(full.step(lam))
        w_i = np.stack([s.step(lam) for s in steppers])
        w_fold.append(w_i)
        err = [np.mean((y0[vals[f]] - X0[vals[f]] @ w_i[f]) ** 2) for f in range(n_folds)]
        curve.append(float(np.mean(err)))
        best = int(np.argmin(curve))
        if i - best >= CV_STOP_LOOKAHEAD and curve[i] > CV_STOP_FACTOR * curve[best]:
            break
    w_fold = np.stack(w_fold, axis=1)
    best = int(np.argmin(curve))
    lam0 = float(grid0[best])

    # certified refit of the pooled stage at the selected level
    bp, info1 = solve_weighted_lasso(op_full, yp, [lam0], cfg,
                                     theta0=beta_full[best], lipschitz=full.L)
    w_star = bp.target_block

    grid_t = _tilde_grid_for(problem.target, w_star, grid)
    tidx, _ = _cv_tilde(problem.target, w_fold[:, best], labels, grid_t, cfg_cv)
    op0 = StackedOperator([], X0)
    resid = y0 - X0 @ w_star
    warm, L0 = _solve_path(op0, resid, lambda lam: [lam], grid_t[: tidx + 1], cfg_cv)
    step2 = step2_debias(problem.target, w_star, float(grid_t[tidx]), cfg,
                         theta0=warm[-1], lipschitz=L0)

    per_task = np.repeat(w_star[None, :], problem.K + 1, axis=0)
    return FitResult(
        beta_target=step2.beta_target, w_hat=w_star, per_task_betas=per_task,
        objective_trace=step2.info.objective_trace,
        kkt_residual=max(info1.kkt_residual, step2.info.kkt_residual),
        iterations=info1.iterations + step2.info.iterations,
        converged=info1.converged and step2.info.converged,
        strategy="pooled", delta_hat=step2.delta_hat,
        lambda0=lam0, tilde_lambda=float(grid_t[tidx]))
