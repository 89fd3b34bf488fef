"""Debiased local estimators shipped as pseudo-samples.

A source node fits its own LASSO, then removes the first-order shrinkage
bias through an approximate inverse covariance built row by row: each row
solves a quadratic program that trades the quadratic form against an
l-infinity budget mu on how far the row may sit from the exact inverse.
The corrected vector is what the node communicates; nothing else leaves
the machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import SolverConfig, StackedOperator, soft_threshold, solve_weighted_lasso
from .types import TaskSample

MAX_MU_DOUBLINGS = 10
FEAS_SLACK = 1e-9


@dataclass(frozen=True)
class ThetaRow:
    """One certified row of the approximate inverse covariance."""

    theta_j: np.ndarray
    feasibility_residual: float  # ||sigma_hat @ theta_j - e_j||_inf
    mu_used: float
    quadratic_value: float       # theta_j' sigma_hat theta_j

    def __post_init__(self):
        if self.feasibility_residual > self.mu_used + FEAS_SLACK:
            raise ValueError("row violates its own feasibility budget")


@dataclass(frozen=True)
class PseudoSample:
    """Debiased coefficient vector a source node communicates."""

    beta_tilde: np.ndarray
    source_index: int
    lambda_used: float
    mu_used: float  # largest mu actually certified across rows
    theta_diagnostics: tuple  # (max feasibility residual, max quadratic value)
    beta_lasso: np.ndarray = None
    theta_hat: np.ndarray = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.beta_tilde)):
            raise ValueError("pseudo-sample must be finite")


def lasso_local(sample: TaskSample, lambda_k: float, cfg: SolverConfig | None = None) -> np.ndarray:
    """Plain LASSO on one task's rows with penalty lambda_k."""
    op = StackedOperator([], sample.design)
    bp, info = solve_weighted_lasso(op, sample.responses, [lambda_k], cfg)
    if not info.converged:
        raise RuntimeError("local LASSO did not converge")
    return bp.target_block


def _check_sigma(sigma_hat) -> np.ndarray:
    sigma = np.asarray(sigma_hat, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma_hat must be square")
    if not np.all(np.isfinite(sigma)):
        raise ValueError("sigma_hat must be finite")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma_hat must be symmetric")
    return sigma


def _rows_fista(sigma, cols, mu, stat_tol, max_iter):
    """FISTA on the l1-penalized form of the row problems, batched over
    columns: min 0.5 theta' sigma theta - theta_j + mu ||theta||_1.

    Its stationary points satisfy ||sigma theta - e_j||_inf <= mu, which is
    exactly the constrained problem's feasibility, and the objective match
    makes them constrained-optimal, so one first-order loop certifies both.
    Returns (theta, feasible mask, stationarity, iterations).
    """
    p, m = sigma.shape[0], len(cols)
    E = np.zeros((p, m))
    E[cols, np.arange(m)] = 1.0
    eigs = np.linalg.eigvalsh(sigma)
    L = float(eigs[-1])
    if L <= 0:
        # zero quadratic: theta = 0 is stationary iff mu >= 1
        theta = np.zeros((p, m))
        feas_val = np.ones(m)
        ok = feas_val <= np.broadcast_to(mu, (m,)) + FEAS_SLACK
        return theta, ok, feas_val, 0
    step = 1.0 / (1.05 * L)
    theta = np.zeros((p, m))
    z = theta
    s = 1.0
    thresh = step * np.broadcast_to(mu, (m,))
    it = 0
    for it in range(1, max_iter + 1):
        g = sigma @ z - E
        theta_new = soft_threshold(z - step * g, thresh)
        s_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s * s))
        z = theta_new + ((s - 1.0) / s_new) * (theta_new - theta)
        theta, s = theta_new, s_new
        if it % 5 == 0 or it == max_iter:
            gt = sigma @ theta - E
            on = theta != 0
            viol = np.where(on, np.abs(gt + np.sign(theta) * mu),
                            np.maximum(np.abs(gt) - mu, 0.0))
            stat = viol.max(axis=0)
            feas = np.abs(gt).max(axis=0)
            if np.all((stat <= stat_tol) & (feas <= mu + FEAS_SLACK)):
                break
    gt = sigma @ theta - E
    on = theta != 0
    viol = np.where(on, np.abs(gt + np.sign(theta) * mu),
                    np.maximum(np.abs(gt) - mu, 0.0))
    stat = viol.max(axis=0)
    feas_val = np.abs(gt).max(axis=0)
    ok = (stat <= stat_tol) & (feas_val <= mu + FEAS_SLACK)
    return theta, ok, feas_val, it


def solve_theta_row(sigma_hat, j: int, mu: float, cfg: SolverConfig | None = None) -> ThetaRow:
    """Solve one row problem, doubling mu on failure up to 10 times."""
    sigma = _check_sigma(sigma_hat)
    if not (0 <= j < sigma.shape[0]):
        raise ValueError("row index out of range")
    if mu <= 0:
        raise ValueError("mu must be positive")
    cfg = cfg or SolverConfig()
    mu_try = float(mu)
    for _ in range(MAX_MU_DOUBLINGS + 1):
        theta, ok, feas, _ = _rows_fista(sigma, np.array([j]), mu_try,
                                         cfg.kkt_tol, cfg.max_iter)
        if ok[0]:
            vec = theta[:, 0]
            return ThetaRow(vec, float(feas if np.ndim(feas) == 0 else feas[0]),
                            mu_try, float(vec @ sigma @ vec))
        mu_try *= 2.0
    raise RuntimeError(f"row {j} infeasible after {MAX_MU_DOUBLINGS} doublings; "
                       f"final mu tried {mu_try / 2.0:g}")


def theta_matrix(sigma_hat, mu: float, cfg: SolverConfig | None = None):
    """All p rows at once (rows are independent, so they share the batch).

    Returns (theta (p, p) with row j approximating inverse row j,
    mu_used per row, feasibility residual per row, quadratic value per row).
    """
    sigma = _check_sigma(sigma_hat)
    if mu <= 0:
        raise ValueError("mu must be positive")
    cfg = cfg or SolverConfig()
    p = sigma.shape[0]
    theta = np.zeros((p, p))
    feas = np.zeros(p)
    mu_used = np.full(p, float(mu))
    pending = np.arange(p)
    for _ in range(MAX_MU_DOUBLINGS + 1):
        if pending.size == 0:
            break
        sol, ok, fv, _ = _rows_fista(sigma, pending, mu_used[pending][0],
                                     cfg.kkt_tol, cfg.max_iter)
        done = pending[ok]
        theta[:, done] = sol[:, ok]
        feas[done] = np.atleast_1d(fv)[ok]
        pending = pending[~ok]
        mu_used[pending] *= 2.0
    if pending.size:
        raise RuntimeError(f"{pending.size} rows infeasible after "
                           f"{MAX_MU_DOUBLINGS} doublings (first row {pending[0]})")
    rows = theta.T  # row j of the approximate inverse
    values = np.einsum("ij,jk,ik->i", rows, sigma, rows)
    return rows, mu_used, feas, values


def _sigma_estimate(sample: TaskSample) -> float:
    """Residual-sd noise estimate from a pilot LASSO, with a floor so the
    all-zero response stays solvable."""
    y = sample.responses
    floor = 1e-8 + 1e-3 * float(np.std(y))
    sd0 = float(np.std(y))
    if sd0 == 0.0:
        return floor
    lam = sd0 * np.sqrt(np.log(sample.p) / sample.n)
    beta = lasso_local(sample, lam)
    resid = y - sample.design @ beta
    dof = max(sample.n - int(np.count_nonzero(beta)), 1)
    return max(float(np.sqrt(resid @ resid / dof)), floor)


def debias_estimator(sample: TaskSample, lambda_k: float | None = None,
                     mu_k: float | None = None,
                     cfg: SolverConfig | None = None) -> PseudoSample:
    """Local LASSO plus the one-step bias correction through theta_matrix.

    When lambda_k or mu_k is omitted it defaults to
    sigma_hat_noise * sqrt(log p / n) with a pilot-LASSO noise estimate.
    """
    rate = np.sqrt(np.log(sample.p) / sample.n)
    if lambda_k is None or mu_k is None:
        scale = _sigma_estimate(sample)
        if lambda_k is None:
            lambda_k = scale * rate
        if mu_k is None:
            mu_k = scale * rate
    if lambda_k <= 0 or mu_k <= 0:
        raise ValueError("penalties must be positive")
    beta_hat = lasso_local(sample, lambda_k, cfg)
    sigma = sample.design.T @ sample.design / sample.n
    rows, mu_used, feas, values = theta_matrix(sigma, mu_k, cfg)
    resid = sample.responses - sample.design @ beta_hat
    beta_tilde = beta_hat + rows @ (sample.design.T @ resid) / sample.n
    return PseudoSample(beta_tilde, sample.task_id, float(lambda_k),
                        float(mu_used.max()),
                        (float(feas.max()), float(values.max())),
                        beta_lasso=beta_hat, theta_hat=rows)


def bias_variance_report(sample: TaskSample, beta_true, pseudo: PseudoSample):
    """Split the pseudo-sample's error into its noise and shrinkage parts.

    variance term: theta_hat X' eps / n with eps = y - X beta_true;
    bias term: -(theta_hat sigma_hat - I)(beta_lasso - beta_true).
    Their sum reproduces beta_tilde - beta_true to numerical precision.
    """
    if pseudo.theta_hat is None or pseudo.beta_lasso is None:
        raise ValueError("pseudo-sample lacks stored diagnostics")
    beta_true = np.asarray(beta_true, dtype=float)
    X = sample.design
    eps = sample.responses - X @ beta_true
    variance_term = pseudo.theta_hat @ (X.T @ eps) / sample.n
    sigma = X.T @ X / sample.n
    bias_term = -(pseudo.theta_hat @ sigma - np.eye(sample.p)) @ (pseudo.beta_lasso - beta_true)
    return variance_term, bias_term
