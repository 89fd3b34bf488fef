"""Weighted-LASSO engine over the implicit block-stacked design.

The co-training objective, after the contrast reparametrization, is a
weighted LASSO on a tall design whose column blocks are
(theta_1, ..., theta_K, theta_0): source block k appears on its own block
diagonal and again under theta_0, the target design only under theta_0.
That matrix is never materialized; StackedOperator applies it and its
adjoint blockwise in O(sum n_k * p).

The distributed aggregation problem uses the same layout with each source
design replaced by sqrt(n_S) * I, so one solver serves both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import BlockParams


class StackedOperator:
    """Implicit stacked design. Build with from_blocks or identity_form.

    Attributes: K, p, N (total rows), rows_per_block.
    """

    def __init__(self, source_mats=None, target=None, identity_scales=None):
        if target is None:
            raise ValueError("target design is required")
        self.target = np.asarray(target, dtype=float)
        self.p = self.target.shape[1]
        if identity_scales is not None:
            if source_mats is not None:
                raise ValueError("pass dense source blocks or identity scales, not both")
            self.scales = np.asarray(identity_scales, dtype=float)
            self.K = len(self.scales)
            self.source_rows = [self.p] * self.K
            self._stack = None
            self.source_mats = None
        else:
            mats = [np.asarray(X, dtype=float) for X in (source_mats or [])]
            for X in mats:
                if X.shape[1] != self.p:
                    raise ValueError("all blocks must share the column count p")
            self.scales = None
            self.source_mats = mats
            self.K = len(mats)
            self.source_rows = [X.shape[0] for X in mats]
            # uniform shapes admit one batched matmul instead of K small ones
            if self.K and len({X.shape[0] for X in mats}) == 1:
                self._stack = np.ascontiguousarray(np.stack(mats))
            else:
                self._stack = None
        self.N = sum(self.source_rows) + self.target.shape[0]
        self._offsets = np.cumsum([0] + self.source_rows)

    @classmethod
    def from_problem(cls, problem):
        return cls([s.design for s in problem.sources], problem.target.design)

    @classmethod
    def identity_form(cls, scales, target):
        return cls(target=target, identity_scales=scales)

    @property
    def cols(self) -> int:
        return (self.K + 1) * self.p

    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.cols,):
            raise ValueError(f"theta must have length {self.cols}")
        return theta[: self.K * self.p].reshape(self.K, self.p), theta[self.K * self.p :]

    def apply(self, theta) -> np.ndarray:
        """X_stacked @ theta for a flat theta in block order."""
        C, t = self._split(theta)
        out = np.empty(self.N)
        v = C + t  # per-source beta_k
        if self.K:
            if self.scales is not None:
                out[: self._offsets[-1]] = (self.scales[:, None] * v).ravel()
            elif self._stack is not None:
                out[: self._offsets[-1]] = np.matmul(self._stack, v[:, :, None]).ravel()
            else:
                for k, X in enumerate(self.source_mats):
                    out[self._offsets[k] : self._offsets[k + 1]] = X @ v[k]
        out[self._offsets[-1] :] = self.target @ t
        return out

    def adjoint(self, residual) -> np.ndarray:
        """X_stacked.T @ residual, returned flat in block order."""
        r = np.asarray(residual, dtype=float)
        if r.shape != (self.N,):
            raise ValueError(f"residual must have length {self.N}")
        out = np.empty(self.cols)
        g0 = self.target.T @ r[self._offsets[-1] :]
        if self.K:
            if self.scales is not None:
                G = self.scales[:, None] * r[: self._offsets[-1]].reshape(self.K, self.p)
            elif self._stack is not None:
                R = r[: self._offsets[-1]].reshape(self.K, -1)
                G = np.matmul(self._stack.transpose(0, 2, 1), R[:, :, None])[:, :, 0]
            else:
                G = np.empty((self.K, self.p))
                for k, X in enumerate(self.source_mats):
                    G[k] = X.T @ r[self._offsets[k] : self._offsets[k + 1]]
            out[: self.K * self.p] = G.ravel()
            g0 = g0 + G.sum(axis=0)
        out[self.K * self.p :] = g0
        return out


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 50_000
    kkt_tol: float = 1e-7
    objective_tol: float = 1e-10
    step_size: float | str = "auto"  # "auto" = 1 / lipschitz upper bound
    accelerated: bool = False
    rng_seed: int = 0
    power_probes: int = 60

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.kkt_tol <= 0 or self.objective_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class SolveInfo:
    """Diagnostics for one solve; feeds the corresponding FitResult fields."""

    converged: bool
    iterations: int
    kkt_residual: float
    objective_trace: np.ndarray
    step_size: float
    objective: float


def apply_stacked(op: StackedOperator, theta) -> np.ndarray:
    """Forward product; theta may be a BlockParams or a flat vector."""
    if isinstance(theta, BlockParams):
        theta = theta.to_flat()
    return op.apply(theta)


def apply_adjoint(op: StackedOperator, residual) -> np.ndarray:
    return op.adjoint(residual)


def soft_threshold(v, t):
    """Elementwise sign(v) * max(|v| - t, 0). t may be a scalar or a vector."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz_upper(op: StackedOperator, probes: int = 60, rng_seed: int = 0) -> float:
    """Upper estimate of lambda_max(X'X)/N by power iteration, +5% headroom.

    Deterministic given rng_seed. probes is the number of power steps; the
    5% inflation covers the gap a finite iteration leaves below the true
    spectral norm.
    """
    if probes < 10:
        raise ValueError("need at least 10 power-iteration probes")
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(probes):
        u = op.adjoint(op.apply(v))
        nrm = float(np.linalg.norm(u))
        if nrm == 0.0:
            raise ValueError("operator is zero on the probe subspace")
        est = nrm
        v = u / nrm
    return 1.05 * est / op.N


def expand_levels(levels, K, p) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if levels.shape != (K + 1,):
        raise ValueError(f"need {K + 1} per-block penalty levels")
    if np.any(levels < 0):
        raise ValueError("penalty levels must be nonnegative")
    return np.repeat(levels, p)


def _kkt_from_grad(g, theta, w) -> float:
    on_zero = np.maximum(np.abs(g) - w, 0.0)
    on_support = np.abs(g + w * np.sign(theta))
    return float(np.max(np.where(theta == 0.0, on_zero, on_support), initial=0.0))


def kkt_residual(op: StackedOperator, y, levels, theta) -> float:
    """Max violation of the subgradient optimality condition at theta.

    Zero coordinates contribute max(|g_j| - w_j, 0); support coordinates
    contribute |g_j + w_j * sign(theta_j)|, with g = (1/N) X'(X theta - y).
    """
    if isinstance(theta, BlockParams):
        theta = theta.to_flat()
    theta = np.asarray(theta, dtype=float)
    w = expand_levels(levels, op.K, op.p)
    g = op.adjoint(op.apply(theta) - np.asarray(y, dtype=float)) / op.N
    return _kkt_from_grad(g, theta, w)


def solve_weighted_lasso(op: StackedOperator, y, levels, cfg: SolverConfig | None = None,
                         theta0=None, lipschitz: float | None = None):
    """Minimize 0.5/N * ||y - X theta||^2 + sum_b level_b * ||theta_b||_1.

    Returns (BlockParams, SolveInfo). Convergence is certified by the KKT
    residual (primary), or by a stalled objective once the residual is within
    100x of tolerance. theta0 warm-starts the iteration; lipschitz lets
    callers reuse a spectral bound across solves on the same data.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=float)
    if y.shape != (op.N,):
        raise ValueError(f"y must have length {op.N}")
    w = expand_levels(levels, op.K, op.p)

    if cfg.step_size == "auto":
        L = lipschitz if lipschitz is not None else lipschitz_upper(
            op, cfg.power_probes, cfg.rng_seed)
        step = 1.0 / L
    else:
        step = float(cfg.step_size)

    theta = np.zeros(op.cols) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    Xt = op.apply(theta)
    obj = _objective(Xt, y, w, theta, op.N)
    trace = [obj]
    stall = 0
    it = 0
    kkt = np.inf
    converged = False

    if not cfg.accelerated:
        g = op.adjoint(Xt - y) / op.N
        for it in range(1, cfg.max_iter + 1):
            kkt = _kkt_from_grad(g, theta, w)
            if kkt <= cfg.kkt_tol or (stall >= 5 and kkt <= 100.0 * cfg.kkt_tol):
                converged = True
                it -= 1
                break
            theta = soft_threshold(theta - step * g, step * w)
            Xt = op.apply(theta)
            new_obj = _objective(Xt, y, w, theta, op.N)
            if not np.isfinite(new_obj):
                raise FloatingPointError("objective diverged to a non-finite value")
            stall = stall + 1 if abs(obj - new_obj) <= cfg.objective_tol * max(abs(obj), 1e-12) else 0
            obj = new_obj
            trace.append(obj)
            g = op.adjoint(Xt - y) / op.N
        else:
            it = cfg.max_iter
            kkt = _kkt_from_grad(g, theta, w)
            converged = kkt <= cfg.kkt_tol
    else:
        # monotone variant of the momentum scheme: the prox candidate is only
        # accepted if it does not increase the objective, so the trace stays
        # non-increasing while keeping the accelerated rate. The momentum
        # point v and every iterate are cached together with their images
        # under X, so each iteration costs one apply and two adjoints.
        s = 1.0
        v = theta.copy()
        Xv = Xt.copy()
        g_theta = op.adjoint(Xt - y) / op.N
        for it in range(1, cfg.max_iter + 1):
            kkt = _kkt_from_grad(g_theta, theta, w)
            if kkt <= cfg.kkt_tol or (stall >= 5 and kkt <= 100.0 * cfg.kkt_tol):
                converged = True
                it -= 1
                break
            g_v = op.adjoint(Xv - y) / op.N
            z = soft_threshold(v - step * g_v, step * w)
            Xz = op.apply(z)
            cand = _objective(Xz, y, w, z, op.N)
            if not np.isfinite(cand):
                raise FloatingPointError("objective diverged to a non-finite value")
            s_new = _next_s(s)
            a = s / s_new
            b = (s - 1.0) / s_new
            if cand <= obj:
                theta_new, Xt_new, new_obj, changed = z, Xz, cand, True
            else:
                theta_new, Xt_new, new_obj, changed = theta, Xt, obj, False
            v = theta_new + a * (z - theta_new) + b * (theta_new - theta)
            Xv = Xt_new + a * (Xz - Xt_new) + b * (Xt_new - Xt)
            stall = stall + 1 if abs(obj - new_obj) <= cfg.objective_tol * max(abs(obj), 1e-12) else 0
            theta, Xt, obj, s = theta_new, Xt_new, new_obj, s_new
            trace.append(obj)
            if changed:
                g_theta = op.adjoint(Xt - y) / op.N
        else:
            it = cfg.max_iter
            kkt = _kkt_from_grad(g_theta, theta, w)
            converged = kkt <= cfg.kkt_tol

    info = SolveInfo(converged=converged, iterations=it, kkt_residual=float(kkt),
                     objective_trace=np.asarray(trace), step_size=step, objective=float(obj))
    return BlockParams.from_flat(theta, op.K, op.p), info


def _objective(Xtheta, y, w, theta, N) -> float:
    r = y - Xtheta
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * float(r @ r) / N + float(w @ np.abs(theta))


def _next_s(s: float) -> float:
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s * s))
