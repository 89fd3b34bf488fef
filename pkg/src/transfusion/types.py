"""Core data model: task samples, parameter blocks, penalty weights, fit results.

Conventions used throughout the package:

* task index 0 is the target task, 1..K are sources;
* lists of per-task vectors are ordered target-first: [beta0, beta1, ..., betaK];
* the flat parameter vector is ordered contrasts-first:
  theta = (theta_1, ..., theta_K, theta_0), where theta_k = beta_k - beta_0
  for k >= 1 and theta_0 = beta_0.  This matches the column layout of the
  stacked design operator in ``solver``.

Everything is dense float64.  Instances are treated as immutable after
construction; nothing in the package mutates them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _as_vector(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class TaskSample:
    """One task's observations: an n x p design and length-n responses."""

    design: np.ndarray
    responses: np.ndarray
    task_id: int = 0

    def __post_init__(self):
        X = _as_matrix(self.design, "design")
        y = _as_vector(self.responses, "responses")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"design has {X.shape[0]} rows but responses has length {y.shape[0]}"
            )
        if X.shape[1] < 1:
            raise ValueError("design needs at least one column")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class TransferProblem:
    """A target sample plus K same-sized source samples sharing dimension p."""

    target: TaskSample
    sources: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        p = self.target.p
        for k, s in enumerate(self.sources, start=1):
            if s.p != p:
                raise ValueError(f"source {k} has p={s.p}, target has p={p}")
        sizes = {s.n for s in self.sources}
        if len(sizes) > 1:
            raise ValueError(f"sources must share one sample size, got {sorted(sizes)}")

    @property
    def p(self) -> int:
        return self.target.p

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def n_T(self) -> int:
        return self.target.n

    @property
    def n_S(self) -> int:
        # only meaningful when K >= 1
        return self.sources[0].n if self.sources else 0

    @property
    def N(self) -> int:
        return self.K * self.n_S + self.n_T


@dataclass(frozen=True)
class BlockParams:
    """Reparametrized coefficients: K contrast blocks plus the target block.

    contrasts[k-1] holds theta_k = beta_k - beta_0; target_block holds
    theta_0 = beta_0.
    """

    contrasts: np.ndarray  # (K, p)
    target_block: np.ndarray  # (p,)

    def __post_init__(self):
        c = np.asarray(self.contrasts, dtype=float)
        if c.ndim == 1:  # allow K=1 passed as a vector
            c = c[None, :]
        t = _as_vector(self.target_block, "target_block")
        if c.size and c.shape[1] != t.shape[0]:
            raise ValueError("contrast blocks and target block disagree on p")
        if c.size == 0:
            c = c.reshape(0, t.shape[0])
        object.__setattr__(self, "contrasts", c)
        object.__setattr__(self, "target_block", t)

    @property
    def K(self) -> int:
        return self.contrasts.shape[0]

    @property
    def p(self) -> int:
        return self.target_block.shape[0]

    def to_flat(self) -> np.ndarray:
        """Flatten to the (K+1)p vector (theta_1, ..., theta_K, theta_0)."""
        return np.concatenate([self.contrasts.ravel(), self.target_block])

    @classmethod
    def from_flat(cls, theta, K, p) -> "BlockParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != ((K + 1) * p,):
            raise ValueError(f"expected length {(K + 1) * p}, got {theta.shape}")
        return cls(theta[: K * p].reshape(K, p).copy(), theta[K * p :].copy())

    def beta_view(self) -> np.ndarray:
        """(K+1, p) array of per-task coefficients, target first.

        Row 0 is beta_0 = theta_0, row k is beta_k = theta_k + theta_0.
        """
        out = np.empty((self.K + 1, self.p))
        out[0] = self.target_block
        out[1:] = self.contrasts + self.target_block
        return out


@dataclass(frozen=True)
class PenaltyWeights:
    """Penalty levels for the fused objective: lambda_k = a_k * lambda0.

    tilde_lambda is the step-2 correction penalty; it is tuned separately and
    may be left unset.
    """

    lambda0: float
    a: tuple = ()
    tilde_lambda: float | None = None

    def __post_init__(self):
        a = tuple(float(x) for x in self.a)
        if self.lambda0 < 0 or any(x < 0 for x in a):
            raise ValueError("penalty levels must be nonnegative")
        if self.tilde_lambda is not None and self.tilde_lambda < 0:
            raise ValueError("tilde_lambda must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lambda0", float(self.lambda0))

    @property
    def K(self) -> int:
        return len(self.a)

    def block_levels(self) -> np.ndarray:
        """Per-block penalty levels in flat theta order: (a_1*l0, ..., a_K*l0, l0)."""
        return np.array([ak * self.lambda0 for ak in self.a] + [self.lambda0])


STRATEGIES = (
    "one_step",
    "two_step_regime_A",
    "two_step_regime_Ac",
    "baseline_lasso",
    "pooled",
    "dtransfusion_one",
    "dtransfusion_two",
)


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fitting pipeline, with solver diagnostics attached.

    per_task_betas is (K+1, p), target first.  objective_trace covers the
    final solve(s) backing the returned estimate, not tuning passes.
    """

    beta_target: np.ndarray
    w_hat: np.ndarray
    per_task_betas: np.ndarray
    objective_trace: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    strategy: str
    delta_hat: np.ndarray | None = None
    lambda0: float | None = None
    tilde_lambda: float | None = None
    fusion_family: str | None = None  # which a_k family backed the co-training step

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy tag {self.strategy!r}")


def w_average(per_task_betas, n_S, n_T) -> np.ndarray:
    """Sample-size-weighted average of per-task coefficients, target first.

    Returns (n_S/N) * sum_{k>=1} beta_k + (n_T/N) * beta_0 with
    N = K*n_S + n_T.  With K = 0 this is just beta_0.
    """
    betas = np.atleast_2d(np.asarray(per_task_betas, dtype=float))
    if n_S <= 0 and betas.shape[0] > 1:
        raise ValueError("n_S must be positive when sources are present")
    if n_T <= 0:
        raise ValueError("n_T must be positive")
    K = betas.shape[0] - 1
    N = K * n_S + n_T
    return (n_T * betas[0] + n_S * betas[1:].sum(axis=0)) / N


def estimation_error(beta_hat, beta_star) -> float:
    """Euclidean distance between an estimate and the truth."""
    a = _as_vector(beta_hat, "beta_hat")
    b = _as_vector(beta_star, "beta_star")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def diversity_epsilon(contrasts, n_S, n_T) -> float:
    """l1 norm of the sample-size-weighted contrast sum.

    Zero means the source deviations cancel on average, the favorable regime
    for the plain co-trained average.
    """
    deltas = np.atleast_2d(np.asarray(contrasts, dtype=float))
    K = deltas.shape[0]
    N = K * n_S + n_T
    if N <= 0:
        raise ValueError("need positive total sample size")
    return float(np.abs((n_S / N) * deltas.sum(axis=0)).sum())
