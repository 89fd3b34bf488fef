"""Synthetic transfer scenarios with known ground truth.

Covers the simulation designs used throughout: sparse target signal,
per-source contrast vectors that either cancel exactly (diverse) or share a
common drift (nondiverse), source covariates that are identity / random-factor
heterogeneous / arrowhead, plus the bias and heterogeneity summaries
(pooled_bias, fused_bias, c_sigma) those designs are built to exercise.

All randomness is derived from integer seeds through SeedSequence streams
keyed by (seed, purpose, task), so generation is reproducible per task and
safe to parallelize across trials.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import TaskSample, TransferProblem, diversity_epsilon

SHIFT_KINDS = ("diverse", "nondiverse")
DESIGN_KINDS = ("homogeneous", "heterogeneous", "arrowhead")
SHIFT_SUPPORT = 50  # contrasts live on the first min(50, p) coordinates

# stream tags keeping per-purpose RNGs independent
_TAG_SHIFT, _TAG_COV, _TAG_ROWS = 1, 2, 3


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of one synthetic transfer problem; defaults give the full-size
    simulation setting."""

    p: int = 500
    s: int = 10
    n_T: int = 150
    n_S: int = 200
    K: int = 4
    beta_level: float = 0.3
    h: float = 12.0
    shift_kind: str = "diverse"
    design_kind: str = "homogeneous"
    noise_sd: float = 1.0
    arrow_c: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.s <= self.p):
            raise ValueError("need 1 <= s <= p")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.n_T < 1 or (self.K > 0 and self.n_S < 1):
            raise ValueError("sample sizes must be positive")
        if self.shift_kind not in SHIFT_KINDS:
            raise ValueError(f"shift_kind must be one of {SHIFT_KINDS}")
        if self.design_kind not in DESIGN_KINDS:
            raise ValueError(f"design_kind must be one of {DESIGN_KINDS}")
        if self.noise_sd <= 0 or self.h < 0:
            raise ValueError("noise_sd must be positive and h nonnegative")
        if not (0 < self.arrow_c < 1):
            raise ValueError("arrow_c must lie in (0, 1)")


def desk_config(**overrides) -> ScenarioConfig:
    """Scaled-down profile (p=200, s=5, n_T=100, n_S=150) that preserves the
    n_T << p regime while keeping repeated fits fast."""
    base = dict(p=200, s=5, n_T=100, n_S=150)
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass(frozen=True)
class CovarianceModel:
    """Covariance descriptor plus the factor used to sample rows."""

    kind: str
    matrix: np.ndarray
    root: np.ndarray  # symmetric PSD square root of matrix

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.p))
        if self.kind == "homogeneous":
            return z
        return z @ self.root


@dataclass(frozen=True)
class GroundTruth:
    """What the generator actually planted, target first where indexed."""

    beta0: np.ndarray
    deltas: np.ndarray          # (K, p)
    sigmas: tuple               # K+1 CovarianceModel, target first
    epsilon_D: float
    realized_h: tuple           # l1 norm of each contrast as drawn

    def beta_k(self, k: int) -> np.ndarray:
        """Source k's own coefficient vector (k in 1..K)."""
        return self.beta0 + self.deltas[k - 1]


def _stream(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, tag, index)))


def gen_model_shift(kind: str, K: int, h: float, p: int, seed: int = 0) -> np.ndarray:
    """Draw the K per-source contrast vectors.

    diverse: first K-1 contrasts have N(0, (h/50)^2) entries on the leading
    support and the last contrast is their negated sum, so they cancel
    exactly; nondiverse: every contrast has N(0.1, (h/50)^2) entries there.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if K < 1:
        raise ValueError("need K >= 1 (the diverse kind balances on the last task)")
    if kind not in SHIFT_KINDS:
        raise ValueError(f"kind must be one of {SHIFT_KINDS}")
    rng = _stream(seed, _TAG_SHIFT, 0)
    m = min(SHIFT_SUPPORT, p)
    sd = h / SHIFT_SUPPORT
    deltas = np.zeros((K, p))
    if kind == "diverse":
        for k in range(K - 1):
            deltas[k, :m] = rng.normal(0.0, sd, m)
        deltas[K - 1] = -deltas[: K - 1].sum(axis=0)
    else:
        for k in range(K):
            deltas[k, :m] = rng.normal(0.1, sd, m)
    return deltas


def _symmetric_root(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sigma)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gen_covariance(kind: str, p: int, seed: int = 0, arrow_c: float = 0.5) -> CovarianceModel:
    """Build one covariance descriptor with its sampling factor."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if kind == "homogeneous":
        eye = np.eye(p)
        return CovarianceModel(kind, eye, eye)
    if kind == "heterogeneous":
        rng = _stream(seed, _TAG_COV, 0)
        A = np.where(rng.random((p, p)) < 0.3, 0.3, 0.0)
        sigma = A.T @ A + np.eye(p)
        return CovarianceModel(kind, sigma, _symmetric_root(sigma))
    if kind == "arrowhead":
        sigma = arrowhead_sigma(p, arrow_c)
        return CovarianceModel(kind, sigma, _symmetric_root(sigma))
    raise ValueError(f"kind must be one of {DESIGN_KINDS}")


def arrowhead_sigma(p: int, c: float) -> np.ndarray:
    """Bounded-spectrum covariance whose leading row/column carry the mass.

    A has ones on the diagonal and in the first row/column; its extreme
    eigenvalues are 1 -+ sqrt(p-1), so scaling by alpha = c/sqrt(p-1) pins
    the covariance spectrum to [1-c, 1+c].
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if not (0 < c < 1):
        raise ValueError("c must lie in (0, 1)")
    alpha = c / np.sqrt(p - 1)
    A = np.eye(p)
    A[0, :] = 1.0
    A[:, 0] = 1.0
    return alpha * A + (1 - alpha) * np.eye(p)


def gen_scenario(cfg: ScenarioConfig):
    """Materialize one (TransferProblem, GroundTruth) pair from a config."""
    p, K = cfg.p, cfg.K
    beta0 = np.zeros(p)
    beta0[: cfg.s] = cfg.beta_level
    deltas = (gen_model_shift(cfg.shift_kind, K, cfg.h, p, cfg.seed)
              if K else np.zeros((0, p)))

    sigmas = [gen_covariance("homogeneous", p)]
    for k in range(1, K + 1):
        sigmas.append(gen_covariance(cfg.design_kind, p,
                                     seed=_child_seed(cfg.seed, k),
                                     arrow_c=cfg.arrow_c))

    tasks = []
    for k in range(K + 1):
        rng = _stream(cfg.seed, _TAG_ROWS, k)
        n = cfg.n_T if k == 0 else cfg.n_S
        beta = beta0 if k == 0 else beta0 + deltas[k - 1]
        X = sigmas[k].sample(rng, n)
        y = X @ beta + cfg.noise_sd * rng.standard_normal(n)
        tasks.append(TaskSample(X, y, task_id=k))

    problem = TransferProblem(tasks[0], tuple(tasks[1:]))
    eps = diversity_epsilon(deltas, cfg.n_S, cfg.n_T) if K else 0.0
    truth = GroundTruth(beta0, deltas, tuple(sigmas), eps,
                        tuple(float(np.abs(d).sum()) for d in deltas))
    return problem, truth


def _child_seed(seed: int, k: int) -> int:
    # distinct covariance draw per source, stable across K
    return int(np.random.SeedSequence((seed, _TAG_COV, k)).generate_state(1)[0])


# ------------------------------------------------------- bias summaries


def c_sigma(sigmas, sigma0) -> float:
    """Heterogeneity amplification factor of the pooled first stage.

    1 + max over coordinates j and sources k of the l1 norm of row j of
    (Sigma_k - Sigma_0) SigmaBar^{-1}, SigmaBar the source average.
    """
    sigmas = [np.asarray(S, dtype=float) for S in sigmas]
    sigma0 = np.asarray(sigma0, dtype=float)
    bar = np.mean(sigmas, axis=0)
    worst = 0.0
    for S in sigmas:
        # rows of (S - sigma0) @ inv(bar) via one dense solve
        M = np.linalg.solve(bar.T, (S - sigma0).T).T
        worst = max(worst, float(np.abs(M).sum(axis=1).max()))
    return 1.0 + worst


def pooled_bias(sigmas, deltas) -> np.ndarray:
    """First-stage bias of pooling all source rows into one regression:
    (sum_k Sigma_k)^{-1} sum_k Sigma_k delta_k."""
    sigmas = [np.asarray(S, dtype=float) for S in sigmas]
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    if len(sigmas) != deltas.shape[0]:
        raise ValueError("need one covariance per contrast")
    total = np.sum(sigmas, axis=0)
    weighted = np.sum([S @ d for S, d in zip(sigmas, deltas)], axis=0)
    return np.linalg.solve(total, weighted)


def fused_bias(deltas) -> np.ndarray:
    """First-stage bias of the fused co-trained average: the plain contrast
    mean, free of the covariances."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    return deltas.mean(axis=0)


# ------------------------------------------------------------- file io


def write_config(cfg: ScenarioConfig, path) -> None:
    """Plain key=value scenario file, one field per line."""
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in dataclasses.fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_pairs(text: str) -> dict:
    """key=value lines -> string dict; '#' starts a comment, blanks skipped."""
    pairs = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    return pairs


def config_from_pairs(pairs: dict) -> ScenarioConfig:
    """Coerce a string dict into a ScenarioConfig; unknown keys are an error."""
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(pairs) - fields)
    if unknown:
        raise ValueError(f"unknown scenario keys {unknown}")
    typed = {}
    for key, value in pairs.items():
        if key in ("shift_kind", "design_kind"):
            typed[key] = value
        elif key in ("beta_level", "h", "noise_sd", "arrow_c"):
            typed[key] = float(value)
        else:
            typed[key] = int(value)
    return ScenarioConfig(**typed)


def read_config(path) -> ScenarioConfig:
    """Parse a key=value scenario file; unknown keys are an error."""
    return config_from_pairs(parse_pairs(Path(path).read_text()))


def export_csv(problem: TransferProblem, directory, prefix: str = "task") -> list:
    """One CSV per task (target first), features then response, 17 significant
    digits so a rerun is byte-comparable."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for sample in (problem.target, *problem.sources):
        path = directory / f"{prefix}{sample.task_id}.csv"
        header = ",".join([f"x{j+1}" for j in range(sample.p)] + ["y"])
        body = np.column_stack([sample.design, sample.responses])
        np.savetxt(path, body, fmt="%.17g", delimiter=",", header=header, comments="")
        paths.append(path)
    return paths


def load_task_csv(path) -> TaskSample:
    """Read back a task file written by export_csv."""
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    name = Path(path).stem
    digits = "".join(ch for ch in name if ch.isdigit())
    return TaskSample(body[:, :-1], body[:, -1], task_id=int(digits) if digits else 0)
