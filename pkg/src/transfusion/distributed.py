"""One-shot distributed fitting: source nodes ship debiased summaries,
the target node aggregates them with its own sample.

Each source fits locally and sends a single message holding its debiased
coefficient vector; nothing else crosses the node boundary. The target
reconstructs a stacked least-squares system in which every source block
is sqrt(n_S) times the identity, so the aggregation solve touches only
the summaries and the target rows. A final target-only correction step
mirrors the centralized pipeline. Node simulation is in-process: the
contract is the message boundary, not a transport.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .debias import PseudoSample, debias_estimator
from .estimators import (
    ONE_STEP_FAMILIES,
    RegimeChoice,
    Step1Result,
    TuningGrid,
    _cv_config,
    _cv_tilde,
    _FamilyFit,
    _PathStepper,
    _run_cv_paths,
    _solve_path,
    _target_folds,
    _tilde_grid_for,
    fold_labels,
    lambda0_grid_for,
    step2_debias,
)
from .solver import SolverConfig, StackedOperator, solve_weighted_lasso
from .types import (
    BlockParams,
    FitResult,
    PenaltyWeights,
    TaskSample,
    w_average,
)

WIRE_MAGIC = b"DTFX"
WIRE_VERSION = 1
# magic, version, p, source_index, n_S; little-endian, no padding
_HEADER = struct.Struct("<4sHIHI")
HEADER_BYTES = _HEADER.size


@dataclass(frozen=True)
class SourceMessage:
    """The single artifact a source node transmits.

    payload_bytes counts the serialized size: 8 bytes per coefficient
    plus the fixed header.
    """

    pseudo: PseudoSample
    n_S: int
    payload_bytes: int

    def __post_init__(self):
        if self.n_S < 1:
            raise ValueError("n_S must be a positive sample count")
        if self.payload_bytes < 8 * self.p:
            raise ValueError("payload cannot be smaller than the coefficient vector")

    @property
    def p(self) -> int:
        return self.pseudo.beta_tilde.shape[0]


@dataclass(frozen=True)
class DWeights:
    """Theory-form penalty levels for the distributed aggregation step.

    lambdas holds the per-source levels (a_k * lambda0); surrogate_deltas
    is (delta_0, per-source deltas), the slack terms the levels are built
    from.
    """

    lambda0: float
    lambdas: tuple
    surrogate_deltas: tuple

    def __post_init__(self):
        d0, dk = self.surrogate_deltas
        vals = (self.lambda0, *self.lambdas, d0, *dk)
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError("weights and slack terms must be finite and nonnegative")

    @property
    def K(self) -> int:
        return len(self.lambdas)

    def to_penalty_weights(self) -> PenaltyWeights:
        return PenaltyWeights(self.lambda0,
                              tuple(lk / self.lambda0 for lk in self.lambdas))


def encode_message(msg: SourceMessage) -> bytes:
    """Serialize to the wire format; exact round-trip with decode_message."""
    beta = np.ascontiguousarray(msg.pseudo.beta_tilde, dtype="<f8")
    header = _HEADER.pack(WIRE_MAGIC, WIRE_VERSION, beta.shape[0],
                          msg.pseudo.source_index, msg.n_S)
    return header + beta.tobytes()


def decode_message(buf: bytes) -> SourceMessage:
    """Parse one serialized message.

    The wire format carries only the header fields and the coefficient
    payload, so the decoded pseudo-sample has NaN tuning diagnostics.
    """
    if len(buf) < HEADER_BYTES:
        raise ValueError("buffer shorter than the fixed header")
    magic, version, p, source_index, n_S = _HEADER.unpack_from(buf)
    if magic != WIRE_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise ValueError(f"unsupported wire version {version}")
    if len(buf) != HEADER_BYTES + 8 * p:
        raise ValueError("payload length does not match the header dimension")
    beta = np.frombuffer(buf, dtype="<f8", count=p, offset=HEADER_BYTES).copy()
    pseudo = PseudoSample(beta_tilde=beta, source_index=source_index,
                          lambda_used=math.nan, mu_used=math.nan,
                          theta_diagnostics=(math.nan, math.nan))
    return SourceMessage(pseudo=pseudo, n_S=n_S, payload_bytes=len(buf))


def source_precompute(sample: TaskSample, lambda_k: float | None = None,
                      mu_k: float | None = None,
                      cfg: SolverConfig | None = None) -> SourceMessage:
    """Fit and debias one source locally, packaged for transmission.

    The message's source index is the sample's task_id.
    """
    pseudo = debias_estimator(sample, lambda_k=lambda_k, mu_k=mu_k, cfg=cfg)
    return SourceMessage(pseudo=pseudo, n_S=sample.n,
                         payload_bytes=HEADER_BYTES + 8 * sample.p)


def _common_dims(target: TaskSample, messages) -> tuple:
    p = target.p
    for m in messages:
        if m.p != p:
            raise ValueError("all messages must share the target dimension p")
    n_S = {m.n_S for m in messages}
    if len(n_S) > 1:
        raise ValueError("messages must share a common source sample size")
    return (n_S.pop() if n_S else 0, len(messages))


def _surrogate_system(target: TaskSample, messages):
    """Stacked responses and identity scales for the aggregation solve."""
    n_S, K = _common_dims(target, messages)
    root = math.sqrt(n_S) if K else 1.0
    scales = [root] * K
    betas = np.stack([m.pseudo.beta_tilde for m in messages]) if K else np.empty((0, target.p))
    y = np.concatenate([root * betas.ravel(), target.responses])
    return scales, betas, y, n_S


def aggregate_step1(target: TaskSample, messages, weights: PenaltyWeights,
                    cfg: SolverConfig | None = None, theta0=None,
                    lipschitz: float | None = None) -> Step1Result:
    """Joint fit of the summaries and the target rows under the fused penalty.

    Sees only SourceMessage contents, never the source samples themselves.
    The source blocks of the stacked system are sqrt(n_S) times the
    identity, so their rows pin each surrogate vector; the quadratic part
    is averaged over the stacked rows.
    """
    scales, _, y, n_S = _surrogate_system(target, messages)
    K = len(messages)
    if weights.K != K:
        raise ValueError(f"weights carry {weights.K} source levels, got {K} messages")
    op = StackedOperator.identity_form(scales, target.design) if K else \
        StackedOperator([], target.design)
    bp, info = solve_weighted_lasso(op, y, weights.block_levels(), cfg,
                                    theta0=theta0, lipschitz=lipschitz)
    blocks = bp.beta_view()
    w_hat = w_average(blocks, n_S, target.n) if K else blocks[0]
    return Step1Result(blocks, w_hat, bp, info)


def theorem4_weights(p: int, K: int, n_S: int, n_T: int,
                     sparsity: int | None = None, h_surrogates=None,
                     c0: float = 1.0) -> DWeights:
    """Theory-form aggregation weights from known sparsity and shift sizes.

    For controlled experiments where the simulator knows the truth; the
    shipping default is the cross-validated dtransfusion_fit route.
    """
    if sparsity is None or h_surrogates is None:
        raise ValueError("sparsity and per-source shift surrogates are required; "
                         "without them use the cross-validated dtransfusion_fit route")
    if K < 1 or len(h_surrogates) != K:
        raise ValueError("need one shift surrogate per source")
    h = np.asarray(h_surrogates, dtype=float)
    if np.any(h < 0):
        raise ValueError("shift surrogates must be nonnegative")
    N = K * n_S + n_T
    logp = math.log(p)
    hbar = (n_S / N) * float(h.sum())
    delta_k = sparsity * logp / N + (n_S / N) * math.sqrt(logp / n_S) * h
    delta_0 = K * sparsity * logp / N + math.sqrt(logp / n_S) * hbar
    if np.all(h == 0):
        ratios = np.full(K, 8.0)
    elif np.any(h == 0):
        raise ValueError("shift surrogates must be all zero or all positive")
    else:
        ratios = np.maximum(8.0, hbar / h)
    lambda0 = c0 * (math.sqrt(logp / N) + delta_0)
    lambdas = c0 * ratios * (math.sqrt((n_S / N) * (logp / N)) + delta_k)
    return DWeights(lambda0=float(lambda0), lambdas=tuple(float(v) for v in lambdas),
                    surrogate_deltas=(float(delta_0), tuple(float(v) for v in delta_k)))


@dataclass(frozen=True)
class CommunicationReport:
    """Byte accounting for one distributed fit."""

    total_bytes: int
    per_node_bytes: tuple
    rounds: int
    raw_data_ratio: float  # centralized raw-sample bytes over summary payload bytes

    def __post_init__(self):
        if self.rounds != 1:
            raise ValueError("the protocol is one-shot by construction")


def communication_report(messages) -> CommunicationReport:
    """Sum what crossed the wire; the protocol always uses a single round."""
    per_node = tuple(int(m.payload_bytes) for m in messages)
    raw = sum(8 * m.n_S * (m.p + 1) for m in messages)
    payload_only = sum(8 * m.p for m in messages)
    ratio = raw / payload_only if payload_only else math.nan
    return CommunicationReport(total_bytes=sum(per_node), per_node_bytes=per_node,
                               rounds=1, raw_data_ratio=float(ratio))


# --------------------------------------------------------------- CV engine


D_ONE, D_TWO = "dtransfusion_one", "dtransfusion_two"


def _dfamily_cv(target: TaskSample, messages, a_vec, grid: TuningGrid,
                labels, cfg_cv) -> _FamilyFit:
    """lambda0 CV for the aggregation solve; only target rows fold."""
    X0, y0 = target.design, target.responses
    scales, betas, y_full, n_S = _surrogate_system(target, messages)
    K, p = len(messages), target.p
    root = scales[0] if K else 1.0
    y_src = root * betas.ravel()

    def w_of(theta_flat, n_T_rows):
        bp = BlockParams.from_flat(theta_flat, K, p)
        blocks = bp.beta_view()
        return w_average(blocks, n_S, n_T_rows) if K else blocks[0]

    op_full = StackedOperator.identity_form(scales, X0) if K else StackedOperator([], X0)
    grid0 = grid.lambda0_grid
    if grid0 is None:
        grid0 = lambda0_grid_for(op_full, y_full, a_vec, grid.n_points, grid.ratio)
    grid0 = np.asarray(grid0, dtype=float)
    levels_for = (lambda lam: np.append(a_vec * lam, lam)) if K else (lambda lam: [lam])

    full = _PathStepper(op_full, y_full, levels_for, cfg_cv)
    vals, trains = _target_folds(labels)
    folds = [_PathStepper(
        StackedOperator.identity_form(scales, X0[train]) if K else StackedOperator([], X0[train]),
        np.concatenate([y_src, y0[train]]), levels_for, cfg_cv)
        for train in trains]

    theta_full, w_full, w_fold, curve = _run_cv_paths(
        full, folds, vals, trains, X0, y0, grid0, w_of)
    best = int(np.argmin(curve))
    return _FamilyFit(np.asarray(a_vec, dtype=float), grid0[: curve.size], curve, best,
                      w_full, theta_full, w_fold, full.L)


def _dfit_engine(target: TaskSample, messages, grid: TuningGrid | None,
                 cfg: SolverConfig | None, seed: int, candidates, folds: int):
    cfg = cfg or SolverConfig()
    grid = grid or TuningGrid()
    cfg_cv = _cv_config(cfg)
    labels = fold_labels(target.n, folds, seed)
    n_S, K = _common_dims(target, messages)
    N = K * n_S + target.n
    if K == 0:
        candidates = (D_ONE,)

    fams = {}

    def family(name: str) -> _FamilyFit:
        if name not in fams:
            if name == "uniform":
                a = np.ones(K)
            else:
                choice = RegimeChoice(name.removeprefix("regime_"))
                a = np.full(K, choice.a_value(n_S, N))
            fams[name] = _dfamily_cv(target, messages, a, grid, labels, cfg_cv)
        return fams[name]

    evaluated = []
    for tag in candidates:
        if tag == D_ONE:
            menu = ONE_STEP_FAMILIES if K else ("regime_A",)
            best_name = min(menu, key=lambda nm: family(nm).cv_error)
            fam = family(best_name)
            evaluated.append({"tag": D_ONE, "fam": fam, "family": best_name,
                              "cv_error": fam.cv_error, "lambda0": fam.lambda0,
                              "tilde_idx": None, "grid_t": None, "tilde_lambda": None})
        else:
            # the weight-family dichotomy is resolved by validation error
            entries = []
            for nm in ("regime_A", "regime_Ac"):
                fam = family(nm)
                grid_t = _tilde_grid_for(target, fam.w_full[fam.best_idx], grid)
                tidx, curve_t = _cv_tilde(target, fam.w_fold[:, fam.best_idx],
                                          labels, grid_t, cfg_cv)
                entries.append({"tag": D_TWO, "fam": fam, "family": nm,
                                "cv_error": float(curve_t[tidx]),
                                "lambda0": fam.lambda0, "tilde_idx": tidx,
                                "grid_t": grid_t,
                                "tilde_lambda": float(grid_t[tidx])})
            evaluated.append(min(entries, key=lambda c: c["cv_error"]))
    winner = min(evaluated, key=lambda c: c["cv_error"])

    fam = winner["fam"]
    weights = PenaltyWeights(fam.lambda0, tuple(fam.a * 1.0))
    step1 = aggregate_step1(target, messages, weights, cfg,
                            theta0=fam.theta_full[fam.best_idx], lipschitz=fam.lipschitz)
    step2 = None
    if winner["tag"] == D_TWO:
        grid_t, tidx = winner["grid_t"], winner["tilde_idx"]
        op0 = StackedOperator([], target.design)
        resid = target.responses - target.design @ step1.w_hat
        warm, L0 = _solve_path(op0, resid, lambda lam: [lam], grid_t[: tidx + 1], cfg_cv)
        step2 = step2_debias(target, step1.w_hat, float(grid_t[tidx]), cfg,
                             theta0=warm[-1], lipschitz=L0)

    if step2 is None:
        info = step1.info
        result = FitResult(
            beta_target=step1.w_hat, w_hat=step1.w_hat,
            per_task_betas=step1.blocks, objective_trace=info.objective_trace,
            kkt_residual=info.kkt_residual, iterations=info.iterations,
            converged=info.converged, strategy=D_ONE, delta_hat=None,
            lambda0=winner["lambda0"], tilde_lambda=None,
            fusion_family=winner["family"])
    else:
        result = FitResult(
            beta_target=step2.beta_target, w_hat=step1.w_hat,
            per_task_betas=step1.blocks,
            objective_trace=step2.info.objective_trace,
            kkt_residual=max(step1.info.kkt_residual, step2.info.kkt_residual),
            iterations=step1.info.iterations + step2.info.iterations,
            converged=step1.info.converged and step2.info.converged,
            strategy=D_TWO, delta_hat=step2.delta_hat,
            lambda0=winner["lambda0"], tilde_lambda=winner["tilde_lambda"],
            fusion_family=winner["family"])
    if not result.converged:
        raise RuntimeError("selected candidate did not converge; loosen tolerances "
                           "or raise max_iter")
    return result


def dtransfusion_fit(target: TaskSample, messages, grid: TuningGrid | None = None,
                     cfg: SolverConfig | None = None, strategy: str | None = None,
                     validation: int | None = None, seed: int = 0) -> FitResult:
    """Aggregate the source summaries with the target sample and fit.

    Runs the aggregation solve with CV-tuned penalty, optionally followed
    by the target-only correction step; with strategy None both variants
    are fitted and the validation winner is returned. With no messages
    this degenerates to the cross-validated target LASSO.
    """
    if strategy is None:
        candidates = (D_ONE, D_TWO)
    elif strategy in (D_ONE, D_TWO):
        candidates = (strategy,)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    folds = (grid or TuningGrid()).folds if validation is None else int(validation)
    return _dfit_engine(target, messages, grid, cfg, seed, candidates, folds)
