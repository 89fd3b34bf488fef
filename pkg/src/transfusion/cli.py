"""Command line front end.

Subcommands: gen (materialize a synthetic scenario as CSVs), fit (one method
on one scenario), bench (run a sweep plan to a records CSV), csigma (design
heterogeneity curve), validate (fast internal self-check battery).

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
All floating output is 17 significant digits, and runtimes are not recorded,
so a rerun with the same inputs is byte-identical.
"""

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (METHODS, fit_method, read_plan, run_bench, summarize,
                    write_records_csv)
from .estimators import TuningGrid
from .scenarios import (ScenarioConfig, arrowhead_sigma, c_sigma, desk_config,
                        export_csv, gen_scenario, read_config, write_config)
from .solver import SolverConfig

USAGE_EXIT, NUMERIC_EXIT = 1, 2

CSIGMA_DIMS = (25, 50, 100, 200, 400)


def profile_setup(name: str):
    """Profile -> (base scenario, tuning grid, solver config)."""
    if name == "desk":
        return (desk_config(),
                TuningGrid(folds=5, n_points=12, ratio=30.0),
                SolverConfig(accelerated=True))
    if name == "paper":
        return ScenarioConfig(), TuningGrid(), SolverConfig(accelerated=True)
    raise ValueError(f"unknown profile {name!r}")


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit with code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None)
    common.add_argument("--out", metavar="PATH", default=None)
    common.add_argument("--seed", type=_u64, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--profile", choices=("desk", "paper"), default="desk")

    parser = _Parser(prog="transfusion",
                     description="transfer learning benchmark toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("gen", parents=[common],
                   help="write one scenario as per-task CSV files")
    fit = sub.add_parser("fit", parents=[common],
                         help="fit one method on one scenario")
    fit.add_argument("--method", choices=METHODS, required=True)
    sub.add_parser("bench", parents=[common],
                   help="run a sweep plan, write a records CSV")
    sub.add_parser("csigma", parents=[common],
                   help="design heterogeneity constant versus dimension")
    sub.add_parser("validate", parents=[common],
                   help="run the internal self-check battery")
    return parser


def _resolve_threads(args) -> int:
    env = os.environ.get("TF_THREADS", "").strip()
    if env:
        threads = int(env)
    elif args.threads is not None:
        threads = int(args.threads)
    else:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _resolve_scenario(args) -> ScenarioConfig:
    base, _, _ = profile_setup(args.profile)
    cfg = read_config(args.config) if args.config else base
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _g17(x) -> str:
    return format(float(x), ".17g")


def _need_out(args):
    if not args.out:
        raise ValueError("this command needs --out")
    return Path(args.out)


# ----------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    out = _need_out(args)
    cfg = _resolve_scenario(args)
    problem, truth = gen_scenario(cfg)
    paths = export_csv(problem, out)
    write_config(cfg, out / "scenario.cfg")
    np.savetxt(out / "beta_true.csv", truth.beta0[None, :],
               fmt="%.17g", delimiter=",")
    print(f"wrote {len(paths)} task files and scenario.cfg to {out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve_scenario(args)
    _, grid, solver_cfg = profile_setup(args.profile)
    problem, truth = gen_scenario(cfg)
    result = fit_method(problem, args.method, grid=grid, cfg=solver_cfg,
                        seed=cfg.seed)
    lines = [f"method={args.method}",
             f"strategy={result.strategy}",
             f"family={result.fusion_family or '-'}",
             f"K={problem.K}",
             f"lambda0={_g17(result.lambda0) if result.lambda0 is not None else '-'}",
             ("tilde_lambda="
              + (_g17(result.tilde_lambda) if result.tilde_lambda is not None else "-")),
             f"l2_error={_g17(np.linalg.norm(result.beta_target - truth.beta0))}",
             f"support_size={int(np.count_nonzero(result.beta_target))}",
             f"converged={result.converged}"]
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_bench(args) -> int:
    if not args.config:
        raise ValueError("bench needs --config with a plan file")
    out = _need_out(args)
    plan = read_plan(args.config)
    if args.seed is not None:
        plan = dataclasses.replace(
            plan, base=dataclasses.replace(plan.base, seed=args.seed))
    _, grid, solver_cfg = profile_setup(args.profile)
    records = run_bench(plan, grid, solver_cfg, threads=_resolve_threads(args))
    write_records_csv(records, out)
    print(f"wrote {len(records)} records to {out}")
    for row in summarize(records):
        print(f"{row.method} K={row.K} n_S={row.n_S} n={row.n_trials} "
              f"mean={_g17(row.mean)} stderr={_g17(row.stderr)} "
              f"median={_g17(row.median)}")
    return 0


def cmd_csigma(args) -> int:
    out = _need_out(args)
    cfg = _resolve_scenario(args)
    lines = ["p,c_sigma"]
    for p in CSIGMA_DIMS:
        value = c_sigma([arrowhead_sigma(p, cfg.arrow_c)], np.eye(p))
        lines.append(f"{p},{_g17(value)}")
        print(f"p={p} c_sigma={_g17(value)}")
    out.write_text("\n".join(lines) + "\n")
    return 0


# ------------------------------------------------------------- self checks


def _selfcheck_battery():
    """Yield (name, callable) pairs; each callable raises on failure."""
    from . import distributed as dist
    from .bench import TrialRecord, read_records_csv, summarize as _summ
    from .estimators import fit_one_step, lasso_baseline, step1_cotrain
    from .solver import StackedOperator, solve_weighted_lasso
    from .types import PenaltyWeights, TaskSample, TransferProblem

    rng = np.random.default_rng(20240817)
    p, n0, n1 = 8, 12, 10
    target = TaskSample(rng.standard_normal((n0, p)), rng.standard_normal(n0))
    source = TaskSample(rng.standard_normal((n1, p)), rng.standard_normal(n1),
                        task_id=1)
    problem = TransferProblem(target, (source,))

    def operator_fidelity():
        op = StackedOperator.from_problem(problem)
        cols = np.column_stack([op.apply(e) for e in np.eye(op.cols)])
        rows = np.column_stack([op.adjoint(e) for e in np.eye(op.N)])
        if np.abs(cols - rows.T).max() > 1e-12:
            raise AssertionError("apply and adjoint disagree")

    def solver_kkt():
        op = StackedOperator.from_problem(problem)
        y = np.concatenate([source.responses, target.responses])
        levels = np.array([0.05, 0.05])
        cfg = SolverConfig(accelerated=True)
        _, info = solve_weighted_lasso(op, y, levels, cfg)
        # a stalled-objective exit still certifies 100x the kkt tolerance
        if not info.converged or info.kkt_residual > 100 * cfg.kkt_tol:
            raise AssertionError(f"kkt residual {info.kkt_residual:.2e}")

    def no_source_reduction():
        grid = TuningGrid(folds=3, n_points=8, ratio=20.0)
        alone = TransferProblem(target)
        a = fit_one_step(alone, grid=grid, seed=3).beta_target
        b = lasso_baseline(target, grid=grid, seed=3).beta_target
        if np.abs(a - b).max() > 1e-8:
            raise AssertionError("K=0 fit differs from the plain LASSO")

    def heavy_fusion_ties_blocks():
        w = PenaltyWeights(0.1, (1e6,))
        res = step1_cotrain(problem, w, cfg=SolverConfig(accelerated=True))
        spread = np.abs(res.blocks[0] - res.blocks[1]).max()
        if spread > 1e-4:
            raise AssertionError(f"fused blocks differ by {spread:.2e}")

    def wire_roundtrip():
        pseudo = dist.source_precompute(source).pseudo
        msg = dist.SourceMessage(pseudo, source.n,
                                 dist.HEADER_BYTES + 8 * source.p)
        back = dist.decode_message(dist.encode_message(msg))
        if back.pseudo.beta_tilde.tobytes() != pseudo.beta_tilde.tobytes():
            raise AssertionError("payload not bit-identical")
        if back.payload_bytes != dist.HEADER_BYTES + 8 * source.p:
            raise AssertionError("payload size off")

    def weight_budget_split():
        w = dist.theorem4_weights(200, 4, 60, 40, sparsity=5,
                                  h_surrogates=(0.5, 1.0, 2.0, 4.0))
        d0, dk = w.surrogate_deltas
        # the per-source slack terms must add back up to the pooled one
        expected = (4 * 5 * np.log(200) / 280
                    + np.sqrt(np.log(200) / 60) * (60 / 280) * 7.5)
        if abs(sum(dk) - d0) > 1e-12 * d0 or abs(d0 - expected) > 1e-12 * d0:
            raise AssertionError("slack terms do not sum to the pooled one")

    def summary_oracle():
        rows = _summ([TrialRecord("s", "lasso", 1, 9, 0, 1.0, 0.0, "t", True),
                      TrialRecord("s", "lasso", 1, 9, 1, 3.0, 0.0, "t", True)])
        if (rows[0].mean, rows[0].stderr, rows[0].median) != (2.0, 1.0, 2.0):
            raise AssertionError("mean/stderr/median oracle broken")

    def records_roundtrip():
        import tempfile
        recs = [TrialRecord("a-b", "tf1", 2, 40, 123, 0.1234567890123456789,
                            0.0, "one_step", True)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "r.csv"
            write_records_csv(recs, path)
            if read_records_csv(path) != recs:
                raise AssertionError("records CSV not lossless")

    def csigma_curve():
        if c_sigma([np.eye(30)], np.eye(30)) != 1.0:
            raise AssertionError("identical designs must give exactly 1")
        vals = [c_sigma([arrowhead_sigma(q, 0.5)], np.eye(q))
                for q in (25, 100, 400)]
        if not (vals[0] < vals[1] < vals[2]):
            raise AssertionError("heterogeneity constant not increasing")

    def scenario_determinism():
        cfg = desk_config(p=30, s=3, n_T=20, n_S=25, K=2, seed=5)
        a, _ = gen_scenario(cfg)
        b, _ = gen_scenario(cfg)
        same = (a.target.design.tobytes() == b.target.design.tobytes()
                and all(x.responses.tobytes() == y.responses.tobytes()
                        for x, y in zip(a.sources, b.sources)))
        if not same:
            raise AssertionError("same config produced different draws")

    yield from [("operator fidelity", operator_fidelity),
                ("solver kkt", solver_kkt),
                ("no-source reduction", no_source_reduction),
                ("heavy fusion ties blocks", heavy_fusion_ties_blocks),
                ("wire roundtrip", wire_roundtrip),
                ("weight budget split", weight_budget_split),
                ("summary oracle", summary_oracle),
                ("records roundtrip", records_roundtrip),
                ("csigma curve", csigma_curve),
                ("scenario determinism", scenario_determinism)]


def cmd_validate(args) -> int:
    failures = 0
    for name, check in _selfcheck_battery():
        try:
            check()
        except Exception as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    print(f"{'all checks passed' if not failures else f'{failures} check(s) failed'}")
    return 0 if not failures else NUMERIC_EXIT


_COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "bench": cmd_bench,
             "csigma": cmd_csigma, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
