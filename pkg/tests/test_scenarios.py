import dataclasses

import numpy as np
import pytest

from transfusion import (
    ScenarioConfig,
    arrowhead_sigma,
    c_sigma,
    desk_config,
    export_csv,
    fused_bias,
    gen_covariance,
    gen_model_shift,
    gen_scenario,
    load_task_csv,
    pooled_bias,
    read_config,
    write_config,
)


# ------------------------------------------------------------ model shifts


def test_diverse_contrasts_cancel_exactly():
    for K in (1, 2, 4, 7):
        for seed in (0, 1, 99):
            deltas = gen_model_shift("diverse", K, 12.0, 120, seed=seed)
            assert deltas.shape == (K, 120)
            assert np.array_equal(deltas.sum(axis=0), np.zeros(120))


def test_shift_support_confined_to_first_fifty():
    deltas = gen_model_shift("nondiverse", 3, 12.0, 500, seed=2)
    assert np.all(deltas[:, 50:] == 0.0)
    assert np.any(deltas[:, :50] != 0.0)
    # small p: support is the whole vector
    deltas = gen_model_shift("nondiverse", 2, 6.0, 30, seed=2)
    assert deltas.shape == (2, 30)


def test_nondiverse_entries_center_on_a_tenth():
    # Monte-Carlo mean of the supported entries across 200 seeds
    vals = []
    for seed in range(200):
        deltas = gen_model_shift("nondiverse", 2, 12.0, 80, seed=seed)
        vals.append(deltas[:, :50].mean())
    assert abs(np.mean(vals) - 0.1) <= 0.01


def test_shift_kind_validation():
    with pytest.raises(ValueError):
        gen_model_shift("sideways", 2, 12.0, 100)


# ------------------------------------------------------------- covariances


def test_homogeneous_covariance_is_identity():
    model = gen_covariance("homogeneous", 17)
    assert np.array_equal(model.matrix, np.eye(17))


def test_heterogeneous_covariance_symmetric_psd_diag_at_least_one():
    for seed in range(5):
        model = gen_covariance("heterogeneous", 25, seed=seed)
        S = model.matrix
        assert np.array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-10
        assert np.all(np.diag(S) >= 1.0)


def test_sampler_empirical_covariance_matches_descriptor():
    p = 8
    model = gen_covariance("heterogeneous", p, seed=3)
    rng = np.random.default_rng(0)
    X = model.sample(rng, 50 * p * 10)
    emp = X.T @ X / X.shape[0]
    rel = np.linalg.norm(emp - model.matrix) / np.linalg.norm(model.matrix)
    assert rel <= 0.1


def test_arrowhead_matrix_eigen_endpoints():
    for p in (9, 26, 101):
        A = np.eye(p)
        A[0, :] = 1.0
        A[:, 0] = 1.0
        eigs = np.linalg.eigvalsh(A)
        root = np.sqrt(p - 1)
        assert abs(eigs.min() - (1 - root)) <= 1e-8
        assert abs(eigs.max() - (1 + root)) <= 1e-8
        # and the scaled covariance pins its spectrum to [1-c, 1+c]
        for c in (0.2, 0.5, 0.9):
            sig = arrowhead_sigma(p, c)
            se = np.linalg.eigvalsh(sig)
            assert abs(se.min() - (1 - c)) <= 1e-8
            assert abs(se.max() - (1 + c)) <= 1e-8


def test_arrowhead_p2_half_exact():
    expected = 0.5 * np.array([[1.0, 1.0], [1.0, 1.0]]) + 0.5 * np.eye(2)
    assert np.allclose(arrowhead_sigma(2, 0.5), expected, atol=1e-15)


def test_arrowhead_validation():
    with pytest.raises(ValueError):
        arrowhead_sigma(1, 0.5)
    with pytest.raises(ValueError):
        arrowhead_sigma(10, 1.0)
    with pytest.raises(ValueError):
        arrowhead_sigma(10, 0.0)


# ---------------------------------------------------- heterogeneity constant


def test_c_sigma_identical_designs_is_exactly_one():
    S = gen_covariance("heterogeneous", 12, seed=1).matrix
    assert c_sigma([S, S.copy()], S) == 1.0


def test_c_sigma_two_times_identity_example():
    p = 6
    value = c_sigma([2.0 * np.eye(p)], np.eye(p))
    assert abs(value - 1.5) <= 1e-12


def test_c_sigma_arrowhead_sqrt_p_growth():
    vals = {p: c_sigma([arrowhead_sigma(p, 0.5)], np.eye(p))
            for p in (100, 400)}
    ratio = vals[400] / vals[100]
    assert 1.6 <= ratio <= 2.4


# ----------------------------------------------------------- pooling bias


def test_pooled_bias_equals_fused_bias_for_identical_covariances():
    rng = np.random.default_rng(5)
    S = gen_covariance("heterogeneous", 7, seed=2).matrix
    deltas = rng.normal(size=(3, 7))
    pb = pooled_bias([S] * 3, deltas)
    assert np.max(np.abs(pb - fused_bias(deltas))) <= 1e-10


def test_pooled_bias_zero_contrasts():
    sig = [gen_covariance("heterogeneous", 5, seed=k).matrix for k in range(2)]
    assert np.max(np.abs(pooled_bias(sig, np.zeros((2, 5))))) == 0.0


def test_pooled_bias_amplified_by_arrowhead():
    # one arrowhead task with a contrast, one identity task without; the
    # fused average ignores the designs while pooling mixes them in
    p = 100
    designs = [arrowhead_sigma(p, 0.5), np.eye(p)]
    ones = np.vstack([np.ones(p), np.zeros(p)])
    assert np.abs(pooled_bias(designs, ones)).max() \
        > np.abs(fused_bias(ones)).max()
    # a single-coordinate contrast leaks into every coordinate when pooled
    spike = np.zeros((2, p))
    spike[0, 0] = 1.0
    pb = pooled_bias(designs, spike)
    fb = fused_bias(spike)
    assert np.abs(pb).sum() > 3 * np.abs(fb).sum()
    assert np.count_nonzero(np.abs(pb) > 1e-12) == p
    assert np.count_nonzero(fb) == 1


def test_pooled_bias_shape_mismatch():
    with pytest.raises(ValueError):
        pooled_bias([np.eye(3)], np.zeros((2, 3)))


# -------------------------------------------------------------- scenarios


def test_default_config_mirrors_simulation_setting():
    cfg = ScenarioConfig()
    assert (cfg.p, cfg.s, cfg.n_T, cfg.n_S) == (500, 10, 150, 200)
    assert (cfg.beta_level, cfg.h, cfg.noise_sd) == (0.3, 12.0, 1.0)


def test_default_truth_has_ten_entries_at_three_tenths():
    problem, truth = gen_scenario(ScenarioConfig(K=1))
    assert np.count_nonzero(truth.beta0) == 10
    assert np.all(truth.beta0[:10] == 0.3)
    assert np.all(truth.beta0[10:] == 0.0)
    assert problem.target.n == 150 and problem.target.p == 500


def test_diverse_scenario_has_zero_diversity_measure():
    _, truth = gen_scenario(desk_config(K=3, shift_kind="diverse", seed=4))
    assert np.array_equal(truth.deltas.sum(axis=0), np.zeros(200))
    assert truth.epsilon_D == 0.0


def test_target_design_empirically_isotropic():
    cfg = desk_config(p=40, s=4, n_T=5000, K=0, seed=8)
    problem, _ = gen_scenario(cfg)
    emp = problem.target.design.T @ problem.target.design / 5000
    off = emp - np.diag(np.diag(emp))
    assert np.abs(off).max() <= 0.1
    assert np.abs(np.diag(emp) - 1.0).max() <= 0.2


def test_generation_is_bit_deterministic():
    cfg = desk_config(p=30, s=3, n_T=25, n_S=20, K=2,
                      design_kind="heterogeneous", seed=13)
    a, ta = gen_scenario(cfg)
    b, tb = gen_scenario(cfg)
    assert a.target.design.tobytes() == b.target.design.tobytes()
    assert a.target.responses.tobytes() == b.target.responses.tobytes()
    for sa, sb in zip(a.sources, b.sources):
        assert sa.design.tobytes() == sb.design.tobytes()
        assert sa.responses.tobytes() == sb.responses.tobytes()
    assert np.array_equal(ta.beta0, tb.beta0)
    assert np.array_equal(ta.deltas, tb.deltas)


def test_different_seeds_differ():
    a, _ = gen_scenario(desk_config(p=20, s=2, n_T=15, K=0, seed=0))
    b, _ = gen_scenario(desk_config(p=20, s=2, n_T=15, K=0, seed=1))
    assert not np.array_equal(a.target.design, b.target.design)


def test_realized_shift_sizes_recorded():
    _, truth = gen_scenario(desk_config(K=3, seed=2))
    assert len(truth.realized_h) == 3
    assert all(np.isfinite(v) and v > 0 for v in truth.realized_h)


def test_source_responses_use_shifted_coefficients():
    cfg = desk_config(p=60, s=3, n_T=20, n_S=400, K=2, noise_sd=1e-8, seed=6)
    problem, truth = gen_scenario(cfg)
    for k, sample in enumerate(problem.sources, start=1):
        fitted = np.linalg.lstsq(sample.design, sample.responses, rcond=None)[0]
        assert np.abs(fitted - truth.beta_k(k)).max() <= 1e-5


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(p=5, s=9)
    with pytest.raises(ValueError):
        ScenarioConfig(K=-1)
    with pytest.raises(ValueError):
        ScenarioConfig(noise_sd=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(shift_kind="other")
    with pytest.raises(ValueError):
        ScenarioConfig(arrow_c=1.5)


# ---------------------------------------------------------------- file io


def test_config_file_round_trip(tmp_path):
    cfg = desk_config(K=2, shift_kind="nondiverse",
                      design_kind="heterogeneous", h=6.0, seed=21)
    path = tmp_path / "scenario.cfg"
    write_config(cfg, path)
    assert read_config(path) == cfg


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("p=10\ns=2\nwibble=3\n")
    with pytest.raises(ValueError, match="unknown"):
        read_config(path)


def test_config_comments_and_blanks_ignored(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n\np=10\ns=2  # trailing\nn_T=8\nK=0\n")
    cfg = read_config(path)
    assert (cfg.p, cfg.s, cfg.n_T, cfg.K) == (10, 2, 8, 0)


def test_task_csv_round_trip(tmp_path):
    problem, _ = gen_scenario(desk_config(p=9, s=2, n_T=12, n_S=10, K=2, seed=3))
    paths = export_csv(problem, tmp_path)
    assert len(paths) == 3
    back = load_task_csv(tmp_path / "task0.csv")
    assert np.array_equal(back.design, problem.target.design)
    assert np.array_equal(back.responses, problem.target.responses)
    back1 = load_task_csv(tmp_path / "task1.csv")
    assert np.array_equal(back1.responses, problem.sources[0].responses)
