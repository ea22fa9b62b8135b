import numpy as np
import pytest

from multicate import (
    B_SMALL,
    DataError,
    FitConfig,
    ScenarioSpec,
    TRUE_RANK,
    assign_treatment,
    generate_covariates,
    generate_gamma,
    generate_outcomes,
    generate_truth,
    inject_outliers,
    make_main_effect,
    run_scenario,
)


# =============================================================================
# generators
# =============================================================================


def test_covariates_shape_and_intercept(rng):
    X = generate_covariates(50, 10, 0.0, rng)
    assert X.shape == (50, 11)
    assert np.array_equal(X[:, 0], np.ones(50))
    with pytest.raises(DataError):
        generate_covariates(10, 3, 1.0, rng)
    with pytest.raises(DataError):
        generate_covariates(10, 3, -0.1, rng)


def test_covariates_equicorrelation(rng):
    X = generate_covariates(60000, 4, 1.0 / 3.0, rng)
    emp = np.corrcoef(X[:, 1:], rowvar=False)
    off = emp[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off - 1.0 / 3.0) < 0.02)
    assert np.all(np.abs(X[:, 1:].std(axis=0) - 1.0) < 0.02)


def test_main_effect_pattern():
    B = make_main_effect(12, 3, 0.7)
    assert B.shape == (13, 3)
    assert np.all(B[3:11] == 0.7)
    assert np.all(B[:3] == 0.0)
    assert np.all(B[11:] == 0.0)
    with pytest.raises(DataError, match="p >= 10"):
        make_main_effect(9, 3, 0.7)


def test_gamma_sparse_patterns_frozen(rng):
    g3 = generate_gamma(3, 10, 10, rng)
    assert g3.shape == (11, 10)
    assert np.all(g3[0] == 0.0)
    assert np.all(g3[1:5, :4] == 1.0)
    assert np.all(g3[5:] == 0.0)
    assert np.all(g3[:, 4:] == 0.0)
    assert np.linalg.matrix_rank(g3) == 1

    g4 = generate_gamma(4, 10, 10, rng)
    # overlap of the two unit blocks doubles the middle 2x2 cell
    assert g4[1, 1] == 1.0 and g4[3, 3] == 2.0 and g4[5, 5] == 1.0
    assert g4[1, 5] == 0.0 and g4[5, 1] == 0.0
    assert np.linalg.matrix_rank(g4) == 2


def test_gamma_random_patterns(rng):
    g1 = generate_gamma(1, 8, 5, rng)
    assert g1.shape == (9, 5)
    assert np.all(g1[0] == 0.0)
    assert np.linalg.matrix_rank(g1[1:]) == 1
    assert np.all(g1[1:] >= 0.0) and np.all(g1[1:] <= 1.0)
    g2 = generate_gamma(2, 8, 5, rng)
    assert np.linalg.matrix_rank(g2[1:]) == 2
    ghi = generate_gamma(1, 8, 5, rng, low=2.0, high=3.0)
    assert np.all(ghi[1:] >= 4.0) and np.all(ghi[1:] <= 9.0)
    with pytest.raises(DataError):
        generate_gamma(3, 3, 10, rng)
    with pytest.raises(DataError):
        generate_gamma(5, 10, 10, rng)


def test_outcome_noise_covariance(rng):
    n, q = 60000, 4
    X = np.hstack([np.ones((n, 1)), rng.standard_normal((n, 2))])
    gamma = rng.standard_normal((3, q))
    B = rng.standard_normal((3, q)) * 0.3
    T = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    z = 1.0 / 3.0
    Y = generate_outcomes(X, gamma, B, T, z, rng)
    main = (X @ B) ** 2
    te = (T / 2.0)[:, None] * (X @ gamma)
    resid = Y - main - te
    emp = np.cov(resid, rowvar=False)
    expect = (2.0 - z) * np.eye(q) + z * np.ones((q, q))
    assert np.max(np.abs(emp - expect)) < 0.06
    assert np.max(np.abs(resid.mean(axis=0))) < 0.03


def test_outliers_count_and_range(rng):
    Y = np.zeros((300, 4))
    out, rows = inject_outliers(Y, 5.0, rng)
    assert rows.shape == (15,)
    assert np.array_equal(rows, np.sort(rows))
    assert np.all((out[rows] >= 15.0) & (out[rows] <= 20.0))
    untouched = np.setdiff1d(np.arange(300), rows)
    assert np.all(out[untouched] == 0.0)
    same, none = inject_outliers(Y, 0.0, rng)
    assert none.size == 0 and np.array_equal(same, Y)
    with pytest.raises(DataError):
        inject_outliers(Y, 100.0, rng)


def test_treatment_assignment(rng):
    X = generate_covariates(40000, 6, 0.0, rng)
    T, pi = assign_treatment(X, "rct", rng)
    assert set(np.unique(T)) == {-1.0, 1.0}
    assert np.all(pi == 0.5)
    assert abs(np.mean(T == 1.0) - 0.5) < 0.02

    T2, pi2 = assign_treatment(X, "observational", rng)
    expect = 1.0 / (1.0 + np.exp(X[:, 1:6].sum(axis=1)))
    assert np.allclose(pi2, expect)
    # high assignment probability should show up in the realized labels
    hi = pi2 > 0.8
    assert np.mean(T2[hi] == 1.0) > 0.7
    with pytest.raises(DataError, match="five covariates"):
        assign_treatment(np.ones((10, 3)), "observational", rng)


def test_truth_bundle_shapes_and_reproducibility():
    spec = ScenarioSpec(scenario=3, n=80, n_test=30, q=10, p=10,
                        tau_pct=5.0, replications=1)
    t1 = generate_truth(spec, np.random.default_rng(4))
    t2 = generate_truth(spec, np.random.default_rng(4))
    assert t1.dataset.X.shape == (80, 11)
    assert t1.dataset.Y.shape == (80, 10)
    assert t1.X_test.shape == (30, 11)
    assert np.array_equal(t1.cate_test, t1.X_test @ t1.gamma_true)
    assert t1.outlier_rows.shape == (4,)  # round(80 * 0.05)
    assert t1.dataset.propensity is not None
    assert np.array_equal(t1.dataset.Y, t2.dataset.Y)
    assert np.array_equal(t1.X_test, t2.X_test)


# =============================================================================
# scenario container
# =============================================================================


def test_spec_validation_and_id():
    spec = ScenarioSpec(scenario=1)
    assert spec.scenario_id == "s1_p10_g0_tau0_b0.4082_z0_rct"
    named = ScenarioSpec(scenario=1, name="pilot")
    assert named.scenario_id == "pilot"
    with pytest.raises(DataError):
        ScenarioSpec(scenario=7)
    with pytest.raises(DataError):
        ScenarioSpec(scenario=1, p=20)
    ok = ScenarioSpec(scenario=1, p=20, allow_nonstandard=True)
    assert ok.p == 20
    with pytest.raises(DataError):
        ScenarioSpec(scenario=1, design="crossover")
    with pytest.raises(DataError):
        ScenarioSpec(scenario=1, n=0)
    assert ScenarioSpec(scenario=1, b=B_SMALL).b == pytest.approx(6.0 ** -0.5)
    assert TRUE_RANK == {1: 1, 2: 2, 3: 1, 4: 2}


# =============================================================================
# scenario runner
# =============================================================================

_FAST = dict(n=60, n_test=40, q=10, p=10, replications=2)


def test_run_scenario_row_schema():
    spec = ScenarioSpec(scenario=3, seed=11, **_FAST)
    rows = run_scenario(spec, ["wmcmr4", "mcm"])
    assert len(rows) == 2 * 2 * 4
    assert [sorted(r) for r in rows[:1]] == [
        ["method", "metric", "replication", "scenario_id", "value"]]
    assert {r["scenario_id"] for r in rows} == {spec.scenario_id}
    assert {r["method"] for r in rows} == {"wmcmr4", "mcm"}
    assert {r["metric"] for r in rows} == {"mse", "bias", "spearman", "auc"}
    assert all(np.isfinite(r["value"]) for r in rows)


def test_run_scenario_deterministic_and_rep_stable():
    spec = ScenarioSpec(scenario=3, seed=5, **_FAST)
    r1 = run_scenario(spec, ["mcm"])
    r2 = run_scenario(spec, ["mcm"])
    assert r1 == r2
    # the first replication does not depend on how many follow
    single = run_scenario(ScenarioSpec(scenario=3, seed=5,
                                       **{**_FAST, "replications": 1}), ["mcm"])
    assert r1[:4] == single


def test_run_scenario_seed_changes_values():
    base = {**_FAST, "replications": 1}
    r1 = run_scenario(ScenarioSpec(scenario=3, seed=1, **base), ["mcm"])
    r2 = run_scenario(ScenarioSpec(scenario=3, seed=2, **base), ["mcm"])
    assert [r["value"] for r in r1] != [r["value"] for r in r2]


def test_run_scenario_unknown_method():
    spec = ScenarioSpec(scenario=1, **_FAST)
    with pytest.raises(DataError, match="unknown method"):
        run_scenario(spec, ["ols"])


def test_run_scenario_error_rows():
    # a one-step iteration budget starves the absolute-loss baseline
    spec = ScenarioSpec(scenario=3, seed=2, **{**_FAST, "replications": 1})
    cfg = FitConfig(rank=1, max_outer=1, max_inner=1)
    rows = run_scenario(spec, ["mcml1", "mcm"], cfg=cfg)
    l1 = [r for r in rows if r["method"] == "mcml1"]
    assert l1 == [{"scenario_id": spec.scenario_id, "replication": 0,
                   "method": "mcml1", "metric": "error", "value": 1.0}]
    assert len([r for r in rows if r["method"] == "mcm"]) == 4
