"""Synthetic-data harness for the simulation study.

Data model per subject: x = (1, x*)' with x* equicorrelated standard normal;
y = (B'x) o (B'x) + T (Gamma'x)/2 + e, with equicorrelated noise of variance
2 per outcome. A fraction of rows is replaced wholesale by uniform(15, 20)
contamination. Four coefficient patterns are supported: random rank 1,
random rank 2, fixed sparse rank 1, fixed sparse rank 2.

Replications are independent tasks: replication j of a run with master seed
s uses the generator seeded by SeedSequence([s, j]), so any subset can be
reproduced in isolation and assembly order is irrelevant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import DataError, Dataset, FitConfig, NumericalError, validate_dataset
from .metrics import evaluate
from .model_selection import CvGrid, _fit_gamma, cross_validate, default_cv_grid
from .weights import resolve_weights

B_SMALL = 6.0 ** -0.5
B_LARGE = 3.0 ** -0.5

# rank of the true coefficient matrix per pattern id
TRUE_RANK = {1: 1, 2: 2, 3: 1, 4: 2}

METHOD_ALIASES = {
    "wmcmr4": "wmcmr4",
    "wmcmrrr": "wmcmrrr",
    "wmcml1": "wmcml1",
    "wmcm": "wmcm",
    "wfull": "wfull",
    # names used when the design is a randomized trial (identity weights)
    "mcmrrr": "wmcmrrr",
    "mcml1": "wmcml1",
    "mcm": "wmcm",
    "full": "wfull",
}

_P_SET = (10, 50)
_G_SET = (0.0, 1.0 / 3.0)
_TAU_SET = (0.0, 5.0, 10.0)
_B_SET = (B_SMALL, B_LARGE)
_Z_SET = (0.0, 1.0 / 3.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the simulation design.

    The canonical design points are p in {10, 50}, g in {0, 1/3}, tau_pct in
    {0, 5, 10}, b in {6^-1/2, 3^-1/2}, z in {0, 1/3}, scenario in 1..4 and
    design in {rct, observational}; other values require
    ``allow_nonstandard=True``.
    """

    scenario: int
    p: int = 10
    g: float = 0.0
    tau_pct: float = 0.0
    b: float = B_SMALL
    z: float = 0.0
    design: str = "rct"
    n: int = 300
    n_test: int = 1000
    q: int = 10
    replications: int = 100
    seed: int = 0
    gamma_low: float = 0.0
    gamma_high: float = 1.0
    name: str | None = None
    allow_nonstandard: bool = False

    def __post_init__(self):
        if self.scenario not in TRUE_RANK:
            raise DataError(f"unknown coefficient pattern {self.scenario}")
        if self.design not in ("rct", "observational"):
            raise DataError(f"design must be 'rct' or 'observational', got {self.design!r}")
        for fname, v in (("n", self.n), ("n_test", self.n_test), ("q", self.q),
                         ("p", self.p), ("replications", self.replications)):
            if int(v) != v or v < 1:
                raise DataError(f"{fname} must be a positive integer, got {v}")
        if not self.allow_nonstandard:
            checks = (
                ("p", self.p in _P_SET),
                ("g", any(math.isclose(self.g, v) for v in _G_SET)),
                ("tau_pct", any(math.isclose(self.tau_pct, v) for v in _TAU_SET)),
                ("b", any(math.isclose(self.b, v) for v in _B_SET)),
                ("z", any(math.isclose(self.z, v) for v in _Z_SET)),
            )
            for fname, ok in checks:
                if not ok:
                    raise DataError(
                        f"{fname}={getattr(self, fname)} is outside the standard design; "
                        "pass allow_nonstandard=True to run it anyway"
                    )

    @property
    def scenario_id(self) -> str:
        if self.name:
            return self.name
        return (f"s{self.scenario}_p{self.p}_g{self.g:g}_tau{self.tau_pct:g}"
                f"_b{self.b:.4g}_z{self.z:g}_{self.design}")


@dataclass(frozen=True)
class SimulatedTruth:
    """One replication's data plus everything needed to score it."""

    dataset: Dataset
    gamma_true: np.ndarray
    B_true: np.ndarray
    outlier_rows: np.ndarray
    X_test: np.ndarray
    cate_test: np.ndarray


def generate_covariates(n: int, p: int, g: float, rng) -> np.ndarray:
    """n x (p+1) design: intercept column then equicorrelated N(0,1) covariates."""
    if not 0.0 <= g < 1.0:
        raise DataError(f"covariate correlation g must be in [0, 1), got {g}")
    sigma = (1.0 - g) * np.eye(p) + g * np.ones((p, p))
    L = np.linalg.cholesky(sigma)
    xs = rng.standard_normal((n, p)) @ L.T
    return np.hstack([np.ones((n, 1)), xs])


def make_main_effect(p: int, q: int, b: float) -> np.ndarray:
    """Main-effect matrix: value b on covariates 3..10 for every outcome."""
    if p < 10:
        raise DataError(f"main-effect pattern needs p >= 10, got {p}")
    B = np.zeros((p + 1, q))
    B[3:11, :] = b
    return B


def generate_gamma(scenario: int, p: int, q: int, rng,
                   low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """True effect matrix, (p+1) x q with a zero intercept row.

    Patterns 1/2 are random rank 1/2 with uniform(low, high) factor entries;
    patterns 3/4 are the fixed sparse rank 1/2 designs (first four covariates
    and outcomes active; pattern 4 adds covariates/outcomes 3..6).
    """
    if scenario in (1, 2):
        star = np.outer(rng.uniform(low, high, p), rng.uniform(low, high, q))
        if scenario == 2:
            star = star + np.outer(rng.uniform(low, high, p), rng.uniform(low, high, q))
    elif scenario in (3, 4):
        need = 4 if scenario == 3 else 6
        if p < need or q < need:
            raise DataError(f"pattern {scenario} needs p >= {need} and q >= {need}")
        u1 = np.zeros(p)
        u1[:4] = 1.0
        v1 = np.zeros(q)
        v1[:4] = 1.0
        star = np.outer(u1, v1)
        if scenario == 4:
            u2 = np.zeros(p)
            u2[2:6] = 1.0
            v2 = np.zeros(q)
            v2[2:6] = 1.0
            star = star + np.outer(u2, v2)
    else:
        raise DataError(f"unknown coefficient pattern {scenario}")
    return np.vstack([np.zeros((1, q)), star])


def generate_outcomes(X, gamma_true, B_true, T, z: float, rng) -> np.ndarray:
    """Outcomes from squared main effects, the treatment term, and correlated noise."""
    X = np.asarray(X, dtype=float)
    q = np.asarray(gamma_true).shape[1]
    main = X @ B_true
    main = main * main
    te = (np.asarray(T, float) / 2.0)[:, None] * (X @ gamma_true)
    sigma_e = (2.0 - z) * np.eye(q) + z * np.ones((q, q))
    vals, vecs = np.linalg.eigh(sigma_e)
    if vals.min() <= 0:
        raise DataError(f"noise covariance is not positive definite (z={z})")
    root = (vecs * np.sqrt(vals)) @ vecs.T
    eps = rng.standard_normal((X.shape[0], q)) @ root
    return main + te + eps


def inject_outliers(Y, tau_pct: float, rng):
    """Replace round(n*tau/100) whole rows with uniform(15, 20) contamination.

    Returns the contaminated copy and the sorted affected row indices.
    """
    if not 0.0 <= tau_pct < 100.0:
        raise DataError(f"contamination percentage must be in [0, 100), got {tau_pct}")
    Y = np.array(Y, dtype=float, copy=True)
    n = Y.shape[0]
    k = round(n * tau_pct / 100.0)
    rows = np.sort(rng.choice(n, size=k, replace=False)) if k else np.empty(0, dtype=int)
    if k:
        Y[rows] = rng.uniform(15.0, 20.0, size=(k, Y.shape[1]))
    return Y, rows


def assign_treatment(X, design: str, rng):
    """Treatment labels in {-1,+1} and the assignment probabilities P(T=+1|x).

    rct: half-half coin flips. observational: P = 1/(1 + exp(x_1 + ... + x_5))
    on the raw first five covariates.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if design == "rct":
        pi = np.full(n, 0.5)
    elif design == "observational":
        if X.shape[1] < 6:
            raise DataError("observational assignment needs at least five covariates")
        pi = 1.0 / (1.0 + np.exp(X[:, 1:6].sum(axis=1)))
    else:
        raise DataError(f"design must be 'rct' or 'observational', got {design!r}")
    T = np.where(rng.random(n) < pi, 1.0, -1.0)
    return T, pi


def generate_truth(spec: ScenarioSpec, rng) -> SimulatedTruth:
    """One replication's training data and test-set truth.

    Draw order is fixed (covariates, effect pattern, treatment, noise,
    contamination, test covariates) so runs are bit-reproducible.
    """
    X = generate_covariates(spec.n, spec.p, spec.g, rng)
    gamma = generate_gamma(spec.scenario, spec.p, spec.q, rng,
                           low=spec.gamma_low, high=spec.gamma_high)
    B = make_main_effect(spec.p, spec.q, spec.b)
    T, pi = assign_treatment(X, spec.design, rng)
    Y = generate_outcomes(X, gamma, B, T, spec.z, rng)
    Y, rows = inject_outliers(Y, spec.tau_pct, rng)
    X_test = generate_covariates(spec.n_test, spec.p, spec.g, rng)
    d = validate_dataset(X, Y, T, propensity=pi)
    return SimulatedTruth(dataset=d, gamma_true=gamma, B_true=B, outlier_rows=rows,
                          X_test=X_test, cate_test=X_test @ gamma)


METRIC_ORDER = ("mse", "bias", "spearman", "auc")


def _method_grid(grid: CvGrid, method: str) -> CvGrid:
    # collapse axes a method does not use
    if method == "wmcmr4":
        return grid
    if method == "wmcmrrr":
        return replace(grid, phis=(0.0,))
    return replace(grid, phis=(0.0,), ranks=(grid.ranks[0],))


def run_scenario(spec: ScenarioSpec, methods, *, cv: bool = False,
                 grid: CvGrid | None = None, cfg: FitConfig | None = None,
                 propensity: str | None = None) -> list:
    """Run all replications of one scenario for the named methods.

    Without CV every method is fit at the pattern's true rank with the
    penalties from ``cfg`` (default: none). With CV each method selects its
    own hyperparameters per replication via stratified five-fold CV.

    Returns rows (dicts) with keys scenario_id, replication, method, metric,
    value. A failed fit yields one row with metric="error" and value=1.0 for
    that method; other methods in the replication still run.
    """
    requested = list(methods)
    canon = {}
    for name in requested:
        key = str(name).lower()
        if key not in METHOD_ALIASES:
            raise DataError(f"unknown method {name!r}")
        canon[name] = METHOD_ALIASES[key]
    if propensity is None:
        propensity = "rct" if spec.design == "rct" else "logistic"

    rows = []
    sid = spec.scenario_id
    for rep in range(spec.replications):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, rep]))
        try:
            truth = generate_truth(spec, rng)
        except (DataError, NumericalError):
            for name in requested:
                rows.append({"scenario_id": sid, "replication": rep, "method": name,
                             "metric": "error", "value": 1.0})
            continue
        for name in requested:
            method = canon[name]
            try:
                gamma_hat = _fit_one(truth, method, cv, grid, cfg, propensity, spec)
                report = evaluate(gamma_hat, truth.X_test, truth.gamma_true)
                for metric in METRIC_ORDER:
                    rows.append({"scenario_id": sid, "replication": rep, "method": name,
                                 "metric": metric, "value": getattr(report, metric)})
            except (DataError, NumericalError):
                rows.append({"scenario_id": sid, "replication": rep, "method": name,
                             "metric": "error", "value": 1.0})
    return rows


def _fit_one(truth, method, cv, grid, cfg, propensity, spec):
    d = truth.dataset
    a = resolve_weights(d, propensity)
    base = cfg if cfg is not None else FitConfig(rank=1)
    if cv:
        g = grid if grid is not None else default_cv_grid(d, a)
        result = cross_validate(d, _method_grid(g, method), method,
                                propensity=propensity, cfg=base)
        lam, phi, rank = result.best
    else:
        rank = min(TRUE_RANK[spec.scenario], d.q, d.n_features)
        lam, phi = base.lambda_w, base.phi_c
    return _fit_gamma(method, d, a, lam, phi, rank, base)
