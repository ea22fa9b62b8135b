"""Alternating solver for the weighted robust reduced-rank effect model.

Minimizes, over W ((p+1) x r), V (q x r, orthonormal columns) and C (n x q),

    sum_i a_i^2 ||y_i - T_i V W^T x_i / 2 - c_i||^2
        + phi_c * sum_i ||c_i||  +  lambda_w * sum_k ||w_k||

by block descent: a row-separable shrinkage step for C, cyclic group-lasso
row updates for W, and an orthogonal Procrustes step for V. Each block step
is an exact conditional minimizer, so the objective never increases.

With z_i = T_i x_i / 2 the fidelity term is ||A (Y - Z W V^T - C)||_F^2,
which is the form the updates below work with.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (
    CateEstimate,
    DataError,
    Dataset,
    FactorModel,
    FitConfig,
    NumericalError,
    assemble_design,
)
from .weights import WeightVector


def _avec(a) -> np.ndarray:
    if isinstance(a, WeightVector):
        a = a.a
    a = np.asarray(a, dtype=float).ravel()
    if (a <= 0).any() or not np.isfinite(a).all():
        raise DataError("weights must be finite and strictly positive")
    return a


# =============================================================================
# proximal pieces
# =============================================================================


def group_soft_threshold(v, t: float) -> np.ndarray:
    """Shrink the vector v toward zero: (1 - t/||v||)_+ v, with 0 at ||v|| = 0."""
    v = np.asarray(v, dtype=float)
    if t < 0:
        raise DataError(f"threshold must be nonnegative, got {t}")
    nv = np.linalg.norm(v)
    if nv == 0.0 or nv <= t:
        return np.zeros_like(v)
    return (1.0 - t / nv) * v


def _shrink_rows(R, thresholds):
    # row-wise group soft threshold of R with per-row thresholds
    norms = np.linalg.norm(R, axis=1)
    scale = np.zeros_like(norms)
    pos = norms > 0
    scale[pos] = np.maximum(0.0, 1.0 - thresholds[pos] / norms[pos])
    return scale[:, None] * R


# =============================================================================
# block updates
# =============================================================================


def _c_block(Y, Z, a, W, V, phi_c, inner_tol, max_inner, C0):
    """Exact minimizer over C; keeps the sweep loop so convergence is measured."""
    R = Y - Z @ (W @ V.T)
    thr = phi_c / (2.0 * a * a)
    C = C0
    sweeps = 0
    for _ in range(max_inner):
        sweeps += 1
        C_new = _shrink_rows(R, thr)
        delta = np.max(np.linalg.norm(C_new - C, axis=1))
        C = C_new
        # change threshold is relative to the iterate scale so raw-unit
        # outcomes do not force needless extra sweeps
        scale = 1.0 + (np.max(np.linalg.norm(C, axis=1)) if C.size else 0.0)
        if delta < inner_tol * scale:
            break
    return C, sweeps


def _w_block(G, FV, W, lambda_w, inner_tol, max_inner):
    """Cyclic row updates for min ||FV - G W||_F^2 + lambda_w sum_k ||w_k||."""
    P = G.shape[1]
    gram = G.T @ G
    diag = np.diag(gram).copy()
    T0 = G.T @ FV
    W = W.copy()
    half = lambda_w / 2.0
    sweeps = 0
    for _ in range(max_inner):
        sweeps += 1
        M = gram @ W
        worst = 0.0
        for k in range(P):
            dk = diag[k]
            if dk <= 0.0:
                # zero design column: row is skipped and left at zero
                if np.any(W[k]):
                    M -= np.outer(gram[:, k], W[k])
                    W[k] = 0.0
                continue
            h = T0[k] - M[k] + dk * W[k]
            w_new = group_soft_threshold(h, half) / dk
            delta = w_new - W[k]
            change = np.linalg.norm(delta)
            if change > 0.0:
                M += np.outer(gram[:, k], delta)
                W[k] = w_new
                worst = max(worst, change)
        # relative to the iterate scale, matching the outlier block
        scale = 1.0 + np.max(np.linalg.norm(W, axis=1))
        if worst < inner_tol * scale:
            break
    return W, sweeps


def _v_block(M, V_prev):
    """Orthogonal Procrustes: maximize tr(M V) over V^T V = I, V = S U^T."""
    if not np.any(M):
        if V_prev is None:
            raise DataError("cannot update V: W^T G^T F is identically zero and no fallback V given")
        return V_prev
    U, _, St = np.linalg.svd(M, full_matrices=False)
    # deterministic sign convention: largest-magnitude entry of each left vector positive
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
            St[j, :] = -St[j, :]
    return St.T @ U.T


def update_outlier_rows(C, d: Dataset, a, W, V, phi_c: float,
                        inner_tol: float = 1e-8, max_inner: int = 100) -> np.ndarray:
    """Update the per-subject offset rows given W and V.

    Each row decouples: c_i = (1 - phi_c / (2 a_i^2 ||r_i||))_+ r_i with
    r_i the i-th unweighted residual row of Y - Z W V^T.
    """
    a = _avec(a)
    Z = assemble_design(d)
    C_new, _ = _c_block(d.Y, Z, a, np.asarray(W, float), np.asarray(V, float),
                        phi_c, inner_tol, max_inner, np.asarray(C, float))
    return C_new


def update_loading_rows(W, d: Dataset, a, C, V, lambda_w: float,
                        inner_tol: float = 1e-8, max_inner: int = 100) -> np.ndarray:
    """Cyclic group-lasso updates of the covariate loading rows given C and V."""
    a = _avec(a)
    Z = assemble_design(d)
    G = a[:, None] * Z
    FV = (a[:, None] * (d.Y - np.asarray(C, float))) @ np.asarray(V, float)
    W_new, _ = _w_block(G, FV, np.asarray(W, float), lambda_w, inner_tol, max_inner)
    return W_new


def update_orthogonal_factor(W, d: Dataset, a, C, V=None) -> np.ndarray:
    """Optimal orthonormal outcome factor given W and C.

    Solves the Procrustes problem max tr(M V) with M = W^T G^T F, returning
    V = S U^T from the SVD M = U D S^T. When M is identically zero the
    problem is degenerate and the supplied V is returned unchanged.
    """
    a = _avec(a)
    Z = assemble_design(d)
    G = a[:, None] * Z
    F = a[:, None] * (d.Y - np.asarray(C, float))
    M = np.asarray(W, float).T @ (G.T @ F)
    return _v_block(M, None if V is None else np.asarray(V, float))


# =============================================================================
# objective and full fit
# =============================================================================


def _objective_arrays(Y, Z, a, W, V, C, lambda_w, phi_c):
    R = a[:, None] * (Y - Z @ (W @ V.T) - C)
    fid = float(np.sum(R * R))
    pen_c = phi_c * float(np.sum(np.linalg.norm(C, axis=1)))
    pen_w = lambda_w * float(np.sum(np.linalg.norm(W, axis=1)))
    return fid + pen_c + pen_w


def objective(model: FactorModel, d: Dataset, a, cfg: FitConfig) -> float:
    """Penalized weighted objective value of a model on a dataset."""
    a = _avec(a)
    if a.shape[0] != d.n:
        raise DataError(f"weights have {a.shape[0]} entries, expected {d.n}")
    if model.W.shape[0] != d.n_features:
        raise DataError(
            f"model has {model.W.shape[0]} covariate rows, dataset has {d.n_features}"
        )
    if model.V.shape[0] != d.q or model.C.shape[0] != d.n:
        raise DataError("model outcome/offset dimensions do not match the dataset")
    Z = assemble_design(d)
    return _objective_arrays(d.Y, Z, a, model.W, model.V, model.C, cfg.lambda_w, cfg.phi_c)


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration record of a solver run.

    objective[0] is the value at initialization; objective[t] after outer
    sweep t. The sequence is non-increasing.
    """

    objective: np.ndarray
    c_sweeps: list = field(default_factory=list)
    w_sweeps: list = field(default_factory=list)
    converged: bool = False
    n_outer: int = 0


def _initialize(Y, Z, a, rank):
    # ridge-regularized weighted least squares, then the top right singular
    # subspace of its fitted values
    aa = a * a
    H = Z.T @ (Z * aa[:, None]) + 1e-8 * np.eye(Z.shape[1])
    gamma0 = np.linalg.solve(H, Z.T @ (Y * aa[:, None]))
    _, _, Vt = np.linalg.svd(Z @ gamma0, full_matrices=False)
    V0 = Vt[:rank].T
    W0 = gamma0 @ V0
    return W0, V0


def fit(d: Dataset, a, cfg: FitConfig, update_c: bool = True) -> FactorModel:
    """Fit the penalized reduced-rank effect model by block descent.

    Parameters
    ----------
    d : Dataset
    a : WeightVector or array
        Per-subject weights.
    cfg : FitConfig
        Rank, penalties, tolerances. Outer convergence is declared when the
        objective decrease falls below outer_tol relative to the initial
        objective value.
    update_c : bool
        Freeze C at zero when False (the non-robust reduced-rank variant).

    Returns the fitted FactorModel with its FitTrace attached. Deterministic:
    the initializer is a ridge-regularized weighted least-squares solve and
    no randomness is used.
    """
    a = _avec(a)
    if a.shape[0] != d.n:
        raise DataError(f"weights have {a.shape[0]} entries, expected {d.n}")
    P, q = d.n_features, d.q
    if cfg.rank > min(P, q):
        raise DataError(f"rank {cfg.rank} exceeds min(p+1, q) = {min(P, q)}")

    Y, Z = d.Y, assemble_design(d)
    G = a[:, None] * Z
    W, V = _initialize(Y, Z, a, cfg.rank)
    C = np.zeros((d.n, q))

    objs = [_objective_arrays(Y, Z, a, W, V, C, cfg.lambda_w, cfg.phi_c)]
    thresh = cfg.outer_tol * (objs[0] if objs[0] > 0 else 1.0)
    c_sweeps, w_sweeps = [], []
    converged = False
    n_outer = 0

    for it in range(cfg.max_outer):
        n_outer = it + 1
        if update_c:
            C, cs = _c_block(Y, Z, a, W, V, cfg.phi_c, cfg.inner_tol, cfg.max_inner, C)
        else:
            cs = 0
        FV = (a[:, None] * (Y - C)) @ V
        W, ws = _w_block(G, FV, W, cfg.lambda_w, cfg.inner_tol, cfg.max_inner)
        M = W.T @ (G.T @ (a[:, None] * (Y - C)))
        V = _v_block(M, V)
        obj = _objective_arrays(Y, Z, a, W, V, C, cfg.lambda_w, cfg.phi_c)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at outer iteration {n_outer}")
        c_sweeps.append(cs)
        w_sweeps.append(ws)
        decrease = objs[-1] - obj
        objs.append(obj)
        if decrease < thresh:
            converged = True
            break

    trace = FitTrace(
        objective=np.asarray(objs),
        c_sweeps=c_sweeps,
        w_sweeps=w_sweeps,
        converged=converged,
        n_outer=n_outer,
    )
    return FactorModel(W=W, V=V, C=C, rank=cfg.rank, trace=trace)


def predict_cate(model: FactorModel, X_new) -> CateEstimate:
    """Per-subject effect estimates x^T W V^T for new covariate rows.

    The score is the row sum across outcomes, the quantity used to rank
    subjects by overall expected benefit.
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.shape[1] != model.W.shape[0]:
        raise DataError(
            f"X_new has {X_new.shape[1]} columns, model expects {model.W.shape[0]}"
        )
    values = X_new @ model.gamma
    return CateEstimate(values=values, score=values.sum(axis=1))
