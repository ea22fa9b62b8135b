"""Reference estimators the main method is compared against.

All four share the modified-covariate design z_i = T_i x_i / 2 and the
weighted fidelity ||A(Y - Z Gamma)||_F^2; they differ in loss shape and
structure:

* ``fit_wmcmrrr``  - reduced rank, no outlier offsets (C frozen at zero);
* ``fit_wmcm_l1``  - elementwise absolute loss, row-sparse Gamma;
* ``fit_wmcm``     - squared loss, row-sparse Gamma;
* ``fit_wfull``    - squared loss with explicit main-effect term X B.

In a half-half randomized trial the weights are constant, so these reduce to
their unweighted versions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DataError, Dataset, FitConfig, NumericalError, assemble_design
from .solver import FitTrace, _avec, _w_block, fit as _fit_factor, group_soft_threshold

HUBER_DELTA = 1e-4


@dataclass(frozen=True)
class BaselineModel:
    """Fitted baseline: coefficient matrix, method tag, optional main effects."""

    gamma: np.ndarray
    method: str
    B: np.ndarray | None = None
    trace: "FitTrace | None" = field(default=None, compare=False, repr=False)


def _row_norm_sum(M):
    return float(np.sum(np.linalg.norm(M, axis=1)))


def fit_wmcmrrr(d: Dataset, a, rank: int, lambda_w: float = 0.0,
                cfg: FitConfig | None = None) -> BaselineModel:
    """Reduced-rank row-sparse fit without the outlier offsets.

    Same alternating solver as the main method with the C block frozen at
    zero and no offset penalty.
    """
    if cfg is None:
        cfg = FitConfig(rank=rank, lambda_w=lambda_w)
    else:
        cfg = replace(cfg, rank=rank, lambda_w=lambda_w, phi_c=0.0)
    model = _fit_factor(d, a, cfg, update_c=False)
    return BaselineModel(gamma=model.gamma, method="wmcmrrr", trace=model.trace)


def fit_wmcm(d: Dataset, a, lambda_w: float, cfg: FitConfig | None = None) -> BaselineModel:
    """Row-sparse multivariate fit: min ||A(Y - Z Gamma)||_F^2 + lambda ||Gamma||_{2,1}.

    Cyclic exact row updates; the recorded objective is non-increasing.
    """
    a = _avec(a)
    if cfg is None:
        cfg = FitConfig(rank=1)
    Z = assemble_design(d)
    G = a[:, None] * Z
    Yw = a[:, None] * d.Y
    gamma = np.zeros((d.n_features, d.q))

    def obj(g):
        R = Yw - G @ g
        return float(np.sum(R * R)) + lambda_w * _row_norm_sum(g)

    objs = [obj(gamma)]
    thresh = cfg.outer_tol * (objs[0] if objs[0] > 0 else 1.0)
    converged = False
    n_outer = 0
    for it in range(cfg.max_outer):
        n_outer = it + 1
        gamma, _ = _w_block(G, Yw, gamma, lambda_w, cfg.inner_tol, 1)
        objs.append(obj(gamma))
        if objs[-2] - objs[-1] < thresh:
            converged = True
            break
    trace = FitTrace(objective=np.asarray(objs), converged=converged, n_outer=n_outer)
    return BaselineModel(gamma=gamma, method="wmcm", trace=trace)


def fit_wfull(d: Dataset, a, lambda_w: float, cfg: FitConfig | None = None) -> BaselineModel:
    """Row-sparse fit with explicit main effects:

        min ||A(Y - X B - Z Gamma)||_F^2 + lambda ||Gamma||_{2,1}

    alternating an exact weighted least-squares solve for B with cyclic row
    updates for Gamma.
    """
    a = _avec(a)
    if cfg is None:
        cfg = FitConfig(rank=1)
    X, Y, Z = d.X, d.Y, assemble_design(d)
    aa = a * a
    G = a[:, None] * Z
    H = X.T @ (X * aa[:, None])
    gamma = np.zeros((d.n_features, d.q))
    B = np.zeros((d.n_features, d.q))

    def solve_b(g):
        rhs = X.T @ ((Y - Z @ g) * aa[:, None])
        try:
            return np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError:
            warnings.warn("singular main-effect normal equations; ridge jitter applied",
                          RuntimeWarning, stacklevel=2)
            return np.linalg.solve(H + 1e-8 * np.eye(H.shape[0]), rhs)

    def obj(b, g):
        R = a[:, None] * (Y - X @ b - Z @ g)
        return float(np.sum(R * R)) + lambda_w * _row_norm_sum(g)

    objs = [obj(B, gamma)]
    thresh = cfg.outer_tol * (objs[0] if objs[0] > 0 else 1.0)
    converged = False
    n_outer = 0
    for it in range(cfg.max_outer):
        n_outer = it + 1
        B = solve_b(gamma)
        F = a[:, None] * (Y - X @ B)
        gamma, _ = _w_block(G, F, gamma, lambda_w, cfg.inner_tol, cfg.max_inner)
        objs.append(obj(B, gamma))
        if objs[-2] - objs[-1] < thresh:
            converged = True
            break
    trace = FitTrace(objective=np.asarray(objs), converged=converged, n_outer=n_outer)
    return BaselineModel(gamma=gamma, method="wfull", B=B, trace=trace)


def fit_wmcm_l1(d: Dataset, a, lambda_w: float, cfg: FitConfig | None = None,
                max_iter: int | None = None) -> BaselineModel:
    """Absolute-loss row-sparse fit: min ||A(Y - Z Gamma)||_{1,1} + lambda ||Gamma||_{2,1}.

    The elementwise absolute loss is smoothed by a narrow Huber function
    (delta = 1e-4) and minimized by proximal gradient with a backtracking
    line search; the recorded objective is the smoothed surrogate, which is
    non-increasing. Raises NumericalError if the iteration cap is hit.
    """
    a = _avec(a)
    if cfg is None:
        cfg = FitConfig(rank=1)
    if max_iter is None:
        max_iter = cfg.max_outer * cfg.max_inner
    Z = assemble_design(d)
    G = a[:, None] * Z
    Yw = a[:, None] * d.Y
    gamma = np.zeros((d.n_features, d.q))
    delta = HUBER_DELTA

    def smooth_loss(R):
        absr = np.abs(R)
        quad = absr <= delta
        return float(np.sum(np.where(quad, R * R / (2.0 * delta), absr - delta / 2.0)))

    def prox(P, t):
        out = np.empty_like(P)
        for k in range(P.shape[0]):
            out[k] = group_soft_threshold(P[k], t)
        return out

    R = Yw - G @ gamma
    loss = smooth_loss(R)
    objs = [loss + lambda_w * _row_norm_sum(gamma)]
    thresh = cfg.outer_tol * (objs[0] if objs[0] > 0 else 1.0)
    eta = 1.0
    for _ in range(max_iter):
        grad = -G.T @ np.clip(R / delta, -1.0, 1.0)
        while True:
            cand = prox(gamma - eta * grad, eta * lambda_w)
            step = cand - gamma
            R_cand = Yw - G @ cand
            lhs = smooth_loss(R_cand)
            rhs = loss + float(np.sum(grad * step)) + float(np.sum(step * step)) / (2.0 * eta)
            if lhs <= rhs + 1e-12 * (1.0 + abs(loss)):
                break
            eta *= 0.5
            if eta < 1e-20:
                raise NumericalError("line search failed in absolute-loss fit")
        gamma, R, loss = cand, R_cand, lhs
        objs.append(loss + lambda_w * _row_norm_sum(gamma))
        if objs[-2] - objs[-1] < thresh:
            trace = FitTrace(objective=np.asarray(objs), converged=True, n_outer=len(objs) - 1)
            return BaselineModel(gamma=gamma, method="wmcml1", trace=trace)
        eta *= 1.5
    raise NumericalError(f"absolute-loss fit did not converge in {max_iter} iterations")
