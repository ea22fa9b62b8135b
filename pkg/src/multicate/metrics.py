"""Evaluation metrics for estimated effect matrices on a test design.

All four metrics compare predicted per-subject effects X Gamma_hat against
the truth X Gamma. The ranking metrics work on the per-subject score (row
sum across outcomes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import DataError


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    bias: float
    spearman: float
    auc: float


def mse(X_test, gamma_hat, gamma_true) -> float:
    """Mean squared error of the effect surface over test rows and outcomes."""
    X_test = np.asarray(X_test, dtype=float)
    D = X_test @ np.asarray(gamma_hat, float) - X_test @ np.asarray(gamma_true, float)
    return float(np.sum(D * D)) / D.size


def bias(X_test, gamma_hat, gamma_true) -> float:
    """Absolute mean deviation |sum_ij (x_i' ghat_j - x_i' g_j)| / (n q)."""
    X_test = np.asarray(X_test, dtype=float)
    D = X_test @ np.asarray(gamma_hat, float) - X_test @ np.asarray(gamma_true, float)
    return abs(float(np.sum(D))) / D.size


def spearman(score_hat, score_true) -> float:
    """Rank correlation of estimated vs true per-subject scores.

    Ranks are assigned in descending order with average ranks for ties, and
    the classical 1 - 6 sum d^2 / (m (m^2 - 1)) form is used. By convention
    returns 0 when every estimated score is exactly zero (an all-zero
    coefficient estimate carries no ordering information).
    """
    sh = np.asarray(score_hat, dtype=float).ravel()
    st = np.asarray(score_true, dtype=float).ravel()
    if sh.shape != st.shape:
        raise DataError("score vectors must have equal length")
    m = sh.shape[0]
    if m < 2:
        raise DataError("need at least two subjects for a rank correlation")
    if not np.any(sh):
        return 0.0
    rh = rankdata(-sh, method="average")
    rt = rankdata(-st, method="average")
    d = rh - rt
    return 1.0 - 6.0 * float(np.sum(d * d)) / (m * (m * m - 1.0))


def auc(score_hat, score_true) -> float:
    """Probability that a truly benefiting subject outranks a non-benefiting one.

    Labels are 1{true score > 0}. Mann-Whitney rank form; tied estimated
    scores get half credit. Returns NaN when the truth is single-class.
    """
    sh = np.asarray(score_hat, dtype=float).ravel()
    st = np.asarray(score_true, dtype=float).ravel()
    if sh.shape != st.shape:
        raise DataError("score vectors must have equal length")
    pos = st > 0
    n_pos = int(pos.sum())
    n_neg = sh.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(sh, method="average")
    return (float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(gamma_hat, X_test, gamma_true) -> MetricsReport:
    """All four metrics for one fitted coefficient matrix."""
    X_test = np.asarray(X_test, dtype=float)
    score_hat = (X_test @ np.asarray(gamma_hat, float)).sum(axis=1)
    score_true = (X_test @ np.asarray(gamma_true, float)).sum(axis=1)
    return MetricsReport(
        mse=mse(X_test, gamma_hat, gamma_true),
        bias=bias(X_test, gamma_hat, gamma_true),
        spearman=spearman(score_hat, score_true),
        auc=auc(score_hat, score_true),
    )
