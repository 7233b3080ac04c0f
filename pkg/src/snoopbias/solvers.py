"""Treatment-effect estimators that adjust for a single covariate.

``d_ols`` is the coefficient on the treatment indicator in a least-squares
fit of the outcome on an intercept, one covariate and the treatment.
``d_ipw`` is the Hajek contrast with propensities from a logistic regression
of treatment on that covariate; it is defined as 0 when the fit is
degenerate (separation, fitted probabilities at 0 or 1, or no convergence).

Both are linear in the outcome vector, which is what lets a blinded analyst
evaluate them on a proxy for the outcomes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from snoopbias import kernels


class DegenerateDesignError(ValueError):
    """The adjusted-OLS design [1, x_j, a] is (numerically) rank deficient."""


class EstimatorKind(str, enum.Enum):
    OLS = "ols"
    IPW = "ipw"


@dataclass(frozen=True)
class LogisticFit:
    alpha0: float
    alpha1: float
    converged: bool
    degenerate: bool
    iterations: int = 0


def _vec(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _binary(a):
    a = _vec(a, "a")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("a must be a 0/1 vector")
    return a


def _both_arms(a):
    k = a.sum()
    if k == 0 or k == len(a):
        raise ValueError("both treatment arms must be nonempty")


def _matrix(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError("x must be an (n, p) matrix matching a")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    return np.ascontiguousarray(x)


def _targets(targets, n):
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[None, :]
    if t.ndim != 2 or t.shape[1] != n:
        raise ValueError("targets must have shape (k, n)")
    if not np.all(np.isfinite(t)):
        raise ValueError("targets contain non-finite values")
    return np.ascontiguousarray(t)


def ols_contrast_matrix(x, a, targets) -> np.ndarray:
    """``d_ols(x_j, t)`` for every column j and target row t, shape (k, p)."""
    a = _binary(a)
    x = _matrix(x, len(a))
    t = _targets(targets, len(a))
    out, degenerate = kernels.ols_contrast(x, a, t)
    if degenerate.any():
        bad = np.flatnonzero(degenerate).tolist()
        raise DegenerateDesignError(f"rank-deficient design for columns {bad}")
    return out


def fit_logistic_columns(x, a):
    """Per-column logistic fits: ``(alpha (p, 2), degenerate (p,), iterations (p,))``."""
    a = _binary(a)
    x = _matrix(x, len(a))
    p = x.shape[1]
    k = a.sum()
    if k == 0 or k == len(a) or len(a) < 2:
        return np.zeros((p, 2)), np.ones(p, dtype=bool), np.zeros(p, dtype=np.int64)
    return kernels.logistic(x, a, kernels.LOGIT_MAX_ITER, kernels.LOGIT_TOL)


def ipw_contrast_matrix(x, a, targets, fits=None) -> np.ndarray:
    """``d_ipw(x_j, t)`` for every column j and target row t, shape (k, p)."""
    a = _binary(a)
    _both_arms(a)
    x = _matrix(x, len(a))
    t = _targets(targets, len(a))
    alpha, degenerate, _ = fit_logistic_columns(x, a) if fits is None else fits
    return kernels.ipw_contrast(x, a, t, alpha, degenerate)


def contrast_matrix(kind, x, a, targets) -> np.ndarray:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.OLS:
        return ols_contrast_matrix(x, a, targets)
    return ipw_contrast_matrix(x, a, targets)


def ols_adjusted(x_j, a, y) -> float:
    """Coefficient on ``a`` in the least-squares fit of ``y`` on ``[1, x_j, a]``."""
    a = _binary(a)
    x_j = _vec(x_j, "x_j")
    y = _vec(y, "y")
    if not (len(x_j) == len(a) == len(y)):
        raise ValueError("x_j, a and y must have equal length")
    if len(a) < 3:
        raise ValueError("need at least 3 observations")
    return float(ols_contrast_matrix(x_j[:, None], a, y)[0, 0])


def fit_logistic(x_j, a) -> LogisticFit:
    """Maximum-likelihood logistic regression of ``a`` on ``[1, x_j]``."""
    a = _binary(a)
    x_j = _vec(x_j, "x_j")
    if len(x_j) != len(a):
        raise ValueError("x_j and a must have equal length")
    alpha, degenerate, iters = fit_logistic_columns(x_j[:, None], a)
    a0, a1 = float(alpha[0, 0]), float(alpha[0, 1])
    converged = False
    if 0 < a.sum() < len(a):
        pi = kernels._expit_np(a0 + a1 * x_j)
        score = np.array([np.sum(a - pi), np.sum((a - pi) * x_j)])
        converged = bool(np.max(np.abs(score)) <= kernels.LOGIT_TOL)
    return LogisticFit(a0, a1, converged, bool(degenerate[0]), int(iters[0]))


def ipw_estimate(x_j, a, y) -> float:
    """Hajek IPW contrast adjusting for ``x_j``; 0 when the propensity fit is degenerate."""
    a = _binary(a)
    _both_arms(a)
    x_j = _vec(x_j, "x_j")
    y = _vec(y, "y")
    if not (len(x_j) == len(a) == len(y)):
        raise ValueError("x_j, a and y must have equal length")
    return float(ipw_contrast_matrix(x_j[:, None], a, y)[0, 0])


def d0_fixed_slope(x_j, a, y, pop_slope: float) -> float:
    """Treatment coefficient with the covariate slope fixed at ``pop_slope``.

    Equals the difference in arm means of ``y - pop_slope * x_j``.
    """
    a = _binary(a)
    _both_arms(a)
    x_j = _vec(x_j, "x_j")
    y = _vec(y, "y")
    r = y - pop_slope * x_j
    t = a == 1.0
    return float(r[t].mean() - r[~t].mean())


def estimate(kind, x_j, a, y) -> float:
    if EstimatorKind(kind) is EstimatorKind.OLS:
        return ols_adjusted(x_j, a, y)
    return ipw_estimate(x_j, a, y)
