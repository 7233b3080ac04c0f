"""Cross-validated lasso used by the blinded analyst to learn ``mu``.

The design is ``[x, a]``; covariates are standardized internally (mean 0,
mean square 1) and coefficients are reported on the original scale. The
treatment column is unpenalized by default; ``treatment="penalized"`` or
``"excluded"`` switch that off.

Objective at penalty ``lam`` on the standardized scale::

    (1 / 2n) * ||y - b0 - z @ b||^2 + lam * sum_j pf_j * |b_j|
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from snoopbias import kernels

TREATMENT_MODES = ("unpenalized", "penalized", "excluded")
CD_TOL = 1e-11
CV_TOL = 1e-4
CD_MAX_SWEEPS = 100_000
MAX_DEV_RATIO = 0.999
MIN_DEV_GAIN = 1e-5


@dataclass(frozen=True)
class LassoModel:
    intercept: float
    coefficients: np.ndarray  # p covariates, then the treatment coefficient
    lam: float
    cv_error: float
    treatment: str = "unpenalized"
    x_mean: np.ndarray | None = field(default=None, repr=False)
    x_scale: np.ndarray | None = field(default=None, repr=False)
    lambdas: np.ndarray | None = field(default=None, repr=False)
    cv_curve: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.coefficients) - 1


def _design(x, a, treatment):
    x = np.asarray(x, dtype=float)
    if treatment == "excluded":
        return x
    return np.column_stack([x, np.asarray(a, dtype=float)])


def _standardize(d):
    mean = d.mean(axis=0)
    scale = d.std(axis=0)
    zero = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(zero, 1.0, scale)
    z = (d - mean) / scale
    z[:, zero] = 0.0
    # column-major: the coordinate updates walk columns
    return np.asfortranarray(z), mean, scale


def _penalty_factors(q, p, treatment):
    pf = np.ones(q)
    if treatment == "unpenalized":
        pf[p] = 0.0
    return pf


def _unpenalized_residual(z, r, pf):
    free = np.flatnonzero(pf == 0.0)
    if free.size == 0:
        return r
    zf = z[:, free]
    coef, *_ = np.linalg.lstsq(zf, r, rcond=None)
    return r - zf @ coef


def lambda_max(z, r, pf) -> float:
    """Smallest penalty at which every penalized coefficient is zero."""
    n = z.shape[0]
    r0 = _unpenalized_residual(z, r, pf)
    g = np.abs(z.T @ r0) / n
    g = g[pf > 0]
    return float(g.max()) if g.size else 0.0


def lambda_grid(lam_max: float, count: int, decades: float = 4.0) -> np.ndarray:
    if count == 1:
        return np.array([lam_max])
    return lam_max * np.logspace(0.0, -decades, count)


def _path(z, r, pf, lambdas, rel_tol=CD_TOL, max_dev_ratio=np.inf, min_dev_gain=-np.inf):
    """Solutions along ``lambdas`` and the number of penalties actually fitted."""
    tol = rel_tol * max(float(np.sqrt(np.mean(r * r))), 1e-300)
    lambdas = np.asarray(lambdas, dtype=float)
    return kernels.lasso_path(z, r, pf, lambdas, tol, CD_MAX_SWEEPS, max_dev_ratio, min_dev_gain)


def _to_model(b, mean, scale, ybar, p, treatment, lam, cv_error, lambdas=None, cv_curve=None):
    coef_std = b / scale
    intercept = float(ybar - coef_std @ mean)
    coefficients = np.zeros(p + 1)
    coefficients[: len(coef_std)] = coef_std
    return LassoModel(
        intercept=intercept,
        coefficients=coefficients,
        lam=float(lam),
        cv_error=float(cv_error),
        treatment=treatment,
        x_mean=mean,
        x_scale=scale,
        lambdas=lambdas,
        cv_curve=cv_curve,
    )


def _check(x, a, y, treatment):
    if treatment not in TREATMENT_MODES:
        raise ValueError(f"treatment must be one of {TREATMENT_MODES}")
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != len(a) or len(a) != len(y):
        raise ValueError("x, a and y have inconsistent shapes")
    for v, name in ((x, "x"), (a, "a"), (y, "y")):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} contains non-finite values")
    return x, a, y


def lasso_fit(x, a, y, lam: float, treatment: str = "unpenalized") -> LassoModel:
    """Lasso at a single penalty value."""
    x, a, y = _check(x, a, y, treatment)
    p = x.shape[1]
    z, mean, scale = _standardize(_design(x, a, treatment))
    ybar = y.mean()
    pf = _penalty_factors(z.shape[1], p, treatment)
    b = _path(z, y - ybar, pf, [lam])[0][0]
    return _to_model(b, mean, scale, ybar, p, treatment, lam, np.nan)


def _intercept_only(y, p, treatment, x, a):
    z, mean, scale = _standardize(_design(x, a, treatment))
    return _to_model(np.zeros(z.shape[1]), mean, scale, float(np.mean(y)), p, treatment, 0.0, 0.0)


def lasso_cv(
    x_train,
    a_train,
    y_train,
    folds: int = 10,
    lambda_count: int = 100,
    rng: np.random.Generator | None = None,
    treatment: str = "unpenalized",
) -> LassoModel:
    """k-fold cross-validated lasso; penalty at the minimum CV mean squared error."""
    x, a, y = _check(x_train, a_train, y_train, treatment)
    n, p = x.shape
    if not (2 <= folds <= n):
        raise ValueError(f"need 2 <= folds <= n_train, got folds={folds}, n={n}")
    if lambda_count < 1:
        raise ValueError("lambda_count must be >= 1")
    if np.ptp(y) == 0.0:
        return _intercept_only(y, p, treatment, x, a)
    rng = np.random.default_rng(0) if rng is None else rng

    d = _design(x, a, treatment)
    z, mean, scale = _standardize(d)
    ybar = y.mean()
    r = y - ybar
    pf = _penalty_factors(z.shape[1], p, treatment)
    lam_max = lambda_max(z, r, pf)
    if lam_max <= 1e-12 * np.sqrt(np.mean(r * r)):
        # nothing for the penalized columns to explain
        lambdas = np.array([lam_max])
        b = _path(z, r, pf, lambdas)[0][0]
        return _to_model(b, mean, scale, ybar, p, treatment, lam_max, np.nan, lambdas)
    lambdas = lambda_grid(lam_max, lambda_count)

    fold_id = np.empty(n, dtype=np.int64)
    fold_id[rng.permutation(n)] = np.arange(n) % folds
    sse = np.zeros(len(lambdas))
    reached = len(lambdas)
    for k in range(folds):
        test = fold_id == k
        dz, dm, ds = _standardize(d[~test])
        yb = y[~test].mean()
        path, fitted = _path(dz, y[~test] - yb, pf, lambdas, CV_TOL, MAX_DEV_RATIO, MIN_DEV_GAIN)
        reached = min(reached, fitted)
        coef = path[:fitted] / ds
        icpt = yb - coef @ dm
        pred = icpt[:, None] + coef @ d[test].T
        sse[:fitted] += ((pred - y[test][None, :]) ** 2).sum(axis=1)
    cv_curve = sse / n
    cv_curve[reached:] = np.inf
    best = int(np.argmin(cv_curve))

    path, _ = _path(z, r, pf, lambdas[: best + 1])
    return _to_model(
        path[best], mean, scale, ybar, p, treatment, lambdas[best], cv_curve[best], lambdas, cv_curve
    )


def predict_mu_hat(model: LassoModel, x, a) -> np.ndarray:
    """``intercept + x @ coef + a * coef_treatment``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.p or x.shape[0] != len(a):
        raise ValueError(f"expected x with {model.p} columns and len(a) rows")
    return model.intercept + x @ model.coefficients[:-1] + a * model.coefficients[-1]


def _standardized_state(model, x, a, y):
    d = _design(x, a, model.treatment)
    z = (d - model.x_mean) / model.x_scale
    q = d.shape[1]
    b = model.coefficients[:q] * model.x_scale
    r = np.asarray(y, dtype=float) - predict_mu_hat(model, x, a)
    pf = _penalty_factors(q, model.p, model.treatment)
    return z, b, r, pf


def kkt_residual(model: LassoModel, x, a, y) -> float:
    """Largest violation of the lasso optimality conditions on the standardized scale."""
    z, b, r, pf = _standardized_state(model, x, a, y)
    n = len(r)
    g = z.T @ r / n
    lam = model.lam * pf
    viol = np.where(b == 0.0, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(b)))
    return float(max(viol.max(initial=0.0), abs(r.mean())))


def lasso_objective(model: LassoModel, x, a, y) -> float:
    z, b, r, pf = _standardized_state(model, x, a, y)
    return float(0.5 * np.mean(r * r) + model.lam * np.sum(pf * np.abs(b)))
