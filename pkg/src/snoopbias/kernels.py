"""Hot numeric kernels.

Every kernel has a numba loop implementation (``*_nb``) and a vectorized
numpy implementation (``*_np``). The public names at the bottom dispatch on
:data:`snoopbias._accel.USE_NUMBA`. Inputs are assumed validated by the
callers in :mod:`snoopbias.solvers`; the kernels do no argument checking.

Shapes: ``x`` is (n, p), ``a`` is (n,) float 0/1, ``targets`` is (k, n).
"""
import numpy as np

from snoopbias._accel import USE_NUMBA, njit

RCOND_MIN = 1e-12
LOGIT_MAX_ITER = 100
LOGIT_TOL = 1e-8
PROB_EPS = 1e-10
SLOPE_SD_MAX = 30.0


# ---------------------------------------------------------------------------
# Adjusted OLS: coefficient on a in y ~ 1 + x_j + a, for every column j.
# Centering removes the intercept; the remaining 2x2 system is solved in
# closed form.
# ---------------------------------------------------------------------------

@njit
def ols_contrast_nb(x, a, targets):
    n, p = x.shape
    k = targets.shape[0]
    out = np.empty((k, p))
    degenerate = np.zeros(p, dtype=np.bool_)
    abar = a.mean()
    ac = a - abar
    saa = 0.0
    for i in range(n):
        saa += ac[i] * ac[i]
    say = np.zeros(k)
    for t in range(k):
        s = 0.0
        for i in range(n):
            s += ac[i] * targets[t, i]
        say[t] = s
    xc = np.empty(n)
    for j in range(p):
        xm = 0.0
        for i in range(n):
            xm += x[i, j]
        xm /= n
        sxx = 0.0
        sxa = 0.0
        for i in range(n):
            xc[i] = x[i, j] - xm
            sxx += xc[i] * xc[i]
            sxa += xc[i] * ac[i]
        if sxx <= 0.0 or saa <= 0.0:
            degenerate[j] = True
            out[:, j] = np.nan
            continue
        r = abs(sxa) / np.sqrt(sxx * saa)
        if (1.0 - r) / (1.0 + r) < RCOND_MIN:
            degenerate[j] = True
            out[:, j] = np.nan
            continue
        det = sxx * saa - sxa * sxa
        for t in range(k):
            sxy = 0.0
            for i in range(n):
                sxy += xc[i] * targets[t, i]
            out[t, j] = (sxx * say[t] - sxa * sxy) / det
    return out, degenerate


def ols_contrast_np(x, a, targets):
    ac = a - a.mean()
    xc = x - x.mean(axis=0)
    saa = ac @ ac
    sxx = np.einsum("ij,ij->j", xc, xc)
    sxa = xc.T @ ac
    say = targets @ ac
    sxy = targets @ xc
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(sxa) / np.sqrt(sxx * saa)
        degenerate = (sxx <= 0.0) | (saa <= 0.0) | ((1.0 - r) / (1.0 + r) < RCOND_MIN)
        det = sxx * saa - sxa * sxa
        out = (sxx[None, :] * say[:, None] - sxa[None, :] * sxy) / det[None, :]
    out[:, degenerate] = np.nan
    return out, degenerate


# ---------------------------------------------------------------------------
# Logistic regression of a on each column (intercept + slope), Newton with
# step halving. Separated columns are flagged without fitting.
# ---------------------------------------------------------------------------

@njit
def _softplus(z):
    if z > 0.0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


@njit
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit
def _loglik_col(x, a, j, a0, a1):
    s = 0.0
    for i in range(x.shape[0]):
        eta = a0 + a1 * x[i, j]
        s += a[i] * eta - _softplus(eta)
    return s


@njit
def _separated_col(x, a, j):
    lo1 = np.inf
    hi1 = -np.inf
    lo0 = np.inf
    hi0 = -np.inf
    for i in range(x.shape[0]):
        v = x[i, j]
        if a[i] > 0.5:
            lo1 = min(lo1, v)
            hi1 = max(hi1, v)
        else:
            lo0 = min(lo0, v)
            hi0 = max(hi0, v)
    return hi0 <= lo1 or hi1 <= lo0


@njit
def logistic_nb(x, a, max_iter, tol):
    n, p = x.shape
    alpha = np.zeros((p, 2))
    degenerate = np.zeros(p, dtype=np.bool_)
    iters = np.zeros(p, dtype=np.int64)
    abar = a.mean()
    start = np.log(abar / (1.0 - abar))
    for j in range(p):
        alpha[j, 0] = start
        if _separated_col(x, a, j):
            # the likelihood has no finite maximizer
            degenerate[j] = True
            continue
        xm = 0.0
        for i in range(n):
            xm += x[i, j]
        xm /= n
        ss = 0.0
        for i in range(n):
            ss += (x[i, j] - xm) ** 2
        sd = np.sqrt(ss / (n - 1))
        a0 = start
        a1 = 0.0
        ll = _loglik_col(x, a, j, a0, a1)
        converged = False
        blown = False
        it = 0
        while it < max_iter:
            g0 = 0.0
            g1 = 0.0
            h00 = 0.0
            h01 = 0.0
            h11 = 0.0
            for i in range(n):
                xi = x[i, j]
                pi = _expit(a0 + a1 * xi)
                res = a[i] - pi
                w = pi * (1.0 - pi)
                g0 += res
                g1 += res * xi
                h00 += w
                h01 += w * xi
                h11 += w * xi * xi
            if max(abs(g0), abs(g1)) <= tol:
                converged = True
                break
            det = h00 * h11 - h01 * h01
            if not det > 0.0:
                break
            s0 = (h11 * g0 - h01 * g1) / det
            s1 = (h00 * g1 - h01 * g0) / det
            step = 1.0
            accepted = False
            while step > 1e-12:
                n0 = a0 + step * s0
                n1 = a1 + step * s1
                ll_new = _loglik_col(x, a, j, n0, n1)
                if ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                    accepted = True
                    break
                step *= 0.5
            it += 1
            if not accepted:
                break
            a0 = n0
            a1 = n1
            ll = ll_new
            if abs(a1) * sd > SLOPE_SD_MAX:
                blown = True
                break
        iters[j] = it
        alpha[j, 0] = a0
        alpha[j, 1] = a1
        bad = blown or not converged
        if not bad:
            for i in range(n):
                pi = _expit(a0 + a1 * x[i, j])
                if pi < PROB_EPS or pi > 1.0 - PROB_EPS:
                    bad = True
                    break
        degenerate[j] = bad
    return alpha, degenerate, iters


def _expit_np(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loglik_np(x, a, a0, a1):
    eta = a0[None, :] + a1[None, :] * x
    return (a[:, None] * eta - np.logaddexp(0.0, eta)).sum(axis=0)


def separated_np(x, a):
    t = a > 0.5
    x1, x0 = x[t], x[~t]
    return (x0.max(axis=0) <= x1.min(axis=0)) | (x1.max(axis=0) <= x0.min(axis=0))


def logistic_np(x, a, max_iter, tol):
    n, p = x.shape
    abar = a.mean()
    a0 = np.full(p, np.log(abar / (1.0 - abar)))
    a1 = np.zeros(p)
    sd = x.std(axis=0, ddof=1)
    ll = _loglik_np(x, a, a0, a1)
    separated = separated_np(x, a)
    active = ~separated
    converged = np.zeros(p, dtype=bool)
    blown = np.zeros(p, dtype=bool)
    iters = np.zeros(p, dtype=np.int64)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[:, idx]
        pi = _expit_np(a0[idx][None, :] + a1[idx][None, :] * xa)
        res = a[:, None] - pi
        w = pi * (1.0 - pi)
        g0 = res.sum(axis=0)
        g1 = (res * xa).sum(axis=0)
        done = np.maximum(np.abs(g0), np.abs(g1)) <= tol
        converged[idx[done]] = True
        h00 = w.sum(axis=0)
        h01 = (w * xa).sum(axis=0)
        h11 = (w * xa * xa).sum(axis=0)
        det = h00 * h11 - h01 * h01
        stuck = ~done & ~(det > 0.0)
        active[idx[done | stuck]] = False
        keep = ~(done | stuck)
        idx, g0, g1 = idx[keep], g0[keep], g1[keep]
        h00, h01, h11, det = h00[keep], h01[keep], h11[keep], det[keep]
        if idx.size == 0:
            break
        s0 = (h11 * g0 - h01 * g1) / det
        s1 = (h00 * g1 - h01 * g0) / det
        iters[idx] += 1
        step = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new0 = a0[idx].copy()
        new1 = a1[idx].copy()
        newll = ll[idx].copy()
        while pending.any():
            sel = np.flatnonzero(pending)
            c0 = a0[idx[sel]] + step[sel] * s0[sel]
            c1 = a1[idx[sel]] + step[sel] * s1[sel]
            cll = _loglik_np(x[:, idx[sel]], a, c0, c1)
            old = ll[idx[sel]]
            ok = cll >= old - 1e-12 * (1.0 + np.abs(old))
            new0[sel[ok]] = c0[ok]
            new1[sel[ok]] = c1[ok]
            newll[sel[ok]] = cll[ok]
            pending[sel[ok]] = False
            step[sel[~ok]] *= 0.5
            giveup = sel[~ok][step[sel[~ok]] <= 1e-12]
            pending[giveup] = False
            active[idx[giveup]] = False
        moved = active[idx]
        a0[idx[moved]] = new0[moved]
        a1[idx[moved]] = new1[moved]
        ll[idx[moved]] = newll[moved]
        big = moved & (np.abs(new1) * sd[idx] > SLOPE_SD_MAX)
        blown[idx[big]] = True
        active[idx[big]] = False
    alpha = np.column_stack([a0, a1])
    pi = _expit_np(a0[None, :] + a1[None, :] * x)
    extreme = ((pi < PROB_EPS) | (pi > 1.0 - PROB_EPS)).any(axis=0)
    degenerate = separated | blown | ~converged | extreme
    return alpha, degenerate, iters


# ---------------------------------------------------------------------------
# Hajek IPW contrast given fitted logistic coefficients per column.
# Degenerate columns return exactly 0.
# ---------------------------------------------------------------------------

@njit
def ipw_contrast_nb(x, a, targets, alpha, degenerate):
    n, p = x.shape
    k = targets.shape[0]
    out = np.zeros((k, p))
    w = np.empty(n)
    for j in range(p):
        if degenerate[j]:
            continue
        s1 = 0.0
        s0 = 0.0
        for i in range(n):
            eta = alpha[j, 0] + alpha[j, 1] * x[i, j]
            if a[i] > 0.5:
                w[i] = 1.0 + np.exp(-eta)
                s1 += w[i]
            else:
                w[i] = 1.0 + np.exp(eta)
                s0 += w[i]
        for t in range(k):
            m1 = 0.0
            m0 = 0.0
            for i in range(n):
                if a[i] > 0.5:
                    m1 += w[i] * targets[t, i]
                else:
                    m0 += w[i] * targets[t, i]
            out[t, j] = m1 / s1 - m0 / s0
    return out


def ipw_contrast_np(x, a, targets, alpha, degenerate):
    eta = alpha[:, 0][None, :] + alpha[:, 1][None, :] * x
    treated = a > 0.5
    with np.errstate(over="ignore"):
        w = np.where(treated[:, None], 1.0 + np.exp(-eta), 1.0 + np.exp(eta))
    w1 = np.where(treated[:, None], w, 0.0)
    w0 = np.where(treated[:, None], 0.0, w)
    with np.errstate(invalid="ignore"):
        out = (targets @ w1) / w1.sum(axis=0) - (targets @ w0) / w0.sum(axis=0)
    out[:, degenerate] = 0.0
    return out


# ---------------------------------------------------------------------------
# Lasso path by cyclic coordinate descent with an active-set inner loop.
# z is standardized (column mean 0, mean square 1, or an all-zero column),
# r the centered response. Objective per lambda:
#     (1/2n)||r - z b||^2 + lam * sum_j pf_j |b_j|
# The path stops early once the explained fraction of ||r||^2 exceeds
# max_dev_ratio, or grows by less than min_dev_gain (relative) from one
# lambda to the next; rows past ``fitted`` are left at zero.
# ---------------------------------------------------------------------------

@njit
def _soft(v, t):
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@njit
def _cd_sweep(z, resid, b, pf, lam, norms, only_active):
    n, q = z.shape
    max_delta = 0.0
    for j in range(q):
        if norms[j] <= 0.0:
            continue
        if only_active and b[j] == 0.0:
            continue
        g = 0.0
        for i in range(n):
            g += z[i, j] * resid[i]
        g = g / n + norms[j] * b[j]
        new = _soft(g, lam * pf[j]) / norms[j]
        d = new - b[j]
        if d != 0.0:
            for i in range(n):
                resid[i] -= d * z[i, j]
            b[j] = new
            ad = abs(d) * np.sqrt(norms[j])
            if ad > max_delta:
                max_delta = ad
    return max_delta


@njit
def lasso_path_nb(z, r, pf, lambdas, tol, max_sweeps, max_dev_ratio, min_dev_gain):
    n, q = z.shape
    norms = np.empty(q)
    for j in range(q):
        s = 0.0
        for i in range(n):
            s += z[i, j] * z[i, j]
        norms[j] = s / n
    tss = 0.0
    for i in range(n):
        tss += r[i] * r[i]
    b = np.zeros(q)
    resid = r.copy()
    path = np.zeros((lambdas.shape[0], q))
    fitted = 0
    prev = 0.0
    for l in range(lambdas.shape[0]):
        lam = lambdas[l]
        sweeps = 0
        while sweeps < max_sweeps:
            delta = _cd_sweep(z, resid, b, pf, lam, norms, False)
            sweeps += 1
            if delta < tol:
                break
            while sweeps < max_sweeps:
                delta = _cd_sweep(z, resid, b, pf, lam, norms, True)
                sweeps += 1
                if delta < tol:
                    break
        path[l] = b
        fitted = l + 1
        rss = 0.0
        for i in range(n):
            rss += resid[i] * resid[i]
        if tss > 0.0:
            dev = 1.0 - rss / tss
            if dev > max_dev_ratio or (l >= 4 and dev - prev < min_dev_gain * dev):
                break
            prev = dev
    return path, fitted


def _cd_sweep_np(z, resid, b, pf, lam, norms, only_active):
    n = z.shape[0]
    max_delta = 0.0
    cols = np.flatnonzero(b) if only_active else range(z.shape[1])
    for j in cols:
        if norms[j] <= 0.0:
            continue
        zj = z[:, j]
        g = zj @ resid / n + norms[j] * b[j]
        new = np.sign(g) * max(abs(g) - lam * pf[j], 0.0) / norms[j]
        d = new - b[j]
        if d != 0.0:
            resid -= d * zj
            b[j] = new
            max_delta = max(max_delta, abs(d) * np.sqrt(norms[j]))
    return max_delta


def lasso_path_np(z, r, pf, lambdas, tol, max_sweeps, max_dev_ratio, min_dev_gain):
    n, q = z.shape
    norms = np.einsum("ij,ij->j", z, z) / n
    tss = float(r @ r)
    b = np.zeros(q)
    resid = r.astype(float).copy()
    path = np.zeros((len(lambdas), q))
    fitted = 0
    prev = 0.0
    for l, lam in enumerate(lambdas):
        sweeps = 0
        while sweeps < max_sweeps:
            delta = _cd_sweep_np(z, resid, b, pf, lam, norms, False)
            sweeps += 1
            if delta < tol:
                break
            while sweeps < max_sweeps:
                delta = _cd_sweep_np(z, resid, b, pf, lam, norms, True)
                sweeps += 1
                if delta < tol:
                    break
        path[l] = b
        fitted = l + 1
        if tss > 0.0:
            dev = 1.0 - (resid @ resid) / tss
            if dev > max_dev_ratio or (l >= 4 and dev - prev < min_dev_gain * dev):
                break
            prev = dev
    return path, fitted


if USE_NUMBA:
    ols_contrast = ols_contrast_nb
    logistic = logistic_nb
    ipw_contrast = ipw_contrast_nb
    lasso_path = lasso_path_nb
else:
    ols_contrast = ols_contrast_np
    logistic = logistic_np
    ipw_contrast = ipw_contrast_np
    lasso_path = lasso_path_np
