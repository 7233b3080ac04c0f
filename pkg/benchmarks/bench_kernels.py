"""Time the numba kernels against the pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py --repeat 5

Both versions are called directly, so the ``SNOOPBIAS_NUMBA`` switch does
not matter here. Each kernel is warmed up once (numba compilation) before
timing, and the outputs of the two versions are checked against each other.
"""
import argparse
import time

import numpy as np

from snoopbias import datagen, kernels, lasso


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def problems(n, p, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    a = datagen.assign_treatment(n)
    t = rng.normal(size=(4, n))
    return x, a, t


def lasso_problem(n, p, seed=0):
    cfg = datagen.SimConfig(n=n, p=p, rho2=0.5)
    ds = datagen.gen_dataset(cfg, datagen.stream(seed, "bench", 0))
    z, _, _ = lasso._standardize(lasso._design(ds.x, ds.a, "unpenalized"))
    r = ds.y - ds.y.mean()
    pf = lasso._penalty_factors(z.shape[1], p, "unpenalized")
    lams = lasso.lambda_grid(lasso.lambda_max(z, r, pf), 100)
    tol = lasso.CV_TOL * np.sqrt(np.mean(r * r))
    return z, r, pf, lams, tol


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = []
    for n, p in [(30, 10), (100, 100), (500, 500)]:
        x, a, t = problems(n, p)
        o1 = kernels.ols_contrast_nb(x, a, t)[0]
        o2 = kernels.ols_contrast_np(x, a, t)[0]
        assert np.allclose(o1, o2, atol=1e-10)
        rows.append((f"ols_contrast n={n} p={p}",
                     best_of(lambda: kernels.ols_contrast_nb(x, a, t), args.repeat),
                     best_of(lambda: kernels.ols_contrast_np(x, a, t), args.repeat)))

        def ipw(logit, contrast):
            alpha, deg, _ = logit(x, a, kernels.LOGIT_MAX_ITER, kernels.LOGIT_TOL)
            return contrast(x, a, t, alpha, deg)

        assert np.allclose(ipw(kernels.logistic_nb, kernels.ipw_contrast_nb),
                           ipw(kernels.logistic_np, kernels.ipw_contrast_np), atol=1e-8)
        rows.append((f"logistic+ipw n={n} p={p}",
                     best_of(lambda: ipw(kernels.logistic_nb, kernels.ipw_contrast_nb), args.repeat),
                     best_of(lambda: ipw(kernels.logistic_np, kernels.ipw_contrast_np), args.repeat)))

    for n, p in [(100, 10), (100, 100)]:
        z, r, pf, lams, tol = lasso_problem(n, p)
        call = lambda f: f(z, r, pf, lams, tol, lasso.CD_MAX_SWEEPS, lasso.MAX_DEV_RATIO, lasso.MIN_DEV_GAIN)
        p1, f1 = call(kernels.lasso_path_nb)
        p2, f2 = call(kernels.lasso_path_np)
        assert f1 == f2 and np.allclose(p1, p2, atol=1e-8)
        rows.append((f"lasso_path n={n} p={p}",
                     best_of(lambda: call(kernels.lasso_path_nb), max(1, args.repeat // 2)),
                     best_of(lambda: call(kernels.lasso_path_np), max(1, args.repeat // 2))))

    print(f"{'kernel':32s} {'numba (ms)':>12s} {'numpy (ms)':>12s} {'speedup':>8s}")
    for name, tn, tp in rows:
        print(f"{name:32s} {tn * 1e3:12.3f} {tp * 1e3:12.3f} {tp / tn:8.1f}x")


if __name__ == "__main__":
    main()
