"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances here are fixed; do not loosen them to make a run pass.
"""
import math
import time

import numpy as np
import pytest

from snoopbias import cli, experiments as ex, kernels, lasso, solvers
from snoopbias.att_split import AttCheckSpec, run_unbiasedness_check
from snoopbias.datagen import SimConfig, gen_dataset, stream

SEED = 20170101


@pytest.fixture(scope="module")
def desk_known():
    spec = ex.GridSpec(n_values=(30, 100), p_values=(10, 100, 500), rho2_values=(0.25, 0.5, 0.75),
                       analysts=("snoop", "blind_true_mu"), replications=500, base_seed=SEED)
    t = time.time()
    cells = ex.run_grid_cells(spec)
    return spec, cells, time.time() - t


def test_noise_correlation_figure(acceptance_record):
    t = time.time()
    rows = ex.run_noise_correlation(ex.NoiseCorSpec(replications=2000, base_seed=SEED))
    elapsed = time.time() - t
    gap = max(abs(r.empirical_cor - r.analytic_cor) for r in rows)
    mono_cor = mono_max = True
    for rho_x in (0.0, 0.3, 0.6):
        sub = [r for r in rows if r.rho_x == rho_x]
        for lo, hi in zip(sub, sub[1:]):
            mono_cor &= hi.empirical_cor >= lo.empirical_cor - 2 * math.hypot(lo.cor_se, hi.cor_se)
            mono_max &= hi.expected_max <= lo.expected_max + 2 * math.hypot(lo.max_se, hi.max_se)
    exact_one = all(r.analytic_cor == 1.0 for r in rows if r.m == 1.0)
    ok = gap <= 0.1 and mono_cor and mono_max and exact_one and elapsed <= 120
    acceptance_record(1, ok, f"max |emp-analytic| = {gap:.4f} (<= 0.1), cor monotone={mono_cor}, "
                             f"max monotone={mono_max}, analytic(m=1)==1: {exact_one}, {elapsed:.1f}s")
    assert ok


def test_ratio_lower_bound(desk_known, acceptance_record):
    spec, cells, elapsed = desk_known
    worst, checked, skipped = math.inf, 0, []
    ok = elapsed <= 15 * 60
    for kind in spec.estimators:
        for c in cells:
            if not ex.cell_noise_condition(c, kind).satisfied:
                skipped.append((kind, c.n, c.p, c.rho2))
                continue
            r = ex.bias_ratio(c.column(kind, "blind_true_mu"), c.column(kind, "snoop"))
            checked += 1
            slack = (r.ratio - (c.rho - 2 * r.se)) if r.defined else -math.inf
            worst = min(worst, slack)
            ok &= r.defined and slack >= 0
    acceptance_record(2, ok, f"{checked} cells checked, min(ratio - (rho - 2 SE)) = {worst:.4f}, "
                             f"skipped (condition failed) {skipped}, grid {elapsed:.0f}s")
    assert ok


def test_near_equality_small_n_large_p(desk_known, acceptance_record):
    spec, cells, _ = desk_known
    ok, parts = True, []
    for kind in spec.estimators:
        for c in cells:
            if (c.n, c.p) != (30, 500):
                continue
            r = ex.bias_ratio(c.column(kind, "blind_true_mu"), c.column(kind, "snoop"))
            dev = abs(r.ratio - c.rho)
            ok &= r.defined and dev <= 0.15
            parts.append(f"{kind} rho2={c.rho2}: {r.ratio:.3f} vs {c.rho:.3f}")
    acceptance_record(3, ok, "; ".join(parts))
    assert ok


def test_noise_condition_every_cell(desk_known, acceptance_record):
    spec, cells, _ = desk_known
    worst, failed = math.inf, []
    for kind in spec.estimators:
        for c in cells:
            res = ex.cell_noise_condition(c, kind)
            worst = min(worst, res.margin / res.pooled_se)
            if not res.satisfied:
                failed.append((kind, c.n, c.p, c.rho2))
    ok = not failed
    acceptance_record(4, ok, f"min margin/pooled SE = {worst:.2f} (>= -2), failures {failed}")
    assert ok


def test_learned_mu_ratio(acceptance_record):
    spec = ex.GridSpec(n_values=(100, 250), p_values=(10, 100), rho2_values=(0.5, 0.75),
                       analysts=("snoop", "blind_learned_mu"), replications=500, base_seed=SEED)
    cells = ex.run_grid_cells(spec)
    ok, worst, parts = True, math.inf, []
    for kind in spec.estimators:
        for c in cells:
            r = ex.bias_ratio(c.column(kind, "blind_learned_mu"), c.column(kind, "snoop"))
            slack = (r.ratio - (c.rho2 - 2 * r.se)) if r.defined else -math.inf
            worst = min(worst, slack)
            ok &= r.defined and slack >= 0
            parts.append(f"{kind}/{c.n}/{c.p}/{c.rho2}: {r.ratio:.3f}")
    acceptance_record(5, ok, f"min(ratio - (rho2 - 2 SE)) = {worst:.4f}; " + ", ".join(parts))
    assert ok


def test_conditional_mean_identity(desk_known, acceptance_record):
    spec, cells, _ = desk_known
    worst = 0.0
    for kind in spec.estimators:
        for c in cells:
            m1, se1, _ = ex.mc_mean(c.column(kind, "blind_true_mu"))
            m2, se2, _ = ex.mc_mean(c.column(kind, "snoop_mu"))
            worst = max(worst, abs(m1 - m2) / math.hypot(se1, se2))
    ok = worst <= 3.0
    acceptance_record(6, ok, f"max |blind(X,Y) - snoop(X,mu)| / pooled SE = {worst:.2f} (<= 3)")
    assert ok


def test_rank_agreement_decay(acceptance_record):
    known, _ = ex.run_rank_agreement(ex.RankAgreementSpec(replications=2000, base_seed=SEED))
    mono = all(b.p_disagree <= a.p_disagree + 2 * math.hypot(a.se, b.se) for a, b in zip(known, known[1:]))
    last = known[-1].p_disagree
    ok = mono and last < 0.15
    acceptance_record(7, ok, "P(disagree) by n: " + ", ".join(f"{r.n}: {r.p_disagree:.4f}" for r in known)
                      + f"; non-increasing={mono}")
    assert ok


def test_split_att_unbiased(acceptance_record):
    res = run_unbiasedness_check(AttCheckSpec(replications=5000, base_seed=SEED))
    unbiased = abs(res.split_mean) <= 3 * res.split_se
    contrast = res.nosplit_mean > 5 * res.nosplit_se
    ok = unbiased and contrast
    acceptance_record(8, ok, f"split mean {res.split_mean:.4f} (3 SE = {3 * res.split_se:.4f}); "
                             f"no-split mean {res.nosplit_mean:.4f} (5 SE = {5 * res.nosplit_se:.4f})")
    assert ok


def _kernel_suite():
    rng = np.random.default_rng(SEED)
    worst_lin = worst_shift = worst_score = worst_kkt = 0.0
    backends = [
        (kernels.ols_contrast_nb, kernels.logistic_nb, kernels.ipw_contrast_nb),
        (kernels.ols_contrast_np, kernels.logistic_np, kernels.ipw_contrast_np),
    ]
    for trial in range(40):
        n, p = 2 * int(rng.integers(5, 40)), int(rng.integers(1, 8))
        x = rng.normal(size=(n, p))
        a = (np.arange(n) >= n // 2).astype(float)
        t = rng.normal(size=(2, n)) * rng.uniform(0.1, 10)
        c1, c2, s = rng.normal(size=3) * 5
        for ols, logit, ipw in backends:
            alpha, deg, _ = logit(x, a, kernels.LOGIT_MAX_ITER, kernels.LOGIT_TOL)
            fns = [lambda tt: ols(x, a, tt)[0], lambda tt: ipw(x, a, tt, alpha, deg)]
            for f in fns:
                base = f(t)
                combo = f(np.ascontiguousarray((c1 * t[0] + c2 * t[1])[None, :]))[0]
                scale = 1 + np.abs(c1 * base[0]).max() + np.abs(c2 * base[1]).max()
                worst_lin = max(worst_lin, np.abs(combo - c1 * base[0] - c2 * base[1]).max() / scale)
                shifted = f(np.ascontiguousarray((t[0] + s)[None, :]))[0]
                worst_shift = max(worst_shift, np.abs(shifted - base[0]).max() / (1 + abs(s) + np.abs(base[0]).max()))
            for j in np.flatnonzero(~deg):
                pi = 1 / (1 + np.exp(-(alpha[j, 0] + alpha[j, 1] * x[:, j])))
                worst_score = max(worst_score, abs(np.sum(a - pi)), abs(np.sum((a - pi) * x[:, j])))
    for trial in range(6):
        cfg = SimConfig(n=100, p=[10, 100][trial % 2], rho2=0.5)
        r = stream(SEED, "kkt", trial)
        ds = gen_dataset(cfg, r)
        m = lasso.lasso_cv(ds.x, ds.a, ds.y, rng=r)
        worst_kkt = max(worst_kkt, lasso.kkt_residual(m, ds.x, ds.a, ds.y))
    oracles = [
        abs(solvers.ols_adjusted([1, 2, 3, 5], [0, 0, 1, 1], [1, 2, 3, 4]) - 0.5) <= 1e-12,
        abs(solvers.fit_logistic([-1, 0, 1, 2], [0, 1, 0, 1]).alpha1 - 0.908184289932251) <= 1e-3,
        abs(solvers.ipw_estimate([-1.2, 0.3, 0.8, -0.5, 1.5, 0.1, -0.7, 2.0], [0, 0, 0, 0, 1, 1, 1, 1],
                                 [1.0, 2.0, 0.5, 1.5, 3.0, 2.5, 4.0, 3.5]) - 2.171054016604102) <= 1e-6,
        abs(solvers.d0_fixed_slope([0.5, -1.0, 2.0, 1.5, -0.5, 0.0], [0, 0, 0, 1, 1, 1],
                                   [1.0, -2.0, 3.0, 2.0, 0.5, 1.0], 0.3) - 0.55) <= 1e-12,
        solvers.fit_logistic([0, 0, 1], [0, 0, 1]).degenerate,
        abs(ex.approx_correlation(3 ** -0.5, 3 ** -0.5, 0.0, 0.0) - 0.5) <= 1e-12,
    ]
    return worst_lin, worst_shift, worst_score, worst_kkt, all(oracles)


def test_kernel_property_suite(acceptance_record):
    t = time.time()
    lin, shift, score, kkt, oracles = _kernel_suite()
    elapsed = time.time() - t
    ok = lin <= 1e-10 and shift <= 1e-10 and score <= 1e-8 and kkt <= 1e-6 and oracles and elapsed <= 30
    acceptance_record(9, ok, f"linearity {lin:.1e}, shift {shift:.1e}, score {score:.1e}, KKT {kkt:.1e}, "
                             f"oracles ok={oracles}, {elapsed:.1f}s")
    assert ok


def test_determinism_across_workers(tmp_path, acceptance_record):
    cfg = tmp_path / "small.yaml"
    cfg.write_text("grid:\n  n_values: [30]\n  p_values: [10, 100]\n  rho2_values: [0.5]\n"
                   "rankagree:\n  learned: true\n")
    runs = {
        "grid": (["--config", str(cfg), "--reps", "20"], ["grid.csv", "ratios.csv", "condition.csv"]),
        "noisecor": (["--reps", "100"], ["noisecor.csv"]),
        "rankagree": (["--config", str(cfg), "--reps", "30"], ["rankagree.csv", "rankagree_learned.csv"]),
        "attsplit": (["--reps", "200"], ["att.csv"]),
        "check-noise-condition": (["--config", str(cfg), "--reps", "20"], ["condition.csv"]),
    }
    ok, bad = True, []
    for cmd, (extra, files) in runs.items():
        d1, d2, d3 = (tmp_path / f"{cmd}-{k}" for k in ("w1", "w2", "replay"))
        ok &= cli.main([cmd, *extra, "--out", str(d1), "--threads", "1"]) == 0
        ok &= cli.main([cmd, *extra, "--out", str(d2), "--threads", "2"]) == 0
        ok &= cli.main(["replay", str(d1 / "manifest.json"), "--out", str(d3), "--threads", "2"]) == 0
        for f in files:
            ref = (d1 / f).read_bytes()
            same = (d2 / f).read_bytes() == ref and (d3 / f).read_bytes() == ref
            ok &= same
            if not same:
                bad.append(f"{cmd}/{f}")
    acceptance_record(10, ok, f"byte-identical CSV at 1 and 2 workers and on replay for {len(runs)} "
                              f"subcommands; mismatches {bad}")
    assert ok
