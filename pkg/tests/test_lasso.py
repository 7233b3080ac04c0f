import numpy as np
import pytest

from snoopbias import datagen, kernels, lasso
from snoopbias.datagen import SimConfig


def _data(seed, n=80, p=12, rho2=0.5):
    cfg = SimConfig(n=n, p=p, rho2=rho2)
    return datagen.gen_dataset(cfg, datagen.stream(seed, "lasso-test", 0)), cfg


def test_full_shrinkage_above_lambda_max():
    ds, _ = _data(0)
    z, _, _ = lasso._standardize(lasso._design(ds.x, ds.a, "penalized"))
    lmax = lasso.lambda_max(z, ds.y - ds.y.mean(), np.ones(z.shape[1]))
    m = lasso.lasso_fit(ds.x, ds.a, ds.y, 10 * lmax, treatment="penalized")
    assert np.all(m.coefficients == 0.0)
    assert m.intercept == pytest.approx(ds.y.mean())


def test_unpenalized_treatment_survives_full_shrinkage():
    ds, _ = _data(1)
    m = lasso.lasso_fit(ds.x, ds.a, ds.y + 3.0 * ds.a, 1e6)
    assert np.all(m.coefficients[:-1] == 0.0)
    y = ds.y + 3.0 * ds.a
    assert m.coefficients[-1] == pytest.approx(y[ds.a == 1].mean() - y[ds.a == 0].mean())


def test_recovers_noiseless_linear_truth():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(500, 3))
    a = datagen.assign_treatment(500)
    beta = np.array([1.5, -2.0, 0.7])
    m = lasso.lasso_cv(x, a, x @ beta + 0.5, rng=rng)
    np.testing.assert_allclose(m.coefficients[:3], beta, atol=0.05)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("treatment", lasso.TREATMENT_MODES)
def test_cv_solution_satisfies_kkt(seed, treatment):
    ds, _ = _data(seed, n=60, p=40)
    m = lasso.lasso_cv(ds.x, ds.a, ds.y, rng=np.random.default_rng(seed), treatment=treatment)
    assert lasso.kkt_residual(m, ds.x, ds.a, ds.y) <= 1e-6


@pytest.mark.parametrize("frac", [0.5, 0.1, 0.01])
def test_matches_independent_solver(frac):
    sk = pytest.importorskip("sklearn.linear_model")
    ds, _ = _data(7, n=70, p=15)
    d = lasso._design(ds.x, ds.a, "penalized")
    z, _, _ = lasso._standardize(d)
    lmax = lasso.lambda_max(z, ds.y - ds.y.mean(), np.ones(z.shape[1]))
    lam = frac * lmax
    ours = lasso.lasso_fit(ds.x, ds.a, ds.y, lam, treatment="penalized")
    ref = sk.Lasso(alpha=lam, tol=1e-14, max_iter=1_000_000).fit(z, ds.y)
    np.testing.assert_allclose(ours.coefficients * ours.x_scale, ref.coef_, atol=1e-7)
    assert ours.intercept + ours.coefficients @ ours.x_mean == pytest.approx(ref.intercept_, abs=1e-7)


def test_path_backends_agree():
    ds, _ = _data(4, n=50, p=30)
    z, _, _ = lasso._standardize(lasso._design(ds.x, ds.a, "unpenalized"))
    r = ds.y - ds.y.mean()
    pf = lasso._penalty_factors(z.shape[1], 30, "unpenalized")
    lams = lasso.lambda_grid(lasso.lambda_max(z, r, pf), 30)
    p1, f1 = kernels.lasso_path_nb(z, r, pf, lams, 1e-12, 100_000, 0.999, 1e-5)
    p2, f2 = kernels.lasso_path_np(z, r, pf, lams, 1e-12, 100_000, 0.999, 1e-5)
    assert f1 == f2
    np.testing.assert_allclose(p1, p2, atol=1e-9)


def test_objective_not_beaten_by_perturbation():
    ds, _ = _data(5, n=50, p=10)
    m = lasso.lasso_fit(ds.x, ds.a, ds.y, 0.2)
    best = lasso.lasso_objective(m, ds.x, ds.a, ds.y)
    rng = np.random.default_rng(0)
    for _ in range(20):
        coef = m.coefficients + rng.normal(scale=1e-3, size=m.coefficients.shape)
        alt = lasso.LassoModel(m.intercept, coef, m.lam, np.nan, m.treatment, m.x_mean, m.x_scale)
        assert lasso.lasso_objective(alt, ds.x, ds.a, ds.y) >= best - 1e-12


def test_zero_variance_response_gives_intercept_only():
    ds, _ = _data(6)
    m = lasso.lasso_cv(ds.x, ds.a, np.full(ds.n, 2.5))
    assert np.all(m.coefficients == 0.0) and m.intercept == 2.5
    np.testing.assert_array_equal(lasso.predict_mu_hat(m, ds.x, ds.a), 2.5)


def test_predict_exact_model():
    ds, cfg = _data(8)
    m = lasso.LassoModel(0.0, np.append(cfg.beta, 0.0), 0.0, 0.0)
    np.testing.assert_allclose(lasso.predict_mu_hat(m, ds.x, ds.a), ds.mu)
    with pytest.raises(ValueError):
        lasso.predict_mu_hat(m, ds.x[:, :3], ds.a)


def test_input_errors():
    ds, _ = _data(9)
    with pytest.raises(ValueError):
        lasso.lasso_cv(ds.x, ds.a, ds.y, folds=1)
    with pytest.raises(ValueError):
        lasso.lasso_cv(ds.x, ds.a, ds.y, treatment="sometimes")


def test_cv_deterministic_given_rng():
    ds, _ = _data(10)
    m1 = lasso.lasso_cv(ds.x, ds.a, ds.y, rng=np.random.default_rng(1))
    m2 = lasso.lasso_cv(ds.x, ds.a, ds.y, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(m1.coefficients, m2.coefficients)


def test_prediction_error_decreases_with_training_size():
    cfg_test = SimConfig(n=2000, p=10, rho2=0.75)
    test = datagen.gen_dataset(cfg_test, datagen.stream(0, "mse-test", 0))
    mse = []
    for n_train in (100, 1000):
        errs = []
        for rep in range(20):
            rng = datagen.stream(0, f"mse/{n_train}", rep)
            tr = datagen.gen_dataset(SimConfig(n=n_train, p=10, rho2=0.75), rng)
            m = lasso.lasso_cv(tr.x, tr.a, tr.y, rng=rng)
            errs.append(np.mean((lasso.predict_mu_hat(m, test.x, test.a) - test.mu) ** 2))
        mse.append(np.mean(errs))
    assert mse[1] < mse[0]
