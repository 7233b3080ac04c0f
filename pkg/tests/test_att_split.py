import itertools

import numpy as np
import pytest

from snoopbias import att_split as att
from snoopbias import datagen
from snoopbias.datagen import ConfigError, Dataset, SimConfig


def _ds(seed=0, n=40, p=6, delta=0.0):
    return datagen.gen_dataset(SimConfig(n=n, p=p, rho2=0.5, delta=delta), datagen.stream(seed, "att-test", 0))


def _with_y(ds, y):
    return Dataset(x=ds.x.copy(), a=ds.a.copy(), y=np.asarray(y, float), mu=ds.mu.copy())


def test_partition_properties():
    ds = _ds(n=20)
    part = att.partition_treated(ds, 0.5, np.random.default_rng(1))
    treated = np.flatnonzero(ds.a == 1)
    assert len(part.explore) == 5 and len(part.estimate) == 5
    assert not set(part.explore) & set(part.estimate)
    np.testing.assert_array_equal(np.sort(np.concatenate([part.explore, part.estimate])), treated)
    again = att.partition_treated(ds, 0.5, np.random.default_rng(1))
    np.testing.assert_array_equal(part.explore, again.explore)
    tiny = att.partition_treated(ds, 0.01, np.random.default_rng(1))
    assert tiny.explore.size == 0
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            att.partition_treated(ds, bad, np.random.default_rng(1))
    one = Dataset(x=np.zeros((3, 1)), a=np.array([0.0, 0.0, 1.0]), y=np.zeros(3), mu=np.zeros(3))
    with pytest.raises(ValueError):
        att.partition_treated(one, 0.5, np.random.default_rng(1))


def test_prior_only_choice_when_nothing_explored():
    ds = _ds(n=20)
    part = att.partition_treated(ds, 0.01, np.random.default_rng(1))
    cands = att.default_candidates(ds.p)
    policy = att.ExplorerPolicy("adversarial_max_estimate",
                                prior=att.PriorKnowledge(np.zeros(ds.p), np.ones(ds.p)))
    assert att.explore_select(att.explore_view(ds, part), cands, policy) == 0


def test_unadjusted_candidate_is_mean_difference():
    x = np.zeros((4, 1))
    ds = Dataset(x=x, a=np.array([0.0, 0.0, 1.0, 1.0]), y=np.array([1.0, 3.0, 4.0, 6.0]), mu=np.zeros(4))
    part = att.TreatedPartition(np.array([2]), np.array([3]))
    assert att.att_estimate(ds, part, att.CandidateEstimator()) == pytest.approx(5.0 - 2.0)
    flat = _with_y(_ds(), np.full(40, 1.7))
    part = att.partition_treated(flat, 0.5, np.random.default_rng(0))
    for c in att.default_candidates(flat.p):
        assert att.att_estimate(flat, part, c) == pytest.approx(0.0, abs=1e-12)


def test_regression_candidate_matches_normal_equations():
    ds = _ds(3)
    part = att.partition_treated(ds, 0.5, np.random.default_rng(3))
    cand = att.CandidateEstimator((1, 4))
    c = ds.a == 0
    z = np.column_stack([np.ones(c.sum()), ds.x[c][:, [1, 4]]])
    coef = np.linalg.solve(z.T @ z, z.T @ ds.y[c])
    pred = np.column_stack([np.ones(len(part.estimate)), ds.x[part.estimate][:, [1, 4]]]) @ coef
    expect = ds.y[ds.a == 1].mean() - pred.mean()
    assert att.att_estimate(ds, part, cand) == pytest.approx(expect, abs=1e-12)


def test_rank_deficient_candidate():
    ds = _ds(4)
    x = ds.x.copy()
    x[:, 2] = x[:, 1]
    bad = Dataset(x=x, a=ds.a.copy(), y=ds.y.copy(), mu=ds.mu.copy())
    part = att.partition_treated(bad, 0.5, np.random.default_rng(0))
    with pytest.raises(att.DegenerateCandidateError):
        att.att_estimate(bad, part, att.CandidateEstimator((1, 2)))


def test_information_barrier():
    ds = _ds(5)
    part = att.partition_treated(ds, 0.5, np.random.default_rng(5))
    cand = att.CandidateEstimator((0,))
    rng = np.random.default_rng(0)
    y = ds.y.copy()
    y[part.explore] += rng.normal(scale=10.0, size=len(part.explore))
    moved = _with_y(ds, y)
    second = att.control_prediction(ds, part.estimate, cand)
    assert att.control_prediction(moved, part.estimate, cand) == second
    shift = (y - ds.y).sum() / (ds.a == 1).sum()
    assert att.att_estimate(moved, part, cand) == pytest.approx(att.att_estimate(ds, part, cand) + shift)


def test_explorer_policies():
    ds = _ds(6)
    cands = att.default_candidates(ds.p)
    part = att.partition_treated(ds, 0.5, np.random.default_rng(6))
    view = att.explore_view(ds, part)
    assert att.explore_select(view, cands, att.ExplorerPolicy("fixed", fixed_index=3)) == 3
    with pytest.raises(ValueError):
        att.explore_select(view, cands, att.ExplorerPolicy("fixed", fixed_index=99))
    with pytest.raises(ValueError):
        att.ExplorerPolicy("adversarial_max_estimate")

    y = ds.y.copy()
    y[part.explore] = 3.0 * ds.x[part.explore, 4]
    greedy = att.explore_select(att.explore_view(_with_y(ds, y), part), cands,
                                att.ExplorerPolicy("greedy_max_correlation"))
    assert cands[greedy].covariates == (4,)


def test_adversarial_matches_enumeration():
    ds = _ds(7)
    part = att.partition_treated(ds, 0.5, np.random.default_rng(7))
    view = att.explore_view(ds, part)
    beta = np.array([2.0, -1.0, 0.5, 0.0, 1.0, -2.0])
    prior = att.PriorKnowledge(np.zeros(ds.p), beta)
    cands = [att.CandidateEstimator(s) for k in range(3) for s in itertools.combinations(range(ds.p), k)]
    chosen = att.explore_select(view, cands, att.ExplorerPolicy("adversarial_max_estimate", prior=prior))
    xbar = ds.x[part.explore].mean(axis=0)
    scores = [-sum(beta[j] * xbar[j] for j in c.covariates) for c in cands]
    assert chosen == int(np.argmax(scores))


def test_spec_validation():
    with pytest.raises(ConfigError):
        att.AttCheckSpec(policy="psychic")
    with pytest.raises(ConfigError):
        att.AttCheckSpec(fraction=1.0)
    with pytest.raises(ConfigError):
        att.AttCheckSpec(rho2=0.0)


def test_shifted_effect_recovered():
    res = att.run_unbiasedness_check(att.AttCheckSpec(delta=1.0, replications=1500, base_seed=3))
    assert abs(res.split_mean - 1.0) <= 3 * res.split_se


@pytest.mark.parametrize("cov", [(), (0,), (3, 7)])
def test_conditional_unbiasedness_per_candidate(cov):
    cfg = SimConfig(n=60, p=10, rho2=0.5)
    cand = att.CandidateEstimator(cov)
    vals = []
    for r in range(2000):
        rng = datagen.stream(11, "att-cond", r)
        ds = datagen.gen_dataset(cfg, rng)
        part = att.partition_treated(ds, 0.5, rng)
        # control-outcome mean of the treated is 0 in this model
        vals.append(att.control_prediction(ds, part.estimate, cand))
    v = np.array(vals)
    assert abs(v.mean()) <= 3 * v.std(ddof=1) / np.sqrt(len(v))
