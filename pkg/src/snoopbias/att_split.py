"""Sample splitting of treated units for an explorable ATT estimate.

The treated rows are split into an exploration part and an estimation
part. An explorer looks only at the exploration rows (covariates and
outcomes of treated units) and picks an estimator ``f`` of the mean
counterfactual control outcome. ``f`` is fit on the control rows and
averaged over the estimation rows, so it never touches an outcome the
explorer saw. The reported estimate is::

    mean(y over all treated) - f

Because the choice of ``f`` is independent of everything ``f`` is computed
from, the estimate is unbiased whatever the explorer does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np

from snoopbias import datagen
from snoopbias.datagen import ConfigError, Dataset, SimConfig
from snoopbias.parallel import map_replications


class DegenerateCandidateError(ValueError):
    """A candidate regression is not identified on the control rows."""


@dataclass(frozen=True)
class TreatedPartition:
    explore: np.ndarray  # row indices of treated units the explorer sees
    estimate: np.ndarray  # remaining treated row indices


@dataclass(frozen=True)
class CandidateEstimator:
    """Regression imputation of control outcomes on ``covariates``.

    An empty covariate set means the plain control mean.
    """

    covariates: tuple = ()
    name: str = ""

    def __post_init__(self):
        cov = tuple(int(c) for c in self.covariates)
        if len(set(cov)) != len(cov):
            raise ValueError("duplicate covariates")
        object.__setattr__(self, "covariates", cov)
        if not self.name:
            object.__setattr__(self, "name", "mean" if not cov else "reg" + "_".join(map(str, cov)))


def default_candidates(p: int) -> list[CandidateEstimator]:
    """The control mean plus one single-covariate regression per column."""
    return [CandidateEstimator(())] + [CandidateEstimator((j,)) for j in range(p)]


@dataclass(frozen=True)
class ExploreView:
    """What the explorer is allowed to see: exploration rows only."""

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class PriorKnowledge:
    """Population facts an adversarial explorer may use."""

    x_mean: np.ndarray
    beta: np.ndarray
    intercept: float = 0.0


POLICIES = ("fixed", "greedy_max_correlation", "adversarial_max_estimate")


@dataclass(frozen=True)
class ExplorerPolicy:
    kind: str = "fixed"  # fixed, greedy_max_correlation, adversarial_max_estimate
    fixed_index: int = 0
    prior: Optional[PriorKnowledge] = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown explorer policy {self.kind!r}")
        if self.kind == "adversarial_max_estimate" and self.prior is None:
            raise ValueError("the adversarial explorer needs prior knowledge")


def partition_treated(dataset: Dataset, fraction: float, rng: np.random.Generator) -> TreatedPartition:
    """Random split of treated rows; ``round(fraction * n_treated)`` go to exploration."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    treated = np.flatnonzero(dataset.a == 1)
    if treated.size < 2:
        raise ValueError("need at least 2 treated units")
    k = int(round(fraction * treated.size))
    k = min(k, treated.size - 1)
    perm = rng.permutation(treated)
    return TreatedPartition(np.sort(perm[:k]), np.sort(perm[k:]))


def explore_view(dataset: Dataset, partition: TreatedPartition) -> ExploreView:
    return ExploreView(dataset.x[partition.explore].copy(), dataset.y[partition.explore].copy())


def control_prediction(dataset: Dataset, rows, candidate: CandidateEstimator) -> float:
    """Mean over ``rows`` of the candidate's control-outcome regression."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("no rows to average over")
    controls = dataset.a == 0
    yc = dataset.y[controls]
    if yc.size == 0:
        raise DegenerateCandidateError("no control units")
    if not candidate.covariates:
        return float(yc.mean())
    cols = list(candidate.covariates)
    xc = dataset.x[controls][:, cols]
    design = np.column_stack([np.ones(len(yc)), xc])
    coef, _, rank, _ = np.linalg.lstsq(design, yc, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateCandidateError(f"candidate {candidate.name} is rank deficient on the controls")
    return float(coef[0] + dataset.x[rows][:, cols].mean(axis=0) @ coef[1:])


def att_estimate(dataset: Dataset, partition: TreatedPartition, candidate: CandidateEstimator) -> float:
    treated_mean = float(dataset.y[dataset.a == 1].mean())
    return treated_mean - control_prediction(dataset, partition.estimate, candidate)


def explore_select(view: ExploreView, candidates: Sequence[CandidateEstimator], policy: ExplorerPolicy) -> int:
    """Index into ``candidates`` chosen from the exploration rows alone."""
    if not candidates:
        raise ValueError("no candidates")
    if policy.kind == "fixed":
        if not (0 <= policy.fixed_index < len(candidates)):
            raise ValueError("fixed_index out of range")
        return policy.fixed_index
    if policy.kind == "greedy_max_correlation":
        singles = [i for i, c in enumerate(candidates) if len(c.covariates) == 1]
        if not singles:
            raise ValueError("greedy explorer needs single-covariate candidates")
        if view.y.size < 2 or np.ptp(view.y) == 0.0:
            return singles[0]
        cols = [candidates[i].covariates[0] for i in singles]
        xs = view.x[:, cols] - view.x[:, cols].mean(axis=0)
        yc = view.y - view.y.mean()
        sx = np.sqrt((xs * xs).sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            cor = np.abs(xs.T @ yc) / (sx * np.sqrt(yc @ yc))
        cor = np.where(np.isfinite(cor), cor, -1.0)
        return singles[int(np.argmax(cor))]
    # adversarial: use the exploration rows and prior facts to guess which
    # adjustment makes the ATT look largest
    prior = policy.prior
    xbar = view.x.mean(axis=0) if view.y.size else prior.x_mean
    scores = []
    for c in candidates:
        guess = prior.intercept + prior.beta @ prior.x_mean
        for j in c.covariates:
            guess += prior.beta[j] * (xbar[j] - prior.x_mean[j])
        scores.append(-guess)
    return int(np.argmax(scores))


def _all_treated(dataset):
    return np.flatnonzero(dataset.a == 1)


def no_split_estimate(dataset: Dataset, candidates: Sequence[CandidateEstimator]) -> float:
    """Contrast arm: pick the candidate giving the largest ATT using all the data."""
    treated_mean = float(dataset.y[dataset.a == 1].mean())
    rows = _all_treated(dataset)
    return max(treated_mean - control_prediction(dataset, rows, c) for c in candidates)


@dataclass(frozen=True)
class AttCheckSpec:
    n: int = 200
    p: int = 20
    rho2: float = 0.5
    delta: float = 0.0
    fraction: float = 0.5
    policy: str = "adversarial_max_estimate"
    replications: int = 5000
    base_seed: int = 0

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ConfigError("attsplit n must be an even integer >= 8")
        if self.p < 1:
            raise ConfigError("attsplit p must be positive")
        if not (0.0 < self.fraction < 1.0):
            raise ConfigError("fraction must lie in (0, 1)")
        if self.replications < 2:
            raise ConfigError("replications must be >= 2")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        self.sim_config()

    def sim_config(self) -> SimConfig:
        return SimConfig(n=self.n, p=self.p, rho2=self.rho2, delta=self.delta, seed=self.base_seed)


@dataclass(frozen=True)
class AttCheckResult:
    policy: str
    split_mean: float
    split_se: float
    nosplit_mean: float
    nosplit_se: float
    delta: float
    reps: int


def _att_rep(spec: AttCheckSpec, rep: int):
    cfg = spec.sim_config()
    rng = datagen.stream(spec.base_seed, "attsplit", rep)
    ds = datagen.gen_dataset(cfg, rng)
    candidates = default_candidates(cfg.p)
    part = partition_treated(ds, spec.fraction, rng)
    prior = PriorKnowledge(np.zeros(cfg.p), np.asarray(cfg.beta))
    policy = ExplorerPolicy(spec.policy, prior=prior)
    chosen = explore_select(explore_view(ds, part), candidates, policy)
    return att_estimate(ds, part, candidates[chosen]), no_split_estimate(ds, candidates)


def run_unbiasedness_check(spec: AttCheckSpec, workers: int = 1) -> AttCheckResult:
    res = np.array(map_replications(partial(_att_rep, spec), spec.replications, workers))
    r = spec.replications
    se = res.std(axis=0, ddof=1) / math.sqrt(r)
    mean = res.mean(axis=0)
    return AttCheckResult(spec.policy, float(mean[0]), float(se[0]), float(mean[1]), float(se[1]),
                          spec.delta, r)
