"""Monte Carlo studies of snooping and blinded bias.

* :func:`run_bias_grid` - bias of the snooping, known-mu blinded and
  learned-mu blinded analysts over an (n, p, rho2) grid, for OLS and IPW.
  Every replication also records the quantities needed for the
  ``E[blind(X, Y)] = E[snoop(X, mu)]`` identity and for the
  noise-does-not-increase-bias condition.
* :func:`run_noise_correlation` - correlation between two candidate OLS
  estimates as noise is mixed into the outcome proxy, against the
  closed-form approximation :func:`approx_correlation`.
* :func:`run_rank_agreement` - how often blinded and snooping preference
  ranks disagree, as n grows.
* :func:`check_noise_condition` - standalone version of the noise check.

Both estimators in a grid cell are evaluated on the same simulated
datasets, and the blinded and snooping estimates within a replication
share a dataset, so ratios and differences are paired.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from snoopbias import datagen
from snoopbias.datagen import ConfigError, SimConfig
from snoopbias.lasso import lasso_cv, predict_mu_hat
from snoopbias.parallel import map_replications
from snoopbias.solvers import DegenerateDesignError, EstimatorKind, contrast_matrix

ANALYSTS = ("snoop", "blind_true_mu", "blind_learned_mu")
# per-replication quantities stored for every estimator
QUANTITIES = ("snoop", "blind_true_mu", "blind_learned_mu", "snoop_mu", "snoop_u0", "snoop_umix")


@dataclass(frozen=True)
class GridSpec:
    n_values: Sequence[int] = (30, 100, 250, 500)
    p_values: Sequence[int] = (10, 30, 100, 500)
    rho2_values: Sequence[float] = (0.25, 0.5, 0.75)
    estimators: Sequence[str] = ("ols", "ipw")
    analysts: Sequence[str] = ANALYSTS
    replications: int = 2500
    base_seed: int = 0
    delta: float = 0.0
    lasso_folds: int = 10
    lambda_count: int = 100
    lasso_treatment: str = "unpenalized"

    def __post_init__(self):
        for name in ("n_values", "p_values", "rho2_values", "estimators", "analysts"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.n_values or not self.p_values or not self.rho2_values or not self.estimators:
            raise ConfigError("grid value lists must be nonempty")
        for n in self.n_values:
            if n < 4 or n % 2:
                raise ConfigError(f"n_values: {n} is not an even integer >= 4")
        for p in self.p_values:
            if p < 1:
                raise ConfigError(f"p_values: {p} must be positive")
        for r in self.rho2_values:
            if not (0.0 < r <= 1.0):
                raise ConfigError(f"rho2_values: {r} outside (0, 1]")
        for e in self.estimators:
            EstimatorKind(e)
        for a in self.analysts:
            if a not in ANALYSTS:
                raise ConfigError(f"analysts: unknown analyst {a!r}")
        if self.replications < 2:
            raise ConfigError("replications must be >= 2")

    def cells(self):
        for n in self.n_values:
            for p in self.p_values:
                for rho2 in self.rho2_values:
                    yield n, p, rho2


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    n: int
    p: int
    rho2: float
    analyst: str
    mean_bias: float
    scaled_bias: float
    mc_se: float
    reps: int
    seed: int
    failures: int = 0


@dataclass
class CellResult:
    """Per-replication estimates for one (n, p, rho2) cell.

    ``values[estimator]`` has shape (reps, len(QUANTITIES)); NaN marks a
    replication whose estimate could not be computed.
    """

    n: int
    p: int
    rho2: float
    delta: float
    sd_y: float
    seed: int
    values: dict = field(default_factory=dict)

    def column(self, estimator: str, quantity: str) -> np.ndarray:
        return self.values[estimator][:, QUANTITIES.index(quantity)]

    @property
    def rho(self) -> float:
        return math.sqrt(self.rho2)


@dataclass(frozen=True)
class RatioResult:
    ratio: float
    se: float
    defined: bool


@dataclass(frozen=True)
class NoiseConditionResult:
    mean_m0: float
    mean_mix: float
    margin: float
    pooled_se: float
    satisfied: bool


@dataclass(frozen=True)
class NoiseCorRow:
    m: float
    rho_x: float
    empirical_cor: float
    analytic_cor: float
    expected_max: float
    cor_se: float
    max_se: float
    reps: int


@dataclass(frozen=True)
class RankAgreementRow:
    n: int
    p_disagree: float
    se: float
    reps: int


# ---------------------------------------------------------------------------
# small statistics helpers
# ---------------------------------------------------------------------------

def mc_mean(values):
    """Mean, Monte Carlo standard error and count of the finite entries."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan, 0
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.sum() / v.size), se, int(v.size)


def pooled_se(*ses) -> float:
    return float(math.sqrt(sum(s * s for s in ses)))


def bias_ratio(blind, snoop, delta: float = 0.0, min_z: float = 5.0) -> RatioResult:
    """Ratio of blinded to snooping mean bias with a delta-method standard error.

    ``blind`` and ``snoop`` are paired per-replication estimates. The ratio
    is undefined when the snooping bias is within ``min_z`` standard errors
    of zero.
    """
    b = np.asarray(blind, dtype=float) - delta
    s = np.asarray(snoop, dtype=float) - delta
    ok = np.isfinite(b) & np.isfinite(s)
    b, s = b[ok], s[ok]
    r = b.size
    if r < 2:
        return RatioResult(math.nan, math.nan, False)
    mb, ms = b.mean(), s.mean()
    se_s = s.std(ddof=1) / math.sqrt(r)
    if not abs(ms) > min_z * se_s:
        return RatioResult(math.nan, math.nan, False)
    ratio = mb / ms
    cov = np.cov(b, s, ddof=1)
    var = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio * ratio * cov[1, 1]) / (r * ms * ms)
    return RatioResult(float(ratio), float(math.sqrt(max(var, 0.0))), True)


def summary_bias_ratio(blind_row: SummaryRow, snoop_row: SummaryRow, min_z: float = 5.0) -> RatioResult:
    """Ratio from summary rows alone, treating the two means as independent."""
    ms, mb = snoop_row.mean_bias, blind_row.mean_bias
    if not abs(ms) > min_z * snoop_row.mc_se:
        return RatioResult(math.nan, math.nan, False)
    ratio = mb / ms
    se = abs(ratio) * math.sqrt((blind_row.mc_se / mb) ** 2 + (snoop_row.mc_se / ms) ** 2) if mb else abs(
        blind_row.mc_se / ms
    )
    return RatioResult(ratio, se, True)


def noise_condition(snoop_u0, snoop_umix) -> NoiseConditionResult:
    m0, se0, _ = mc_mean(snoop_u0)
    m1, se1, _ = mc_mean(snoop_umix)
    pse = pooled_se(se0, se1)
    margin = m0 - m1
    return NoiseConditionResult(m0, m1, margin, pse, bool(margin >= -2.0 * pse))


def approx_correlation(rho_mu_j: float, rho_mu_k: float, rho_jk: float, m: float) -> float:
    """Approximate correlation of two candidate estimates under noise level ``m``.

    Uses the fixed-slope approximation to the adjusted OLS estimate:
    ``(1 + (1-m) b12) / sqrt((1 + (1-m) b11) (1 + (1-m) b22))`` with
    ``b_jk = r_j r_k rho_jk - r_j^2 - r_k^2``.
    """
    for v in (rho_mu_j, rho_mu_k, rho_jk):
        if not (-1.0 <= v <= 1.0):
            raise ValueError("correlations must lie in [-1, 1]")
    if not (0.0 <= m <= 1.0):
        raise ValueError("m must lie in [0, 1]")

    def b(r1, r2, r12):
        return r1 * r2 * r12 - r1 * r1 - r2 * r2

    w = 1.0 - m
    d1 = 1.0 + w * b(rho_mu_j, rho_mu_j, 1.0)
    d2 = 1.0 + w * b(rho_mu_k, rho_mu_k, 1.0)
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValueError("nonpositive variance term")
    return (1.0 + w * b(rho_mu_j, rho_mu_k, rho_jk)) / (math.sqrt(d1) * math.sqrt(d2))


def exchangeable_signal_correlation(rho_x: float, p: int = 3) -> float:
    """``Cor(X_j, X_1 + ... + X_p)`` for exchangeable standard normal covariates."""
    return math.sqrt((1.0 + (p - 1) * rho_x) / p)


# ---------------------------------------------------------------------------
# bias grid
# ---------------------------------------------------------------------------

def _cell_id(n, p, rho2):
    return f"grid/n={n}/p={p}/rho2={rho2!r}"


def _learned_proxy(cfg: SimConfig, spec: GridSpec, rng, x, a):
    x_tr = datagen.gen_design(cfg.n, cfg.p, cfg.rho_x, rng)
    a_tr = datagen.assign_treatment(cfg.n)
    y_tr, _ = datagen.gen_outcomes(x_tr, a_tr, cfg.beta, cfg.delta, cfg.sigma_eps, rng)
    model = lasso_cv(
        x_tr, a_tr, y_tr, folds=min(spec.lasso_folds, cfg.n), lambda_count=spec.lambda_count,
        rng=rng, treatment=spec.lasso_treatment,
    )
    return predict_mu_hat(model, x, a)


def _grid_rep(cfg: SimConfig, spec: GridSpec, rep: int) -> np.ndarray:
    rng = datagen.stream(spec.base_seed, _cell_id(cfg.n, cfg.p, cfg.rho2), rep)
    ds = datagen.gen_dataset(cfg, rng)
    u = datagen.gen_independent_mu_copy(cfg, rng)
    mu0 = ds.x @ cfg.beta
    targets = [ds.y, ds.mu, mu0, datagen.noise_mixture(mu0, u, 1.0 - cfg.rho2)]
    learned = "blind_learned_mu" in spec.analysts
    if learned:
        targets.append(_learned_proxy(cfg, spec, rng, ds.x, ds.a))
    targets = np.vstack(targets)
    out = np.full((len(spec.estimators), len(QUANTITIES)), np.nan)
    for e, kind in enumerate(spec.estimators):
        try:
            v = contrast_matrix(kind, ds.x, ds.a, targets)
        except DegenerateDesignError:
            continue
        out[e, 0] = v[0].max()
        out[e, 1] = v[0, np.argmax(v[1])]
        if learned:
            out[e, 2] = v[0, np.argmax(v[4])]
        out[e, 3] = v[1].max()
        out[e, 4] = v[2].max()
        out[e, 5] = v[3].max()
    return out


def run_cell(spec: GridSpec, n: int, p: int, rho2: float, workers: int = 1) -> CellResult:
    cfg = SimConfig(n=n, p=p, rho2=rho2, delta=spec.delta, seed=spec.base_seed,
                    replications=spec.replications)
    reps = map_replications(partial(_grid_rep, cfg, spec), spec.replications, workers)
    arr = np.stack(reps)  # (reps, estimators, quantities)
    values = {kind: np.ascontiguousarray(arr[:, e, :]) for e, kind in enumerate(spec.estimators)}
    return CellResult(n=n, p=p, rho2=rho2, delta=spec.delta, sd_y=cfg.sd_y, seed=spec.base_seed,
                      values=values)


def run_grid_cells(spec: GridSpec, workers: int = 1) -> list[CellResult]:
    return [run_cell(spec, n, p, rho2, workers) for n, p, rho2 in spec.cells()]


def summarize(cells: Sequence[CellResult], spec: GridSpec) -> list[SummaryRow]:
    rows = []
    for kind in spec.estimators:
        for cell in cells:
            for analyst in spec.analysts:
                v = cell.column(kind, analyst)
                mean, se, count = mc_mean(v)
                bias = mean - cell.delta
                rows.append(SummaryRow(
                    estimator=kind, n=cell.n, p=cell.p, rho2=cell.rho2, analyst=analyst,
                    mean_bias=bias, scaled_bias=bias / cell.sd_y, mc_se=se, reps=count,
                    seed=cell.seed, failures=len(v) - count,
                ))
    return rows


def run_bias_grid(spec: GridSpec, workers: int = 1) -> list[SummaryRow]:
    return summarize(run_grid_cells(spec, workers), spec)


def cell_ratios(cell: CellResult, kind: str, analysts=("blind_true_mu", "blind_learned_mu")):
    snoop = cell.column(kind, "snoop")
    out = {}
    for a in analysts:
        blind = cell.column(kind, a)
        if np.isfinite(blind).any():
            out[a] = bias_ratio(blind, snoop, cell.delta)
    return out


def cell_noise_condition(cell: CellResult, kind: str) -> NoiseConditionResult:
    return noise_condition(cell.column(kind, "snoop_u0"), cell.column(kind, "snoop_umix"))


@dataclass(frozen=True)
class RatioRow:
    estimator: str
    n: int
    p: int
    rho2: float
    analyst: str
    ratio: float
    se: float
    defined: bool


@dataclass(frozen=True)
class ConditionRow:
    estimator: str
    n: int
    p: int
    rho2: float
    result: NoiseConditionResult
    reps: int


def ratio_rows(cells: Sequence[CellResult], spec: GridSpec) -> list[RatioRow]:
    blinds = [a for a in spec.analysts if a != "snoop"]
    rows = []
    if "snoop" not in spec.analysts:
        return rows
    for kind in spec.estimators:
        for cell in cells:
            for a, r in cell_ratios(cell, kind, blinds).items():
                rows.append(RatioRow(kind, cell.n, cell.p, cell.rho2, a, r.ratio, r.se, r.defined))
    return rows


def condition_rows(cells: Sequence[CellResult], spec: GridSpec) -> list[ConditionRow]:
    return [
        ConditionRow(kind, c.n, c.p, c.rho2, cell_noise_condition(c, kind), spec.replications)
        for kind in spec.estimators
        for c in cells
    ]


# ---------------------------------------------------------------------------
# noise-induced correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseCorSpec:
    n: int = 50
    p: int = 3
    rho_x_values: Sequence[float] = (0.0, 0.3, 0.6)
    m_values: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0)
    replications: int = 2000
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rho_x_values", tuple(self.rho_x_values))
        object.__setattr__(self, "m_values", tuple(sorted(self.m_values)))
        if self.p < 2:
            raise ConfigError("noisecor needs p >= 2")
        if self.n < 4 or self.n % 2:
            raise ConfigError("noisecor n must be an even integer >= 4")
        for r in self.rho_x_values:
            if not (0.0 <= r < 1.0):
                raise ConfigError(f"rho_x_values: {r} outside [0, 1)")
        for m in self.m_values:
            if not (0.0 <= m <= 1.0):
                raise ConfigError(f"m_values: {m} outside [0, 1]")
        if self.replications < 4:
            raise ConfigError("replications must be >= 4")


def _noisecor_rep(spec: NoiseCorSpec, rho_x: float, rep: int) -> np.ndarray:
    rng = datagen.stream(spec.base_seed, f"noisecor/rho_x={rho_x!r}", rep)
    beta = np.ones(spec.p)
    x = datagen.gen_design(spec.n, spec.p, rho_x, rng)
    a = datagen.assign_treatment(spec.n)
    mu0 = x @ beta
    u = datagen.gen_design(spec.n, spec.p, rho_x, rng) @ beta
    targets = np.vstack([datagen.noise_mixture(mu0, u, m) for m in spec.m_values])
    return contrast_matrix("ols", x, a, targets)  # (len(m), p)


def run_noise_correlation(spec: NoiseCorSpec, workers: int = 1) -> list[NoiseCorRow]:
    rows = []
    for rho_x in spec.rho_x_values:
        reps = np.stack(map_replications(partial(_noisecor_rep, spec, rho_x), spec.replications, workers))
        r_mu = exchangeable_signal_correlation(rho_x, spec.p)
        for i, m in enumerate(spec.m_values):
            d1, d2 = reps[:, i, 0], reps[:, i, 1]
            cor = float(np.corrcoef(d1, d2)[0, 1])
            cor_se = (1.0 - cor * cor) / math.sqrt(spec.replications - 3)
            mx, mx_se, _ = mc_mean(reps[:, i, :].max(axis=1))
            rows.append(NoiseCorRow(
                m=m, rho_x=rho_x, empirical_cor=cor, analytic_cor=approx_correlation(r_mu, r_mu, rho_x, m),
                expected_max=mx, cor_se=cor_se, max_se=mx_se, reps=spec.replications,
            ))
    return rows


# ---------------------------------------------------------------------------
# rank agreement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankAgreementSpec:
    n_values: Sequence[int] = (50, 200, 1000)
    beta: Sequence[float] = (2.0, 1.0)
    rho2: float = 0.5
    j: int = 0
    k: int = 1
    estimator: str = "ols"
    replications: int = 2000
    base_seed: int = 0
    learned: bool = False
    lasso_folds: int = 10
    lambda_count: int = 100

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(self.n_values))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        p = len(self.beta)
        if self.j == self.k:
            raise ConfigError("j and k must differ")
        if not (0 <= self.j < p and 0 <= self.k < p):
            raise ConfigError(f"j and k must index the {p} covariates")
        if self.beta[self.j] == 0.0 or self.beta[self.k] == 0.0:
            raise ConfigError("both compared covariates must be correlated with mu")
        if EstimatorKind(self.estimator) is not EstimatorKind.OLS:
            raise ConfigError("rank agreement is defined for the OLS estimator")
        if not (0.0 < self.rho2 <= 1.0):
            raise ConfigError("rho2 must lie in (0, 1]")
        for n in self.n_values:
            if n < 4 or n % 2:
                raise ConfigError(f"n_values: {n} is not an even integer >= 4")
        if self.replications < 2:
            raise ConfigError("replications must be >= 2")


def _rank_rep(spec: RankAgreementSpec, n: int, rep: int):
    from snoopbias.analysts import rank_disagreement_indicator, ranks_from_values

    rng = datagen.stream(spec.base_seed, f"rankagree/n={n}", rep)
    cfg = SimConfig(n=n, p=len(spec.beta), rho2=spec.rho2, beta=np.array(spec.beta))
    ds = datagen.gen_dataset(cfg, rng)
    targets = [ds.y, ds.mu]
    if spec.learned:
        lspec = GridSpec(lasso_folds=spec.lasso_folds, lambda_count=spec.lambda_count)
        targets.append(_learned_proxy(cfg, lspec, rng, ds.x, ds.a))
    v = contrast_matrix("ols", ds.x, ds.a, np.vstack(targets))
    r_snoop = ranks_from_values(v[0])
    out = [rank_disagreement_indicator(ranks_from_values(v[1]), r_snoop, spec.j, spec.k)]
    if spec.learned:
        out.append(rank_disagreement_indicator(ranks_from_values(v[2]), r_snoop, spec.j, spec.k))
    return out


def run_rank_agreement(spec: RankAgreementSpec, workers: int = 1):
    """Disagreement frequencies per n; returns ``(known_mu_rows, learned_rows)``."""
    known, learned = [], []
    for n in spec.n_values:
        res = np.array(map_replications(partial(_rank_rep, spec, n), spec.replications, workers), dtype=float)
        for col, sink in ((0, known), (1, learned)):
            if col >= res.shape[1]:
                continue
            prob = float(res[:, col].mean())
            se = math.sqrt(prob * (1.0 - prob) / spec.replications)
            sink.append(RankAgreementRow(n=n, p_disagree=prob, se=se, reps=spec.replications))
    return known, learned


# ---------------------------------------------------------------------------
# standalone noise condition check
# ---------------------------------------------------------------------------

def _condition_rep(cfg: SimConfig, kind: str, seed: int, rep: int):
    rng = datagen.stream(seed, f"condition/n={cfg.n}/p={cfg.p}/rho2={cfg.rho2!r}", rep)
    x = datagen.gen_design(cfg.n, cfg.p, cfg.rho_x, rng)
    a = datagen.assign_treatment(cfg.n)
    mu0 = x @ cfg.beta
    u = datagen.gen_independent_mu_copy(cfg, rng)
    targets = np.vstack([mu0, datagen.noise_mixture(mu0, u, 1.0 - cfg.rho2)])
    v = contrast_matrix(kind, x, a, targets)
    return v.max(axis=1)


def check_noise_condition(cfg: SimConfig, reps: int, kind: str = "ols", seed: int = 0,
                          workers: int = 1) -> NoiseConditionResult:
    """Compare ``E[max_j d(x_j, U^(0))]`` with ``E[max_j d(x_j, U^(1 - rho2))]``."""
    res = np.array(map_replications(partial(_condition_rep, cfg, kind, seed), reps, workers))
    return noise_condition(res[:, 0], res[:, 1])
