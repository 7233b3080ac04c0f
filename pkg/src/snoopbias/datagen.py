"""Synthetic datasets for the snooping/blinding simulations.

Covariates are standard normal with exchangeable correlation ``rho_x``,
treatment is the fixed assignment ``a_i = 1(i > n/2)`` and outcomes follow
``y = x @ beta + a * delta + eps`` with the noise variance calibrated so
that ``Var(x @ beta) / Var(y - a * delta) = rho2``.

Random streams come from :func:`stream`, which derives an independent
``numpy.random.Generator`` (PCG64) from ``(seed, experiment, replication)``
so results do not depend on execution order or worker count.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Invalid simulation configuration."""


def stream(seed: int, experiment: str, replication: int = 0) -> np.random.Generator:
    """Independent generator for one replication of one experiment."""
    key = zlib.crc32(experiment.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(replication)))
    return np.random.Generator(np.random.PCG64(ss))


def make_beta(p: int) -> np.ndarray:
    """Coefficients 2 for the first five covariates, -1 for the next five, 0 after."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    beta = np.zeros(p)
    beta[:5] = 2.0
    beta[5:10] = -1.0
    return beta


def calibrate_noise_var(beta, rho2: float) -> float:
    """Noise variance giving explained-variance fraction ``rho2``.

    Assumes iid standard normal covariates, so ``Var(x @ beta) = sum(beta**2)``.
    """
    if not (0.0 < rho2 <= 1.0):
        raise ConfigError(f"rho2 must be in (0, 1], got {rho2}")
    signal = float(np.dot(beta, beta))
    if signal == 0.0:
        raise ConfigError("beta must not be all zero")
    return signal * (1.0 - rho2) / rho2


def signal_variance(beta, rho_x: float = 0.0) -> float:
    """``Var(x @ beta)`` under the exchangeable covariate law."""
    beta = np.asarray(beta, dtype=float)
    s = beta.sum()
    return float((1.0 - rho_x) * beta @ beta + rho_x * s * s)


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    rho2: float = 0.5
    delta: float = 0.0
    rho_x: float = 0.0
    beta: np.ndarray | None = field(default=None, compare=False)
    sigma_eps: float | None = None
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ConfigError(f"n must be a positive even integer, got {self.n}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if not (0.0 < self.rho2 <= 1.0):
            raise ConfigError(f"rho2 must be in (0, 1], got {self.rho2}")
        if not (0.0 <= self.rho_x < 1.0):
            raise ConfigError(f"rho_x must be in [0, 1), got {self.rho_x}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        beta = make_beta(self.p) if self.beta is None else np.asarray(self.beta, dtype=float)
        if beta.shape != (self.p,):
            raise ConfigError(f"beta must have length p={self.p}")
        beta = beta.copy()
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        # the explained-variance target accounts for covariate correlation
        signal = signal_variance(beta, self.rho_x)
        if signal == 0.0:
            raise ConfigError("beta must not be all zero")
        expected = np.sqrt(signal * (1.0 - self.rho2) / self.rho2)
        if self.sigma_eps is None:
            object.__setattr__(self, "sigma_eps", float(expected))
        elif not np.isclose(self.sigma_eps, expected, rtol=1e-9, atol=1e-12):
            raise ConfigError(
                f"sigma_eps={self.sigma_eps} inconsistent with rho2={self.rho2} (expected {expected})"
            )

    @property
    def sd_y(self) -> float:
        """Theoretical ``sd(y - a * delta)``."""
        return float(np.sqrt(signal_variance(self.beta, self.rho_x) + self.sigma_eps**2))

    @property
    def rho(self) -> float:
        return float(np.sqrt(self.rho2))


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        n = self.x.shape[0]
        if not (self.a.shape == self.y.shape == self.mu.shape == (n,)):
            raise ValueError("x, a, y and mu must share the row dimension")
        for arr in (self.x, self.a, self.y, self.mu):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def gen_design(n: int, p: int, rho_x: float, rng: np.random.Generator) -> np.ndarray:
    """Standard normal covariates with common pairwise correlation ``rho_x``."""
    if not (0.0 <= rho_x < 1.0):
        raise ConfigError(f"rho_x must be in [0, 1), got {rho_x}")
    z = rng.standard_normal((n, p))
    if rho_x == 0.0:
        return z
    z0 = rng.standard_normal((n, 1))
    return np.sqrt(rho_x) * z0 + np.sqrt(1.0 - rho_x) * z


def assign_treatment(n: int) -> np.ndarray:
    if n < 2 or n % 2:
        raise ConfigError(f"n must be a positive even integer, got {n}")
    a = np.zeros(n)
    a[n // 2:] = 1.0
    return a


def gen_outcomes(x, a, beta, delta, sigma_eps, rng):
    """Return ``(y, mu)`` with ``mu = x @ beta + a * delta``."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.shape[1] != beta.shape[0] or x.shape[0] != len(a):
        raise ValueError("dimension mismatch between x, a and beta")
    mu = x @ beta + np.asarray(a, dtype=float) * delta
    eps = rng.standard_normal(x.shape[0])
    return mu + sigma_eps * eps, mu


def noise_mixture(mu0, u, m: float) -> np.ndarray:
    """``mu0 * sqrt(1 - m) + u * sqrt(m)``: same variance, weaker correlations."""
    if not (0.0 <= m <= 1.0):
        raise ValueError(f"m must be in [0, 1], got {m}")
    mu0 = np.asarray(mu0, dtype=float)
    u = np.asarray(u, dtype=float)
    if mu0.shape != u.shape:
        raise ValueError("mu0 and u must have the same length")
    return mu0 * np.sqrt(1.0 - m) + u * np.sqrt(m)


def gen_independent_mu_copy(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """``mu(X', 0)`` for a fresh design ``X'`` drawn from the same law."""
    x2 = gen_design(config.n, config.p, config.rho_x, rng)
    return x2 @ config.beta


def gen_dataset(config: SimConfig, rng: np.random.Generator) -> Dataset:
    x = gen_design(config.n, config.p, config.rho_x, rng)
    a = assign_treatment(config.n)
    y, mu = gen_outcomes(x, a, config.beta, config.delta, config.sigma_eps, rng)
    return Dataset(x=x, a=a, y=y, mu=mu)
