"""Covariate-selection behavior of snooping and blinded analysts.

A snooping analyst sees the outcomes and reports the largest candidate
estimate ``max_j d(x_j, y)``. A blinded analyst only sees a proxy for the
outcomes (the true conditional mean, or a learned approximation), picks
``j* = argmax_j d(x_j, proxy)`` and then reports ``d(x_j*, y)``.

Column indices are 0-based. Ties go to the smallest index everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from snoopbias.solvers import EstimatorKind, contrast_matrix

SNOOP = "snoop"
BLIND = "blind"


@dataclass(frozen=True)
class SelectionResult:
    estimate: float
    chosen_index: int
    candidate_values: np.ndarray  # d(x_j, y) over ``indices``
    indices: np.ndarray
    proxy_values: Optional[np.ndarray] = None  # d(x_j, proxy) for blinded selections


@dataclass(frozen=True)
class AnalystPolicy:
    """Which selection behavior to simulate.

    ``subset_law`` and ``rank_law`` are samplers taking a Generator; they
    are drawn from a stream independent of the analyzed data.
    """

    mode: str = SNOOP
    proxy: Optional[np.ndarray] = None
    subset_law: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    rank_law: Optional[Callable[[np.random.Generator], int]] = None

    def __post_init__(self):
        if self.mode not in (SNOOP, BLIND):
            raise ValueError(f"mode must be {SNOOP!r} or {BLIND!r}")
        if self.subset_law is not None and self.rank_law is not None:
            raise ValueError("subset_law and rank_law are mutually exclusive")
        if self.mode == BLIND and self.proxy is None:
            raise ValueError("a blinded policy needs a proxy")


def _indices(indices, p):
    if indices is None:
        return np.arange(p)
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        raise ValueError("the considered index set is empty")
    if idx.min() < 0 or idx.max() >= p:
        raise ValueError(f"indices must lie in [0, {p})")
    return idx


def candidate_estimates(dataset, target, d, indices=None) -> np.ndarray:
    """``d(x_j, target)`` for each ``j`` in ``indices`` (all columns by default)."""
    idx = _indices(indices, dataset.p)
    return contrast_matrix(EstimatorKind(d), dataset.x[:, idx], dataset.a, target)[0]


def _snoop(dataset, d, idx):
    vals = candidate_estimates(dataset, dataset.y, d, idx)
    pos = int(np.argmax(vals))
    return SelectionResult(float(vals[pos]), int(idx[pos]), vals, idx)


def _blind(dataset, proxy, d, idx):
    proxy = np.asarray(proxy, dtype=float)
    if proxy.shape != (dataset.n,):
        raise ValueError("proxy must have length n")
    both = contrast_matrix(EstimatorKind(d), dataset.x[:, idx], dataset.a, np.vstack([dataset.y, proxy]))
    pos = int(np.argmax(both[1]))
    return SelectionResult(float(both[0, pos]), int(idx[pos]), both[0], idx, both[1])


def snoop_select(dataset, d) -> SelectionResult:
    return _snoop(dataset, d, np.arange(dataset.p))


def blind_select(dataset, proxy, d) -> SelectionResult:
    return _blind(dataset, proxy, d, np.arange(dataset.p))


def ranks_from_values(values) -> np.ndarray:
    """``R_j = #{j' : v_j <= v_j'}``; rank 1 is the favorite."""
    v = np.asarray(values, dtype=float)
    return (v[:, None] <= v[None, :]).sum(axis=1)


def preference_ranks(dataset, target, d) -> np.ndarray:
    return ranks_from_values(candidate_estimates(dataset, target, d))


def subset_select(dataset, subset, d, mode, proxy=None) -> SelectionResult:
    idx = _indices(subset, dataset.p)
    if mode == SNOOP:
        return _snoop(dataset, d, idx)
    if mode == BLIND:
        if proxy is None:
            raise ValueError("blind mode needs a proxy")
        return _blind(dataset, proxy, d, idx)
    raise ValueError(f"unknown mode {mode!r}")


def order_statistic_index(values, c: int) -> int:
    """Smallest index whose value equals the ``c``-th lowest value (1-based ``c``)."""
    v = np.asarray(values, dtype=float)
    if not (1 <= c <= len(v)):
        raise ValueError(f"c must be in [1, {len(v)}], got {c}")
    target = np.sort(v)[c - 1]
    return int(np.flatnonzero(v == target)[0])


def rank_choice_select(dataset, c: int, d, mode, proxy=None) -> SelectionResult:
    """Report the ``c``-th lowest candidate (``c = p`` is the maximum)."""
    if not (1 <= c <= dataset.p):
        raise ValueError(f"c must be in [1, {dataset.p}], got {c}")
    idx = np.arange(dataset.p)
    if mode == SNOOP:
        vals = candidate_estimates(dataset, dataset.y, d)
        j = order_statistic_index(vals, c)
        return SelectionResult(float(vals[j]), j, vals, idx)
    if mode == BLIND:
        if proxy is None:
            raise ValueError("blind mode needs a proxy")
        both = contrast_matrix(EstimatorKind(d), dataset.x, dataset.a, np.vstack([dataset.y, proxy]))
        j = order_statistic_index(both[1], c)
        return SelectionResult(float(both[0, j]), j, both[0], idx, both[1])
    raise ValueError(f"unknown mode {mode!r}")


def rank_disagreement_indicator(ranks_blind, ranks_snoop, j: int, k: int) -> bool:
    """Blind analyst prefers ``j`` over ``k`` while the snooping analyst prefers ``k``."""
    if j == k:
        raise ValueError("j and k must differ")
    return bool(ranks_blind[j] < ranks_blind[k] and ranks_snoop[j] > ranks_snoop[k])


def select(dataset, policy: AnalystPolicy, d, rng: np.random.Generator) -> SelectionResult:
    """Apply ``policy``, drawing any random subset or rank from ``rng``."""
    if policy.subset_law is not None:
        return subset_select(dataset, policy.subset_law(rng), d, policy.mode, policy.proxy)
    if policy.rank_law is not None:
        return rank_choice_select(dataset, int(policy.rank_law(rng)), d, policy.mode, policy.proxy)
    if policy.mode == SNOOP:
        return snoop_select(dataset, d)
    return blind_select(dataset, policy.proxy, d)


def uniform_rank_law(p: int):
    return lambda rng: int(rng.integers(1, p + 1))


def fixed_rank_law(c: int):
    return lambda rng: c


def fixed_subset_law(subset):
    subset = np.asarray(subset, dtype=np.int64)
    return lambda rng: subset


def random_subset_law(p: int, size: int):
    """Uniformly random subset of ``size`` columns."""
    if not (1 <= size <= p):
        raise ValueError("size must be in [1, p]")
    return lambda rng: np.sort(rng.choice(p, size=size, replace=False))
