"""Reliability of synthetic channels and selection of good index sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from rcpolar.channels import DEFAULT_MU, BmsChannel, bhattacharyya, degrade_merge, make_bec, polar_combine
from rcpolar.polar import _log2

log = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-6


@dataclass(frozen=True, eq=False)
class ReliabilityProfile:
    """Per-index Bhattacharyya upper bounds of one block under one channel."""

    m: int
    channel_label: str
    z_bounds: np.ndarray
    delta: float = DEFAULT_DELTA
    punctured_set: tuple = ()

    def fer_bound(self, indices) -> float:
        """Union bound on the block error probability when ``indices`` are unfrozen."""
        idx = np.asarray(list(indices), dtype=np.int64)
        return float(min(1.0, self.z_bounds[idx].sum())) if idx.size else 0.0

    def to_csv(self) -> str:
        lines = ["index,z_bound"]
        lines += [f"{i + 1},{z!r}" for i, z in enumerate(self.z_bounds.tolist())]
        return "\n".join(lines) + "\n"


def evolve_reliability(W: BmsChannel, m: int, punctured_set=(), mu: int = DEFAULT_MU,
                       delta: float = DEFAULT_DELTA) -> ReliabilityProfile:
    """Bhattacharyya upper bounds for all ``m`` synthetic channels.

    Punctured channel positions enter as a BEC with erasure probability 1.
    Every combine is followed by a degrading merge to ``mu`` symbols, so the
    results bound the true values from above.
    """
    n = _log2(m)
    punctured = tuple(sorted({int(p) for p in punctured_set}))
    if punctured and (punctured[0] < 0 or punctured[-1] >= m):
        raise ValueError(f"punctured positions must lie in range({m})")
    erased = make_bec(1.0)
    leaves = [W] * m
    for p in punctured:
        leaves[p] = erased

    memo: dict = {}

    def combine(a, b, branch):
        key = (id(a), id(b), branch)
        hit = memo.get(key)
        if hit is None:
            hit = degrade_merge(polar_combine(a, b, branch), mu)
            memo[key] = hit
        return hit

    z_cache: dict = {}

    def z_of(ch):
        z = z_cache.get(id(ch))
        if z is None:
            z = z_cache[id(ch)] = bhattacharyya(ch)
        return z

    def rec(layer):
        if len(layer) == 1:
            return [z_of(layer[0])]
        pairs = list(zip(layer[0::2], layer[1::2]))
        minus = [combine(a, b, "minus") for a, b in pairs]
        plus = [combine(a, b, "plus") for a, b in pairs]
        return rec(minus) + rec(plus)

    # keep every channel alive so memo ids stay unique during the evaluation
    memo["_leaves"] = leaves
    z = np.clip(np.asarray(rec(leaves), dtype=np.float64), 0.0, 1.0)
    assert z.size == 2 ** n
    return ReliabilityProfile(m=m, channel_label=W.label, z_bounds=z, delta=delta,
                              punctured_set=punctured)


def select_L(profile: ReliabilityProfile) -> np.ndarray:
    return np.flatnonzero(profile.z_bounds <= profile.delta)


def rank_order(z: np.ndarray) -> np.ndarray:
    """Indices by increasing ``z``, ties broken by the smaller index."""
    return np.lexsort((np.arange(z.size), z))


def select_A(profile: ReliabilityProfile, size: int) -> np.ndarray:
    """The ``size`` most reliable indices, returned sorted ascending."""
    if size < 0 or size > profile.m:
        raise ValueError(f"cannot select {size} indices from a block of {profile.m}")
    chosen = np.sort(rank_order(profile.z_bounds)[:size])
    bad = int(np.count_nonzero(profile.z_bounds[chosen] > profile.delta))
    if bad:
        log.warning("%d of %d selected indices exceed delta=%g under %s",
                    bad, size, profile.delta, profile.channel_label)
    return chosen


def puncture_score(profile: ReliabilityProfile, info_size: int) -> float:
    """Sum of the ``info_size`` smallest bounds."""
    return float(np.sort(profile.z_bounds)[:info_size].sum())


def choose_puncture(m: int, n_target: int, trials: int, W: BmsChannel, info_size: int,
                    seed, mu: int = DEFAULT_MU, delta: float = DEFAULT_DELTA):
    """Best of ``trials`` uniformly random puncturing patterns of size ``m - n_target``.

    Returns ``(punctured_set, profile)``; the pattern minimizes the sum of
    the ``info_size`` smallest bounds under ``W``.  The first minimum wins.
    """
    _log2(m)
    if not 0 < n_target <= m:
        raise ValueError(f"target length {n_target} not in 1..{m}")
    if trials < 1:
        raise ValueError("need at least one puncturing trial")
    if not 0 <= info_size <= n_target:
        raise ValueError(f"info size {info_size} does not fit in {n_target} transmitted bits")
    if n_target == m:
        return (), evolve_reliability(W, m, (), mu, delta)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(trials):
        pattern = tuple(np.sort(rng.choice(m, size=m - n_target, replace=False)).tolist())
        prof = evolve_reliability(W, m, pattern, mu, delta)
        score = puncture_score(prof, info_size)
        if best is None or score < best[0]:
            best = (score, pattern, prof)
    return best[1], best[2]
