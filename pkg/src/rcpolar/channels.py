"""Finite-alphabet binary-input memoryless symmetric (BMS) channels.

A channel is stored as an ``(n, 2)`` array of transition probabilities,
row ``y`` holding ``(W(y|0), W(y|1))``.  Rows are kept in canonical form:
sorted by log-likelihood ratio from ``+inf`` down to ``-inf``, with
equal-ratio symbols merged and zero-probability symbols dropped.  For a
symmetric channel the output involution is then simply row reversal with
the two columns swapped.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from rcpolar._merge import greedy_merge

# symbols whose LLRs differ by less than this are treated as one symbol
LLR_TOL = 1e-9

DEFAULT_MU = 64


class ChannelError(ValueError):
    pass


class BmsChannel:
    """Immutable BMS channel in canonical form.

    Build instances through :func:`make_bec`, :func:`make_bsc`,
    :func:`make_explicit` or :func:`polar_combine`; the constructor assumes
    its input is already canonical.
    """

    __slots__ = ("transitions", "label", "kind", "param", "_llr")

    def __init__(self, transitions: np.ndarray, label: str = "",
                 kind: str = "explicit", param: float | None = None):
        t = np.ascontiguousarray(transitions, dtype=np.float64)
        t.setflags(write=False)
        self.transitions = t
        self.label = label
        self.kind = kind
        self.param = param
        with np.errstate(divide="ignore", invalid="ignore"):
            llr = np.log(t[:, 0]) - np.log(t[:, 1])
        llr[t[:, 0] == t[:, 1]] = 0.0
        llr.setflags(write=False)
        self._llr = llr

    def __len__(self) -> int:
        return self.transitions.shape[0]

    def __repr__(self) -> str:
        name = self.label or self.kind
        return f"BmsChannel({name}, symbols={len(self)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, BmsChannel):
            return NotImplemented
        return (self.transitions.shape == other.transitions.shape
                and np.allclose(self.transitions, other.transitions,
                                rtol=0, atol=1e-12))

    __hash__ = None

    @property
    def llrs(self) -> np.ndarray:
        """LLR of every output symbol, ``log W(y|0)/W(y|1)``."""
        return self._llr

    @property
    def erasure_symbol(self) -> int | None:
        hits = np.flatnonzero(self._llr == 0.0)
        return int(hits[0]) if hits.size else None

    def validate(self, atol: float = 1e-12) -> None:
        """Raise :class:`ChannelError` unless rows form a symmetric BMS channel."""
        t = self.transitions
        if t.ndim != 2 or t.shape[1] != 2 or t.shape[0] == 0:
            raise ChannelError("transitions must be a non-empty (n, 2) array")
        if np.any(t < -atol) or np.any(t > 1 + atol):
            raise ChannelError("transition probabilities must lie in [0, 1]")
        sums = t.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > atol):
            raise ChannelError(f"rows do not sum to 1 per input: {sums}")
        if not np.allclose(t[::-1, ::-1], t, rtol=0, atol=atol):
            raise ChannelError("no output involution swaps the two inputs")

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one output symbol index per input bit in ``x``."""
        x = np.asarray(x, dtype=np.uint8)
        cdf = np.cumsum(self.transitions[:, 0])
        cdf[-1] = 1.0
        y = np.searchsorted(cdf, rng.random(x.shape), side="right")
        y = np.minimum(y, len(self) - 1)
        # symmetry: the output for input 1 is the mirrored output for input 0
        return np.where(x == 1, len(self) - 1 - y, y)

    def to_dict(self) -> dict:
        if self.kind == "bec":
            return {"kind": "bec", "eps": self.param}
        if self.kind == "bsc":
            return {"kind": "bsc", "p": self.param}
        return {"kind": "explicit", "transitions": self.transitions.tolist(),
                "label": self.label}


def _canonical(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Fold a symmetric alphabet onto its positive-LLR half and rebuild it.

    Every symbol contributes half its mass as itself and half as its mirror,
    which is exact for symmetric input and makes the output symmetric by
    construction.
    """
    p0 = np.asarray(p0, dtype=np.float64).ravel()
    p1 = np.asarray(p1, dtype=np.float64).ravel()
    keep = (p0 + p1) > 0
    p0, p1 = p0[keep], p1[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(p0) - np.log(p1)
    llr[p0 == p1] = 0.0

    pos = llr > LLR_TOL
    neg = llr < -LLR_TOL
    era = ~(pos | neg)
    a = 0.5 * np.concatenate([p0[pos], p1[neg]])
    b = 0.5 * np.concatenate([p1[pos], p0[neg]])
    lam = np.concatenate([llr[pos], -llr[neg]])
    erasure = 0.5 * float(np.sum(p0[era] + p1[era]))

    order = np.argsort(lam, kind="stable")
    a, b, lam = a[order], b[order], lam[order]
    a, b = _group_equal_llr(a, b, lam)
    return _assemble(a, b, erasure)


def _group_equal_llr(a, b, lam):
    if a.size == 0:
        return a, b
    finite = np.isfinite(lam)
    lf = lam[finite]
    if lf.size:
        gap = np.diff(lf) > LLR_TOL * np.maximum(1.0, np.abs(lf[1:]))
        starts = np.concatenate([[0], np.flatnonzero(gap) + 1])
        ga = np.add.reduceat(a[finite], starts)
        gb = np.add.reduceat(b[finite], starts)
    else:
        ga = gb = np.zeros(0)
    if not finite.all():
        ga = np.append(ga, a[~finite].sum())
        gb = np.append(gb, 0.0)
    return ga, gb


def _assemble(a: np.ndarray, b: np.ndarray, erasure: float) -> np.ndarray:
    """Full alphabet from the ascending positive half plus erasure mass."""
    top = np.column_stack([a[::-1], b[::-1]])
    rows = [top]
    if erasure > 0:
        rows.append(np.array([[erasure, erasure]]))
    rows.append(top[::-1, ::-1])
    return np.vstack(rows)


def _positive_half(t: np.ndarray):
    """Ascending-LLR positive half ``(a, b)`` and erasure mass of canonical rows."""
    n = t.shape[0]
    h = n // 2
    erasure = float(t[h, 0]) if n % 2 else 0.0
    top = t[:h]
    return top[::-1, 0].copy(), top[::-1, 1].copy(), erasure


def make_explicit(transitions: Iterable[Sequence[float]], label: str = "") -> BmsChannel:
    t = np.asarray(list(transitions), dtype=np.float64)
    if t.ndim != 2 or t.shape[1] != 2:
        raise ChannelError("explicit channel needs a list of (p0, p1) pairs")
    if np.any(t < 0) or np.any(t > 1) or np.any(np.abs(t.sum(axis=0) - 1) > 1e-12):
        raise ChannelError("explicit transitions are not two probability columns")
    if not _symmetric_multiset(t):
        raise ChannelError("explicit channel is not symmetric")
    ch = BmsChannel(_canonical(t[:, 0], t[:, 1]), label=label or "explicit")
    ch.validate()
    return ch


def _symmetric_multiset(t: np.ndarray) -> bool:
    """True when some grouping of symbols makes the channel symmetric.

    Checked on the LLR distribution: the mass at LLR ``l`` under input 0
    must equal the mass at ``-l`` under input 1.
    """
    canon = _canonical_unfolded(t)
    return np.allclose(canon[::-1, ::-1], canon, rtol=0, atol=1e-12)


def _canonical_unfolded(t: np.ndarray) -> np.ndarray:
    p0, p1 = t[:, 0], t[:, 1]
    keep = (p0 + p1) > 0
    p0, p1 = p0[keep], p1[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.log(p0) - np.log(p1)
    llr[p0 == p1] = 0.0
    llr = np.round(llr / LLR_TOL) * LLR_TOL
    uniq, inv = np.unique(-llr, return_inverse=True)
    out = np.zeros((uniq.size, 2))
    np.add.at(out[:, 0], inv, p0)
    np.add.at(out[:, 1], inv, p1)
    return out


def make_bec(eps: float) -> BmsChannel:
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise ChannelError(f"erasure probability {eps} outside [0, 1]")
    t = _canonical([1 - eps, eps, 0.0], [0.0, eps, 1 - eps])
    return BmsChannel(t, label=f"BEC({eps:g})", kind="bec", param=eps)


def make_bsc(p: float) -> BmsChannel:
    p = float(p)
    if not 0.0 <= p <= 0.5:
        raise ChannelError(f"crossover probability {p} outside [0, 0.5]")
    t = _canonical([1 - p, p], [p, 1 - p])
    return BmsChannel(t, label=f"BSC({p:g})", kind="bsc", param=p)


def channel_from_dict(d: dict) -> BmsChannel:
    kind = d.get("kind")
    need = {"bec": "eps", "bsc": "p", "explicit": "transitions"}.get(kind)
    if need is None:
        raise ChannelError(f"unknown channel kind {kind!r}")
    if need not in d:
        raise ChannelError(f"{kind} channel needs '{need}'")
    if kind == "bec":
        return make_bec(d["eps"])
    if kind == "bsc":
        return make_bsc(d["p"])
    return make_explicit(d["transitions"], label=d.get("label", ""))


def bhattacharyya(W: BmsChannel) -> float:
    t = W.transitions
    return float(min(1.0, np.sum(np.sqrt(t[:, 0] * t[:, 1]))))


def _xlog2(x, ratio):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log2(np.where(x > 0, ratio, 1.0)), 0.0)


def capacity(W: BmsChannel) -> float:
    """Mutual information between a uniform input and the output, in bits."""
    t = W.transitions
    s = t[:, 0] + t[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        i = 0.5 * (_xlog2(t[:, 0], 2 * t[:, 0] / s) + _xlog2(t[:, 1], 2 * t[:, 1] / s))
    return float(min(1.0, max(0.0, i.sum())))


def polar_combine(Wa: BmsChannel, Wb: BmsChannel, branch: str) -> BmsChannel:
    """One polarization step with ``x1 = u1 ^ u2`` over ``Wa`` and ``x2 = u2`` over ``Wb``.

    ``branch="minus"`` gives the channel ``u1 -> (y1, y2)``; ``"plus"`` gives
    ``u2 -> (y1, y2, u1)``.
    """
    A, B = Wa.transitions, Wb.transitions
    if branch == "minus":
        p0 = 0.5 * (np.outer(A[:, 0], B[:, 0]) + np.outer(A[:, 1], B[:, 1]))
        p1 = 0.5 * (np.outer(A[:, 1], B[:, 0]) + np.outer(A[:, 0], B[:, 1]))
    elif branch == "plus":
        p0 = 0.5 * np.concatenate([np.outer(A[:, 0], B[:, 0]).ravel(),
                                   np.outer(A[:, 1], B[:, 0]).ravel()])
        p1 = 0.5 * np.concatenate([np.outer(A[:, 1], B[:, 1]).ravel(),
                                   np.outer(A[:, 0], B[:, 1]).ravel()])
    else:
        raise ValueError(f"branch must be 'minus' or 'plus', got {branch!r}")
    return BmsChannel(_canonical(p0, p1), label=f"{branch}")


def degrade_merge(W: BmsChannel, mu: int = DEFAULT_MU) -> BmsChannel:
    """Reduce ``W`` to at most ``mu`` output symbols by degrading merges.

    Adjacent positive-half symbols (in LLR order) are merged greedily,
    always picking the pair whose merge loses the least capacity.  The
    result is degraded with respect to ``W``.
    """
    if mu < 2 or mu % 2:
        raise ChannelError(f"mu must be an even integer >= 2, got {mu}")
    if len(W) <= mu:
        return W
    a, b, erasure = _positive_half(W.transitions)
    target = mu // 2 - (1 if erasure > 0 else 0)
    if target < 1:
        # only the erasure symbol fits: everything collapses to pure noise
        return make_bec(1.0)
    a, b = greedy_merge(a, b, target)
    return BmsChannel(_assemble(a, b, erasure), label=W.label, kind="explicit")


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)
