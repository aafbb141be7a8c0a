"""Extra polarization steps that align good index sets of non-degraded channels.

One step takes two i.i.d. copies ``a`` and ``b`` of a u-vector of length
``n_in`` and produces a vector ``w`` of length ``2 n_in``.  Indices ``d`` of
``D`` (good for the worse channel only) in copy ``a`` are paired with
indices ``d'`` of ``D'`` (good for the better channel only) in copy ``b``:
``w`` carries ``a[d] ^ b[d']`` followed by ``b[d']``, and everything else
passes through in an order that keeps successive decoding causal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rcpolar.construction import rank_order
from rcpolar.polar import SCState, check_combine, var_combine

PASS_A, PASS_B, XOR, REPEAT = 0, 1, 2, 3
_KIND_NAMES = {PASS_A: "a", PASS_B: "b", XOR: "xor", REPEAT: "repeat"}


class AlignmentError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class AlignmentStep:
    """Interleaving of two copies; index sets are 0-based and sorted."""

    n_in: int
    d_set: tuple
    d_prime_set: tuple
    kind: np.ndarray = field(repr=False)
    src_a: np.ndarray = field(repr=False)
    src_b: np.ndarray = field(repr=False)

    @property
    def n_out(self) -> int:
        return 2 * self.n_in

    @property
    def position_map(self) -> list:
        out = []
        for k, i, j in zip(self.kind.tolist(), self.src_a.tolist(), self.src_b.tolist()):
            if k == PASS_A:
                out.append(("a", i))
            elif k == PASS_B:
                out.append(("b", j))
            else:
                out.append((_KIND_NAMES[k], i, j))
        return out

    def split(self, w: np.ndarray):
        """Recover the two input copies from an output vector (last axis)."""
        w = np.asarray(w, dtype=np.uint8)
        lead = w.shape[:-1]
        a = np.zeros(lead + (self.n_in,), dtype=np.uint8)
        b = np.zeros_like(a)
        pa = self.kind == PASS_A
        pb = self.kind == PASS_B
        a[..., self.src_a[pa]] = w[..., pa]
        b[..., self.src_b[pb]] = w[..., pb]
        xor_pos = np.flatnonzero(self.kind == XOR)
        rep_pos = xor_pos + 1
        d = self.src_a[xor_pos]
        dp = self.src_b[xor_pos]
        b[..., dp] = w[..., rep_pos]
        a[..., d] = w[..., xor_pos] ^ w[..., rep_pos]
        return a, b

    def merge(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`split`."""
        a = np.asarray(a, dtype=np.uint8)
        b = np.asarray(b, dtype=np.uint8)
        w = np.zeros(a.shape[:-1] + (self.n_out,), dtype=np.uint8)
        pa = self.kind == PASS_A
        pb = self.kind == PASS_B
        w[..., pa] = a[..., self.src_a[pa]]
        w[..., pb] = b[..., self.src_b[pb]]
        xor_pos = np.flatnonzero(self.kind == XOR)
        d = self.src_a[xor_pos]
        dp = self.src_b[xor_pos]
        w[..., xor_pos] = a[..., d] ^ b[..., dp]
        w[..., xor_pos + 1] = b[..., dp]
        return w


def mismatch_sets(L_next, L_cur, z_cur):
    """``D = L_next - L_cur`` and the ``|D|`` most reliable (under ``z_cur``) indices of ``L_cur - L_next``."""
    L_next = {int(i) for i in L_next}
    L_cur = {int(i) for i in L_cur}
    D = sorted(L_next - L_cur)
    donors = np.array(sorted(L_cur - L_next), dtype=np.int64)
    if donors.size < len(D):
        raise AlignmentError(
            f"block length too small to align: {len(D)} indices good only for the "
            f"worse channel but only {donors.size} good only for the better one")
    z_cur = np.asarray(z_cur, dtype=np.float64)
    if donors.size:
        order = np.lexsort((donors, z_cur[donors]))
        Dp = sorted(donors[order[:len(D)]].tolist())
    else:
        Dp = []
    return tuple(D), tuple(Dp)


def build_alignment_step(D, D_prime, n_in: int) -> AlignmentStep:
    D = [int(i) for i in D]
    Dp = [int(i) for i in D_prime]
    if len(D) != len(Dp):
        raise ValueError("D and D' must have the same size")
    for name, s in (("D", D), ("D'", Dp)):
        if s != sorted(set(s)):
            raise ValueError(f"{name} must be strictly increasing")
        if s and (s[0] < 0 or s[-1] >= n_in):
            raise ValueError(f"{name} is not a subset of range({n_in})")
    kind, src_a, src_b = [], [], []

    def emit(k, i, j):
        kind.append(k)
        src_a.append(i)
        src_b.append(j)

    na = nb = 0
    for d, dp in zip(D, Dp):
        for i in range(na, d):
            emit(PASS_A, i, -1)
        for j in range(nb, dp):
            emit(PASS_B, -1, j)
        emit(XOR, d, dp)
        emit(REPEAT, d, dp)
        na, nb = d + 1, dp + 1
    for i in range(na, n_in):
        emit(PASS_A, i, -1)
    for j in range(nb, n_in):
        emit(PASS_B, -1, j)
    as_arr = lambda v: np.asarray(v, dtype=np.int64)
    return AlignmentStep(n_in=n_in, d_set=tuple(D), d_prime_set=tuple(Dp),
                         kind=as_arr(kind), src_a=as_arr(src_a), src_b=as_arr(src_b))


def propagate_reliability(step: AlignmentStep, z_a, z_b=None) -> np.ndarray:
    """Bounds on the output positions of ``step`` given bounds on both copies."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = z_a if z_b is None else np.asarray(z_b, dtype=np.float64)
    if z_a.shape != (step.n_in,) or z_b.shape != (step.n_in,):
        raise ValueError(f"expected two vectors of length {step.n_in}")
    out = np.empty(step.n_out)
    pa = step.kind == PASS_A
    pb = step.kind == PASS_B
    out[pa] = z_a[step.src_a[pa]]
    out[pb] = z_b[step.src_b[pb]]
    xor_pos = np.flatnonzero(step.kind == XOR)
    za = z_a[step.src_a[xor_pos]]
    zb = z_b[step.src_b[xor_pos]]
    out[xor_pos] = np.clip(za + zb - za * zb, 0.0, 1.0)
    out[xor_pos + 1] = za * zb
    return out


@dataclass(frozen=True, eq=False)
class AlignmentSchedule:
    base_length: int
    steps: tuple = ()

    @property
    def t(self) -> int:
        return len(self.steps)

    @property
    def expansion(self) -> int:
        return 2 ** self.t

    @property
    def length(self) -> int:
        return self.base_length * self.expansion

    def propagate(self, z_base) -> np.ndarray:
        z = np.asarray(z_base, dtype=np.float64)
        for step in self.steps:
            z = propagate_reliability(step, z, z)
        return z

    def to_copies(self, w: np.ndarray) -> np.ndarray:
        """Split ``(..., length)`` into ``(..., 2**t, base_length)`` constituent u-vectors.

        Copy order: the first step's ``a`` half occupies the lower indices.
        """
        w = np.asarray(w, dtype=np.uint8)
        level = w[..., None, :]
        for step in reversed(self.steps):
            a, b = step.split(level)
            level = np.stack([a, b], axis=-2).reshape(*level.shape[:-2], -1, step.n_in)
        return level

    def from_copies(self, copies: np.ndarray) -> np.ndarray:
        level = np.asarray(copies, dtype=np.uint8)
        for step in self.steps:
            pairs = level.reshape(*level.shape[:-2], -1, 2, step.n_in)
            level = step.merge(pairs[..., 0, :], pairs[..., 1, :])
        return level[..., 0, :]

    def to_list(self) -> list:
        """1-based ``(D, D')`` per step, for scheme files."""
        return [[[d + 1 for d in s.d_set], [d + 1 for d in s.d_prime_set]] for s in self.steps]

    @classmethod
    def from_list(cls, base_length: int, pairs) -> "AlignmentSchedule":
        steps, n = [], base_length
        for D, Dp in pairs:
            steps.append(build_alignment_step([d - 1 for d in D], [d - 1 for d in Dp], n))
            n *= 2
        return cls(base_length, tuple(steps))


def good_set(z, delta) -> np.ndarray:
    return np.flatnonzero(np.asarray(z) <= delta)


def pair_status(z_cur, z_next, size_next: int, delta: float):
    """``(mismatch, good_for_both, violated)`` for one adjacent channel pair.

    The pair is violated when some index is good only for the worse channel
    and the indices good for both cannot host the worse channel's set.
    """
    L_cur = np.asarray(z_cur) <= delta
    L_next = np.asarray(z_next) <= delta
    mismatch = int(np.count_nonzero(L_next & ~L_cur))
    both = int(np.count_nonzero(L_next & L_cur))
    return mismatch, both, mismatch > 0 and both < size_next


def select_nested(z_list, sizes) -> list:
    """Nested index sets ``A_0 >= A_1 >= ...`` with ``|A_j| = sizes[j]``.

    ``A_j`` is unfrozen whenever the link is channel ``0..j``, so indices are
    ranked by their worst bound over those channels.  Sets are built from the
    last (smallest) upward; each keeps the one below it.
    """
    sizes = [int(s) for s in sizes]
    if any(s2 > s1 for s1, s2 in zip(sizes, sizes[1:])):
        raise ValueError("set sizes must be non-increasing")
    worst = np.maximum.accumulate(np.vstack([np.asarray(z, dtype=np.float64) for z in z_list]), axis=0)
    out = [None] * len(sizes)
    chosen = np.zeros(worst.shape[1], dtype=bool)
    for j in range(len(sizes) - 1, -1, -1):
        need = sizes[j] - int(chosen.sum())
        if need:
            order = rank_order(worst[j])
            extra = order[~chosen[order]][:need]
            chosen[extra] = True
        out[j] = np.flatnonzero(chosen)
    return out


@dataclass
class PairReport:
    pair: tuple  # 0-based channel positions within the aligned family
    initial_mismatch: int
    base_length: int
    steps: int = 0
    final_mismatch: int = 0
    final_length: int = 0

    @property
    def initial_fraction(self) -> float:
        return self.initial_mismatch / self.base_length

    @property
    def residual_fraction(self) -> float:
        return self.final_mismatch / self.final_length if self.final_length else 0.0


@dataclass
class AlignmentResult:
    schedule: AlignmentSchedule
    z: list
    sets: list
    pairs: list

    @property
    def t(self) -> int:
        return self.schedule.t

    @property
    def rate_loss(self) -> float:
        """Residual mismatch fraction summed over pairs that needed alignment."""
        return float(sum(p.residual_fraction for p in self.pairs if p.steps > 0))

    @property
    def rate_loss_bound(self) -> float:
        aligned = [p.steps for p in self.pairs if p.steps > 0]
        if not aligned:
            return 0.0
        return len(self.pairs) * 2.0 ** (-min(aligned))


def align_until_nested(z_list, sizes, delta: float, t_max: int) -> AlignmentResult:
    """Add alignment steps until every adjacent pair can be nested.

    ``z_list`` holds the base-block bounds for channels ordered from best to
    worst; ``sizes`` the required set sizes on the base block (they double
    with every step).  Pairs are handled in order and all earlier pairs are
    re-checked after each step.
    """
    z = [np.asarray(v, dtype=np.float64) for v in z_list]
    n = z[0].size
    sizes = [int(s) for s in sizes]
    reports = []
    for j in range(len(z) - 1):
        mm, _, _ = pair_status(z[j], z[j + 1], sizes[j + 1], delta)
        reports.append(PairReport(pair=(j, j + 1), initial_mismatch=mm, base_length=n))
    steps = []
    scale = 1
    while True:
        bad = None
        for j in range(len(z) - 1):
            if pair_status(z[j], z[j + 1], sizes[j + 1] * scale, delta)[2]:
                bad = j
                break
        if bad is None:
            break
        mm = pair_status(z[bad], z[bad + 1], sizes[bad + 1] * scale, delta)[0]
        length = n * scale
        if len(steps) >= t_max:
            raise AlignmentError(
                f"alignment did not converge within t_max={t_max} steps: channel pair "
                f"({bad + 1}, {bad + 2}) keeps residual mismatch fraction {mm / length:.6g}")
        D, Dp = mismatch_sets(good_set(z[bad + 1], delta), good_set(z[bad], delta), z[bad])
        step = build_alignment_step(D, Dp, length)
        steps.append(step)
        z = [propagate_reliability(step, v, v) for v in z]
        scale *= 2
        reports[bad].steps += 1
    length = n * scale
    for r in reports:
        j = r.pair[0]
        r.final_mismatch = pair_status(z[j], z[j + 1], sizes[j + 1] * scale, delta)[0]
        r.final_length = length
    sets = select_nested(z, [s * scale for s in sizes])
    return AlignmentResult(AlignmentSchedule(n, tuple(steps)), z, sets, reports)


class AlignedState:
    """SC over one alignment layer: XOR positions are check nodes, repeats are variable nodes.

    Wraps the decoder states of the two copies; exposes the same
    ``next_llr``/``commit`` interface as :class:`rcpolar.polar.SCState`.
    """

    def __init__(self, step: AlignmentStep, a, b):
        self.step = step
        self.a, self.b = a, b
        self.batch = a.batch
        self.phase = 0
        self._la = self._lb = self._v1 = None

    def next_llr(self) -> np.ndarray:
        kind = self.step.kind[self.phase]
        if kind == PASS_A:
            return self.a.next_llr()
        if kind == PASS_B:
            return self.b.next_llr()
        if kind == XOR:
            self._la = self.a.next_llr().copy()
            self._lb = self.b.next_llr().copy()
            return check_combine(self._la, self._lb)
        return var_combine(self._la, self._lb, self._v1)

    def commit(self, bits) -> None:
        bits = np.broadcast_to(np.asarray(bits, dtype=np.uint8), (self.batch,))
        kind = self.step.kind[self.phase]
        if kind == PASS_A:
            self.a.commit(bits)
        elif kind == PASS_B:
            self.b.commit(bits)
        elif kind == XOR:
            self._v1 = bits.copy()
        else:
            self.a.commit(self._v1 ^ bits)
            self.b.commit(bits)
        self.phase += 1


def decoder_state(schedule: AlignmentSchedule, llr_copies: np.ndarray):
    """Decoder for the extended block from per-copy channel LLRs ``(frames, 2**t, base_length)``."""
    llr_copies = np.asarray(llr_copies, dtype=np.float64)

    def build(level, lo, hi):
        if level == 0:
            return SCState(llr_copies[:, lo, :])
        mid = (lo + hi) // 2
        return AlignedState(schedule.steps[level - 1], build(level - 1, lo, mid), build(level - 1, mid, hi))

    return build(schedule.t, 0, schedule.expansion)
