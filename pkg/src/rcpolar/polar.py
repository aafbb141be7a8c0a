"""Arikan transform and successive cancellation decoding.

Encoding follows ``x = u B F^{(x)n}`` with ``B`` the bit-reversal
permutation.  All functions accept either a single vector or a batch
``(frames, m)``; batches share one block layout but may carry per-frame
known values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rcpolar.channels import BmsChannel


def is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def _log2(m: int) -> int:
    if not is_power_of_two(m):
        raise ValueError(f"block length {m} is not a power of two")
    return m.bit_length() - 1


def bit_reversal_permutation(m: int) -> np.ndarray:
    """0-based permutation sending ``i`` to the index with reversed ``log2 m`` bits."""
    n = _log2(m)
    idx = np.arange(m)
    out = np.zeros(m, dtype=np.int64)
    for k in range(n):
        out |= ((idx >> k) & 1) << (n - 1 - k)
    return out


def _butterfly(v: np.ndarray) -> np.ndarray:
    """Multiply the last axis by ``F^{(x)n}`` over GF(2) in place."""
    m = v.shape[-1]
    lead = v.shape[:-1]
    h = m // 2
    while h >= 1:
        w = v.reshape(*lead, m // (2 * h), 2, h)
        w[..., 0, :] ^= w[..., 1, :]
        h //= 2
    return v


def polar_encode(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint8)
    m = u.shape[-1]
    perm = bit_reversal_permutation(m)
    return _butterfly(u[..., perm].copy())


def generator_matrix(m: int) -> np.ndarray:
    """Dense ``B_m F^{(x)n}``; only meant for small ``m`` in checks."""
    n = _log2(m)
    F = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    G = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n):
        G = np.kron(G, F)
    return G[bit_reversal_permutation(m)] % 2


@dataclass(frozen=True)
class PolarBlockSpec:
    """One polar block: length, punctured channel positions, information indices.

    Indices are 0-based.  Frozen positions are the complement of
    ``info_set`` and carry zeros unless the decoder is told otherwise.
    """

    m: int
    info_set: tuple = ()
    punctured_set: tuple = ()
    _info_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _log2(self.m)
        info = tuple(sorted(int(i) for i in self.info_set))
        punct = tuple(sorted(int(i) for i in self.punctured_set))
        for name, s in (("info_set", info), ("punctured_set", punct)):
            if s and (s[0] < 0 or s[-1] >= self.m or len(set(s)) != len(s)):
                raise ValueError(f"{name} is not a subset of range({self.m})")
        object.__setattr__(self, "info_set", info)
        object.__setattr__(self, "punctured_set", punct)
        mask = np.zeros(self.m, dtype=bool)
        mask[list(info)] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_info_mask", mask)

    @property
    def info_mask(self) -> np.ndarray:
        return self._info_mask

    @property
    def frozen_set(self) -> tuple:
        return tuple(np.flatnonzero(~self._info_mask).tolist())


# -- LLR combining ---------------------------------------------------------

def check_combine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact ``2 atanh(tanh(a/2) tanh(b/2))`` written to survive large and infinite inputs."""
    aa, ab = np.abs(a), np.abs(b)
    sign = np.where((a < 0) != (b < 0), -1.0, 1.0)
    with np.errstate(invalid="ignore", over="ignore"):
        mag = (np.minimum(aa, ab)
               + np.log1p(np.exp(-(aa + ab)))
               - np.log1p(np.exp(-np.abs(aa - ab))))
    mag = np.where(np.isinf(aa) & np.isinf(ab), np.inf, mag)
    return sign * mag


def var_combine(a: np.ndarray, b: np.ndarray, bit: np.ndarray) -> np.ndarray:
    """LLR of ``u2`` given ``u1 = bit``: ``b + (-1)^bit a``; conflicting infinities become erasures."""
    with np.errstate(invalid="ignore"):
        out = b + np.where(bit, -a, a)
    return np.where(np.isnan(out), 0.0, out)


def hard_decision(llr: np.ndarray) -> np.ndarray:
    # ties go to 0
    return (llr < 0).astype(np.uint8)


class SCState:
    """Bit-by-bit successive cancellation over one polar block, batched over frames.

    ``next_llr()`` returns the LLR of the current index given the channel
    and all committed decisions; ``commit(bits)`` fixes that index and
    advances.  Layout follows the layered array scheme of Tal and Vardy.
    """

    def __init__(self, llrs: np.ndarray):
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.ndim == 1:
            llrs = llrs[None, :]
        B, m = llrs.shape
        self.n = _log2(m)
        self.m = m
        self.batch = B
        self.P = [np.empty((B, m >> lam)) for lam in range(self.n + 1)]
        self.P[0][:] = llrs
        self.C = [np.zeros((B, m >> lam, 2), dtype=np.uint8) for lam in range(self.n + 1)]
        self.phase = 0
        self.u = np.zeros((B, m), dtype=np.uint8)

    def _calc(self, lam: int, phi: int) -> None:
        if lam == 0:
            return
        psi = phi >> 1
        if phi % 2 == 0:
            self._calc(lam - 1, psi)
        below = self.P[lam - 1]
        a, b = below[:, 0::2], below[:, 1::2]
        if phi % 2 == 0:
            self.P[lam][:] = check_combine(a, b)
        else:
            self.P[lam][:] = var_combine(a, b, self.C[lam][:, :, 0])

    def _update(self, lam: int, phi: int) -> None:
        psi = phi >> 1
        cur, below = self.C[lam], self.C[lam - 1]
        below[:, 0::2, psi % 2] = cur[:, :, 0] ^ cur[:, :, 1]
        below[:, 1::2, psi % 2] = cur[:, :, 1]
        if psi % 2 == 1:
            self._update(lam - 1, psi)

    def next_llr(self) -> np.ndarray:
        if self.phase >= self.m:
            raise IndexError("all indices already decided")
        self._calc(self.n, self.phase)
        return self.P[self.n][:, 0]

    def commit(self, bits) -> None:
        phi = self.phase
        bits = np.broadcast_to(np.asarray(bits, dtype=np.uint8), (self.batch,))
        self.C[self.n][:, 0, phi % 2] = bits
        self.u[:, phi] = bits
        if phi % 2 == 1 and self.n > 0:
            self._update(self.n, phi)
        self.phase += 1


def run_sc(state, info_mask: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Drive any state exposing ``next_llr``/``commit`` through all indices.

    ``known`` has shape ``(frames, length)``; its entries are used wherever
    ``info_mask`` is false.  Frozen indices never evaluate LLRs they do not
    need, except as required to advance the recursion.
    """
    length = info_mask.shape[0]
    out = np.empty((state.batch, length), dtype=np.uint8)
    for i in range(length):
        llr = state.next_llr()
        if info_mask[i]:
            bit = hard_decision(llr)
        else:
            bit = known[:, i]
        state.commit(bit)
        out[:, i] = bit
    return out


def sc_decode(llrs: np.ndarray, spec: PolarBlockSpec, known_values=None) -> np.ndarray:
    """SC estimate of ``u``; frozen indices take ``known_values`` (zeros by default).

    ``known_values`` may be a mapping ``{index: bit}`` for a single frame or an
    array broadcastable to ``(frames, m)``.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    single = llrs.ndim == 1
    batch = llrs[None, :] if single else llrs
    if batch.shape[1] != spec.m:
        raise ValueError(f"expected {spec.m} LLRs, got {batch.shape[1]}")
    known = np.zeros((batch.shape[0], spec.m), dtype=np.uint8)
    if isinstance(known_values, dict):
        frozen = set(spec.frozen_set)
        missing = frozen - set(known_values)
        if missing:
            raise ValueError(f"no known value for frozen indices {sorted(missing)[:5]}")
        for i, v in known_values.items():
            known[:, int(i)] = v
    elif known_values is not None:
        known[:] = np.asarray(known_values, dtype=np.uint8)
    u = run_sc(SCState(batch), spec.info_mask, known)
    return u[0] if single else u


def llr_of_output(W: BmsChannel, y) -> np.ndarray | float:
    """LLR of observed symbol index (or array of indices) ``y`` under ``W``."""
    y_arr = np.asarray(y)
    if np.any(y_arr < 0) or np.any(y_arr >= len(W)):
        raise ValueError(f"symbol index outside channel alphabet of size {len(W)}")
    out = W.llrs[y_arr]
    return float(out) if out.ndim == 0 else out
