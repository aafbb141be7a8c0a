"""Rate-compatible chained polar schemes: construction, encoding, backward decoding."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from rcpolar.alignment import (AlignmentError, AlignmentSchedule, align_until_nested, build_alignment_step,
                               decoder_state, select_nested)
from rcpolar.channels import DEFAULT_MU, capacity, channel_from_dict
from rcpolar.construction import DEFAULT_DELTA, choose_puncture, evolve_reliability
from rcpolar.polar import polar_encode, run_sc

log = logging.getLogger(__name__)

SCHEME_FORMAT = 1


class SchemeError(ValueError):
    pass


def _as_fraction(r) -> Fraction:
    if isinstance(r, float):
        return Fraction(repr(r))
    return Fraction(r)


@dataclass(frozen=True)
class RateProfile:
    k: int
    rates: tuple
    incremental_lengths: tuple
    cumulative_lengths: tuple

    @property
    def K(self) -> int:
        return len(self.rates)

    def size(self, stage: int, channel: int) -> int:
        """``n_stage * R_channel`` on the base scale (both 1-based)."""
        return int(self.incremental_lengths[stage - 1] * self.rates[channel - 1])


def _smallest_k(coeffs) -> int:
    return math.lcm(*(c.denominator for c in coeffs))


def _size_coefficients(rs) -> list:
    # n_i R_j / k = (1/R_i - 1/R_{i-1}) R_j for i <= j
    inv = [1 / r for r in rs]
    out = []
    for i in range(len(rs)):
        step = inv[i] - (inv[i - 1] if i else 0)
        out += [step * rs[j] for j in range(i, len(rs))]
    return out


def rate_profile(k: int, rates) -> RateProfile:
    """Incremental lengths with ``R_i = k / (n_1 + ... + n_i)``.

    Rates may be given as fractions, integers, decimal strings or floats
    (floats are read through their shortest decimal form).  If some length
    is not an integer the error names the smallest ``k`` that fixes it.
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise SchemeError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    rs = tuple(_as_fraction(r) for r in rates)
    if not rs:
        raise SchemeError("need at least one rate")
    if any(not 0 < r <= 1 for r in rs):
        raise SchemeError("rates must lie in (0, 1]")
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise SchemeError("rates must be strictly decreasing")
    inv = [1 / r for r in rs]
    need = _smallest_k(inv)
    if k % need:
        raise SchemeError(f"k={k} gives non-integral lengths for rates {[str(r) for r in rs]}; "
                          f"smallest valid k is {need}")
    cum = tuple(int(k * v) for v in inv)
    inc = tuple(b - a for a, b in zip((0,) + cum, cum))
    return RateProfile(k=k, rates=rs, incremental_lengths=inc, cumulative_lengths=cum)


def check_set_sizes(profile: RateProfile) -> None:
    """Reject profiles where some ``n_i R_j`` (``i <= j``) is fractional; rounding would break the chain."""
    coeffs = _size_coefficients(profile.rates)
    need = math.lcm(_smallest_k([1 / r for r in profile.rates]), _smallest_k(coeffs))
    if profile.k % need:
        raise SchemeError(f"k={profile.k} gives non-integral index-set sizes n_i*R_j; smallest valid k is {need}")


@dataclass(frozen=True, eq=False)
class StageSpec:
    """One transmission.  Index sets are 0-based positions of the extended u-vector."""

    index: int
    n: int
    m: int
    punctured_set: tuple
    schedule: AlignmentSchedule
    sets: dict
    repeat_sources: tuple = ()
    steps_needed: int = 0
    rate_loss: float = 0.0
    rate_loss_bound: float = 0.0
    pairs: tuple = ()

    @property
    def length(self) -> int:
        return self.schedule.length

    @property
    def transmitted(self) -> int:
        return self.schedule.expansion * (self.m - len(self.punctured_set))

    def repeat_targets(self) -> np.ndarray:
        return self.sets[self.index]


@dataclass(frozen=True, eq=False)
class ChainScheme:
    profile: RateProfile
    channels: tuple
    stages: tuple
    T: int
    delta: float
    mu: int
    t_max: int
    puncture_trials: int
    seed: int
    bounds: tuple  # bounds[stage - 1][channel - 1]
    z: dict = field(default_factory=dict, repr=False)  # (stage, channel) -> extended bounds

    @property
    def K(self) -> int:
        return self.profile.K

    @property
    def expansion_factor(self) -> int:
        return 2 ** self.T

    @property
    def k(self) -> int:
        """Information bits per session on the expanded scheme."""
        return self.profile.k * self.expansion_factor

    def stage(self, ell: int) -> StageSpec:
        if not 1 <= ell <= self.K:
            raise SchemeError(f"stage {ell} outside 1..{self.K}")
        return self.stages[ell - 1]

    def union_bound(self, stage: int, channel: int) -> float:
        return self.bounds[stage - 1][channel - 1]

    def cumulative_transmitted(self, ell: int) -> int:
        return sum(s.transmitted for s in self.stages[:ell])


def _stage_seed(seed: int, ell: int):
    return [int(seed), ell]


def build_scheme(channels, profile: RateProfile, delta: float = DEFAULT_DELTA, mu: int = DEFAULT_MU,
                 t_max: int = 8, puncture_trials: int = 1, seed: int = 0) -> ChainScheme:
    channels = tuple(channels)
    K = profile.K
    if len(channels) != K:
        raise SchemeError(f"{len(channels)} channels for a {K}-stage profile")
    check_set_sizes(profile)
    if t_max < 0 or puncture_trials < 1:
        raise SchemeError("t_max must be >= 0 and puncture_trials >= 1")
    caps = [capacity(W) for W in channels]
    for ell, (c, r) in enumerate(zip(caps, profile.rates), start=1):
        if not c > r:
            raise SchemeError(f"stage {ell}: rate {float(r):.6g} is not below capacity {c:.6g} "
                              f"of {channels[ell - 1].label}")
    for ell in range(1, K):
        if not caps[ell - 1] > caps[ell]:
            raise SchemeError(f"capacities must be strictly decreasing (channels {ell} and {ell + 1})")

    base = []
    for ell in range(1, K + 1):
        n = profile.incremental_lengths[ell - 1]
        m = 1 << max(0, (n - 1).bit_length())
        pattern, own = choose_puncture(m, n, puncture_trials, channels[ell - 1], profile.size(ell, ell),
                                       _stage_seed(seed, ell), mu, delta)
        z = {}
        for c in range(1, K + 1):
            z[c] = own.z_bounds if c == ell else evolve_reliability(channels[c - 1], m, pattern, mu, delta).z_bounds
        sizes = [profile.size(ell, j) for j in range(ell, K + 1)]
        res = align_until_nested([z[j] for j in range(ell, K + 1)], sizes, delta, t_max)
        base.append((n, m, pattern, z, res))

    T = max(r.t for *_, r in base)
    scale = 2 ** T
    stages, zext = [], {}
    for ell, (n, m, pattern, z, res) in enumerate(base, start=1):
        steps = list(res.schedule.steps)
        length = m * res.schedule.expansion
        while len(steps) < T:
            steps.append(build_alignment_step((), (), length))
            length *= 2
        schedule = AlignmentSchedule(m, tuple(steps))
        for c in range(1, K + 1):
            zext[ell, c] = schedule.propagate(z[c])
        sizes = [profile.size(ell, j) * scale for j in range(ell, K + 1)]
        chosen = select_nested([zext[ell, j] for j in range(ell, K + 1)], sizes)
        sets = {j: a for j, a in zip(range(ell, K + 1), chosen)}
        for j, a in sets.items():
            bad = int(np.count_nonzero(zext[ell, j][a] > delta))
            if bad:
                log.warning("stage %d: %d of %d indices of A_%d exceed delta=%g", ell, bad, a.size, j, delta)
        stages.append(StageSpec(index=ell, n=n, m=m, punctured_set=tuple(pattern), schedule=schedule, sets=sets,
                                steps_needed=res.t, rate_loss=res.rate_loss, rate_loss_bound=res.rate_loss_bound,
                                pairs=tuple((p.pair[0] + ell, p.pair[1] + ell, p.initial_fraction, p.steps,
                                             p.residual_fraction) for p in res.pairs)))
    stages = _attach_repeat_maps(stages)
    bounds = tuple(tuple(_union_bound(stages, zext, sbar, c) for c in range(1, K + 1))
                   for sbar in range(1, K + 1))
    return ChainScheme(profile=profile, channels=channels, stages=tuple(stages), T=T, delta=float(delta), mu=int(mu),
                       t_max=int(t_max), puncture_trials=int(puncture_trials), seed=int(seed), bounds=bounds, z=zext)


def _union_bound(stages, zext, sbar: int, c: int) -> float:
    total = sum(float(zext[ell, c][stages[ell - 1].sets[sbar]].sum()) for ell in range(1, sbar + 1))
    return min(1.0, total)


def _repeat_sources(stages, ell: int) -> tuple:
    out = []
    for j in range(1, ell):
        sets = stages[j - 1].sets
        drop = np.setdiff1d(sets[ell - 1], sets[ell])
        out += [(j, int(i)) for i in drop]
    return tuple(out)


def _attach_repeat_maps(stages) -> list:
    out = []
    for s in stages:
        if s.index >= 2:
            src = _repeat_sources(stages, s.index)
            if len(src) != s.sets[s.index].size:
                raise SchemeError(f"stage {s.index}: {len(src)} repeated values for "
                                  f"{s.sets[s.index].size} positions")
            s = StageSpec(**{**s.__dict__, "repeat_sources": src})
        out.append(s)
    return out


def chain_repeat_map(scheme: ChainScheme, ell: int) -> list:
    """Positional pairs ``((block, u_index), target_index)`` filling ``A_ell`` of block ``ell``."""
    if ell < 2:
        raise SchemeError("repetition maps exist only for stages >= 2")
    s = scheme.stage(ell)
    targets = s.sets[ell]
    if len(s.repeat_sources) != targets.size:
        raise SchemeError(f"stage {ell}: repetition map size mismatch")
    return list(zip(s.repeat_sources, targets.tolist()))


# -- encoding ----------------------------------------------------------------

def _batch(a, dtype=np.uint8):
    a = np.asarray(a, dtype=dtype)
    return (a[None, :], True) if a.ndim == 1 else (a, False)


def stage_u(scheme: ChainScheme, ell: int, info_bits=None, prior_u_vectors=None) -> np.ndarray:
    """Extended u-vector of transmission ``ell`` (batched over the leading axis)."""
    s = scheme.stage(ell)
    if ell == 1:
        if info_bits is None:
            raise SchemeError("stage 1 needs the information bits")
        info, single = _batch(info_bits)
        if info.shape[1] != scheme.k:
            raise SchemeError(f"expected {scheme.k} information bits, got {info.shape[1]}")
        u = np.zeros((info.shape[0], s.length), dtype=np.uint8)
        u[:, s.sets[1]] = info
        return u[0] if single else u
    if prior_u_vectors is None or len(prior_u_vectors) < ell - 1:
        raise SchemeError(f"stage {ell} needs the u-vectors of stages 1..{ell - 1}")
    priors = [_batch(p) for p in prior_u_vectors[:ell - 1]]
    single = priors[0][1]
    B = priors[0][0].shape[0]
    u = np.zeros((B, s.length), dtype=np.uint8)
    src = np.asarray(s.repeat_sources, dtype=np.int64).reshape(-1, 2)
    targets = s.sets[ell]
    for j in range(1, ell):
        sel = src[:, 0] == j
        u[:, targets[sel]] = priors[j - 1][0][:, src[sel, 1]]
    return u[0] if single else u


def encode_u(scheme: ChainScheme, ell: int, u) -> np.ndarray:
    """Transmitted bits of stage ``ell`` for an extended u-vector; punctured positions are omitted."""
    s = scheme.stage(ell)
    u, single = _batch(u)
    copies = s.schedule.to_copies(u)
    x = polar_encode(copies)
    keep = np.ones(s.m, dtype=bool)
    keep[list(s.punctured_set)] = False
    out = x[..., keep].reshape(u.shape[0], -1)
    return out[0] if single else out


def encode_transmission(scheme: ChainScheme, ell: int, info_bits=None, prior_u_vectors=None) -> np.ndarray:
    return encode_u(scheme, ell, stage_u(scheme, ell, info_bits, prior_u_vectors))


def encode_session(scheme: ChainScheme, info_bits, upto: int | None = None):
    """``(u_vectors, x_vectors)`` for stages ``1..upto``."""
    upto = scheme.K if upto is None else upto
    us, xs = [], []
    for ell in range(1, upto + 1):
        u = stage_u(scheme, ell, info_bits, us)
        us.append(u)
        xs.append(encode_u(scheme, ell, u))
    return us, xs


# -- decoding ----------------------------------------------------------------

def backward_decode(scheme: ChainScheme, sbar: int, llrs, return_u: bool = False):
    """Decode after ``sbar`` transmissions from per-stage LLRs of the transmitted bits.

    Block ``sbar`` is decoded first with unfrozen set ``A_sbar``; each
    earlier block then treats the values repeated in later blocks as known.
    Returns the estimated information bits (and the u-vectors if asked).
    """
    if not 1 <= sbar <= scheme.K:
        raise SchemeError(f"stage {sbar} outside 1..{scheme.K}")
    if len(llrs) < sbar:
        raise SchemeError(f"decoding after stage {sbar} needs outputs of stages 1..{sbar}")
    batches = [np.asarray(v, dtype=np.float64) for v in llrs[:sbar]]
    single = batches[0].ndim == 1
    batches = [v[None, :] if v.ndim == 1 else v for v in batches]
    B = batches[0].shape[0]
    u_hat = [None] * sbar
    for ell in range(sbar, 0, -1):
        s = scheme.stage(ell)
        if batches[ell - 1].shape != (B, s.transmitted):
            raise SchemeError(f"stage {ell}: expected {s.transmitted} LLRs per frame")
        keep = np.ones(s.m, dtype=bool)
        keep[list(s.punctured_set)] = False
        full = np.zeros((B, s.schedule.expansion, s.m))
        full[:, :, keep] = batches[ell - 1].reshape(B, s.schedule.expansion, -1)
        info_mask = np.zeros(s.length, dtype=bool)
        info_mask[s.sets[sbar]] = True
        known = np.zeros((B, s.length), dtype=np.uint8)
        for later in range(ell + 1, sbar + 1):
            t = scheme.stage(later)
            src = np.asarray(t.repeat_sources, dtype=np.int64).reshape(-1, 2)
            sel = src[:, 0] == ell
            known[:, src[sel, 1]] = u_hat[later - 1][:, t.sets[later][sel]]
        u_hat[ell - 1] = run_sc(decoder_state(s.schedule, full), info_mask, known)
    info = u_hat[0][:, scheme.stage(1).sets[1]]
    if single:
        info = info[0]
        u_hat = [u[0] for u in u_hat]
    return (info, u_hat) if return_u else info


# -- scheme files --------------------------------------------------------------

def _ones(a) -> list:
    return [int(i) + 1 for i in a]


def scheme_to_dict(scheme: ChainScheme) -> dict:
    stages = []
    for s in scheme.stages:
        stages.append({
            "stage": s.index,
            "n": s.n,
            "m": s.m,
            "punctured_set": _ones(s.punctured_set),
            "alignment": s.schedule.to_list(),
            "steps_needed": s.steps_needed,
            "sets": {str(j): _ones(a) for j, a in s.sets.items()},
            "repeat_map": {"sources": [[b, i + 1] for b, i in s.repeat_sources],
                           "targets": _ones(s.sets[s.index]) if s.index >= 2 else []},
            "rate_loss": s.rate_loss,
            "rate_loss_bound": s.rate_loss_bound,
            "pairs": [{"channels": [a, b], "initial_mismatch": f0, "steps": st, "residual_mismatch": f1}
                      for a, b, f0, st, f1 in s.pairs],
        })
    return {
        "format": SCHEME_FORMAT,
        "profile": {"k": scheme.profile.k, "rates": [str(r) for r in scheme.profile.rates],
                    "incremental_lengths": list(scheme.profile.incremental_lengths),
                    "cumulative_lengths": list(scheme.profile.cumulative_lengths)},
        "channels": [W.to_dict() for W in scheme.channels],
        "T": scheme.T,
        "expansion_factor": scheme.expansion_factor,
        "delta": scheme.delta,
        "mu": scheme.mu,
        "t_max": scheme.t_max,
        "puncture_trials": scheme.puncture_trials,
        "seed": scheme.seed,
        "union_bounds": [list(row) for row in scheme.bounds],
        "stages": stages,
    }


def dumps_scheme(scheme: ChainScheme) -> str:
    return json.dumps(scheme_to_dict(scheme), indent=1, sort_keys=True) + "\n"


def scheme_from_dict(d: dict) -> ChainScheme:
    if d.get("format") != SCHEME_FORMAT:
        raise SchemeError(f"unsupported scheme format {d.get('format')!r}")
    p = d["profile"]
    profile = rate_profile(p["k"], [Fraction(r) for r in p["rates"]])
    channels = tuple(channel_from_dict(c) for c in d["channels"])
    stages = []
    for s in d["stages"]:
        schedule = AlignmentSchedule.from_list(s["m"], s["alignment"])
        sets = {int(j): np.asarray(a, dtype=np.int64) - 1 for j, a in s["sets"].items()}
        stages.append(StageSpec(
            index=s["stage"], n=s["n"], m=s["m"], punctured_set=tuple(i - 1 for i in s["punctured_set"]),
            schedule=schedule, sets=sets,
            repeat_sources=tuple((b, i - 1) for b, i in s["repeat_map"]["sources"]),
            steps_needed=s["steps_needed"], rate_loss=s["rate_loss"], rate_loss_bound=s["rate_loss_bound"],
            pairs=tuple((q["channels"][0], q["channels"][1], q["initial_mismatch"], q["steps"],
                         q["residual_mismatch"]) for q in s["pairs"])))
    return ChainScheme(profile=profile, channels=channels, stages=tuple(stages), T=d["T"], delta=d["delta"],
                       mu=d["mu"], t_max=d["t_max"], puncture_trials=d["puncture_trials"], seed=d["seed"],
                       bounds=tuple(tuple(row) for row in d["union_bounds"]))


def loads_scheme(text: str) -> ChainScheme:
    return scheme_from_dict(json.loads(text))


__all__ = [
    "AlignmentError", "ChainScheme", "RateProfile", "SchemeError", "StageSpec", "backward_decode",
    "build_scheme", "chain_repeat_map", "check_set_sizes", "dumps_scheme", "encode_session", "encode_transmission",
    "encode_u", "loads_scheme", "rate_profile", "scheme_from_dict", "scheme_to_dict", "stage_u",
]
