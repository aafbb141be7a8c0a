"""HARQ-IR sessions over a chained scheme and a reproducible Monte Carlo harness.

Every trial owns a generator derived from ``(seed, trial index)``.  It first
draws the information bits, then the channel noise of each stage in order,
so a trial's outcome does not depend on batching or on the worker that ran it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from rcpolar.channels import BmsChannel
from rcpolar.ratecompat import ChainScheme, backward_decode, encode_session


@dataclass(frozen=True)
class HarqTranscript:
    true_channel_index: int
    stages_attempted: int
    success_stage: int | None
    bits_transmitted: tuple
    decode_outcomes: tuple
    info_correct: bool

    @property
    def total_bits(self) -> int:
        return sum(self.bits_transmitted)


@dataclass(frozen=True)
class SimulationConfig:
    scheme: ChainScheme = field(repr=False)
    true_channel_index: int
    trials: int
    seed: int
    fer_targets: tuple | None = None
    workers: int = 1
    batch_size: int = 256
    link: BmsChannel | None = None  # physical channel if it differs from the design channel

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 1 <= self.true_channel_index <= self.scheme.K:
            raise ValueError(f"true channel index {self.true_channel_index} outside 1..{self.scheme.K}")
        if self.workers < 1 or self.batch_size < 1:
            raise ValueError("workers and batch_size must be positive")
        if self.fer_targets is not None and len(self.fer_targets) != self.scheme.K:
            raise ValueError(f"expected {self.scheme.K} FER targets")

    @property
    def channel(self) -> BmsChannel:
        return self.link if self.link is not None else self.scheme.channels[self.true_channel_index - 1]

    def echo(self) -> dict:
        """Everything that determines the results, for output headers."""
        return {"true_channel_index": self.true_channel_index, "trials": self.trials, "seed": self.seed,
                "fer_targets": list(self.fer_targets) if self.fer_targets is not None else None,
                "channel": self.channel.to_dict(),
                "k": self.scheme.k, "T": self.scheme.T}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def _simulate(scheme: ChainScheme, W: BmsChannel, info: np.ndarray, rngs) -> np.ndarray:
    """Per-frame decode outcomes ``(frames, K)``: 1 success, 0 failure, -1 not attempted."""
    B = info.shape[0]
    _, xs = encode_session(scheme, info)
    llrs = [np.empty(x.shape) for x in xs]
    for b, rng in enumerate(rngs):
        for x, out in zip(xs, llrs):
            out[b] = W.llrs[W.sample(x[b], rng)]
    outcomes = np.full((B, scheme.K), -1, dtype=np.int8)
    pending = np.arange(B)
    for sbar in range(1, scheme.K + 1):
        if pending.size == 0:
            break
        est = backward_decode(scheme, sbar, [v[pending] for v in llrs[:sbar]])
        ok = np.all(est == info[pending], axis=1)
        outcomes[pending, sbar - 1] = ok
        pending = pending[~ok]
    return outcomes


def _transcript(scheme: ChainScheme, channel_index: int, outcomes: np.ndarray) -> HarqTranscript:
    attempted = int(np.count_nonzero(outcomes >= 0))
    success = attempted if attempted and outcomes[attempted - 1] == 1 else None
    return HarqTranscript(
        true_channel_index=channel_index,
        stages_attempted=attempted,
        success_stage=success,
        bits_transmitted=tuple(scheme.stage(ell).transmitted for ell in range(1, attempted + 1)),
        decode_outcomes=tuple(bool(o) for o in outcomes[:attempted]),
        info_correct=success is not None,
    )


def run_session(scheme: ChainScheme, true_channel_index: int, info_bits, rng: np.random.Generator,
                link: BmsChannel | None = None) -> HarqTranscript:
    """One HARQ-IR session; success is detected by comparing against the true bits.

    The link is ``W_{true_channel_index}`` unless another channel is given.
    """
    if not 1 <= true_channel_index <= scheme.K:
        raise ValueError(f"true channel index {true_channel_index} outside 1..{scheme.K}")
    info = np.asarray(info_bits, dtype=np.uint8).reshape(1, -1)
    if info.shape[1] != scheme.k:
        raise ValueError(f"expected {scheme.k} information bits")
    W = scheme.channels[true_channel_index - 1] if link is None else link
    return _transcript(scheme, true_channel_index, _simulate(scheme, W, info, [rng])[0])


def _chunk(args) -> np.ndarray:
    scheme, W, seed, lo, hi = args
    rngs = [trial_rng(seed, t) for t in range(lo, hi)]
    info = np.stack([rng.integers(0, 2, scheme.k, dtype=np.uint8) for rng in rngs])
    return _simulate(scheme, W, info, rngs)


def trial_outcomes(config: SimulationConfig) -> np.ndarray:
    """Outcome matrix ``(trials, K)`` in trial order."""
    s = config.scheme
    jobs = [(s, config.channel, config.seed, lo, min(lo + config.batch_size, config.trials))
            for lo in range(0, config.trials, config.batch_size)]
    if config.workers == 1 or len(jobs) == 1:
        parts = [_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_chunk, jobs))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class StageStats:
    stage: int
    trials_reaching: int
    failures: int
    fer: float
    ci_low: float
    ci_high: float
    union_bound: float

    @property
    def bound_respected(self) -> bool:
        """Measured FER is not significantly above the bound (lower 95% limit at or below it)."""
        return self.trials_reaching == 0 or self.ci_low <= self.union_bound

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


def wilson_interval(failures: int, trials: int) -> tuple:
    if trials == 0:
        return math.nan, math.nan
    ci = binomtest(failures, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


CSV_COLUMNS = ("stage", "trials_reaching", "failures", "fer", "ci_low", "ci_high", "union_bound")


@dataclass(frozen=True)
class SimulationResult:
    config: dict
    stages: tuple
    trials: int
    successes: int
    mean_bits: float | None
    throughput: float
    k: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in self.stages:
            w.writerow([repr(v) if isinstance(v, float) else v for v in s.row()])
        return buf.getvalue()

    def summary(self) -> dict:
        out = {"config": self.config, "trials": self.trials, "successes": self.successes,
               "failures": self.trials - self.successes, "k": self.k, "mean_bits": self.mean_bits,
               "throughput": self.throughput,
               "stages": [dict(asdict(s), bound_respected=s.bound_respected) for s in self.stages]}
        targets = self.config.get("fer_targets")
        if targets is not None:
            out["targets_met"] = [s.trials_reaching > 0 and s.fer <= t for s, t in zip(self.stages, targets)]
        return out

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.summary()), indent=1, sort_keys=True) + "\n"


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def summarize(config: SimulationConfig, outcomes: np.ndarray) -> SimulationResult:
    s = config.scheme
    c = config.true_channel_index
    rows = []
    for ell in range(1, s.K + 1):
        col = outcomes[:, ell - 1]
        reaching = int(np.count_nonzero(col >= 0))
        failures = int(np.count_nonzero(col == 0))
        lo, hi = wilson_interval(failures, reaching)
        rows.append(StageStats(stage=ell, trials_reaching=reaching, failures=failures,
                               fer=failures / reaching if reaching else math.nan,
                               ci_low=lo, ci_high=hi, union_bound=float(s.union_bound(ell, c))))
    success_stage = np.where(outcomes == 1, np.arange(1, s.K + 1), 0).max(axis=1)
    won = success_stage[success_stage > 0]
    cum = np.cumsum([0] + [s.stage(ell).transmitted for ell in range(1, s.K + 1)])
    mean_bits = float(cum[won].mean()) if won.size else None
    throughput = s.k / mean_bits if mean_bits else 0.0
    return SimulationResult(config=config.echo(), stages=tuple(rows), trials=int(outcomes.shape[0]),
                            successes=int(won.size), mean_bits=mean_bits, throughput=throughput, k=s.k)


def monte_carlo(config: SimulationConfig) -> SimulationResult:
    return summarize(config, trial_outcomes(config))
