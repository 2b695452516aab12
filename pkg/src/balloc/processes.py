"""Step-exact state machines for the allocation processes.

Two layers live here. The ``apply_*`` / ``step_*`` functions advance a
:class:`ProcessState` one ball at a time and are the readable reference
(used by the exact enumerators). :func:`run_process` drives the compiled
kernels in ``_kernels`` for bulk simulation. Both consume the same samples
and make identical decisions; the test-suite replays kernel traces through
the reference functions to keep them honest.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import LoadVector, Ordering, ordering_by_load
from .sampling import UNIT, SamplingDistribution, WeightDistribution, sample

PROCESSES = ("onechoice", "twochoice", "dchoice", "one-plus-beta",
             "memory", "weak-memory", "reset-memory")
# weighted balls are supported for 2-WeakMemory and the d-Choice baselines only
WEIGHTED_OK = ("onechoice", "twochoice", "dchoice", "one-plus-beta", "weak-memory")

BLOCK = 1 << 16
RNG_ALGORITHM = "numpy.random.PCG64"


@dataclass
class ProcessState:
    lv: LoadVector
    cache: int | None = None
    frozen_sigma: Ordering | None = None
    step: int = 0
    # run boundaries sit at steps t with (t - run_origin) % d == 0
    run_origin: int = 0

    @classmethod
    def new(cls, n: int, weighted: bool = False) -> "ProcessState":
        return cls(LoadVector.zeros(n, weighted))

    @property
    def n(self) -> int:
        return self.lv.n

    def copy(self) -> "ProcessState":
        return ProcessState(self.lv.copy(), self.cache, self.frozen_sigma,
                            self.step, self.run_origin)

    def run_pos(self, d: int) -> int:
        return (self.step - self.run_origin) % d


@dataclass(frozen=True)
class StepOutcome:
    sampled: tuple
    allocated: int
    cache_after: int | None
    weight: float = 1.0


def _put(st: ProcessState, b: int, w) -> None:
    st.lv.loads[b] += w
    st.lv.total_weight += w
    st.step += 1


# ------------------------------------------------------------- decisions

def apply_dchoice(st: ProcessState, samples, tie_u: float = 0.0, weight=1) -> StepOutcome:
    """Allocate to a least-loaded sample; ``tie_u`` in [0, 1) picks among tied samples."""
    loads = st.lv.loads
    best = min(loads[i] for i in samples)
    tied = [i for i in samples if loads[i] == best]
    chosen = tied[min(int(tie_u * len(tied)), len(tied) - 1)]
    _put(st, chosen, weight)
    return StepOutcome(tuple(samples), chosen, st.cache, weight)


def apply_memory(st: ProcessState, i: int, weight=1) -> StepOutcome:
    loads = st.lv.loads
    b = st.cache
    if b is None or loads[i] < loads[b]:
        chosen = i
        st.cache = i
    elif loads[i] == loads[b]:
        chosen = i
    else:
        chosen = b
    _put(st, chosen, weight)
    return StepOutcome((i,), chosen, st.cache, weight)


def apply_weak_memory(st: ProcessState, d: int, i: int, weight=1) -> StepOutcome:
    if st.run_pos(d) == 0:
        st.frozen_sigma = ordering_by_load(st.lv)
        chosen = i
        st.cache = i
    else:
        rank = st.frozen_sigma.rank
        if rank[i] > rank[st.cache]:
            chosen = i
            st.cache = i
        else:
            chosen = st.cache
    _put(st, chosen, weight)
    return StepOutcome((i,), chosen, st.cache, weight)


def apply_reset_memory(st: ProcessState, d: int, i: int, weight=1) -> StepOutcome:
    if st.run_pos(d) == 0:
        st.cache = i
        _put(st, i, weight)
        return StepOutcome((i,), i, i, weight)
    return apply_memory(st, i, weight)


def apply_two_weak_memory_box(st: ProcessState, i1: int, i2: int, weight1=1, weight2=1):
    """One pair of steps of 2-WeakMemory on the uniform distribution, written
    as the two-sample box: first ball to i1, second to the lighter of (i1, i2)
    by loads before the pair. Ties resolve with the ``ordering_by_load`` rule.
    """
    loads = st.lv.loads
    l1, l2 = loads[i1], loads[i2]
    second = i2 if (l2 < l1 or (l2 == l1 and i2 > i1)) else i1
    _put(st, i1, weight1)
    _put(st, second, weight2)
    st.cache = second
    return i1, second


# ------------------------------------------------------------ with draws

def step_dchoice(st: ProcessState, d: int, dist: SamplingDistribution,
                 rng: np.random.Generator, weight=1) -> StepOutcome:
    if d < 1:
        raise ValueError("d must be >= 1")
    samples = [sample(dist, rng) for _ in range(d)]
    return apply_dchoice(st, samples, float(rng.random()), weight)


def step_memory(st, dist, rng, weight=1) -> StepOutcome:
    return apply_memory(st, sample(dist, rng), weight)


def step_weak_memory(st, d, dist, rng, weight=1) -> StepOutcome:
    if d < 1:
        raise ValueError("d must be >= 1")
    return apply_weak_memory(st, d, sample(dist, rng), weight)


def step_reset_memory(st, d, dist, rng, weight=1) -> StepOutcome:
    if d < 1:
        raise ValueError("d must be >= 1")
    return apply_reset_memory(st, d, sample(dist, rng), weight)


def step_one_plus_beta(st, beta, dist, rng, weight=1) -> StepOutcome:
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    d = 2 if rng.random() < beta else 1
    return step_dchoice(st, d, dist, rng, weight)


def apply_step(process: str, st: ProcessState, samples, *, d: int = 2, tie_u: float = 0.0,
               weight=1) -> StepOutcome:
    """Dispatch one reference step given explicit samples."""
    if process in ("onechoice", "twochoice", "dchoice", "one-plus-beta"):
        return apply_dchoice(st, samples, tie_u, weight)
    if process == "memory":
        return apply_memory(st, samples[0], weight)
    if process == "weak-memory":
        return apply_weak_memory(st, d, samples[0], weight)
    if process == "reset-memory":
        return apply_reset_memory(st, d, samples[0], weight)
    raise ValueError(f"unknown process {process!r}")


# ------------------------------------------------------------------ runs

@dataclass
class TraceRecord:
    trial: int
    step: int
    gap: float
    max_y: float
    min_y: float
    sampled: list | None = None
    allocated: int | None = None
    cache: int | None = None
    weight: float | None = None
    loads: list | None = None
    potentials: dict | None = None

    def to_json(self) -> dict:
        out = {"trial": self.trial, "step": self.step, "gap": self.gap,
               "max_y": self.max_y, "min_y": self.min_y}
        for key in ("sampled", "allocated", "cache", "weight", "loads", "potentials"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TraceRecord":
        return cls(**{k: obj.get(k) for k in (
            "trial", "step", "gap", "max_y", "min_y", "sampled", "allocated",
            "cache", "weight", "loads", "potentials")})


@dataclass
class ProcessConfig:
    process: str
    n: int
    m: int
    dist: SamplingDistribution
    seed: int
    d: int = 2
    beta: float = 0.5
    weights: WeightDistribution = UNIT
    cadence: str = "grid"
    full_trace: bool = False
    record_loads: bool = False
    trial: int = 0

    def validate(self) -> None:
        if self.process not in PROCESSES:
            raise ValueError(f"unknown process {self.process!r}")
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        if self.dist.n != self.n:
            raise ValueError(f"distribution has {self.dist.n} bins, config says n={self.n}")
        if self.process in ("dchoice", "weak-memory", "reset-memory") and self.d < 1:
            raise ValueError("d must be >= 1")
        if self.process == "one-plus-beta" and not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not self.weights.is_unit:
            if self.process not in WEIGHTED_OK:
                raise ValueError(f"weighted balls are not supported for {self.process}")
            if self.process == "weak-memory" and self.d != 2:
                raise ValueError("weighted weak-memory is only defined for d = 2")

    @property
    def samples_per_step(self) -> int:
        if self.process == "twochoice":
            return 2
        if self.process == "dchoice":
            return self.d
        if self.process == "one-plus-beta":
            return 2
        return 1


@dataclass
class Trace:
    config: ProcessConfig
    records: list = field(default_factory=list)
    final_loads: np.ndarray | None = None
    total_weight: float = 0.0
    # per-step arrays, populated when config.full_trace
    sampled: np.ndarray | None = None
    allocated: np.ndarray | None = None
    cache: np.ndarray | None = None
    weights: np.ndarray | None = None

    @property
    def final_gap(self) -> float:
        return self.records[-1].gap if self.records else 0.0


def snapshot_steps(n: int, m: int, cadence: str = "grid") -> list[int]:
    """Steps at which snapshots are recorded; always ends with m.

    ``grid``: ceil(n * 1.25**k) for k >= 0 plus every multiple of n.
    ``every:K``: multiples of K. ``final``: only m.
    """
    steps: set[int] = set()
    if m <= 0:
        return [0]
    if cadence == "grid":
        k = 0
        while True:
            t = -(-n * 5 ** k // 4 ** k)
            if t > m:
                break
            steps.add(t)
            k += 1
        steps.update(range(n, m + 1, n))
    elif cadence.startswith("every:"):
        every = int(cadence.split(":", 1)[1])
        if every < 1:
            raise ValueError("cadence every:K needs K >= 1")
        steps.update(range(every, m + 1, every))
    elif cadence != "final":
        raise ValueError(f"unknown cadence {cadence!r}")
    steps.add(m)
    return sorted(s for s in steps if 1 <= s <= m)


def _draw_block(cfg: ProcessConfig, rng: np.random.Generator, size: int, weighted: bool):
    k = cfg.samples_per_step
    samples = cfg.dist.sample_many(rng, (size, k)).astype(np.int64, copy=False)
    ks = None
    if cfg.process == "one-plus-beta":
        coins = rng.random(size)
        ks = np.where(coins < cfg.beta, 2, 1).astype(np.int64)
    elif cfg.process in ("onechoice", "twochoice", "dchoice"):
        ks = np.full(size, k, dtype=np.int64)
    ties = rng.random(size) if ks is not None else None
    if weighted:
        weights = cfg.weights.sample_many(rng, size).astype(np.float64)
    else:
        weights = np.ones(size, dtype=np.int64)
    return samples, ks, ties, weights


def run_process(cfg: ProcessConfig) -> Trace:
    """Allocate ``cfg.m`` balls and record snapshots (or every step)."""
    cfg.validate()
    n, m = cfg.n, cfg.m
    weighted = not cfg.weights.is_unit
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    loads = np.zeros(n, dtype=np.float64 if weighted else np.int64)
    cache = np.array([-1], dtype=np.int64)
    wm_state = np.zeros(2, dtype=np.int64)
    wm_state[0] = -1
    touched_bins = np.zeros(max(cfg.d, 1), dtype=np.int64)
    touched_orig = np.zeros(max(cfg.d, 1), dtype=loads.dtype)
    trace = Trace(cfg)
    snaps = snapshot_steps(n, m, cfg.cadence) if m > 0 else []
    snap_set = set(snaps)
    if cfg.full_trace:
        trace.sampled = np.zeros((m, cfg.samples_per_step), dtype=np.int64) - 1
        trace.allocated = np.zeros(m, dtype=np.int64)
        trace.cache = np.full(m, -1, dtype=np.int64)
        trace.weights = np.zeros(m, dtype=loads.dtype)
    total = 0 if not weighted else 0.0
    t = 0
    while t < m:
        size = min(BLOCK, m - t)
        samples, ks, ties, weights = _draw_block(cfg, rng, size, weighted)
        alloc = np.empty(size, dtype=np.int64)
        cache_out = np.full(size, -1, dtype=np.int64)
        lo = 0
        while lo < size:
            if cfg.full_trace:
                nxt = t + (size - lo)
            else:
                nxt = snaps[bisect.bisect_right(snaps, t)]
            hi = lo + min(nxt - t, size - lo)
            before = loads.copy() if cfg.full_trace else None
            _run_segment(cfg, loads, cache, wm_state, touched_bins, touched_orig,
                         samples, ks, ties, weights, t, lo, hi, alloc, cache_out)
            if cfg.full_trace:
                _record_steps(trace, cfg, before, samples, ks, alloc, cache_out, weights,
                              t, lo, hi, total, snap_set, loads)
            seg_weight = weights[lo:hi].sum()
            total = total + (float(seg_weight) if weighted else int(seg_weight))
            t += hi - lo
            lo = hi
            if not cfg.full_trace and t in snap_set:
                trace.records.append(_snapshot(cfg, loads, total, t))
    trace.final_loads = loads
    trace.total_weight = total
    return trace


def _run_segment(cfg, loads, cache, wm_state, touched_bins, touched_orig,
                 samples, ks, ties, weights, t, lo, hi, alloc, cache_out):
    p = cfg.process
    if p in ("onechoice", "twochoice", "dchoice", "one-plus-beta"):
        _kernels.choice_kernel(loads, samples, ks, ties, weights, lo, hi, alloc)
    elif p == "memory":
        _kernels.memory_kernel(loads, cache, samples, weights, t, 0, 0, lo, hi,
                               alloc, cache_out)
    elif p == "reset-memory":
        _kernels.memory_kernel(loads, cache, samples, weights, t, 0, cfg.d, lo, hi,
                               alloc, cache_out)
    else:
        _kernels.weak_memory_kernel(loads, wm_state, touched_bins, touched_orig, samples,
                                    weights, t, 0, cfg.d, lo, hi, alloc, cache_out)


def _snapshot(cfg: ProcessConfig, loads: np.ndarray, total, t: int) -> TraceRecord:
    avg = total / cfg.n
    mx = loads.max()
    mn = loads.min()
    rec = TraceRecord(cfg.trial, t, float(mx - avg), float(mx - avg), float(mn - avg))
    if cfg.record_loads:
        rec.loads = loads.tolist()
    return rec


def _record_steps(trace, cfg, before, samples, ks, alloc, cache_out, weights,
                  t, lo, hi, total, snap_set, loads):
    mx = np.empty(hi, dtype=before.dtype)
    mn = np.empty(hi, dtype=before.dtype)
    _kernels.replay_extrema(before.copy(), alloc, weights, lo, hi, mx, mn)
    running = total + np.cumsum(weights[lo:hi])
    avg = running / cfg.n
    has_cache = cfg.process in ("memory", "reset-memory", "weak-memory")
    for q, s in enumerate(range(lo, hi)):
        step = t + q + 1
        k = int(ks[s]) if ks is not None else samples.shape[1]
        smp = samples[s, :k]
        trace.sampled[step - 1, :k] = smp
        trace.allocated[step - 1] = alloc[s]
        trace.cache[step - 1] = cache_out[s] if has_cache else -1
        trace.weights[step - 1] = weights[s]
        g = float(mx[s] - avg[q])
        rec = TraceRecord(cfg.trial, step, g, g, float(mn[s] - avg[q]),
                          sampled=[int(x) for x in smp], allocated=int(alloc[s]),
                          cache=int(cache_out[s]) if has_cache else None,
                          weight=float(weights[s]))
        trace.records.append(rec)
    if cfg.record_loads:
        # loads are only materialised at grid steps in full-trace mode
        replay = before.copy()
        for q, s in enumerate(range(lo, hi)):
            replay[alloc[s]] += weights[s]
            step = t + q + 1
            if step in snap_set:
                trace.records[step - 1].loads = replay.tolist()
