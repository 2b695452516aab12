"""Run-allocation probabilities, Condition C1, drift checks and the folded
segmentation of Memory traces.

Rank conventions: rank 0 is the heaviest bin. Unless a ``sigma`` is given,
the bin with index r is taken to sit at rank r, so a sampling vector passed
to the run-probability functions is read in rank order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import LoadVector, majorizes, first_majorization_violation, normalize
from .potentials import PotentialConfig, gamma
from .processes import ProcessState, Trace, TraceRecord, apply_step
from .sampling import SamplingDistribution, make_step, random_biased

ENUM_CAP = 10 ** 7
MC_MIN_TRIALS = 10 ** 4
C1_SLACK = 1e-12
DRIFT_PROCESSES = ("memory", "weak-memory", "reset-memory")


@dataclass
class RunProbMatrix:
    """``p_hat[i, j]``: probability that the rank-i bin gets j balls in one run."""

    n: int
    d: int
    p_hat: np.ndarray
    stderr: np.ndarray | None = None
    method: str = ""

    def expected_balls(self) -> np.ndarray:
        return self.p_hat @ np.arange(self.d + 1)

    def check(self, tol: float = 1e-9) -> None:
        rows = self.p_hat.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-12 * max(1, self.d):
            raise AssertionError(f"rows do not sum to one: {rows}")
        if abs(self.expected_balls().sum() - self.d) > tol:
            raise AssertionError("expected balls per run != d")


@dataclass(frozen=True)
class AllocationVector:
    p: np.ndarray

    @property
    def n(self) -> int:
        return int(self.p.size)


def _rank_masses(dist: SamplingDistribution, sigma=None) -> np.ndarray:
    probs = np.asarray(dist.probs, dtype=np.float64)
    return probs if sigma is None else probs[np.asarray(sigma)]


# --------------------------------------------------- run probabilities

def weak_memory_run_probs_closed(dist: SamplingDistribution, d: int, sigma=None) -> RunProbMatrix:
    """Closed form p_{i,j} = e g^{j-1} [1 - e/(1-f) (1 - f^{d-j})] for j >= 1.

    e is the mass of rank i, f the mass of strictly heavier ranks and
    g = f + e. Uses 0^0 = 1.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    e = _rank_masses(dist, sigma)
    n = e.size
    f = np.concatenate(([0.0], np.cumsum(e)[:-1]))
    g = f + e
    p = np.zeros((n, d + 1))
    for j in range(1, d + 1):
        p[:, j] = e * g ** (j - 1) * (1.0 - e / (1.0 - f) * (1.0 - f ** (d - j)))
    p[:, 0] = 1.0 - p[:, 1:].sum(axis=1)
    return RunProbMatrix(n, d, p, method="closed")


def run_probs_rational(masses, d: int) -> list[list[Fraction]]:
    """The same closed form in exact rational arithmetic; masses in rank order."""
    if d < 1:
        raise ValueError("d must be >= 1")
    e = [Fraction(x) for x in masses]
    if sum(e) != 1:
        raise ValueError("masses must sum to exactly 1")
    out = []
    f = Fraction(0)
    for ei in e:
        g = f + ei
        row = [ei * g ** (j - 1) * (1 - ei / (1 - f) * (1 - f ** (d - j)))
               for j in range(1, d + 1)]
        out.append([1 - sum(row)] + row)
        f = g
    return out


def _ranked_state(n: int, d: int, sigma=None) -> ProcessState:
    # strictly decreasing loads give an ordering without ties
    loads = np.empty(n, dtype=np.int64)
    order = np.arange(n) if sigma is None else np.asarray(sigma)
    loads[order] = d * np.arange(n - 1, -1, -1)
    st = ProcessState(LoadVector.from_loads(loads))
    st.step = int(loads.sum())
    st.run_origin = st.step
    return st


def exact_run_probs(dist: SamplingDistribution, d: int, sigma=None,
                    cap: int = ENUM_CAP) -> RunProbMatrix:
    """Enumerate every length-d sample sequence of one d-WeakMemory run."""
    n = dist.n
    if d < 1:
        raise ValueError("d must be >= 1")
    if n ** d > cap:
        raise ValueError(f"n^d = {n ** d} exceeds the enumeration cap {cap}")
    probs = np.asarray(dist.probs, dtype=np.float64)
    root = _ranked_state(n, d, sigma)
    order = np.arange(n) if sigma is None else np.asarray(sigma)
    base = root.lv.loads.copy()
    p = np.zeros((n, d + 1))
    ranks = np.arange(n)

    def walk(st: ProcessState, depth: int, weight: float) -> None:
        if depth == d:
            counts = (st.lv.loads - base)[order]
            p[ranks, counts] += weight
            return
        for i in range(n):
            child = st.copy()
            apply_step("weak-memory", child, [i], d=d)
            walk(child, depth + 1, weight * probs[i])

    walk(root, 0, 1.0)
    return RunProbMatrix(n, d, p, method="exact")


def chain_run_probs(dist: SamplingDistribution, d: int, sigma=None) -> RunProbMatrix:
    """Exact run probabilities by dynamic programming, O(n d^2).

    Seen from rank i, the cache is heavier than i, at i, or lighter than i.
    A fresh sample at rank s moves the cache to the lighter of the two, so
    each rank needs only a 3-state chain crossed with its ball count.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    e = _rank_masses(dist, sigma)
    n = e.size
    f = np.concatenate(([0.0], np.cumsum(e)[:-1]))
    p = np.zeros((n, d + 1))
    for i in range(n):
        above, at, below = f[i], e[i], max(0.0, 1.0 - f[i] - e[i])
        # state[c] = probability of (position, c balls so far)
        up = np.zeros(d + 1)
        on = np.zeros(d + 1)
        down = np.zeros(d + 1)
        up[0], on[1], down[0] = above, at, below
        for _ in range(d - 1):
            new_up = up * above
            new_on = np.zeros(d + 1)
            new_on[1:] = (up[:-1] + on[:-1]) * at + on[:-1] * above
            new_down = down + (up + on) * below
            up, on, down = new_up, new_on, new_down
        p[i] = up + on + down
    return RunProbMatrix(n, d, p, method="chain")


def mc_run_probs(dist: SamplingDistribution, d: int, trials: int,
                 rng: np.random.Generator, sigma=None) -> RunProbMatrix:
    """Monte-Carlo estimate; within a run the allocated rank is the running
    maximum of the sampled ranks."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    n = dist.n
    order = np.arange(n) if sigma is None else np.asarray(sigma)
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[order] = np.arange(n)
    ranks = rank_of[dist.sample_many(rng, (trials, d))]
    alloc = np.maximum.accumulate(ranks, axis=1)
    counts = np.zeros((trials, n), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(trials), d), alloc.ravel()), 1)
    hist = np.zeros((n, d + 1))
    for i in range(n):
        hist[i] = np.bincount(counts[:, i], minlength=d + 1)
    p = hist / trials
    se = np.sqrt(p * (1 - p) / trials)
    return RunProbMatrix(n, d, p, stderr=se, method="mc")


def proxy_allocation_vector(rp: RunProbMatrix) -> AllocationVector:
    return AllocationVector(rp.expected_balls() / rp.d)


def twochoice_allocation_vector(n: int) -> AllocationVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1)
    return AllocationVector((2 * i - 1) / n ** 2)


# --------------------------------------------------------- condition C1

@dataclass(frozen=True)
class C1Result:
    passed: bool
    first_violation: int | None = None  # 1-based k
    side: str | None = None  # "prefix" or "suffix"

    def __bool__(self) -> bool:
        return self.passed


def _c1_ranges(n: int, delta: float) -> tuple[range, range]:
    dn = delta * n
    k_hi = math.floor(dn + 1e-9)
    k_lo = math.ceil(dn + 1 - 1e-9)
    return range(1, k_hi + 1), range(max(k_lo, 1), n + 1)


def c1_check(p, delta: float, eps: float) -> C1Result:
    """Both families of Condition C1, checked with 1e-12 slack."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    p = np.asarray(getattr(p, "p", p), dtype=np.float64)
    n = p.size
    prefix = np.cumsum(p)
    suffix = np.cumsum(p[::-1])[::-1]
    pre, suf = _c1_ranges(n, delta)
    for k in pre:
        if prefix[k - 1] > (1 - eps) * k / n + C1_SLACK:
            return C1Result(False, k, "prefix")
    boost = 1 + eps * delta / (1 - delta)
    for k in suf:
        if suffix[k - 1] < boost * (n - k + 1) / n - C1_SLACK:
            return C1Result(False, k, "suffix")
    return C1Result(True)


def c1_max_eps(p, delta: float) -> float:
    """Supremum of eps for which C1 holds at this delta (may be <= 0)."""
    p = np.asarray(getattr(p, "p", p), dtype=np.float64)
    n = p.size
    prefix = np.cumsum(p)
    suffix = np.cumsum(p[::-1])[::-1]
    pre, suf = _c1_ranges(n, delta)
    bound = 1.0
    for k in pre:
        bound = min(bound, 1 - n * prefix[k - 1] / k)
    for k in suf:
        bound = min(bound, (n * suffix[k - 1] / (n - k + 1) - 1) * (1 - delta) / delta)
    return bound


def min_d_for_c1(a: float, b: float, eps: float) -> int:
    """Smallest integer d >= max(2, 2b(ab-1)^2 / ((b-1)^2 (1-eps)))."""
    if b <= 1:
        raise ValueError("inapplicable for b = 1 (the bound has a pole)")
    if a <= 1:
        raise ValueError("need a > 1")
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    raw = 2 * b * (a * b - 1) ** 2 / ((b - 1) ** 2 * (1 - eps))
    return max(2, math.ceil(raw - 1e-9))


# ------------------------------------------------------- majorization

@dataclass
class MajorizationReport:
    a: float
    b: float
    n: int
    d: int
    checked: int = 0
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def majorization_check_step_vs_biased(a: float, b: float, n: int, d: int,
                                      num_random_dists: int = 0,
                                      rng: np.random.Generator | None = None,
                                      dists=()) -> MajorizationReport:
    """Check that the step distribution's expected-balls vector majorizes
    (in rank order) that of every supplied or random (a, b)-biased vector."""
    nu = make_step(a, b, n)
    top = exact_run_probs(nu, d).expected_balls()
    report = MajorizationReport(a, b, n, d)
    mus = list(dists)
    for mu in mus:
        if mu.n != n or not mu.is_biased(a, b):
            raise ValueError("comparison distribution is not (a, b)-biased")
    if num_random_dists:
        if rng is None:
            raise ValueError("rng required for random distributions")
        mus += [random_biased(a, b, n, rng) for _ in range(num_random_dists)]
    for idx, mu in enumerate(mus):
        other = exact_run_probs(mu, d).expected_balls()
        report.checked += 1
        if not majorizes(top, other, sort=False):
            k = first_majorization_violation(top, other, sort=False)
            report.counterexamples.append({"index": idx, "probs": mu.probs.tolist(),
                                           "first_prefix": k})
    return report


# ---------------------------------------------------------------- drift

@dataclass
class DropRow:
    gamma_t: float
    expected: float
    gap: float
    stderr: float | None = None

    @property
    def decreased(self) -> bool:
        return self.expected < self.gamma_t


@dataclass
class DropReport:
    process: str
    alpha: float
    d: int
    n: int
    rows: list
    c_min: float
    gap_threshold: float | None = None
    mode: str = "exact"

    @property
    def all_decrease(self) -> bool:
        rows = self.rows if self.gap_threshold is None else [
            r for r in self.rows if r.gap >= self.gap_threshold]
        return all(r.decreased for r in rows)

    def as_dict(self) -> dict:
        return {
            "process": self.process, "alpha": self.alpha, "d": self.d, "n": self.n,
            "mode": self.mode, "c_min": self.c_min, "gap_threshold": self.gap_threshold,
            "all_decrease": self.all_decrease,
            "states": [{"gamma_t": r.gamma_t, "expected": r.expected, "gap": r.gap,
                        "decreased": r.decreased, "stderr": r.stderr} for r in self.rows],
        }


def _c_needed(g: float, e: float, alpha: float, n: int) -> float:
    # smallest c with g(1 - alpha/(c n)) + c alpha >= e
    diff = g - e
    return (-diff + math.sqrt(diff * diff + 4 * alpha * alpha * g / n)) / (2 * alpha)


def _fit_c(rows, alpha: float, n: int) -> float:
    c = 1.0
    for r in rows:
        if math.isfinite(r.gamma_t) and math.isfinite(r.expected):
            c = max(c, _c_needed(r.gamma_t, r.expected, alpha, n))
        else:
            return math.inf
    return c


def _prepared(process: str, st: ProcessState) -> ProcessState:
    st = st.copy()
    if process in ("weak-memory", "reset-memory"):
        st.run_origin = st.step
    return st


def verify_drop_exact(process: str, dist: SamplingDistribution, alpha: float, d: int,
                      states, gap_threshold: float | None = None,
                      cap: int = ENUM_CAP) -> DropReport:
    """Exact E[Gamma^{t+d} | state] by enumerating all n^d sample sequences.

    Run-based processes are started at a run boundary at the given state.
    """
    if process not in DRIFT_PROCESSES:
        raise ValueError(f"drift verification supports {DRIFT_PROCESSES}")
    n = dist.n
    if n ** d > cap:
        raise ValueError(f"n^d = {n ** d} exceeds the enumeration cap {cap}")
    probs = np.asarray(dist.probs, dtype=np.float64)
    rows = []
    for st0 in states:
        st0 = _prepared(process, st0)
        acc = 0.0

        def walk(st, depth, weight):
            nonlocal acc
            if depth == d:
                acc += weight * gamma(normalize(st.lv), alpha)
                return
            for i in range(n):
                child = st.copy()
                apply_step(process, child, [i], d=d)
                walk(child, depth + 1, weight * probs[i])

        walk(st0, 0, 1.0)
        g0 = gamma(normalize(st0.lv), alpha)
        rows.append(DropRow(g0, acc, float(normalize(st0.lv)[0])))
    return DropReport(process, alpha, d, n, rows, _fit_c(rows, alpha, n), gap_threshold)


def _simulate_runs(process: str, loads: np.ndarray, cache: int | None, d: int,
                   S: np.ndarray) -> np.ndarray:
    """Allocations of d unit balls for each row of samples ``S`` (vectorized)."""
    T = S.shape[0]
    base = loads.astype(np.float64)
    alloc = np.empty((T, d), dtype=np.int64)
    b = np.full(T, -1 if cache is None else cache, dtype=np.int64)
    for s in range(d):
        i = S[:, s]
        if s == 0 and process != "memory":
            chosen = i.copy()
            b = i.copy()
        elif process == "weak-memory":
            li, lb = base[i], base[b]
            lighter = (li < lb) | ((li == lb) & (i > b))
            chosen = np.where(lighter, i, b)
            b = chosen
        else:
            prev = alloc[:, :s]
            li = base[i] + (prev == i[:, None]).sum(axis=1)
            lb = np.where(b >= 0, base[np.maximum(b, 0)] + (prev == b[:, None]).sum(axis=1),
                          np.inf)
            take = li <= lb
            chosen = np.where(take, i, b)
            b = np.where(li < lb, i, b)
        alloc[:, s] = chosen
    return alloc


def _gamma_after(loads: np.ndarray, total: float, alloc: np.ndarray, alpha: float) -> np.ndarray:
    n = loads.size
    d = alloc.shape[1]
    mu = (total + d) / n
    base = loads.astype(np.float64)

    def g(x):
        return np.exp(alpha * (x - mu)) + np.exp(-alpha * (x - mu))

    out = np.full(alloc.shape[0], g(base).sum())
    for s in range(d):
        col = alloc[:, s:s + 1]
        first = ~(alloc[:, :s] == col).any(axis=1)
        cnt = (alloc == col).sum(axis=1)
        x = base[alloc[:, s]]
        out += np.where(first, g(x + cnt) - g(x), 0.0)
    return out


def verify_drop_mc(process: str, dist: SamplingDistribution, alpha: float, d: int,
                   states, trials: int, rng: np.random.Generator,
                   gap_threshold: float | None = None) -> DropReport:
    """Monte-Carlo version of :func:`verify_drop_exact` with standard errors.

    A state counts as decreasing only when the upper end of its 4-sigma
    interval stays below Gamma^t.
    """
    if process not in DRIFT_PROCESSES:
        raise ValueError(f"drift verification supports {DRIFT_PROCESSES}")
    if trials < MC_MIN_TRIALS:
        raise ValueError(f"need at least {MC_MIN_TRIALS} trials")
    n = dist.n
    rows = []
    for st in states:
        if not st.lv.weighted and st.lv.loads.dtype.kind == "f":
            raise ValueError("unit-weight states expected")
        S = dist.sample_many(rng, (trials, d))
        alloc = _simulate_runs(process, st.lv.loads, st.cache, d, S)
        vals = _gamma_after(st.lv.loads, st.lv.total_weight, alloc, alpha)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
        y = normalize(st.lv)
        rows.append(_McRow(gamma(y, alpha), mean, float(y[0]), se))
    return DropReport(process, alpha, d, n, rows, _fit_c(rows, alpha, n), gap_threshold, "mc")


@dataclass
class _McRow(DropRow):
    @property
    def decreased(self) -> bool:
        return self.expected + 4 * self.stderr < self.gamma_t


def random_states(n: int, k: int, gap_min: float, rng: np.random.Generator,
                  spread: int | None = None) -> list[ProcessState]:
    """Random unit-load states with gap >= gap_min, cache at a min-load bin.

    Loads are uniform on [0, spread) (default 2*gap_min); the heaviest bin is
    then raised until the gap target is met.
    """
    spread = spread or max(2, int(2 * gap_min))
    out = []
    for _ in range(k):
        loads = rng.integers(0, spread, size=n).astype(np.int64)
        while loads.max() - loads.sum() / n < gap_min:
            loads[int(np.argmax(loads))] += 1
        lv = LoadVector.from_loads(loads)
        st = ProcessState(lv, cache=int(np.argmin(loads)), step=int(lv.total_weight))
        st.run_origin = st.step
        out.append(st)
    return out


# -------------------------------------------------------- folded process

@dataclass
class Round:
    start: int
    case: str  # "A" or "B"
    phases: list = field(default_factory=list)  # [start, stop) step ranges
    termination: str = ""  # caseA | condition1 | condition2 | truncated

    @property
    def stop(self) -> int:
        return self.phases[-1][1] if self.phases else self.start + 1


@dataclass
class FoldedSegmentation:
    j: int
    phase_length: int
    k_j: int
    light_threshold: float
    cap: float
    rounds: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    steps: int = 0

    def is_partition(self) -> bool:
        pos = 0
        for r in self.rounds:
            if r.start != pos:
                return False
            if r.case == "A":
                pos += 1
                continue
            for a, b in r.phases:
                if a != pos or b <= a:
                    return False
                pos = b
        return pos == self.steps

    def as_dict(self) -> dict:
        return {
            "j": self.j, "phase_length": self.phase_length, "k_j": self.k_j,
            "light_threshold": self.light_threshold, "cap": self.cap, "steps": self.steps,
            "valid_partition": self.is_partition(), "violation_count": len(self.violations),
            "violations": self.violations,
            "rounds": [{"start": r.start, "case": r.case, "phases": r.phases,
                        "termination": r.termination} for r in self.rounds],
        }


@dataclass
class StepLog:
    n: int
    sampled: np.ndarray
    allocated: np.ndarray
    weights: np.ndarray
    initial: np.ndarray | None = None

    def start(self) -> tuple[np.ndarray, float]:
        x = np.zeros(self.n) if self.initial is None else np.asarray(self.initial, dtype=float).copy()
        return x, float(x.sum())

    @classmethod
    def from_trace(cls, trace: Trace) -> "StepLog":
        if trace.allocated is None:
            raise ValueError("trace lacks full-step data; rerun with full_trace")
        return cls(trace.config.n, trace.sampled[:, 0], trace.allocated, trace.weights)

    @classmethod
    def from_records(cls, records: list[TraceRecord], n: int, trial: int | None = None) -> "StepLog":
        recs = [r for r in records if trial is None or r.trial == trial]
        if not recs or any(r.allocated is None or not r.sampled for r in recs):
            raise ValueError("trace lacks full-step data; rerun with full_trace")
        steps = [r.step for r in recs]
        if steps != list(range(1, len(recs) + 1)):
            raise ValueError("full-step records must cover steps 1..m for one trial")
        return cls(n, np.array([r.sampled[0] for r in recs], dtype=np.int64),
                   np.array([r.allocated for r in recs], dtype=np.int64),
                   np.array([1.0 if r.weight is None else r.weight for r in recs]))


def segment_folded(full_trace, j: int, cfg: PotentialConfig) -> FoldedSegmentation:
    """Split a recorded run into folded-process rounds and phases.

    A round whose first sample is heavy (normalized load at least
    z_{j-1} + 2v/alpha2) is a one-step Case-A round. Otherwise the round is a
    run of phases of ceil(v/alpha2) steps, the first of which uses the
    round's opening sample; it ends after a phase with no light sample
    (Condition 1) or after k_j phases (Condition 2). Every Case-B step is
    checked against the cap z_{j-1} + 4v/alpha2 on the allocated bin's load
    just before the allocation.
    """
    log = full_trace if isinstance(full_trace, StepLog) else StepLog.from_trace(full_trace)
    if j < 1:
        raise ValueError("layer j must be >= 1")
    n = log.n
    L = cfg.phase_length
    kj = cfg.k(j)
    light = cfg.z(j - 1) + 2 * cfg.v / cfg.alpha2
    cap = cfg.z(j - 1) + 4 * cfg.v / cfg.alpha2
    m = log.allocated.size
    seg = FoldedSegmentation(j, L, kj, light, cap, steps=m)
    x, total = log.start()
    p = 0

    def advance(step):
        nonlocal total
        w = float(log.weights[step])
        x[log.allocated[step]] += w
        total += w

    while p < m:
        avg = total / n
        i = int(log.sampled[p])
        yi = x[i] - avg
        if yi >= light:
            ell = int(log.allocated[p])
            if x[ell] - avg > yi:
                seg.violations.append({"step": p, "case": "A", "allocated": ell,
                                       "y": x[ell] - avg, "bound": yi})
            seg.rounds.append(Round(p, "A", [], "caseA"))
            advance(p)
            p += 1
            continue
        rnd = Round(p, "B")
        while True:
            start = p
            saw_light = False
            while p < m and p - start < L:
                avg = total / n
                if x[int(log.sampled[p])] - avg < light:
                    saw_light = True
                ell = int(log.allocated[p])
                if x[ell] - avg > cap:
                    seg.violations.append({"step": p, "case": "B", "allocated": ell,
                                           "y": x[ell] - avg, "bound": cap})
                advance(p)
                p += 1
            rnd.phases.append((start, p))
            if p - start < L:
                rnd.termination = "truncated"
                break
            if not saw_light:
                rnd.termination = "condition1"
                break
            if len(rnd.phases) >= kj:
                rnd.termination = "condition2"
                break
        seg.rounds.append(rnd)
    return seg


def round_start_potentials(full_trace, seg: FoldedSegmentation, fn) -> list[float]:
    """Evaluate ``fn(y)`` at the state opening each round."""
    log = full_trace if isinstance(full_trace, StepLog) else StepLog.from_trace(full_trace)
    x, total = log.start()
    out = []
    pos = 0
    for r in seg.rounds:
        while pos < r.start:
            x[log.allocated[pos]] += log.weights[pos]
            total += float(log.weights[pos])
            pos += 1
        out.append(fn(normalize(LoadVector(x.copy(), total))))
    return out
