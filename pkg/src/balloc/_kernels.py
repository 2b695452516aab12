"""Compiled inner loops for the allocation processes.

Every kernel consumes pre-drawn randomness for steps ``lo..hi-1`` of a block
and mutates ``loads`` in place. ``t0`` is the number of balls allocated
before step ``lo``. Ranks follow ``ordering_by_load``: heavier first, ties by
ascending bin id, so bin i sits strictly below bin b iff
``load[i] < load[b] or (load[i] == load[b] and i > b)``.
"""
import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def choice_kernel(loads, samples, ks, ties, weights, lo, hi, alloc_out):
    for s in range(lo, hi):
        k = ks[s]
        best = loads[samples[s, 0]]
        count = 1
        for q in range(1, k):
            ld = loads[samples[s, q]]
            if ld < best:
                best = ld
                count = 1
            elif ld == best:
                count += 1
        if count == 1:
            for q in range(k):
                if loads[samples[s, q]] == best:
                    chosen = samples[s, q]
                    break
        else:
            r = int(ties[s] * count)
            if r >= count:
                r = count - 1
            seen = 0
            for q in range(k):
                if loads[samples[s, q]] == best:
                    if seen == r:
                        chosen = samples[s, q]
                        break
                    seen += 1
        loads[chosen] += weights[s]
        alloc_out[s] = chosen


@njit(nogil=True, cache=True)
def memory_kernel(loads, cache, samples, weights, t0, origin, reset_d, lo, hi,
                  alloc_out, cache_out):
    """Memory (reset_d == 0) and d-ResetMemory (reset_d >= 1)."""
    b = cache[0]
    t = t0
    for s in range(lo, hi):
        i = samples[s, 0]
        if b < 0 or (reset_d > 0 and (t - origin) % reset_d == 0):
            chosen = i
            b = i
        elif loads[i] < loads[b]:
            chosen = i
            b = i
        elif loads[i] == loads[b]:
            chosen = i
        else:
            chosen = b
        loads[chosen] += weights[s]
        alloc_out[s] = chosen
        cache_out[s] = b
        t += 1
    cache[0] = b


@njit(nogil=True, cache=True)
def _run_start_load(loads, touched_bins, touched_orig, ntouched, i):
    for q in range(ntouched):
        if touched_bins[q] == i:
            return touched_orig[q]
    return loads[i]


@njit(nogil=True, cache=True)
def weak_memory_kernel(loads, state, touched_bins, touched_orig, samples, weights,
                       t0, origin, d, lo, hi, alloc_out, cache_out):
    """d-WeakMemory. Comparisons use loads frozen at the last run start.

    ``state`` holds [cache, number of bins touched in the current run];
    ``touched_orig`` keeps the run-start load of every touched bin, which
    is all that is needed to evaluate the frozen ordering lazily.
    """
    b = state[0]
    nt = state[1]
    t = t0
    for s in range(lo, hi):
        i = samples[s, 0]
        if (t - origin) % d == 0:
            nt = 0
            chosen = i
            b = i
        else:
            li = _run_start_load(loads, touched_bins, touched_orig, nt, i)
            lb = _run_start_load(loads, touched_bins, touched_orig, nt, b)
            if li < lb or (li == lb and i > b):
                chosen = i
                b = i
            else:
                chosen = b
        seen = False
        for q in range(nt):
            if touched_bins[q] == chosen:
                seen = True
                break
        if not seen:
            touched_bins[nt] = chosen
            touched_orig[nt] = loads[chosen]
            nt += 1
        loads[chosen] += weights[s]
        alloc_out[s] = chosen
        cache_out[s] = b
        t += 1
    state[0] = b
    state[1] = nt


@njit(nogil=True, cache=True)
def replay_extrema(loads, alloc, weights, lo, hi, max_out, min_out):
    """Per-step max and min load while replaying ``alloc`` onto ``loads``."""
    n = loads.shape[0]
    mx = loads[0]
    mn = loads[0]
    for q in range(1, n):
        if loads[q] > mx:
            mx = loads[q]
        if loads[q] < mn:
            mn = loads[q]
    cnt = 0
    for q in range(n):
        if loads[q] == mn:
            cnt += 1
    for s in range(lo, hi):
        b = alloc[s]
        old = loads[b]
        w = weights[s]
        loads[b] = old + w
        if loads[b] > mx:
            mx = loads[b]
        if w != 0 and old == mn:
            cnt -= 1
            if cnt == 0:
                mn = loads[0]
                for q in range(1, n):
                    if loads[q] < mn:
                        mn = loads[q]
                for q in range(n):
                    if loads[q] == mn:
                        cnt += 1
        max_out[s] = mx
        min_out[s] = mn


def warm_up():
    """Compile every kernel for both load dtypes."""
    for dt in (np.int64, np.float64):
        loads = np.zeros(4, dtype=dt)
        samples = np.zeros((2, 2), dtype=np.int64)
        w = np.ones(2, dtype=dt)
        out = np.zeros(2, dtype=np.int64)
        out2 = np.zeros(2, dtype=np.int64)
        choice_kernel(loads, samples, np.full(2, 2, dtype=np.int64), np.zeros(2), w, 0, 2, out)
        memory_kernel(loads, np.array([-1], dtype=np.int64), samples, w, 0, 0, 0, 0, 2, out, out2)
        weak_memory_kernel(loads, np.zeros(2, dtype=np.int64), np.zeros(2, dtype=np.int64),
                           np.zeros(2, dtype=dt), samples, w, 0, 0, 2, 0, 2, out, out2)
        replay_extrema(loads.copy(), out, w, 0, 2, np.zeros(2, dtype=dt), np.zeros(2, dtype=dt))
