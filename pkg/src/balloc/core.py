"""Load vectors, normalized loads, gap, orderings and majorization.

Bins are 0-indexed throughout the package. Ranks are 0-indexed as well:
rank 0 is the heaviest bin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REL_TOL = 1e-9
MAJORIZATION_SLACK = 1e-12


@dataclass
class LoadVector:
    """Per-bin loads together with the total allocated weight.

    ``loads`` is int64 in unit-ball mode and float64 when weights are
    enabled. The array is owned by whoever holds the LoadVector; the
    process state machines mutate it in place.
    """

    loads: np.ndarray
    total_weight: float

    def __post_init__(self):
        self.loads = np.asarray(self.loads)
        if self.loads.ndim != 1 or self.loads.size < 1:
            raise ValueError("loads must be a non-empty 1-d array")
        if self.loads.dtype.kind in "iu":
            self.loads = self.loads.astype(np.int64, copy=False)
        else:
            self.loads = self.loads.astype(np.float64, copy=False)

    @classmethod
    def zeros(cls, n: int, weighted: bool = False) -> "LoadVector":
        if n < 1:
            raise ValueError("n must be >= 1")
        dtype = np.float64 if weighted else np.int64
        return cls(np.zeros(n, dtype=dtype), 0 if not weighted else 0.0)

    @classmethod
    def from_loads(cls, loads) -> "LoadVector":
        arr = np.asarray(loads)
        total = arr.sum()
        return cls(arr, int(total) if arr.dtype.kind in "iu" else float(total))

    @property
    def n(self) -> int:
        return int(self.loads.size)

    @property
    def weighted(self) -> bool:
        return self.loads.dtype.kind == "f"

    @property
    def average(self) -> float:
        return self.total_weight / self.n

    def copy(self) -> "LoadVector":
        return LoadVector(self.loads.copy(), self.total_weight)

    def validate(self) -> None:
        if np.any(self.loads < 0):
            raise ValueError("negative load")
        s = self.loads.sum()
        if self.weighted:
            if abs(s - self.total_weight) > REL_TOL * max(1.0, abs(self.total_weight)):
                raise ValueError(f"load sum {s} != total weight {self.total_weight}")
        elif int(s) != self.total_weight:
            raise ValueError(f"load sum {s} != total weight {self.total_weight}")


@dataclass(frozen=True)
class Ordering:
    """A load ordering of the bins.

    ``sigma[r]`` is the bin at rank r and ``rank[b]`` its inverse, so
    ``rank[i] > rank[b]`` means bin i is lighter than bin b.
    """

    sigma: np.ndarray
    rank: np.ndarray

    @classmethod
    def from_sigma(cls, sigma) -> "Ordering":
        sigma = np.asarray(sigma, dtype=np.int64)
        rank = np.empty_like(sigma)
        rank[sigma] = np.arange(sigma.size)
        if not np.array_equal(np.sort(sigma), np.arange(sigma.size)):
            raise ValueError("sigma is not a permutation")
        return cls(sigma, rank)

    @property
    def n(self) -> int:
        return int(self.sigma.size)


def normalize(lv: LoadVector) -> np.ndarray:
    """Loads minus the average, sorted non-increasing."""
    y = lv.loads.astype(np.float64) - lv.total_weight / lv.n
    return -np.sort(-y)


def gap(lv: LoadVector) -> float:
    """Maximum load minus the average load."""
    return float(lv.loads.max() - lv.total_weight / lv.n) if lv.n else 0.0


def ordering_by_load(lv: LoadVector) -> Ordering:
    # lexsort: last key is primary; ties fall back to ascending bin id
    ids = np.arange(lv.n)
    sigma = np.lexsort((ids, -lv.loads))
    return Ordering.from_sigma(sigma)


def majorizes(v, u, sort: bool = True, slack: float = MAJORIZATION_SLACK) -> bool:
    """True iff every prefix sum of ``v`` is at least that of ``u``.

    With ``sort=True`` both vectors are sorted non-increasing first. Pass
    ``sort=False`` to compare prefix sums in the given (rank) order.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v.shape != u.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {u.shape}")
    if sort:
        v = -np.sort(-v)
        u = -np.sort(-u)
    return bool(np.all(np.cumsum(v) >= np.cumsum(u) - slack))


def first_majorization_violation(v, u, sort: bool = True,
                                 slack: float = MAJORIZATION_SLACK) -> int | None:
    """Index k (0-based) of the first failing prefix, or None."""
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v.shape != u.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {u.shape}")
    if sort:
        v = -np.sort(-v)
        u = -np.sort(-u)
    bad = np.nonzero(np.cumsum(v) < np.cumsum(u) - slack)[0]
    return int(bad[0]) if bad.size else None
