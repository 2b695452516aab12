"""Sampling distributions over bins and ball-weight distributions.

Bin draws use Vose's alias method: one uniform bin index plus one uniform
real per draw. The uniform distribution skips the table and draws the bin
index directly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUM_TOL = 1e-9
M_INT_TOL = 1e-9


def _alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = probs.size
    scaled = probs * n
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        lo = small.pop()
        hi = large.pop()
        prob[lo] = scaled[lo]
        alias[lo] = hi
        scaled[hi] = (scaled[hi] + scaled[lo]) - 1.0
        if scaled[hi] < 1.0:
            small.append(hi)
        else:
            large.append(hi)
    # leftovers are 1 up to rounding
    return prob, alias


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Probability vector over n bins, with (a, b)-bias metadata.

    ``a_bias = 1/(n * min s_i)`` and ``b_bias = n * max s_i`` are the
    tightest constants for which the vector is (a, b)-biased.
    """

    probs: np.ndarray
    a_bias: float
    b_bias: float
    uniform: bool = False
    label: str = ""
    _prob: np.ndarray = field(default=None, repr=False)
    _alias: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.probs.size)

    def sample_many(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.uniform:
            return rng.integers(0, self.n, size=size, dtype=np.int64)
        idx = rng.integers(0, self.n, size=size, dtype=np.int64)
        u = rng.random(size=size)
        return np.where(u < self._prob[idx], idx, self._alias[idx])

    def is_biased(self, a: float, b: float, tol: float = 1e-12) -> bool:
        n = self.n
        return bool(np.all(self.probs >= 1.0 / (a * n) - tol)
                    and np.all(self.probs <= b / n + tol))


def _build(probs: np.ndarray, uniform: bool = False, label: str = "") -> SamplingDistribution:
    n = probs.size
    a_bias = 1.0 / (n * probs.min())
    b_bias = n * probs.max()
    prob, alias = _alias_table(probs)
    probs.setflags(write=False)
    return SamplingDistribution(probs, a_bias, b_bias, uniform, label, prob, alias)


def make_uniform(n: int) -> SamplingDistribution:
    if n < 1:
        raise ValueError("n must be >= 1")
    d = _build(np.full(n, 1.0 / n), uniform=True, label="uniform")
    # exact metadata regardless of 1/n rounding
    object.__setattr__(d, "a_bias", 1.0)
    object.__setattr__(d, "b_bias", 1.0)
    return d


def make_biased(probs) -> SamplingDistribution:
    p = np.array(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("probs must be a non-empty vector")
    if np.any(p <= 0):
        raise ValueError("every bin needs positive sampling probability")
    s = p.sum()
    if abs(s - 1.0) > SUM_TOL:
        raise ValueError(f"probabilities sum to {s}, not 1")
    return _build(p / s, label="biased")


def step_size(a: float, b: float, n: int) -> float:
    """Number of heavy bins n(a-1)/(ab-1) of the (a, b)-step vector (unrounded)."""
    return n * (a - 1.0) / (a * b - 1.0)


def make_step(a: float, b: float, n: int) -> SamplingDistribution:
    """(a, b)-step distribution: M bins at b/n followed by n-M bins at 1/(an)."""
    if not (a > 1 and b > 1):
        raise ValueError("step distribution needs a > 1 and b > 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    m_real = step_size(a, b, n)
    m = round(m_real)
    if abs(m_real - m) > M_INT_TOL:
        raise ValueError(f"M = {m_real} is not an integer for (a={a}, b={b}, n={n})")
    if not 1 <= m <= n:
        raise ValueError(f"M = {m} out of range [1, {n}]")
    p = np.empty(n)
    p[:m] = b / n
    p[m:] = 1.0 / (a * n)
    d = _build(p / p.sum(), label=f"step:a={a:g},b={b:g}")
    object.__setattr__(d, "a_bias", float(a))
    object.__setattr__(d, "b_bias", float(b))
    return d


def snap_step_params(a: float, b: float, n: int) -> tuple[float, float, int]:
    """Nearest (a, b') with integral M, keeping ``a`` and solving for b'.

    M is rounded to the nearest integer in [1, n-1]; then
    b' = (n(a-1)/M + 1)/a.
    """
    if not (a > 1 and b > 1):
        raise ValueError("need a > 1 and b > 1")
    m = min(max(round(step_size(a, b, n)), 1), max(n - 1, 1))
    b_new = (n * (a - 1.0) / m + 1.0) / a
    if b_new <= 1:
        raise ValueError(f"cannot snap (a={a}, b={b}) for n={n}")
    return float(a), b_new, m


def random_biased(a: float, b: float, n: int, rng: np.random.Generator) -> SamplingDistribution:
    """A random (a, b)-biased distribution.

    Starts every bin at the floor 1/(an) and spreads the remaining mass with
    Dirichlet weights, water-filling anything above the cap b/n.
    """
    lo, hi = 1.0 / (a * n), b / n
    if n * lo > 1 + 1e-12 or n * hi < 1 - 1e-12:
        raise ValueError("no (a, b)-biased distribution exists for these parameters")
    p = np.full(n, lo)
    rest = 1.0 - p.sum()
    room = np.full(n, hi - lo)
    free = room > 1e-15
    while rest > 1e-15 and free.any():
        w = rng.dirichlet(np.ones(int(free.sum())))
        add = np.zeros(n)
        add[free] = w * rest
        over = add > room
        add[over] = room[over]
        p += add
        room -= add
        rest = 1.0 - p.sum()
        free = room > 1e-15
    return make_biased(p / p.sum())


def sample(dist: SamplingDistribution, rng: np.random.Generator) -> int:
    if dist.uniform:
        return int(rng.integers(0, dist.n))
    i = int(rng.integers(0, dist.n))
    return i if rng.random() < dist._prob[i] else int(dist._alias[i])


# ---------------------------------------------------------------- weights

@dataclass(frozen=True, eq=False)
class WeightDistribution:
    """Ball weights with mean 1 and a finite moment generating function near 0."""

    kind: str
    values: tuple = ()
    probs: tuple = ()
    mgf_lambda: float = 1.0

    def __post_init__(self):
        if self.kind not in ("unit", "exp", "discrete"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.mgf_lambda <= 0:
            raise ValueError("mgf_lambda must be positive")
        if self.kind == "exp" and self.mgf_lambda >= 1:
            raise ValueError("exponential(1) has a finite MGF only for lambda < 1")
        if self.kind == "discrete":
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if v.size == 0 or v.shape != p.shape:
                raise ValueError("discrete weights need matching values/probs")
            if np.any(v < 0) or np.any(p < 0) or abs(p.sum() - 1) > SUM_TOL:
                raise ValueError("invalid discrete weight distribution")
            if abs(float(v @ p) - 1.0) > 1e-3:
                raise ValueError(f"discrete weight mean is {float(v @ p)}, expected 1")

    @property
    def is_unit(self) -> bool:
        return self.kind == "unit"

    @property
    def mean(self) -> float:
        if self.kind == "discrete":
            return float(np.dot(self.values, self.probs))
        return 1.0

    def sample_many(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "unit":
            return np.ones(size)
        if self.kind == "exp":
            return rng.exponential(1.0, size=size)
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.probs))
        return np.asarray(self.values, dtype=float)[idx]

    def spec(self) -> str:
        if self.kind == "discrete":
            return f"discrete:{list(self.values)}:{list(self.probs)}"
        return self.kind


UNIT = WeightDistribution("unit")
EXPONENTIAL = WeightDistribution("exp", mgf_lambda=0.5)


def sample_weight(w: WeightDistribution, rng: np.random.Generator) -> float:
    if w.kind == "unit":
        return 1.0
    return float(w.sample_many(rng, 1)[0])


# ----------------------------------------------------------- spec strings

def _load_json(ref: str, base: Path | None):
    if not ref.startswith("@"):
        raise ValueError(f"expected @path.json, got {ref!r}")
    path = Path(ref[1:])
    if base is not None and not path.is_absolute():
        path = base / path
    with open(path) as fh:
        return json.load(fh)


def _kv(body: str) -> dict[str, float]:
    out = {}
    for part in body.split(","):
        if not part:
            continue
        k, _, v = part.partition("=")
        if not _:
            raise ValueError(f"bad key=value pair {part!r}")
        out[k.strip()] = float(v)
    return out


def parse_distribution(spec: str, n: int, base: Path | None = None) -> SamplingDistribution:
    """Parse ``uniform``, ``step:a=2,b=2[,snap=1]`` or ``biased:@path.json``."""
    kind, _, body = spec.partition(":")
    if kind == "uniform":
        return make_uniform(n)
    if kind == "step":
        kv = _kv(body)
        if "a" not in kv or "b" not in kv:
            raise ValueError("step spec needs a= and b=")
        a, b = kv["a"], kv["b"]
        if kv.get("snap", 0):
            a, b, _ = snap_step_params(a, b, n)
        return make_step(a, b, n)
    if kind == "biased":
        probs = _load_json(body, base)
        dist = make_biased(probs)
        if dist.n != n:
            raise ValueError(f"biased vector has {dist.n} entries, expected n={n}")
        return dist
    raise ValueError(f"unknown distribution spec {spec!r}")


def parse_weights(spec: str, base: Path | None = None) -> WeightDistribution:
    """Parse ``unit``, ``exp`` or ``discrete:@path.json`` (optional ``weights:`` prefix).

    The discrete file holds ``{"values": [...], "probs": [...]}``.
    """
    if spec.startswith("weights:"):
        spec = spec[len("weights:"):]
    kind, _, body = spec.partition(":")
    if kind == "unit":
        return UNIT
    if kind == "exp":
        return EXPONENTIAL
    if kind == "discrete":
        data = _load_json(body, base)
        return WeightDistribution("discrete", tuple(data["values"]), tuple(data["probs"]),
                                  mgf_lambda=float(data.get("mgf_lambda", 1.0)))
    raise ValueError(f"unknown weight spec {spec!r}")


def mean_check(w: WeightDistribution, rng: np.random.Generator, draws: int = 1_000_000) -> float:
    """Monte-Carlo mean of ``draws`` weights; used to validate new weight families."""
    return float(w.sample_many(rng, draws).mean())


__all__ = [
    "SamplingDistribution", "WeightDistribution", "make_uniform", "make_biased",
    "make_step", "snap_step_params", "random_biased", "sample", "sample_weight",
    "parse_distribution", "parse_weights", "step_size", "UNIT", "EXPONENTIAL",
]
