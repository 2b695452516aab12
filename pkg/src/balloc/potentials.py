"""Potential functions evaluated on normalized load vectors.

All functions take the normalized loads ``y`` (any order) and return a
float. Any exponent above ``EXP_CAP`` yields ``inf`` instead of a silently
saturated value.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

EXP_CAP = 700.0
ALPHA_RATIO = 84.0  # alpha1 = 6 * 14 * alpha2


def _expsum(z: np.ndarray) -> float:
    if z.size and z.max() > EXP_CAP:
        return math.inf
    return float(np.exp(z).sum())


def gamma(y, alpha: float) -> float:
    """Hyperbolic cosine potential: sum of exp(alpha*y_i) + exp(-alpha*y_i)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    y = np.asarray(y, dtype=np.float64)
    return _expsum(alpha * y) + _expsum(-alpha * y)


def overload(y, alpha: float) -> float:
    return _expsum(alpha * np.asarray(y, dtype=np.float64))


def underload(y, alpha: float) -> float:
    return _expsum(-alpha * np.asarray(y, dtype=np.float64))


@dataclass(frozen=True)
class PotentialConfig:
    """Smoothing parameters and offsets for the layered potentials.

    ``mode`` is ``"proof"`` for the proof schedule or ``"exploratory"`` for
    small user-chosen v and alpha2. ``j_max`` is None when unbounded.
    """

    alpha2: float
    v: float
    C: float = 6.0
    c: float = 1.0
    b: float = 1.0
    n: int | None = None
    j_max: int | None = None
    alpha: float | None = None
    mode: str = "exploratory"

    def __post_init__(self):
        if not 0 < self.alpha2 < 1:
            raise ValueError("alpha2 must lie in (0, 1)")
        if self.v <= 0:
            raise ValueError("v must be positive")

    @property
    def alpha1(self) -> float:
        return ALPHA_RATIO * self.alpha2

    def z(self, j: int) -> float:
        return 5.0 * self.v / self.alpha2 * j

    def k(self, j: int) -> int:
        """Phase budget e^{v^{j+1}} log^3 n, capped at floor(n^{1/7}) and at least 1."""
        if self.n is None:
            raise ValueError("k_j needs n")
        cap = math.floor(self.n ** (1.0 / 7.0) + 1e-12)
        expo = self.v ** (j + 1)
        raw = math.inf if expo > EXP_CAP else math.exp(expo) * math.log(self.n) ** 3
        return max(1, int(min(raw, cap)))

    @property
    def phase_length(self) -> int:
        return math.ceil(self.v / self.alpha2 - 1e-12)

    def as_dict(self) -> dict:
        return {"mode": self.mode, "alpha2": self.alpha2, "alpha1": self.alpha1, "v": self.v,
                "C": self.C, "c": self.c, "b": self.b, "n": self.n, "j_max": self.j_max}


def layered_constants(a: float, b: float, c: float, alpha2: float, n: int) -> PotentialConfig:
    """The proof schedule: C = max(6c, 6), v = max(ln(2Cb), 36b),
    j_max = floor(log_v(alpha2/(2v) * ln n)).

    Warns (and stores the value anyway) when j_max < 1, i.e. when n is far
    too small for the schedule to have any layer.
    """
    if a < 1 or b < 1:
        raise ValueError("need a, b >= 1")
    if c <= 0:
        raise ValueError("c must be positive")
    if not 0 < alpha2 < 1:
        raise ValueError("alpha2 must lie in (0, 1)")
    C = max(6.0 * c, 6.0)
    v = max(math.log(2.0 * C * b), 36.0 * b)
    inner = alpha2 / (2.0 * v) * math.log(n) if n > 1 else 0.0
    j_max = math.floor(math.log(inner) / math.log(v)) if inner > 0 else -1
    if j_max < 1:
        warnings.warn(f"j_max = {j_max} < 1: n = {n} is too small for the layered schedule; "
                      "use exploratory constants", RuntimeWarning, stacklevel=2)
    return PotentialConfig(alpha2=alpha2, v=v, C=C, c=c, b=b, n=n, j_max=j_max, mode="proof")


def exploratory_constants(v: float, alpha2: float, n: int | None = None, c: float = 1.0,
                          b: float = 1.0, alpha: float | None = None) -> PotentialConfig:
    return PotentialConfig(alpha2=alpha2, v=v, C=max(6.0 * c, 6.0), c=c, b=b, n=n,
                           j_max=None, alpha=alpha, mode="exploratory")


def _check_layer(j: int, cfg: PotentialConfig) -> None:
    if j < 0:
        raise ValueError("layer index must be >= 0")
    if cfg.j_max is not None and j > cfg.j_max:
        raise ValueError(f"layer {j} exceeds j_max = {cfg.j_max}")


def _layer(y, j: int, cfg: PotentialConfig, smoothing: float, partial: bool) -> float:
    _check_layer(j, cfg)
    y = np.asarray(y, dtype=np.float64)
    excess = y - cfg.z(j)
    if partial:
        excess = excess[excess >= 0]
    else:
        excess = np.maximum(excess, 0.0)
    return _expsum(smoothing * cfg.v ** j * excess)


def phi_j(y, j: int, cfg: PotentialConfig) -> float:
    return _layer(y, j, cfg, cfg.alpha2, partial=False)


def psi_j(y, j: int, cfg: PotentialConfig) -> float:
    return _layer(y, j, cfg, cfg.alpha1, partial=False)


def dot_phi_j(y, j: int, cfg: PotentialConfig) -> float:
    """Like :func:`phi_j` but summing only bins with y_i >= z_j (may be 0)."""
    return _layer(y, j, cfg, cfg.alpha2, partial=True)


def dot_psi_j(y, j: int, cfg: PotentialConfig) -> float:
    return _layer(y, j, cfg, cfg.alpha1, partial=True)


def evaluate_all(y, alpha: float | None = None, cfg: PotentialConfig | None = None,
                 layers=()) -> dict:
    """Every potential the CLI reports, keyed by name."""
    out = {}
    if alpha is not None:
        out["gamma"] = gamma(y, alpha)
        out["phi"] = overload(y, alpha)
        out["psi"] = underload(y, alpha)
    if cfg is not None:
        for j in layers:
            out[f"phi_{j}"] = phi_j(y, j, cfg)
            out[f"psi_{j}"] = psi_j(y, j, cfg)
            out[f"dot_phi_{j}"] = dot_phi_j(y, j, cfg)
            out[f"dot_psi_{j}"] = dot_psi_j(y, j, cfg)
    return out
