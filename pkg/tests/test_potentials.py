import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from balloc.potentials import (EXP_CAP, dot_phi_j, dot_psi_j, evaluate_all,
                               exploratory_constants, gamma, layered_constants, overload,
                               phi_j, psi_j, underload)

ys = st.lists(st.floats(-30, 30), min_size=1, max_size=16).map(np.array)
EXP = exploratory_constants(2.0, 0.5, n=256)


def test_gamma_examples():
    assert gamma(np.zeros(7), 0.4) == 14
    assert gamma(np.array([1.0, -1.0]), math.log(2)) == pytest.approx(5, abs=1e-12)


def test_gamma_overflow_sentinel():
    assert gamma(np.array([EXP_CAP / 0.5 + 1, 0.0]), 0.5) == math.inf
    assert overload(np.array([-2000.0]), 1.0) == pytest.approx(0, abs=1e-300)
    assert underload(np.array([-2000.0]), 1.0) == math.inf


def test_gamma_rejects_bad_alpha():
    with pytest.raises(ValueError):
        gamma(np.zeros(2), 0)


@given(ys, st.floats(0.01, 2))
def test_gamma_lower_bound_and_symmetry(y, alpha):
    g = gamma(y, alpha)
    assert g >= 2 * y.size * (1 - 1e-12)
    assert g == pytest.approx(gamma(y[::-1], alpha), rel=1e-12)


def test_gamma_convex_along_coordinates():
    r = np.random.default_rng(0)
    h = 1e-4
    for _ in range(3):
        y = r.normal(0, 3, size=8)
        for i in range(8):
            e = np.zeros(8)
            e[i] = h
            second = gamma(y + e, 0.7) - 2 * gamma(y, 0.7) + gamma(y - e, 0.7)
            assert second >= -1e-6


def test_layered_constants_example():
    with pytest.warns(RuntimeWarning):
        cfg = layered_constants(1, 1, 1, 0.1, n=1024)
    assert cfg.C == 6
    assert cfg.v == 36
    assert cfg.z(1) == pytest.approx(1800)
    assert cfg.z(0) == 0
    assert cfg.alpha1 / cfg.alpha2 == pytest.approx(84, abs=1e-9)
    assert cfg.mode == "proof"


def test_layered_constants_schedule():
    with pytest.warns(RuntimeWarning):
        cfg = layered_constants(2, 2, 3, 0.5, n=10 ** 6)
    assert cfg.C == max(6 * 3, 6)
    assert cfg.v == max(math.log(2 * cfg.C * 2), 72)
    assert cfg.j_max == math.floor(math.log(0.5 / (2 * cfg.v) * math.log(10 ** 6), cfg.v))


def test_layered_constants_validation():
    with pytest.raises(ValueError):
        layered_constants(1, 1, 0, 0.1, 100)
    with pytest.raises(ValueError):
        layered_constants(1, 1, 1, 1.5, 100)


def test_exploratory_offsets():
    assert (EXP.z(1), EXP.z(2)) == (20, 40)
    assert EXP.phase_length == 4


def test_k_j_cap():
    assert EXP.k(1) == math.floor(256 ** (1 / 7))
    assert exploratory_constants(0.1, 0.5, n=2).k(1) == 1


def test_phi_psi_at_zero():
    y = np.zeros(5)
    assert phi_j(y, 1, EXP) == 5
    assert psi_j(y, 2, EXP) == 5


def test_phi_hand_value():
    z1 = EXP.z(1)
    y = np.array([z1 + 1, -(z1 + 1)])
    assert phi_j(y, 1, EXP) == pytest.approx(math.e + 1, abs=1e-12)


def test_dot_variants():
    assert dot_phi_j(np.full(4, 3.0), 1, EXP) == 0
    assert dot_phi_j(np.array([EXP.z(1), 0.0]), 1, EXP) == 1
    assert dot_psi_j(np.array([EXP.z(1), 0.0]), 1, EXP) == 1


def test_layer_above_j_max_rejected():
    with pytest.warns(RuntimeWarning):
        cfg = layered_constants(1, 1, 1, 0.1, n=1024)
    with pytest.raises(ValueError):
        phi_j(np.zeros(3), 1, cfg)
    with pytest.raises(ValueError):
        phi_j(np.zeros(3), -1, EXP)


@given(ys, st.integers(0, 3))
def test_layer_bounds(y, j):
    n = y.size
    phi, psi = phi_j(y, j, EXP), psi_j(y, j, EXP)
    dphi = dot_phi_j(y, j, EXP)
    assert phi >= n and psi >= n
    assert psi >= phi
    assert 0 <= dphi <= phi <= dphi + n
    assert 0 <= dot_psi_j(y, j, EXP) <= psi


@given(ys, st.integers(0, 2), st.floats(0.001, 5))
def test_phi_monotone_in_each_load(y, j, delta):
    base = phi_j(y, j, EXP)
    bumped = y.copy()
    bumped[0] += delta
    assert phi_j(bumped, j, EXP) >= base


def test_evaluate_all_keys():
    out = evaluate_all(np.zeros(3), alpha=0.5, cfg=EXP, layers=[0, 1])
    assert set(out) == {"gamma", "phi", "psi", "phi_0", "psi_0", "dot_phi_0", "dot_psi_0",
                        "phi_1", "psi_1", "dot_phi_1", "dot_psi_1"}
    assert out["gamma"] == out["phi"] + out["psi"] == 6
