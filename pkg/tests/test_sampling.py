import json
import math

import numpy as np
import pytest
from scipy import stats

from balloc.sampling import (EXPONENTIAL, UNIT, WeightDistribution, make_biased, make_step,
                             make_uniform, mean_check, parse_distribution, parse_weights,
                             random_biased, sample, sample_weight, snap_step_params, step_size)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_uniform_examples():
    assert make_uniform(4).probs.tolist() == [0.25] * 4
    assert make_uniform(1).probs.tolist() == [1.0]
    d = make_uniform(3)
    assert (d.a_bias, d.b_bias) == (1.0, 1.0)
    with pytest.raises(ValueError):
        make_uniform(0)


def test_biased_examples():
    d = make_biased([0.5, 0.5])
    assert (d.a_bias, d.b_bias) == (1.0, 1.0)
    d = make_biased([0.4, 0.2, 0.2, 0.2])
    assert d.a_bias == pytest.approx(1.25, abs=1e-12)
    assert d.b_bias == pytest.approx(1.6, abs=1e-12)
    with pytest.raises(ValueError):
        make_biased([1.0, 0.0])
    with pytest.raises(ValueError):
        make_biased([0.5, 0.5 + 2e-9])


def test_step_examples():
    d = make_step(2, 2, 12)
    assert d.probs[:4] == pytest.approx([1 / 6] * 4, abs=1e-15)
    assert d.probs[4:] == pytest.approx([1 / 24] * 8, abs=1e-15)
    assert d.probs.sum() == pytest.approx(1, abs=1e-15)
    with pytest.raises(ValueError, match="not an integer"):
        make_step(2, 2, 10)
    d = make_step(3, 3, 8)
    assert d.probs == pytest.approx([3 / 8] * 2 + [1 / 24] * 6, abs=1e-15)


def test_step_metadata_round_trip():
    for a, b, n in ((2, 2, 12), (3, 3, 8), (3, 2, 10), (2, 3, 10)):
        d = make_step(a, b, n)
        again = make_biased(d.probs)
        assert again.a_bias == pytest.approx(a, abs=1e-9)
        assert again.b_bias == pytest.approx(b, abs=1e-9)


def test_bias_bounds_hold_for_constructed_distributions():
    dists = [make_uniform(7), make_step(2, 2, 12), make_biased([0.1, 0.3, 0.6])]
    dists += [random_biased(2, 2, 12, rng(s)) for s in range(20)]
    for d in dists:
        assert d.probs.min() >= 1 / (d.a_bias * d.n) - 1e-12
        assert d.probs.max() <= d.b_bias / d.n + 1e-12


def test_random_biased_stays_in_band():
    for s in range(50):
        d = random_biased(2, 2, 12, rng(s))
        assert d.is_biased(2, 2)
        assert d.probs.sum() == pytest.approx(1, abs=1e-12)


def test_snap_step_params():
    a, b, m = snap_step_params(4, 4, 1024)
    assert (a, m) == (4, 205)
    assert step_size(a, b, 1024) == pytest.approx(205, abs=1e-9)
    make_step(a, b, 1024)
    assert snap_step_params(4, 4, 8) == (4.0, 3.25, 2)
    assert snap_step_params(2, 2, 12) == (2.0, 2.0, 4)


def test_sample_single_bin():
    r = rng()
    assert all(sample(make_uniform(1), r) == 0 for _ in range(100))


def _freq_within_4_sigma(draws, bin_, p):
    n = draws.size
    sigma = math.sqrt(p * (1 - p) / n)
    return abs((draws == bin_).mean() - p) <= 4 * sigma


def test_sample_frequencies():
    draws = make_step(2, 2, 12).sample_many(rng(1), 10 ** 6)
    assert _freq_within_4_sigma(draws, 0, 1 / 6)
    draws = make_biased([0.4, 0.6]).sample_many(rng(2), 10 ** 6)
    assert _freq_within_4_sigma(draws, 1, 0.6)


def test_scalar_sample_matches_distribution():
    d = make_biased([0.4, 0.6])
    r = rng(3)
    draws = np.array([sample(d, r) for _ in range(20000)])
    assert _freq_within_4_sigma(draws, 1, 0.6)


@pytest.mark.parametrize("dist", [make_uniform(64), make_step(2, 2, 12), make_step(3, 3, 8),
                                  make_biased(np.arange(1, 33) / np.arange(1, 33).sum())])
def test_chi_square_goodness_of_fit(dist):
    draws = dist.sample_many(rng(11), 10 ** 6)
    counts = np.bincount(draws, minlength=dist.n)
    _, pval = stats.chisquare(counts, dist.probs * draws.size)
    assert pval > 1e-4


def test_weights():
    r = rng(5)
    assert sample_weight(UNIT, r) == 1.0
    assert abs(mean_check(EXPONENTIAL, r) - 1) <= 0.01
    two_point = WeightDistribution("discrete", (0.0, 2.0), (0.5, 0.5))
    assert abs(mean_check(two_point, r) - 1) <= 0.01
    assert all(sample_weight(two_point, r) >= 0 for _ in range(100))


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightDistribution("discrete", (1.0, 3.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        WeightDistribution("exp", mgf_lambda=1.5)
    with pytest.raises(ValueError):
        WeightDistribution("pareto")


def test_spec_strings(tmp_path):
    assert parse_distribution("uniform", 5).uniform
    d = parse_distribution("step:a=2,b=2", 12)
    assert (d.a_bias, d.b_bias) == (2, 2)
    d = parse_distribution("step:a=4,b=4,snap=1", 1024)
    assert d.b_bias == pytest.approx(snap_step_params(4, 4, 1024)[1])
    (tmp_path / "p.json").write_text(json.dumps([0.25, 0.75]))
    assert parse_distribution("biased:@p.json", 2, tmp_path).probs.tolist() == [0.25, 0.75]
    with pytest.raises(ValueError):
        parse_distribution("biased:@p.json", 3, tmp_path)
    with pytest.raises(ValueError):
        parse_distribution("zipf:s=1", 3)
    (tmp_path / "w.json").write_text(json.dumps({"values": [0, 2], "probs": [0.5, 0.5]}))
    assert parse_weights("weights:discrete:@w.json", tmp_path).mean == 1.0
    assert parse_weights("exp") is EXPONENTIAL
    assert parse_weights("unit") is UNIT
