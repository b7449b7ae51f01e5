import json
import math

import numpy as np
import pytest
from scipy.stats import poisson

from tfqkd import channel, protosim
from tfqkd.channel import PhysicalParams
from tfqkd.protosim import Category

P100 = PhysicalParams(L=100)


def test_category_space():
    cats = protosim.categories(3)
    assert len(cats) == 720
    assert len(set(cats)) == 720
    for c in cats[::37]:
        assert Category.from_key(c.key()) == c
    with pytest.raises(ValueError):
        Category.from_key("T|0|0")


def test_probabilities_normalised():
    cats, probs = protosim.category_probabilities(P100)
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(probs >= 0)


def test_no_detection_without_channel():
    p = PhysicalParams(L=math.inf, p_dark=0.0)
    obs = protosim.simulate(p, 10**5, seed=1, mode="per-round")
    assert obs.total(t_E=1) == 0 and obs.total(t_E=2) == 0
    obs = protosim.simulate(p, 10**5, seed=1, mode="batched")
    assert obs.total(t_E=1) == 0 and obs.total(t_E=2) == 0


def _within(obs, exp, probs, N, k=5.0):
    # integer counts: allow one count on top of k sigma for near-empty cells
    sig = np.sqrt(N * probs * (1 - probs))
    return np.abs(obs - exp) <= k * sig + 1


def test_samplers_agree_with_expectation():
    N = 10**6
    cats, probs = protosim.category_probabilities(P100)
    exp = N * probs
    a = protosim.simulate(P100, N, seed=3, mode="per-round")
    b = protosim.simulate(P100, N, seed=4, mode="batched")
    va = np.array([a.counts[c] for c in cats])
    vb = np.array([b.counts[c] for c in cats])
    assert np.all(_within(va, exp, probs, N))
    assert np.all(_within(vb, exp, probs, N))
    assert np.all(np.abs(va - vb) <= 5 * np.sqrt(2 * N * probs * (1 - probs)) + 1)


def test_slice_fraction_of_kept_code_events():
    obs = protosim.simulate(PhysicalParams(L=0, p_dark=1e-3), 10**6, seed=5, mode="per-round")
    kept = obs.total(mode="C", t_E=1) + obs.total(mode="C", t_E=2)
    inside = obs.total(mode="C", t_E=1, in_slice=True) + obs.total(mode="C", t_E=2, in_slice=True)
    frac = inside / kept
    sigma = math.sqrt(0.125 * 0.875 / kept)
    assert abs(frac - 0.125) < 5 * sigma
    # all Code rounds, detected or not
    allc = obs.total(mode="C")
    assert abs(obs.total(mode="C", in_slice=True) / allc - 0.125) < 5 * math.sqrt(0.125 * 0.875 / allc)


def test_expected_counts_sum():
    e = protosim.expected_counts(P100, 1e9)
    assert sum(e.counts.values()) == pytest.approx(1e9, rel=1e-14)


def test_expected_sifted_count_closed_form():
    p = P100
    N = 1e12
    e = protosim.expected_counts(p, N)
    sl = e.code_slice(0, 1)
    gain = channel.code_mode_rates(p.mus[0], 1, p).gain
    want = N * p.p_mu[0] ** 2 * p.p_C * p.p_ZC * p.p_Z**2 * p.slice_fraction * gain
    assert sl.n_z == pytest.approx(want, rel=1e-9)


def test_expected_test_detection_matches_decoy_forward_model():
    p = P100
    N = 1e12
    e = protosim.expected_counts(p, N)
    mu = p.mus[0]
    got = e.total(mode="T", i=0, j=0, t_E=1)
    y = sum(poisson.pmf(a, 2 * mu) * poisson.pmf(b, 2 * mu) * channel.double_pulse_yield(a, b, p)[0]
            for a in range(8) for b in range(8))
    want = N * p.p_mu[0] ** 2 * p.p_T * y
    assert got == pytest.approx(want, rel=1e-9)


def test_determinism():
    a = protosim.simulate(P100, 10**5, seed=9, mode="per-round", workers=2)
    b = protosim.simulate(P100, 10**5, seed=9, mode="per-round", workers=2)
    assert a.counts == b.counts
    c = protosim.simulate(P100, 10**5, seed=10, mode="per-round", workers=2)
    assert a.counts != c.counts
    d = protosim.simulate(P100, 10**9, seed=9, mode="batched")
    e = protosim.simulate(P100, 10**9, seed=9, mode="batched")
    assert d.counts == e.counts


def test_worker_shards_sum_to_N():
    obs = protosim.simulate(P100, 10**5 + 3, seed=2, mode="per-round", workers=3)
    assert sum(obs.counts.values()) == 10**5 + 3


def test_json_round_trip(tmp_path):
    obs = protosim.simulate(P100, 10**5, seed=1)
    back = protosim.ObservedCounts.from_json(obs.to_json())
    assert back.counts == obs.counts
    assert back.params == obs.params
    assert back.N == obs.N


def test_json_schema_errors():
    obs = protosim.simulate(P100, 10**4, seed=1)
    doc = json.loads(obs.to_json())
    bad = dict(doc, schema="other/1")
    with pytest.raises(ValueError):
        protosim.ObservedCounts.from_json(json.dumps(bad))
    bad = dict(doc, N=doc["N"] + 5)
    with pytest.raises(ValueError):
        protosim.ObservedCounts.from_json(json.dumps(bad))
    with pytest.raises(ValueError):
        protosim.ObservedCounts.from_json("{not json")


def test_invalid_arguments():
    with pytest.raises(OverflowError):
        protosim.simulate(P100, 2**63, seed=1)
    with pytest.raises(ValueError):
        protosim.simulate(P100, 10, mode="other")


def test_code_slice_error_convention():
    s = protosim.CodeSliceCounts(10, 2, 8, 3)
    assert s.errors(1) == (2, 3)
    assert s.errors(2) == (10, 8)
    assert s.n_total == 23
