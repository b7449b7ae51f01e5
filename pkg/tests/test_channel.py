import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import poisson

from tfqkd import channel, fock
from tfqkd.channel import PhysicalParams


def test_params_derived_quantities():
    p = PhysicalParams()
    assert p.p_C == pytest.approx(1 - p.p_T)
    assert p.p_XC == pytest.approx(1 - p.p_ZC)
    assert p.slice_fraction == pytest.approx(1 / 8)
    assert p.with_(L=300).L == 300
    with pytest.raises(ValueError):
        PhysicalParams(p_mu=(0.5, 0.2, 0.2))


def test_arm_transmissivity():
    assert channel.arm_transmissivity(PhysicalParams(L=0, eta_det=1.0)) == 1.0
    p = PhysicalParams(L=500, eta_det=0.8)
    eta = channel.arm_transmissivity(p)
    assert eta == pytest.approx(0.8 * math.exp(-5), rel=1e-14)
    # quoted as 0.0053908; the exact value is 0.0053904
    assert eta == pytest.approx(0.0053908, abs=5e-7)
    assert (eta / 0.8) ** 2 == pytest.approx(channel.transmission(500, 0.2))


def test_plob_values():
    assert channel.plob_bound(50) == pytest.approx(-math.log2(1 - math.exp(-1)), rel=1e-14)
    # quoted as 0.661708; the exact value is 0.661728
    assert channel.plob_bound(50) == pytest.approx(0.661708, abs=3e-5)
    # quoted as 0.209721; the exact value is 0.209787
    assert channel.plob_bound(100) == pytest.approx(-math.log2(1 - math.exp(-2)), rel=1e-14)
    assert channel.plob_bound(100) == pytest.approx(0.209721, abs=1e-4)
    with pytest.raises(ValueError):
        channel.plob_bound(0)


def test_plob_slope():
    L = np.linspace(400, 600, 41)
    y = np.log10([channel.plob_bound(x) for x in L])
    slope = np.polyfit(L, y, 1)[0]
    assert -0.0090 <= slope <= -0.0085


def test_decibel_convention():
    assert channel.transmission(10, 0.2, "decibel") == pytest.approx(10 ** -0.2)
    with pytest.raises(ValueError):
        channel.transmission(10, 0.2, "bogus")


def test_click_stats_interference_extremes():
    p = PhysicalParams(L=10, p_dark=0.0)
    s = channel.click_stats(0.0, 0.01, 0.01, p)
    assert s.p_t2 == 0.0
    s = channel.click_stats(math.pi, 0.01, 0.01, p)
    assert s.p_t1 == pytest.approx(0.0, abs=1e-18)
    s = channel.click_stats(0.3, 0.01, 0.02, p)
    assert s.p_t1 + s.p_t2 + s.p_none == pytest.approx(1.0)


def _fock_click_oracle(phi, mu_A, mu_B, eta, p_dark, cut=6):
    a = fock.coherent(math.sqrt(mu_A), cut)
    b = fock.coherent(math.sqrt(mu_B) * np.exp(-1j * phi), cut)
    s = fock.tensor(a, b)
    s = fock.loss_channel(s, 0, eta)
    s = fock.loss_channel(s, 1, eta)
    s = fock.beam_splitter(s, 0, 1)
    dist = fock.mode_occupation_distribution(s, [0, 1])
    m = np.arange(cut + 1)
    q1 = np.where(m > 0, 1.0, p_dark)[:, None] * np.ones_like(dist)
    q2 = np.where(m > 0, 1.0, p_dark)[None, :] * np.ones_like(dist)
    t1 = (dist * (q1 * (1 - q2) + 0.5 * q1 * q2)).sum()
    t2 = (dist * (q2 * (1 - q1) + 0.5 * q1 * q2)).sum()
    return t1, t2


@pytest.mark.parametrize("phi", [0.0, 0.4, 2.0])
def test_click_stats_against_fock_oracle(phi):
    p = PhysicalParams(L=500, p_dark=1e-6)
    eta = channel.arm_transmissivity(p)
    s = channel.click_stats(phi, 0.0012, 0.0012, p)
    t1, t2 = _fock_click_oracle(phi, 0.0012, 0.0012, eta, p.p_dark)
    assert s.p_t1 == pytest.approx(t1, abs=1e-10)
    assert s.p_t2 == pytest.approx(t2, abs=1e-10)


def test_phi_zero_closed_form():
    p = PhysicalParams(L=500, p_dark=0.0)
    eta = channel.arm_transmissivity(p)
    s = channel.click_stats(0.0, 0.0012, 0.0012, p)
    assert s.p_t1 == pytest.approx(1 - math.exp(-2 * 0.0012 * eta), rel=1e-12)


def test_test_mode_detection_phase_average():
    p = PhysicalParams(L=120, p_dark=1e-5)
    got = channel.test_mode_detection(0.1, 0.01, p)[0]
    want = quad(lambda ph: channel.click_stats(ph, 0.1, 0.01, p).p_t1, 0, 2 * math.pi)[0] / (2 * math.pi)
    assert got == pytest.approx(want, rel=1e-10)


def test_code_rates_limits():
    p = PhysicalParams(L=100, p_dark=0.0, delta=1e-8)
    assert channel.code_mode_rates(0.0012, 1, p).e_Z == pytest.approx(0.0, abs=1e-12)
    p = PhysicalParams(L=100, p_dark=1e-3)
    assert channel.code_mode_rates(1e-12, 1, p).e_Z == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("t_E", [1, 2])
def test_code_rates_quadrature_oracle(t_E):
    p = PhysicalParams(L=500)
    r = channel.code_mode_rates(0.0012, t_E, p)
    fine = channel.code_mode_rates(0.0012, t_E, p, points=1281)
    assert r.e_Z == pytest.approx(fine.e_Z, abs=1e-8)
    d = p.delta
    idx = t_E - 1

    def avg(shift):
        f = lambda th: channel.click_stats(th + shift, 0.0012, 0.0012, p)[idx]
        return quad(f, -d / 2, d / 2, epsabs=0, epsrel=1e-12)[0] / d

    same, diff = avg(0.0), avg(math.pi)
    err = diff if t_E == 1 else same
    assert r.e_Z == pytest.approx(err / (same + diff), abs=1e-8)
    assert r.e_Y == r.e_Z


def test_code_rates_symmetric_in_t_E():
    p = PhysicalParams(L=300)
    a, b = channel.code_mode_rates(0.0012, 1, p), channel.code_mode_rates(0.0012, 2, p)
    assert a.gain == pytest.approx(b.gain, rel=1e-12)
    assert a.e_Z == pytest.approx(b.e_Z, rel=1e-9)


def test_fock_yield_vacuum_and_single_photon():
    p = PhysicalParams(L=100, p_dark=1e-6)
    y = sum(channel.fock_yield(0, 0, p))
    assert y == pytest.approx(2 * p.p_dark - p.p_dark**2, rel=1e-12)
    assert sum(channel.fock_yield(0, 0, p.with_(p_dark=0.0))) == 0.0
    eta = channel.arm_transmissivity(p)
    y1, y2 = channel.fock_yield(1, 0, p)
    assert y1 == pytest.approx(y2, rel=1e-9)
    assert y1 + y2 == pytest.approx(eta + 2 * p.p_dark * (1 - eta), rel=1e-6)


@pytest.mark.parametrize("mu_A,mu_B", [(0.0012, 0.0012), (0.005, 0.001), (0.0, 0.003)])
def test_coherent_fock_consistency(mu_A, mu_B):
    p = PhysicalParams(L=200)
    want = channel.test_mode_detection(mu_A, mu_B, p)
    got = [0.0, 0.0]
    for kA in range(6):
        for kB in range(6):
            w = poisson.pmf(kA, mu_A) * poisson.pmf(kB, mu_B)
            y = channel.fock_yield(kA, kB, p)
            got[0] += w * y[0]
            got[1] += w * y[1]
    assert got[0] == pytest.approx(want[0], abs=1e-8 * max(want[0], 1e-12) + 1e-18)
    assert got[1] == pytest.approx(want[1], rel=1e-8)


def test_double_pulse_yield_is_sum_over_sg_split():
    p = PhysicalParams(L=50)
    y = channel.double_pulse_yield(1, 0, p)
    y10, y00 = channel.fock_yield(1, 0, p), channel.fock_yield(0, 0, p)
    assert y[0] == pytest.approx(0.5 * (y10[0] + y00[0]))


def test_fock_yield_and_bias_low_photon_zero_bias():
    p = PhysicalParams(L=100)
    for n in [(0, 0), (1, 0), (0, 1), (1, 1)]:
        r = channel.fock_yield_and_bias(*n, p)
        assert r.xc1_t1 <= 1e-14 and r.xc1_t2 <= 1e-14
        assert r.yield_t1 == pytest.approx(channel.double_pulse_yield(*n, p)[0], rel=1e-9)
    r = channel.fock_yield_and_bias(2, 0, p)
    assert r.xc1_t1 > 0
    with pytest.raises(ValueError):
        channel.fock_yield_and_bias(5, 5, p)


def test_multiphoton_detection_small():
    p = PhysicalParams(L=100)
    m = channel.multiphoton_detection(0.0012, 1, p)
    tot = channel.test_mode_detection(0.0012, 0.0012, p)[0]
    assert 0 < m < 0.02 * tot
