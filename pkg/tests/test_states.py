import itertools
import math

import numpy as np
import pytest
from scipy.special import gammaln

from tfqkd import fock, states
from tfqkd.states import Basis, BasisChoice, CoinDecomposition


def _coh(alpha, cut):
    n = np.arange(cut + 1)
    mu = abs(alpha) ** 2
    mag = np.exp(-mu / 2 - 0.5 * gammaln(n + 1)) * (abs(alpha) ** n)
    return mag * np.exp(1j * np.angle(alpha) * n) if alpha != 0 else (n == 0).astype(complex)


def _pair_dense(basis, theta, mu, cut):
    # dense |qubit> (x) |ref> (x) |sg>, written independently of the fock module
    a = math.sqrt(mu) * np.exp(1j * theta)
    if basis == "Z":
        q0, q1 = np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)
        terms = [(q0, a), (q1, -a)]
    else:
        q0, q1 = np.array([1, 1j]) / math.sqrt(2), np.array([1, -1j]) / math.sqrt(2)
        terms = [(q1, 1j * a), (q0, -1j * a)]
    ref = _coh(a, cut)
    return sum(np.kron(q, np.kron(ref, _coh(s, cut))) for q, s in terms) / math.sqrt(2)


def _prob_xc1_dense(nA, nB, tA, tB, mu, pZ, cut):
    pY = 1 - pZ
    c0, c1 = np.array([1, 0]), np.array([0, 1])
    psi = math.sqrt(pZ) * np.kron(c0, np.kron(_pair_dense("Z", tA, mu, cut), _pair_dense("Z", tB, mu, cut)))
    psi = psi + math.sqrt(pY) * np.kron(c1, np.kron(_pair_dense("Y", tA, mu, cut), _pair_dense("Y", tB, mu, cut)))
    d = cut + 1
    psi = psi.reshape(2, 2, d, d, 2, d, d)
    r = np.arange(d)
    mA = (r[:, None] + r[None, :]) == nA
    mB = (r[:, None] + r[None, :]) == nB
    psi = psi * mA[None, None, :, :, None, None, None] * mB[None, None, None, None, None, :, :]
    norm = np.vdot(psi, psi).real
    one_x = np.array([math.sqrt(pY), -math.sqrt(pZ)])
    proj = np.tensordot(one_x.conj(), psi, axes=([0], [0]))
    return np.vdot(proj, proj).real / norm


def test_basis_phases():
    assert BasisChoice("Z", 0).phase == 0
    assert BasisChoice("Z", 1).phase == pytest.approx(math.pi)
    assert BasisChoice("Y", 0).phase == pytest.approx(1.5 * math.pi)
    assert BasisChoice("Y", 1).phase == pytest.approx(0.5 * math.pi)
    with pytest.raises(ValueError):
        BasisChoice("Z", 2)


def test_coin_decomposition():
    c = CoinDecomposition.from_basis_probs(0.5, 0.5)
    assert c.p_Z_AB == pytest.approx(0.5)
    c = CoinDecomposition.from_basis_probs(0.8, 0.8)
    assert c.p_Z_AB == pytest.approx(0.64 / 0.68)
    assert abs(np.vdot(c.zero_x, c.one_x)) < 1e-15
    with pytest.raises(ValueError):
        CoinDecomposition(0.5, 0.6)


def test_encoded_state_mu_zero():
    s = states.encoded_pair_state("Z", 0.3, 0.0, 4)
    q = (states.ZERO_Z + states.ONE_Z) / math.sqrt(2)
    want = fock.tensor_all([fock.qubit(q), fock.vacuum(4), fock.vacuum(4)])
    assert np.allclose(s.amplitudes, want.amplitudes)


@pytest.mark.parametrize("basis", ["Z", "Y"])
def test_encoded_state_normalized(basis):
    s = states.encoded_pair_state(basis, 1.1, 0.0024, 8)
    assert s.norm2 == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(s.amplitudes.ravel(), _pair_dense(basis, 1.1, 0.0024, 8))


def test_encoded_state_single_photon_block():
    # P_1 of the Z state is |0_Z>(|10>+|01>) + |1_Z>(|10>-|01>), up to a common factor
    s = states.encoded_pair_state("Z", 0.0, 0.0024, 3)
    # qubit amplitudes are stored in the X basis
    in_x = fock.number_projector(s, (0, 1), 1).amplitudes
    # |0_X> pairs with |10>, |1_X> pairs with |01>
    assert abs(in_x[0, 0, 1]) < 1e-15 and abs(in_x[1, 1, 0]) < 1e-15
    assert abs(in_x[0, 1, 0]) == pytest.approx(abs(in_x[1, 0, 1]))


def test_coin_state_norm_and_structure():
    coin = CoinDecomposition.from_p(0.5)
    s = states.coin_state(0.2, 1.3, 0.0024, coin, 6)
    assert s.norm2 == pytest.approx(1.0, abs=1e-10)
    only_z = states.coin_state(0.2, 1.3, 0.0024, CoinDecomposition.from_p(1.0), 6)
    assert fock.qubit_projector(only_z, 0, [0, 1]).norm2 == 0.0


def test_coin_state_xc1_amplitude():
    coin = CoinDecomposition.from_p(0.3)
    s = states.coin_state(0.4, 0.9, 0.01, coin, 5)
    got = fock.qubit_projector(s, 0, coin.one_x).amplitudes
    zz = fock.tensor(states.encoded_pair_state("Z", 0.4, 0.01, 5), states.encoded_pair_state("Z", 0.9, 0.01, 5))
    yy = fock.tensor(states.encoded_pair_state("Y", 0.4, 0.01, 5), states.encoded_pair_state("Y", 0.9, 0.01, 5))
    want = math.sqrt(0.3 * 0.7) * (zz.amplitudes - yy.amplitudes)
    # projector keeps the qubit axis; contract it with <1_X|
    contracted = np.tensordot(coin.one_x.conj(), got, axes=([0], [0]))
    assert np.max(np.abs(contracted - want)) < 1e-14


@pytest.mark.parametrize("n", states.LOW_PHOTON_SET)
def test_zero_bias_low_photon(n):
    assert states.prob_xc1_given_photons(*n, 0.3, 2.2, 0.0024, CoinDecomposition.from_p(0.5), 6) <= 1e-12


def test_zero_bias_invariant_grid():
    grid = 2 * math.pi * np.arange(8) / 8
    for mu, pz in itertools.product((0.0012, 0.01, 0.1), (0.25, 0.5, 0.75)):
        coin = CoinDecomposition.from_p(pz)
        for tA, tB in itertools.product(grid[::3], grid[::3]):
            for n in states.LOW_PHOTON_SET:
                v = states.prob_xc1_given_photons(*n, tA, tB, mu, coin, 3)
                assert v <= 1e-12


def test_two_photon_bias_positive_and_matches_dense_oracle():
    got = states.prob_xc1_given_photons(2, 0, 0.7, 0.7, 0.0024, CoinDecomposition.from_p(0.5), 4)
    want = _prob_xc1_dense(2, 0, 0.7, 0.7, 0.0024, 0.5, 4)
    assert got > 1e-3
    assert got == pytest.approx(want, rel=1e-10)


def test_prob_xc1_nan_when_condition_vanishes():
    v = states.prob_xc1_given_photons(1, 0, 0.0, 0.0, 0.0, CoinDecomposition.from_p(0.5), 3)
    assert math.isnan(v)


def test_low_photon_projections_match():
    assert states.low_photon_projections_match(0.7, 0.01, 6) < 1e-15


@pytest.mark.parametrize("basis,bit", [("Z", 0), ("Z", 1), ("Y", 0), ("Y", 1)])
def test_sg_state_matches_actual_preparation(basis, bit):
    ch = BasisChoice(basis, bit)
    a = states.sg_state_with_ref(ch, 0.4, 0.01, 6)
    b = states.sg_state_actual(ch, 0.4, 0.01, 6)
    assert np.max(np.abs(a - b)) < 1e-12


def test_purification_identity():
    assert states.purification_identity_check(0.0, 8) < 1e-14
    assert states.purification_identity_check(0.0024, 8, 64) < 1e-10


def test_purification_aliasing_scale():
    mu, M = 0.0024, 3
    dev = states.purification_identity_check(mu, 8, M)
    # n=3 folds onto n=0: deviation is about c_3
    c3 = math.exp(-mu / 2) * mu**1.5 / math.sqrt(6)
    assert dev == pytest.approx(c3, rel=0.05)
