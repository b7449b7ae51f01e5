"""Honest-relay channel model: threshold detectors behind a 50:50 beam splitter.

Each party sits L/2 from the relay.  Detector efficiency is folded into the
per-arm transmissivity.  Detector D1 sits on the (a+b)/sqrt2 output port and
D2 on (a-b)/sqrt2, so equal phases light D1 (t_E = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson
from scipy.special import i0e
from scipy.stats import binom, poisson

from . import fock, states

ATTENUATION_CONVENTIONS = ("natural", "decibel")
SLICE_POINTS = 129


@dataclass(frozen=True)
class PhysicalParams:
    alpha: float = 0.2
    L: float = 0.0
    eta_det: float = 0.8
    p_dark: float = 1e-11
    delta: float = 2 * math.pi / 8
    # selection probabilities are not fixed by the protocol; these values
    # were tuned for the finite-size bounds at L = 100 km
    mus: tuple[float, ...] = (0.0012, 0.01, 0.1)
    p_mu: tuple[float, ...] = (0.95, 0.025, 0.025)
    p_T: float = 0.4
    p_ZC: float = 0.6
    p_Z: float = 0.5
    f_EC: float = 1.1
    misalignment: float = 0.0
    attenuation: str = "natural"

    def __post_init__(self):
        object.__setattr__(self, "mus", tuple(float(m) for m in self.mus))
        object.__setattr__(self, "p_mu", tuple(float(p) for p in self.p_mu))
        if self.alpha < 0 or self.L < 0:
            raise ValueError("alpha and L must be non-negative")
        for name in ("eta_det", "p_dark", "p_T", "p_ZC", "p_Z", "misalignment"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.delta <= 2 * math.pi:
            raise ValueError("delta must lie in (0, 2pi]")
        if len(self.mus) != len(self.p_mu) or not self.mus:
            raise ValueError("mus and p_mu must be non-empty and the same length")
        if any(m < 0 for m in self.mus) or any(p < 0 for p in self.p_mu):
            raise ValueError("intensities and their probabilities must be non-negative")
        if len(set(self.mus)) != len(self.mus):
            raise ValueError("intensities must be distinct")
        if abs(sum(self.p_mu) - 1.0) > 1e-9:
            raise ValueError("intensity probabilities must sum to 1")
        if self.f_EC < 1.0:
            raise ValueError("f_EC must be >= 1")
        if self.attenuation not in ATTENUATION_CONVENTIONS:
            raise ValueError(f"attenuation must be one of {ATTENUATION_CONVENTIONS}")

    @property
    def p_C(self) -> float:
        return 1.0 - self.p_T

    @property
    def p_XC(self) -> float:
        return 1.0 - self.p_ZC

    @property
    def p_Y(self) -> float:
        return 1.0 - self.p_Z

    @property
    def p_basis_match(self) -> float:
        return self.p_Z**2 + self.p_Y**2

    @property
    def slice_fraction(self) -> float:
        return self.delta / (2 * math.pi)

    def with_(self, **kw) -> "PhysicalParams":
        return replace(self, **kw)

    def p_of(self, mu: float) -> float:
        return self.p_mu[self.mus.index(mu)]


def transmission(L: float, alpha: float, convention: str = "natural") -> float:
    """Fiber transmission over length L: e^{-aL/10} or 10^{-aL/10}."""
    x = alpha * L / 10.0
    if convention == "natural":
        return math.exp(-x)
    if convention == "decibel":
        return 10.0 ** (-x)
    raise ValueError(f"unknown attenuation convention {convention!r}")


def arm_transmissivity(params: PhysicalParams) -> float:
    """eta_det times the transmission of one L/2 arm."""
    return params.eta_det * transmission(params.L / 2.0, params.alpha, params.attenuation)


def plob_bound(L: float, alpha: float = 0.2, convention: str = "natural") -> float:
    """Repeaterless capacity -log2(1 - eta) in bits per channel use."""
    if L <= 0:
        raise ValueError("PLOB bound diverges for L <= 0")
    eta = transmission(L, alpha, convention)
    return -math.log1p(-eta) / math.log(2.0)


class ClickStats(NamedTuple):
    p_t1: float
    p_t2: float
    p_none: float
    mean_d1: float
    mean_d2: float
    p_double: float


def _announce(q1, q2):
    p_double = q1 * q2
    p_t1 = q1 * (1 - q2) + 0.5 * p_double
    p_t2 = q2 * (1 - q1) + 0.5 * p_double
    return p_t1, p_t2, (1 - q1) * (1 - q2), p_double


def detector_means(phi, mu_A, mu_B, eta, misalignment=0.0):
    vis = 1.0 - 2.0 * misalignment
    cross = 2.0 * vis * np.sqrt(mu_A * mu_B) * np.cos(phi)
    n1 = 0.5 * eta * (mu_A + mu_B + cross)
    n2 = 0.5 * eta * (mu_A + mu_B - cross)
    return np.maximum(n1, 0.0), np.maximum(n2, 0.0)


def click_probs(phi, mu_A, mu_B, params: PhysicalParams, eta: float | None = None):
    """Vectorised (p_t1, p_t2) over an array of relative phases."""
    eta = arm_transmissivity(params) if eta is None else eta
    n1, n2 = detector_means(phi, mu_A, mu_B, eta, params.misalignment)
    keep = 1.0 - params.p_dark
    q1 = 1.0 - keep * np.exp(-n1)
    q2 = 1.0 - keep * np.exp(-n2)
    p_t1, p_t2, _, _ = _announce(q1, q2)
    return p_t1, p_t2


def click_stats(phi: float, mu_A: float, mu_B: float, params: PhysicalParams) -> ClickStats:
    """Announcement probabilities for coherent inputs with relative phase phi."""
    if mu_A < 0 or mu_B < 0:
        raise ValueError("intensities must be non-negative")
    eta = arm_transmissivity(params)
    n1, n2 = detector_means(phi, mu_A, mu_B, eta, params.misalignment)
    keep = 1.0 - params.p_dark
    q1 = 1.0 - keep * math.exp(-n1)
    q2 = 1.0 - keep * math.exp(-n2)
    p_t1, p_t2, p_none, p_double = _announce(q1, q2)
    return ClickStats(float(p_t1), float(p_t2), float(p_none), float(n1), float(n2), float(p_double))


def test_mode_detection(mu_A: float, mu_B: float, params: PhysicalParams) -> tuple[float, float]:
    """(p_t1, p_t2) averaged over a uniformly random relative phase.

    With n1 = s + x cos(phi): E[e^{-n1}] = e^{-s} I0(x), and n1 + n2 = 2s is
    phase independent, which gives the double-click term in closed form.
    """
    eta = arm_transmissivity(params)
    vis = 1.0 - 2.0 * params.misalignment
    s = 0.5 * eta * (mu_A + mu_B)
    x = eta * vis * math.sqrt(mu_A * mu_B)
    keep = 1.0 - params.p_dark
    e_single = math.exp(x - s) * i0e(x) if x > 0 else math.exp(-s)
    eq1 = 1.0 - keep * e_single
    eq12 = 1.0 - 2.0 * keep * e_single + keep**2 * math.exp(-2.0 * s)
    p = eq1 - 0.5 * eq12
    return p, p


class CodeRates(NamedTuple):
    gain: float  # P(t_E | slice), averaged over bits, per pulse pair
    e_Z: float
    e_Y: float
    p_error: float  # P(error, t_E | slice)


def _slice_grid(delta: float, points: int = SLICE_POINTS) -> np.ndarray:
    return np.linspace(-delta / 2.0, delta / 2.0, points)


def slice_average(f, delta: float, points: int = SLICE_POINTS) -> float:
    grid = _slice_grid(delta, points)
    return float(simpson(f(grid), x=grid) / delta)


def code_mode_rates(mu: float, t_E: int, params: PhysicalParams, points: int = SLICE_POINTS) -> CodeRates:
    """Gain and error rates inside the phase slice for mu_A = mu_B = mu.

    The relative phase is theta + k pi with theta uniform in the slice and k
    the bit parity.  For t_E = 1 an error is a bit disagreement; for t_E = 2
    Alice flips her bit, so an error is an agreement.  Under this model the
    Y-basis phase differences obey the same parity rule, so e_Y = e_Z.
    """
    if t_E not in (1, 2):
        raise ValueError("t_E must be 1 or 2")
    idx = t_E - 1

    def p_same(th):
        return click_probs(th, mu, mu, params)[idx]

    def p_diff(th):
        return click_probs(th + math.pi, mu, mu, params)[idx]

    same = slice_average(p_same, params.delta, points)
    diff = slice_average(p_diff, params.delta, points)
    gain = 0.5 * (same + diff)
    p_err = 0.5 * (diff if t_E == 1 else same)
    e = p_err / gain if gain > 0 else 0.5
    return CodeRates(gain, e, e, p_err)


# ---------------------------------------------------------------------------
# Fock-input yields


def _click_announce_from_occupations(dist: np.ndarray, p_dark: float) -> tuple[float, float]:
    m1 = np.arange(dist.shape[0])[:, None]
    m2 = np.arange(dist.shape[1])[None, :]
    q1 = np.where(m1 > 0, 1.0, p_dark) * np.ones_like(dist)
    q2 = np.where(m2 > 0, 1.0, p_dark) * np.ones_like(dist)
    p_t1, p_t2, _, _ = _announce(q1, q2)
    return float((dist * p_t1).sum()), float((dist * p_t2).sum())


@lru_cache(maxsize=4096)
def _fock_yield_cached(k_A: int, k_B: int, eta: float, p_dark: float) -> tuple[float, float]:
    cut = k_A + k_B
    state = fock.tensor(fock.fock_state(k_A, cut), fock.fock_state(k_B, cut))
    state = fock.loss_channel(state, 0, eta)
    state = fock.loss_channel(state, 1, eta)
    state = fock.beam_splitter(state, 0, 1)
    dist = fock.mode_occupation_distribution(state, [0, 1])
    return _click_announce_from_occupations(dist, p_dark)


def fock_yield(k_A: int, k_B: int, params: PhysicalParams) -> tuple[float, float]:
    """(Y_t1, Y_t2) for number states of k_A and k_B photons in the sg pulses.

    Computed in Fock space: loss to a vacuum ancilla, 50:50 beam splitter,
    threshold clicks with dark counts.
    """
    if k_A < 0 or k_B < 0:
        raise ValueError("photon numbers must be non-negative")
    return _fock_yield_cached(int(k_A), int(k_B), arm_transmissivity(params), params.p_dark)


def double_pulse_yield(n_A: int, n_B: int, params: PhysicalParams) -> tuple[float, float]:
    """Yields for n_A, n_B photons in (ref + sg); sg receives Binomial(n, 1/2)."""
    y1 = y2 = 0.0
    for kA in range(n_A + 1):
        wA = binom.pmf(kA, n_A, 0.5)
        for kB in range(n_B + 1):
            w = wA * binom.pmf(kB, n_B, 0.5)
            a, b = fock_yield(kA, kB, params)
            y1 += w * a
            y2 += w * b
    return float(y1), float(y2)


class FockYieldBias(NamedTuple):
    yield_t1: float
    yield_t2: float
    xc1_t1: float  # P(X_C = 1, t_E = 1 | n_A, n_B)
    xc1_t2: float


def fock_yield_and_bias(
    n_A: int, n_B: int, params: PhysicalParams, coin: states.CoinDecomposition | None = None, cutoff: int = 8
) -> FockYieldBias:
    """Detection and X_C = 1 statistics for (ref + sg) photon numbers (n_A, n_B).

    Projects the coin state onto the photon numbers, sends the sg modes through
    loss and the beam splitter, and evaluates the click POVM with and without
    an X_C = 1 projection on the coin.
    """
    if n_A + n_B > cutoff:
        raise ValueError(f"n_A + n_B = {n_A + n_B} exceeds cutoff {cutoff}")
    if coin is None:
        coin = states.CoinDecomposition.from_basis_probs(params.p_Z, params.p_Z)
    cut = max(n_A + n_B, 1)
    # the projected shape does not depend on mu or the phases; any mu > 0 works
    psi = states.coin_state(0.0, 0.0, 0.5, coin, cut)
    psi = states.project_photon_numbers(psi, n_A, n_B)
    psi = (1.0 / math.sqrt(psi.norm2)) * psi
    eta = arm_transmissivity(params)
    psi = fock.loss_channel(psi, states.SG_A, eta)
    psi = fock.loss_channel(psi, states.SG_B, eta)
    psi = fock.beam_splitter(psi, states.SG_A, states.SG_B)
    det = [states.SG_A, states.SG_B]
    y1, y2 = _click_announce_from_occupations(fock.mode_occupation_distribution(psi, det), params.p_dark)
    x1 = fock.qubit_projector(psi, states.QUBIT_C, coin.one_x)
    b1, b2 = _click_announce_from_occupations(fock.mode_occupation_distribution(x1, det), params.p_dark)
    return FockYieldBias(y1, y2, b1, b2)


def multiphoton_detection(mu: float, t_E: int, params: PhysicalParams) -> float:
    """P(t_E and (n_A, n_B) outside the low-photon set) in the Test mode at mu_A = mu_B = mu."""
    total = test_mode_detection(mu, mu, params)[t_E - 1]
    low = 0.0
    for nA, nB in states.LOW_PHOTON_SET:
        q = poisson.pmf(nA, 2 * mu) * poisson.pmf(nB, 2 * mu)
        low += q * double_pulse_yield(nA, nB, params)[t_E - 1]
    return max(total - low, 0.0)
