"""Protocol and fictitious-protocol states, plus numerical identity checks.

Qubit conventions for the registers A and B: the computational basis is the
X basis, |0_X> = e0 and |1_X> = e1, and

    |0_Z> = (|0_X> + |1_X>)/sqrt2        |1_Z> = (|0_X> - |1_X>)/sqrt2
    |0_Y> = (|0_X> + i|1_X>)/sqrt2       |1_Y> = (|0_X> - i|1_X>)/sqrt2

For the coin C the computational basis is Z_C, and the X_C basis is

    |0_X>_C = sqrt(pZ)|0_Z> + sqrt(pY)|1_Z>
    |1_X>_C = sqrt(pY)|0_Z> - sqrt(pZ)|1_Z>

with pZ = p_Z^(AB), pY = p_Y^(AB).  Each party owns a double pulse
(ref, sg); both carry the same coherent amplitude magnitude.  Every phase,
including the global phase theta, is placed inside the coherent amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from . import fock
from .fock import FockVector

SQ2 = math.sqrt(2.0)
ZERO_X = np.array([1.0, 0.0], dtype=complex)
ONE_X = np.array([0.0, 1.0], dtype=complex)
ZERO_Z = np.array([1.0, 1.0], dtype=complex) / SQ2
ONE_Z = np.array([1.0, -1.0], dtype=complex) / SQ2
ZERO_Y = np.array([1.0, 1.0j], dtype=complex) / SQ2
ONE_Y = np.array([1.0, -1.0j], dtype=complex) / SQ2

BASIS_VECTORS = {"Z": (ZERO_Z, ONE_Z), "Y": (ZERO_Y, ONE_Y), "X": (ZERO_X, ONE_X)}

UNDEFINED = float("nan")
_COND_FLOOR = 1e-15

LOW_PHOTON_SET = ((0, 0), (1, 0), (0, 1), (1, 1))


class Basis(str, Enum):
    Z = "Z"
    Y = "Y"


@dataclass(frozen=True)
class BasisChoice:
    """One party's basis and bit; ``phase`` is the encoding offset delta."""

    basis: Basis
    bit: int

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")

    @property
    def phase(self) -> float:
        if self.basis is Basis.Z:
            return self.bit * math.pi
        return 1.5 * math.pi - self.bit * math.pi


@dataclass(frozen=True)
class CoinDecomposition:
    p_Z_AB: float
    p_Y_AB: float

    def __post_init__(self):
        if not (0.0 <= self.p_Z_AB <= 1.0 and 0.0 <= self.p_Y_AB <= 1.0):
            raise ValueError("coin probabilities must lie in [0, 1]")
        if abs(self.p_Z_AB + self.p_Y_AB - 1.0) > 1e-12:
            raise ValueError("p_Z_AB + p_Y_AB must equal 1")

    @classmethod
    def from_p(cls, p_Z_AB: float) -> "CoinDecomposition":
        return cls(p_Z_AB, 1.0 - p_Z_AB)

    @classmethod
    def from_basis_probs(cls, p_ZA: float, p_ZB: float) -> "CoinDecomposition":
        zz = p_ZA * p_ZB
        yy = (1.0 - p_ZA) * (1.0 - p_ZB)
        if zz + yy == 0.0:
            raise ValueError("bases never coincide")
        return cls(zz / (zz + yy), yy / (zz + yy))

    @property
    def zero_x(self) -> np.ndarray:
        return np.array([math.sqrt(self.p_Z_AB), math.sqrt(self.p_Y_AB)], dtype=complex)

    @property
    def one_x(self) -> np.ndarray:
        return np.array([math.sqrt(self.p_Y_AB), -math.sqrt(self.p_Z_AB)], dtype=complex)


def _amp(theta: float, mu: float, extra_phase: float = 0.0) -> complex:
    return complex(math.sqrt(mu) * np.exp(1j * (theta + extra_phase)))


def encoded_pair_state(basis: Basis | str, theta: float, mu: float, cutoff: int = 8) -> FockVector:
    """Qubit (A or B) entangled with the (ref, sg) double pulse.

    Z: (|0_Z>|a>|a> + |1_Z>|a>|-a>)/sqrt2
    Y: (|1_Y>|a>|ia> + |0_Y>|a>|-ia>)/sqrt2,   a = e^{i theta} sqrt(mu)
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    basis = Basis(basis)
    ref = fock.coherent(_amp(theta, mu), cutoff)
    terms = []
    for bit in (0, 1):
        choice = BasisChoice(basis, bit)
        q = fock.qubit(BASIS_VECTORS[basis.value][bit])
        sg = fock.coherent(_amp(theta, mu, choice.phase), cutoff)
        terms.append(fock.tensor_all([q, ref, sg]))
    return (1.0 / SQ2) * (terms[0] + terms[1])


def coin_state(
    theta_A: float,
    theta_B: float,
    mu: float,
    coin: CoinDecomposition,
    cutoff: int = 8,
    mu_B: float | None = None,
) -> FockVector:
    """The C'=0 branch: sqrt(pZ)|0_Z>_C Psi_Z Psi_Z + sqrt(pY)|1_Z>_C Psi_Y Psi_Y.

    Qubits are ordered (C, A, B); modes are (refA, sgA, refB, sgB).
    """
    mu_B = mu if mu_B is None else mu_B
    out = None
    for c_bit, basis, weight in ((0, Basis.Z, coin.p_Z_AB), (1, Basis.Y, coin.p_Y_AB)):
        if weight == 0.0:
            continue
        c_vec = np.zeros(2, dtype=complex)
        c_vec[c_bit] = 1.0
        branch = fock.tensor_all(
            [
                fock.qubit(c_vec),
                encoded_pair_state(basis, theta_A, mu, cutoff),
                encoded_pair_state(basis, theta_B, mu_B, cutoff),
            ]
        )
        branch = math.sqrt(weight) * branch
        out = branch if out is None else out + branch
    return out


def full_coin_state(
    theta_A: float, theta_B: float, mu: float, p_ZA: float, p_ZB: float, cutoff: int = 8
) -> FockVector:
    """Both C' branches with qubits ordered (C', C, A, B).

    Only the C'=0 branch enters any estimate; this exists so the mismatched
    branch can be inspected.
    """
    p_YA, p_YB = 1.0 - p_ZA, 1.0 - p_ZB
    weights = {
        (0, 0, Basis.Z, Basis.Z): p_ZA * p_ZB,
        (0, 1, Basis.Y, Basis.Y): p_YA * p_YB,
        (1, 0, Basis.Z, Basis.Y): p_ZA * p_YB,
        (1, 1, Basis.Y, Basis.Z): p_YA * p_ZB,
    }
    out = None
    for (cp, c, ba, bb), w in weights.items():
        if w == 0.0:
            continue
        cp_vec = np.eye(2, dtype=complex)[cp]
        c_vec = np.eye(2, dtype=complex)[c]
        term = fock.tensor_all(
            [
                fock.qubit(cp_vec),
                fock.qubit(c_vec),
                encoded_pair_state(ba, theta_A, mu, cutoff),
                encoded_pair_state(bb, theta_B, mu, cutoff),
            ]
        )
        term = math.sqrt(w) * term
        out = term if out is None else out + term
    return out


# mode indices inside coin_state
REF_A, SG_A, REF_B, SG_B = 0, 1, 2, 3
QUBIT_C, QUBIT_A, QUBIT_B = 0, 1, 2


def project_photon_numbers(state: FockVector, n_A: int, n_B: int) -> FockVector:
    """Project Alice's (ref+sg) onto n_A photons and Bob's onto n_B."""
    out = fock.number_projector(state, (REF_A, SG_A), n_A)
    return fock.number_projector(out, (REF_B, SG_B), n_B)


def prob_xc1_given_photons(
    n_A: int,
    n_B: int,
    theta_A: float,
    theta_B: float,
    mu: float,
    coin: CoinDecomposition,
    cutoff: int = 8,
) -> float:
    """P(X_C = 1 | n_A, n_B) for the C'=0 coin state; NaN if the condition has ~0 weight."""
    if n_A > 2 * cutoff or n_B > 2 * cutoff:
        raise ValueError("photon number exceeds the representable range")
    psi = project_photon_numbers(coin_state(theta_A, theta_B, mu, coin, cutoff), n_A, n_B)
    p_cond = psi.norm2
    if p_cond < _COND_FLOOR:
        return UNDEFINED
    return fock.qubit_projector(psi, QUBIT_C, coin.one_x).norm2 / p_cond


def low_photon_projections_match(theta: float, mu: float, cutoff: int = 8) -> float:
    """max |P_n Psi_Z - P_n Psi_Y| over n in {0, 1}, (ref+sg) photon number."""
    psi_z = encoded_pair_state(Basis.Z, theta, mu, cutoff)
    psi_y = encoded_pair_state(Basis.Y, theta, mu, cutoff)
    dev = 0.0
    for n in (0, 1):
        pz = fock.number_projector(psi_z, (0, 1), n).amplitudes
        py = fock.number_projector(psi_y, (0, 1), n).amplitudes
        dev = max(dev, float(np.max(np.abs(pz - py))))
    return dev


def sg_state_with_ref(choice: BasisChoice, theta: float, mu: float, cutoff: int = 8) -> np.ndarray:
    """sg-mode density matrix after Alice's qubit reveals ``choice``, ref traced out."""
    psi = encoded_pair_state(choice.basis, theta, mu, cutoff)
    vec = BASIS_VECTORS[choice.basis.value][choice.bit]
    proj = fock.qubit_projector(psi, 0, vec)
    rho = fock.reduced_density_matrix(proj, [1])
    return rho / np.trace(rho).real


def sg_state_actual(choice: BasisChoice, theta: float, mu: float, cutoff: int = 8) -> np.ndarray:
    """sg-mode density matrix of the actual single-pulse preparation."""
    v = fock.coherent(_amp(theta, mu, choice.phase), cutoff).amplitudes
    rho = np.outer(v, v.conj())
    return rho / np.trace(rho).real


def purification_identity_check(mu: float, cutoff: int, M: int = 64) -> float:
    """Max amplitude deviation between the discretized phase integral and the
    number-state expansion.

    The phase register is an M-point grid with |n>_P = sum_k e^{i n th_k}|k>/sqrt M.
    Projecting the grid state onto <n|_P gives sum_k e^{-i n th_k}|e^{i th_k} sqrt mu>/M,
    which should equal c_n |n>.  Deviations come from aliasing (photon numbers
    >= M fold onto n mod M) and from the Fock cutoff.
    """
    if cutoff < 0 or M < 1:
        raise ValueError("cutoff must be >= 0 and M >= 1")
    thetas = 2.0 * math.pi * np.arange(M) / M
    grid = np.stack(
        [fock.coherent(_amp(t, mu), cutoff).amplitudes for t in thetas]
    )  # (M, cutoff+1)
    n_idx = np.arange(M)
    phases = np.exp(-1j * np.outer(n_idx, thetas)) / M  # <n|_P applied to sum_k |k>/sqrt M ...
    # ... times the 1/sqrt M normalisation of the grid state and of |n>_P
    computed = phases @ grid  # (M, cutoff+1)
    size = max(M, cutoff + 1)
    full = np.zeros((M, size), dtype=complex)
    full[:, : cutoff + 1] = computed
    m_idx = np.arange(size)

    c = np.exp(-mu / 2 + 0.5 * m_idx * (math.log(mu) if mu > 0 else 0.0) - 0.5 * gammaln(m_idx + 1))
    if mu == 0:
        c = (m_idx == 0).astype(float)
    expected = np.zeros((M, size), dtype=complex)
    diag = np.arange(min(M, size))
    expected[diag, diag] = c[diag]
    return float(np.max(np.abs(full - expected)))
