"""Truncated multimode Fock-space engine.

States are dense complex tensors with one length-2 axis per qubit register
followed by one axis of length ``cutoff + 1`` per bosonic mode.  Every
operation that can push weight beyond the cutoff records that weight in a
scalar ``leakage`` field instead of dropping it silently.

Beam-splitter convention (transmissivity T, reflectivity R = 1 - T)::

    a^dag -> sqrt(T) a^dag + sqrt(R) b^dag
    b^dag -> sqrt(R) a^dag - sqrt(T) b^dag

At T = 1/2 this maps |alpha>|beta> to |(alpha+beta)/sqrt2>|(alpha-beta)/sqrt2>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import comb, gammaln
from scipy.stats import poisson


@dataclass(frozen=True)
class ModeLayout:
    """Shape bookkeeping: ``qubit_count`` two-level factors then the modes."""

    mode_count: int
    cutoffs: tuple[int, ...]
    qubit_count: int = 0

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.cutoffs)
        object.__setattr__(self, "cutoffs", cutoffs)
        if self.mode_count < 0 or len(cutoffs) != self.mode_count:
            raise ValueError("mode_count must match the number of cutoffs")
        if any(c < 0 for c in cutoffs):
            raise ValueError("cutoffs must be non-negative")
        if self.qubit_count < 0:
            raise ValueError("qubit_count must be non-negative")

    @classmethod
    def uniform(cls, mode_count: int, cutoff: int, qubit_count: int = 0) -> "ModeLayout":
        return cls(mode_count, (cutoff,) * mode_count, qubit_count)

    @property
    def shape(self) -> tuple[int, ...]:
        return (2,) * self.qubit_count + tuple(c + 1 for c in self.cutoffs)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def mode_axis(self, mode: int) -> int:
        if not 0 <= mode < self.mode_count:
            raise IndexError(f"mode {mode} outside layout with {self.mode_count} modes")
        return self.qubit_count + mode

    def qubit_axis(self, qubit: int) -> int:
        if not 0 <= qubit < self.qubit_count:
            raise IndexError(f"qubit {qubit} outside layout with {self.qubit_count} qubits")
        return qubit


@dataclass(frozen=True)
class FockVector:
    layout: ModeLayout
    amplitudes: np.ndarray = field(repr=False)
    leakage: float = 0.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != self.layout.shape:
            raise ValueError(f"amplitude shape {amp.shape} does not match layout {self.layout.shape}")
        amp = amp.copy()
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "leakage", float(max(self.leakage, 0.0)))

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __add__(self, other: "FockVector") -> "FockVector":
        if not isinstance(other, FockVector):
            return NotImplemented
        _require_same_layout(self, other)
        # tail of a sum is bounded by the triangle inequality
        leak = (math.sqrt(self.leakage) + math.sqrt(other.leakage)) ** 2
        return FockVector(self.layout, self.amplitudes + other.amplitudes, leak)

    def __sub__(self, other: "FockVector") -> "FockVector":
        return self + (-1.0) * other

    def __mul__(self, c: complex) -> "FockVector":
        return FockVector(self.layout, c * self.amplitudes, abs(c) ** 2 * self.leakage)

    __rmul__ = __mul__


def _require_same_layout(a: FockVector, b: FockVector) -> None:
    if a.layout != b.layout:
        raise ValueError(f"layout mismatch: {a.layout} vs {b.layout}")


def coherent(alpha: complex, cutoff: int) -> FockVector:
    """Truncated coherent state; the Poisson tail beyond ``cutoff`` is the leakage."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    n = np.arange(cutoff + 1)
    mu = abs(alpha) ** 2
    if mu == 0.0:
        amp = np.zeros(cutoff + 1, dtype=complex)
        amp[0] = 1.0
        return FockVector(ModeLayout(1, (cutoff,)), amp, 0.0)
    log_mag = -mu / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amp = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return FockVector(ModeLayout(1, (cutoff,)), amp, float(poisson.sf(cutoff, mu)))


def fock_state(n: int, cutoff: int) -> FockVector:
    if not 0 <= n <= cutoff:
        raise ValueError("photon number must lie in [0, cutoff]")
    amp = np.zeros(cutoff + 1, dtype=complex)
    amp[n] = 1.0
    return FockVector(ModeLayout(1, (cutoff,)), amp)


def vacuum(cutoff: int) -> FockVector:
    return fock_state(0, cutoff)


def qubit(vec: Sequence[complex]) -> FockVector:
    """A single two-level register holding ``vec``."""
    v = np.asarray(vec, dtype=complex)
    if v.shape != (2,):
        raise ValueError("qubit vector must have length 2")
    return FockVector(ModeLayout(0, (), 1), v)


def tensor(a: FockVector, b: FockVector) -> FockVector:
    """Tensor product; axes ordered as qubits(a), qubits(b), modes(a), modes(b)."""
    la, lb = a.layout, b.layout
    out = np.multiply.outer(a.amplitudes, b.amplitudes)
    qa, qb, ma, mb = la.qubit_count, lb.qubit_count, la.mode_count, lb.mode_count
    order = (
        list(range(qa))
        + list(range(qa + ma, qa + ma + qb))
        + list(range(qa, qa + ma))
        + list(range(qa + ma + qb, qa + ma + qb + mb))
    )
    out = np.transpose(out, order)
    layout = ModeLayout(ma + mb, la.cutoffs + lb.cutoffs, qa + qb)
    na, nb = a.norm2, b.norm2
    leak = (na + a.leakage) * (nb + b.leakage) - na * nb
    return FockVector(layout, out, leak)


def tensor_all(states: Iterable[FockVector]) -> FockVector:
    it = iter(states)
    acc = next(it)
    for s in it:
        acc = tensor(acc, s)
    return acc


@lru_cache(maxsize=64)
def _bs_matrix(cutoff: int, transmissivity: float) -> np.ndarray:
    """Two-mode unitary restricted to occupations <= cutoff.

    Row index = out_a*(c+1) + out_b, column index = in_a*(c+1) + in_b.  Built
    from the exact per-total-photon blocks by binomial expansion of the
    transformed creation operators.
    """
    c = cutoff
    d = c + 1
    st, sr = math.sqrt(transmissivity), math.sqrt(1.0 - transmissivity)
    mat = np.zeros((d * d, d * d))
    logfact = gammaln(np.arange(2 * c + 2) + 1.0)
    for na in range(d):
        for nb in range(d):
            total = na + nb
            norm_in = -0.5 * (logfact[na] + logfact[nb])
            col = na * d + nb
            for i in range(na + 1):
                ci = comb(na, i, exact=True) * st**i * sr ** (na - i)
                if ci == 0.0:
                    continue
                for j in range(nb + 1):
                    cj = comb(nb, j, exact=True) * sr**j * (-st) ** (nb - j)
                    if cj == 0.0:
                        continue
                    m = i + j
                    k = total - m
                    if m > c or k > c:
                        continue
                    mat[m * d + k, col] += ci * cj * math.exp(
                        norm_in + 0.5 * (logfact[m] + logfact[k])
                    )
    mat.setflags(write=False)
    return mat


def beam_splitter(state: FockVector, mode_a: int, mode_b: int, transmissivity: float = 0.5) -> FockVector:
    """Apply a beam splitter between two modes of equal cutoff."""
    lay = state.layout
    if mode_a == mode_b:
        raise ValueError("beam splitter modes must be distinct")
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    ca, cb = lay.cutoffs[mode_a], lay.cutoffs[mode_b]
    if ca != cb:
        raise ValueError(f"beam splitter needs equal cutoffs, got {ca} and {cb}")
    ax_a, ax_b = lay.mode_axis(mode_a), lay.mode_axis(mode_b)
    d = ca + 1
    amp = np.moveaxis(state.amplitudes, (ax_a, ax_b), (-2, -1))
    rest_shape = amp.shape[:-2]
    flat = amp.reshape(-1, d * d)
    out = flat @ _bs_matrix(ca, float(transmissivity)).T
    lost = max(float(np.vdot(flat, flat).real - np.vdot(out, out).real), 0.0)
    out = np.moveaxis(out.reshape(rest_shape + (d, d)), (-2, -1), (ax_a, ax_b))
    return FockVector(lay, out, state.leakage + lost)


def append_vacuum_mode(state: FockVector, cutoff: int) -> FockVector:
    return tensor(state, vacuum(cutoff))


def loss_channel(state: FockVector, mode: int, transmissivity: float) -> FockVector:
    """Fiber loss as a beam splitter onto a fresh vacuum ancilla mode.

    The ancilla is appended as the last mode and retained; tracing it out is
    done by summing outcome probabilities over its occupations.
    """
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    ext = append_vacuum_mode(state, state.layout.cutoffs[mode])
    return beam_splitter(ext, mode, ext.layout.mode_count - 1, transmissivity)


def _occupation_grid(layout: ModeLayout, modes: Iterable[int]) -> np.ndarray:
    total = np.zeros(layout.shape, dtype=np.int64)
    for m in modes:
        ax = layout.mode_axis(m)
        shp = [1] * len(layout.shape)
        shp[ax] = layout.cutoffs[m] + 1
        total = total + np.arange(layout.cutoffs[m] + 1).reshape(shp)
    return total


def number_projector(state: FockVector, modes: Iterable[int], n: int) -> FockVector:
    """Project onto total occupation ``n`` summed over ``modes``."""
    modes = list(modes)
    lay = state.layout
    max_n = sum(lay.cutoffs[m] for m in modes)
    if n < 0 or n > max_n:
        raise ValueError(f"photon number {n} outside [0, {max_n}] for modes {modes}")
    mask = _occupation_grid(lay, modes) == n
    return FockVector(lay, np.where(mask, state.amplitudes, 0.0), 0.0)


def qubit_projector(state: FockVector, qubit_index: int, vec: Sequence[complex]) -> FockVector:
    """Apply |v><v| on one qubit register, keeping the layout."""
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    ax = state.layout.qubit_axis(qubit_index)
    amp = np.moveaxis(state.amplitudes, ax, -1)
    coeff = amp @ v.conj()
    out = np.moveaxis(coeff[..., None] * v, -1, ax)
    return FockVector(state.layout, out, 0.0)


def inner(a: FockVector, b: FockVector) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    _require_same_layout(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: FockVector, b: FockVector) -> float:
    """|<a|b>|^2 / (|a|^2 |b|^2)."""
    return abs(inner(a, b)) ** 2 / (a.norm2 * b.norm2)


def mode_occupation_distribution(state: FockVector, modes: Sequence[int]) -> np.ndarray:
    """Joint occupation probabilities of ``modes`` (other axes summed out)."""
    lay = state.layout
    axes = [lay.mode_axis(m) for m in modes]
    prob = np.abs(state.amplitudes) ** 2
    other = tuple(i for i in range(prob.ndim) if i not in axes)
    marg = prob.sum(axis=other)
    # restore the requested order of modes
    kept = sorted(axes)
    return np.transpose(marg, [kept.index(a) for a in axes])


def reduced_density_matrix(state: FockVector, modes: Sequence[int]) -> np.ndarray:
    """Density matrix on ``modes`` after tracing out every other factor."""
    lay = state.layout
    axes = [lay.mode_axis(m) for m in modes]
    amp = np.moveaxis(state.amplitudes, axes, list(range(len(axes))))
    dim = int(np.prod([lay.cutoffs[m] + 1 for m in modes]))
    flat = amp.reshape(dim, -1)
    return flat @ flat.conj().T
