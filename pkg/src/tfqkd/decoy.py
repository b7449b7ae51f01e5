"""Decoy-state estimation of per-photon-number Test-mode counts.

Photon numbers always refer to the (ref + sg) double pulse, so the Poisson
means are doubled.  Counts are keyed by intensity index pairs (i, j), meaning
mu_A = mus[i], mu_B = mus[j].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog, nnls
from scipy.stats import poisson

from . import bounds
from .states import LOW_PHOTON_SET

FINITE_NMAX = 6
COND_LIMIT = 1e12


@dataclass(frozen=True)
class IntensityModel:
    mus: tuple[float, ...]
    p_mu: tuple[float, ...]
    p_T: float

    def __post_init__(self):
        object.__setattr__(self, "mus", tuple(float(m) for m in self.mus))
        object.__setattr__(self, "p_mu", tuple(float(p) for p in self.p_mu))
        if len(self.mus) != len(self.p_mu) or not self.mus:
            raise ValueError("mus and p_mu must be non-empty and the same length")
        if len(set(self.mus)) != len(self.mus) or min(self.mus) < 0:
            raise ValueError("intensities must be distinct and non-negative")
        if min(self.p_mu) < 0 or abs(sum(self.p_mu) - 1.0) > 1e-12:
            raise ValueError("selection probabilities must be non-negative and sum to 1")
        if not 0.0 <= self.p_T <= 1.0:
            raise ValueError("p_T must lie in [0, 1]")

    @classmethod
    def from_params(cls, params) -> "IntensityModel":
        return cls(params.mus, params.p_mu, params.p_T)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        k = len(self.mus)
        return [(i, j) for i in range(k) for j in range(k)]

    def selection_weight(self, i: int, j: int) -> float:
        """Unnormalised probability that a round carries (i, j) and is a Test round."""
        w = self.p_mu[i] * self.p_mu[j]
        return w * self.p_T if i == j else w


def q_fock_given_intensity(n_A: int, n_B: int, mu_A: float, mu_B: float) -> float:
    """Poisson product with means 2 mu_A and 2 mu_B."""
    if mu_A < 0 or mu_B < 0:
        raise ValueError("intensities must be non-negative")
    return float(poisson.pmf(n_A, 2 * mu_A) * poisson.pmf(n_B, 2 * mu_B))


def q_intensity_joint(i: int, j: int, model: IntensityModel) -> float:
    """P(mu_A = mus[i], mu_B = mus[j] | Test mode)."""
    p_eq = sum(p * p for p in model.p_mu)
    norm = (1.0 - p_eq) + p_eq * model.p_T
    if norm == 0.0:
        raise ValueError("Test mode has zero probability")
    return model.selection_weight(i, j) / norm


def q_fock(n_A: int, n_B: int, model: IntensityModel) -> float:
    return sum(
        q_fock_given_intensity(n_A, n_B, model.mus[i], model.mus[j]) * q_intensity_joint(i, j, model)
        for i, j in model.pairs
    )


def q_intensity_given_fock(i: int, j: int, n_A: int, n_B: int, model: IntensityModel) -> float:
    """Bayes: q_{mu|n} = q_{n|mu} q_mu / q_n."""
    denom = q_fock(n_A, n_B, model)
    if denom == 0.0:
        raise ZeroDivisionError(f"q_n vanishes for n = ({n_A}, {n_B})")
    num = q_fock_given_intensity(n_A, n_B, model.mus[i], model.mus[j]) * q_intensity_joint(i, j, model)
    return num / denom


def fock_grid(n_max: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n_max + 1) for b in range(n_max + 1)]


def design_matrix(model: IntensityModel, grid) -> np.ndarray:
    """Rows: intensity pairs; columns: photon-number pairs; entries q_{mu|n}."""
    return _design_matrix_cached(model, tuple(tuple(n) for n in grid)).copy()


@lru_cache(maxsize=64)
def _design_matrix_cached(model: IntensityModel, grid: tuple) -> np.ndarray:
    mus = np.array(model.mus)
    nA = np.array([a for a, _ in grid])
    nB = np.array([b for _, b in grid])
    pmf = poisson.pmf(np.arange(max(max(nA), max(nB)) + 1)[None, :], 2 * mus[:, None])  # (k, n)
    rows = np.array([pmf[i, nA] * pmf[j, nB] * q_intensity_joint(i, j, model) for i, j in model.pairs])
    denom = rows.sum(axis=0)
    if np.any(denom == 0.0):
        raise ZeroDivisionError("q_n vanishes on the grid")
    return rows / denom


def forward_counts(fock_counts: dict, model: IntensityModel) -> dict:
    """Expected per-intensity Test counts Ex_mu = sum_n N_n q_{mu|n}."""
    return {
        (i, j): sum(N * q_intensity_given_fock(i, j, a, b, model) for (a, b), N in fock_counts.items())
        for i, j in model.pairs
    }


@dataclass(frozen=True)
class FockBound:
    lower: float
    point: float
    upper: float


@dataclass
class FockCountEstimate:
    """Per-photon-number count bounds plus the derived multiphoton bound.

    ``low_lower[i]`` lower-bounds the low-photon detection count inside the
    (i, i) Test class and ``multiphoton_upper[i]`` upper-bounds the rest.
    """

    bounds: dict
    low_lower: dict
    multiphoton_upper: dict
    flags: tuple = ()
    residual: float = 0.0

    def point(self, n) -> float:
        return self.bounds[n].point


def _check_counts(counts: dict, model: IntensityModel) -> np.ndarray:
    missing = [p for p in model.pairs if p not in counts]
    if missing:
        raise ValueError(f"missing counts for intensity pairs {missing}")
    obs = np.array([float(counts[p]) for p in model.pairs])
    if np.any(obs < 0) or not np.all(np.isfinite(obs)):
        raise ValueError("counts must be finite and non-negative")
    return obs


def _low_class_weights(model: IntensityModel, grid, i: int) -> np.ndarray:
    row = design_matrix(model, grid)[model.pairs.index((i, i))]
    mask = np.array([(a, b) in LOW_PHOTON_SET for a, b in grid])
    return np.where(mask, row, 0.0)


def estimate_fock_counts_infinite(counts: dict, model: IntensityModel, n_max: int | None = None) -> FockCountEstimate:
    """Point estimates of N_n by non-negative least squares on the exact forward model.

    The grid defaults to n_A, n_B < number of intensities, which makes the
    system square and, for distinct intensities, full rank.
    """
    obs = _check_counts(counts, model)
    n_max = len(model.mus) - 1 if n_max is None else n_max
    grid = fock_grid(n_max)
    A = design_matrix(model, grid)
    flags = []
    if obs.sum() == 0.0:
        x, res = np.zeros(len(grid)), 0.0
    else:
        scale = obs.max()
        x, res = nnls(A, obs / scale, maxiter=50 * A.shape[1])
        x, res = x * scale, res * scale
    cond = np.linalg.cond(A) if A.shape[0] >= A.shape[1] else math.inf
    if not cond < COND_LIMIT:
        flags.append("ill_conditioned")
    est = {n: FockBound(float(v), float(v), float(v)) for n, v in zip(grid, x)}
    low_lower, multi = {}, {}
    for i in range(len(model.mus)):
        low = float(_low_class_weights(model, grid, i) @ x)
        low_lower[i] = low
        multi[i] = max(counts[(i, i)] - low, 0.0)
    return FockCountEstimate(est, low_lower, multi, tuple(flags), float(res))


def _tail_bound(rounds: float, prob: float) -> float:
    # generous upper bound on a binomial count with tiny mean
    mean = rounds * prob
    return mean + 10.0 * math.sqrt(mean) + 10.0


def estimate_fock_counts_finite(
    counts: dict,
    model: IntensityModel,
    eps: float,
    eps_low: float | None = None,
    rounds: dict | None = None,
    n_max: int = FINITE_NMAX,
) -> FockCountEstimate:
    """Bounds on N_n from Hoeffding intervals on the per-intensity counts.

    Each class obeys |N_obs,mu - Ex_mu| <= N_obs,mu f_Hoe(N_obs,mu, eps).
    The low-photon count in the (mu, mu) class is then lower-bounded by
    sum_low N_n_lower q_{mu mu|n} - (sum_low N_n_upper) f_Hoe(sum_low N_n_lower, eps_low).
    Photon numbers above n_max are
    gathered into one non-negative tail term per class, bounded through the
    emitted rounds of that class when ``rounds`` is given.
    """
    obs = _check_counts(counts, model)
    eps_low = eps if eps_low is None else eps_low
    grid = fock_grid(n_max)
    total = float(obs.sum())
    k = len(model.mus)
    flags = []
    trivial = {n: FockBound(0.0, 0.0, total) for n in grid}
    trivial_est = FockCountEstimate(
        trivial, {i: 0.0 for i in range(k)}, {i: float(counts[(i, i)]) for i in range(k)}
    )
    if k < 2:
        trivial_est.flags = ("unidentifiable",)
        return trivial_est
    if total == 0.0:
        zero = {n: FockBound(0.0, 0.0, 0.0) for n in grid}
        return FockCountEstimate(zero, {i: 0.0 for i in range(k)}, {i: 0.0 for i in range(k)})

    dev = np.array([c * bounds.hoeffding_delta(c, eps) if c >= 1 and eps < 1.0 else 0.0 for c in obs])
    A = design_matrix(model, grid)
    npairs, ngrid = A.shape
    # variables: N_n on the grid, then one tail term per class
    # work in units of the total count to keep HiGHS well scaled
    A_full = np.hstack([A, np.eye(npairs)])
    A_ub = np.vstack([A_full, -A_full])
    b_ub = np.concatenate([obs + dev, -(obs - dev)]) / total
    var_bounds = [(0, None)] * ngrid
    if rounds is None:
        flags.append("tail_unbounded")
        var_bounds += [(0, None)] * npairs
    else:
        for i, j in model.pairs:
            p_in = poisson.cdf(n_max, 2 * model.mus[i]) * poisson.cdf(n_max, 2 * model.mus[j])
            tail = _tail_bound(float(rounds[(i, j)]), max(1.0 - p_in, 0.0))
            var_bounds.append((0, tail / total))
    nvar = ngrid + npairs

    def optimise(c, sense):
        res = linprog(sense * c, A_ub=A_ub, b_ub=b_ub, bounds=var_bounds, method="highs")
        if res.status != 0:
            return None
        return sense * res.fun * total

    point_est = estimate_fock_counts_infinite(counts, model)
    est = {}
    for idx, n in enumerate(grid):
        if n not in LOW_PHOTON_SET:
            continue
        c = np.zeros(nvar)
        c[idx] = 1.0
        lo, hi = optimise(c, 1.0), optimise(c, -1.0)
        if lo is None or hi is None:
            trivial_est.flags = tuple(flags + ["infeasible"])
            return trivial_est
        lo, hi = max(lo, 0.0), max(hi, 0.0)
        pt = float(point_est.bounds[n].point) if n in point_est.bounds else 0.0
        if not lo <= pt <= hi:
            flags.append(f"point_outside_{n[0]}{n[1]}")
            pt = min(max(pt, lo), hi)
        est[n] = FockBound(lo, pt, hi)

    low_lo_sum = sum(b.lower for b in est.values())
    low_hi_sum = sum(b.upper for b in est.values())
    delta_low = bounds.hoeffding_delta(low_lo_sum, eps_low) if low_lo_sum >= 1 and eps_low < 1.0 else 0.0
    low_dev = low_hi_sum * delta_low
    low_lower, multi = {}, {}
    for i in range(k):
        # joint minimum of the weighted sum; never looser than summing the
        # per-cell lower bounds
        c = np.concatenate([_low_class_weights(model, grid, i), np.zeros(npairs)])
        w = optimise(c, 1.0)
        if w is None:
            trivial_est.flags = tuple(flags + ["infeasible"])
            return trivial_est
        low_lower[i] = max(w - low_dev, 0.0)
        multi[i] = max(float(counts[(i, i)]) - low_lower[i], 0.0)
    return FockCountEstimate(est, low_lower, multi, tuple(flags))


def transfer_factor(p_T: float, p_XC: float, delta_TC: float = 0.0) -> float:
    """Test -> Code X_C=1 count ratio: (1 - s + d)/(s - d), s = p_T/(p_T + p_C p_XC)."""
    if p_T <= 0.0:
        return math.inf
    s = p_T / (p_T + (1.0 - p_T) * p_XC)
    if s - delta_TC <= 0.0:
        return math.inf
    return (1.0 - s + delta_TC) / (s - delta_TC)


def delta_bias(
    multiphoton_upper: float,
    n_code_slice: float,
    p_T: float,
    p_ZC: float,
    delta_TC: float = 0.0,
) -> float:
    """Bias of the Code Z_C slice events toward X_C = 1, clipped to [0, 1/2].

    The Test-mode X_C = 1 count is bounded by the multiphoton count, moved to
    the Code X_C events by the fair-sampling ratio, rescaled from the X_C to
    the Z_C choice, and divided by the kept slice count.  Since the slice
    count already carries the factor Delta/2pi, dividing by it applies the
    2pi/Delta enhancement exactly once.
    """
    if multiphoton_upper < 0:
        raise ValueError("multiphoton bound must be non-negative")
    if multiphoton_upper == 0.0:
        return 0.0
    if n_code_slice <= 0.0:
        raise ZeroDivisionError("no post-selected Code events")
    p_XC = 1.0 - p_ZC
    if p_XC <= 0.0:
        return 0.5
    factor = transfer_factor(p_T, p_XC, delta_TC)
    if not math.isfinite(factor):
        return 0.5
    val = (p_ZC / p_XC) * factor * multiphoton_upper / n_code_slice
    return float(min(max(val, 0.0), 0.5))
