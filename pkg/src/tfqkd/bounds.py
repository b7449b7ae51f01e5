"""Entropy and concentration-inequality primitives for the finite-key analysis.

All deviation functions return a *relative* deviation δ (a fraction of the
trial count), matching how they enter the count inequalities downstream.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

_BISECT_RTOL = 1e-12
_BISECT_MAXITER = 200


def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2 (1-x), with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x))


def _xlogy_ratio(x: float, y: float) -> float:
    # x ln(x/y) with the 0 ln 0 = 0 convention
    if x == 0.0:
        return 0.0
    return x * math.log(x / y)


def kl_divergence(x: float, y: float) -> float:
    """Binary relative entropy D(x||y) in nats."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"y must lie in [0, 1], got {y!r}")
    if y in (0.0, 1.0):
        if x == y:
            return 0.0
        raise ValueError("D(x||y) is infinite for y in {0, 1} and x != y")
    val = _xlogy_ratio(x, y) + _xlogy_ratio(1.0 - x, 1.0 - y)
    return max(val, 0.0)


def _check_trials_eps(n: float, eps: float) -> None:
    if not n >= 1:
        raise ValueError(f"trial count must be >= 1, got {n!r}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"failure probability must lie in (0, 1], got {eps!r}")


def azuma_delta(n: float, eps: float) -> float:
    """f_Az(n, eps) = sqrt((2/n) ln(1/eps))."""
    _check_trials_eps(n, eps)
    return math.sqrt((2.0 / n) * math.log(1.0 / eps))


def hoeffding_delta(n: float, eps: float) -> float:
    """f_Hoe(n, eps) = sqrt(ln(1/eps) / (2n))."""
    _check_trials_eps(n, eps)
    return math.sqrt(math.log(1.0 / eps) / (2.0 * n))


class ChernoffResult(NamedTuple):
    delta: float
    saturated: bool


def chernoff_delta(p: float, n: float, eps: float, direction: str = "upper") -> ChernoffResult:
    """Solve exp(-n D(p ± δ || p)) = eps for δ ≥ 0 by bisection.

    ``direction="upper"`` bounds deviations above p, ``"lower"`` below it.
    If even the extreme δ (p ± δ hitting 0 or 1) cannot reach the target
    exponent, the boundary δ is returned with ``saturated=True``; in that case
    the tail beyond the boundary is empty, so the bound is still sound.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    _check_trials_eps(n, eps)
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    target = math.log(1.0 / eps) / n
    if target == 0.0:
        return ChernoffResult(0.0, False)
    sign = 1.0 if direction == "upper" else -1.0
    dmax = (1.0 - p) if direction == "upper" else p

    def excess(d: float) -> float:
        return kl_divergence(min(max(p + sign * d, 0.0), 1.0), p) - target

    if excess(dmax) < 0.0:
        return ChernoffResult(dmax, True)
    lo, hi = 0.0, dmax
    for _ in range(_BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_RTOL * hi:
            break
    return ChernoffResult(hi, False)


def binomial_upper_tail(n: int, p: float, k_threshold: float) -> float:
    """Exact P(X >= k_threshold) for X ~ Binomial(n, p), by pmf summation."""
    from scipy.stats import binom

    k = np.arange(n + 1)
    pmf = binom.pmf(k, n, p)
    return float(pmf[k >= k_threshold - 1e-9].sum())


def binomial_lower_tail(n: int, p: float, k_threshold: float) -> float:
    """Exact P(X <= k_threshold) for X ~ Binomial(n, p)."""
    from scipy.stats import binom

    k = np.arange(n + 1)
    pmf = binom.pmf(k, n, p)
    return float(pmf[k <= k_threshold + 1e-9].sum())
