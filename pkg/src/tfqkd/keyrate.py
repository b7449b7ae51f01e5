"""Asymptotic key rate and finite-size key length.

Conventions: for t_E = 1 a phase error is a disagreement of the fictitious
Y-basis outcomes on Z_A events; for t_E = 2 it is a coincidence.  The
observed Y-basis "error" count follows the same rule on Y_A events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from . import bounds, channel, decoy
from .bounds import binary_entropy
from .channel import PhysicalParams
from .protosim import ObservedCounts

_BISECT_ITERS = 200


# ---------------------------------------------------------------------------
# epsilon bookkeeping


@dataclass(frozen=True)
class EpsilonBudget:
    eps_PA: float
    eps_XC1: float
    eps_YA_perp: float
    eps_ZA_perp: float
    eps_YA_par: float
    eps_ZA_par: float
    eps_C_lower: float
    eps_C_upper: float
    eps_TC: float
    eps_pair: float  # each of the 9 intensity-pair Hoeffding intervals (fails w.p. 2 eps)
    eps_low: float
    n_pairs: int = 9

    def __post_init__(self):
        for f in fields(self):
            if f.name == "n_pairs":
                continue
            v = getattr(self, f.name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{f.name} must lie in (0, 1), got {v}")

    @classmethod
    def uniform(cls, total: float = 1e-10, n_pairs: int = 9) -> "EpsilonBudget":
        """Split ``total`` evenly over the phase-estimation failure events.

        The k events are the X_C=1 Azuma term, four Azuma Y terms, two Code
        count Chernoff terms, the Test-to-Code transfer, the low-photon
        Hoeffding term and the n_pairs decoy intervals (each counted as 2 eps).
        eps_PA gets the same share.
        """
        k = 9 + n_pairs
        e = total / k
        return cls(e, e, e, e, e, e, e, e, e, e / 2.0, e, n_pairs)

    @property
    def eps_decoy(self) -> float:
        return 2.0 * self.n_pairs * self.eps_pair

    @property
    def eps_est(self) -> float:
        return self.eps_TC + self.eps_decoy + self.eps_low

    @property
    def eps_PE(self) -> float:
        return (self.eps_XC1 + self.eps_YA_perp + self.eps_ZA_perp + self.eps_YA_par + self.eps_ZA_par
                + self.eps_C_lower + self.eps_C_upper + self.eps_est)

    @property
    def eps_secret(self) -> float:
        return math.sqrt(2.0) * math.sqrt(self.eps_PA + self.eps_PE)

    def scaled(self, factor: float) -> "EpsilonBudget":
        vals = {f.name: getattr(self, f.name) * factor for f in fields(self) if f.name != "n_pairs"}
        return EpsilonBudget(**vals, n_pairs=self.n_pairs)


@dataclass
class KeyRateResult:
    mu: float
    t_E: int
    n_sif: float
    phase_error_bound: float
    e_ph: float
    e_Z: float
    e_Y: float
    delta_bias: float
    lambda_EC: float
    length: float
    rate: float  # bits per emitted round
    eps_secret: float | None = None
    chain: dict = field(default_factory=dict)
    flags: tuple = ()


# ---------------------------------------------------------------------------
# phase error relations


def phase_error_rate(e_Y: float, delta_bias: float) -> float:
    """Closed-form phase error rate for equal basis probabilities, clamped to [0, 1]."""
    if not 0.0 <= e_Y <= 1.0:
        raise ValueError("e_Y must lie in [0, 1]")
    if not 0.0 <= delta_bias <= 0.5:
        raise ValueError("delta_bias must lie in [0, 1/2]")
    d = delta_bias
    val = (
        e_Y
        + 4.0 * d * (1.0 - d) * (1.0 - 2.0 * e_Y)
        + 4.0 * (1.0 - 2.0 * d) * math.sqrt(d * (1.0 - d) * e_Y * (1.0 - e_Y))
    )
    return min(max(val, 0.0), 1.0)


def generalized_bloch_bound(p_z1: float, p_Z_AB: float) -> float:
    """Upper bound on 1 - 2 p(X_C = 1) given p(Z_C = 1) and the coin weights."""
    if not 0.0 <= p_z1 <= 1.0 or not 0.0 <= p_Z_AB <= 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    p_Y_AB = 1.0 - p_Z_AB
    return (p_Z_AB - p_Y_AB) * (1.0 - 2.0 * p_z1) + 4.0 * math.sqrt(p_Z_AB * p_Y_AB) * math.sqrt(
        p_z1 * (1.0 - p_z1)
    )


def symmetric_bloch_bound(p_z1: float) -> float:
    return 2.0 * math.sqrt(p_z1 * (1.0 - p_z1))


@dataclass
class PhaseErrorInputs:
    """Quantities entering the count form of the Bloch-sphere inequality.

    All counts refer to Code, Z_C, C'=0, in-slice events at (mu, mu) and t_E.
    ``n_slice_lower/upper`` bound the Z_C + X_C slice count; ``n_xc1_upper``
    bounds the X_C = 1 count among the Code X_C events.
    """

    n_slice_lower: float
    n_slice_upper: float
    n_xc1_upper: float
    n_ya: float  # Y_A Z_C events
    n_y_err: float  # observed Y_A events counted as errors
    n_za: float  # Z_A Z_C events (sifted key length)
    p_ZC: float
    p_Z_AB: float
    delta_xc1: float = 0.0
    delta_ya_err: float = 0.0
    delta_za_err: float = 0.0
    delta_ya_ok: float = 0.0
    delta_za_ok: float = 0.0


def _phase_inequality_sides(inp: PhaseErrorInputs):
    pZ, pY = inp.p_Z_AB, 1.0 - inp.p_Z_AB
    p_XC = 1.0 - inp.p_ZC
    nU, nL = inp.n_slice_upper, inp.n_slice_lower
    lhs = inp.p_ZC * nL - 2.0 * (inp.p_ZC / p_XC) * (inp.n_xc1_upper + nU * inp.delta_xc1)
    # the (pZ - pY) term is bounded with whichever slice bound maximises it;
    # branch weights sum to p_ZC, so the Y_A count enters twice, not the slice count
    n_big = nU if pZ >= pY else nL
    n_tilde = nL if pZ >= pY else nU
    const = (pZ - pY) * (inp.p_ZC * n_big - 2.0 * (inp.n_ya + n_tilde * inp.delta_ya_err))
    coef = 4.0 * math.sqrt(pZ * pY)
    a = inp.n_y_err + nU * inp.delta_ya_err
    b = inp.n_ya - inp.n_y_err + nU * inp.delta_ya_ok

    def rhs(x):
        return const + coef * (
            math.sqrt(max(a, 0.0) * max(x + nU * inp.delta_za_err, 0.0))
            + math.sqrt(max(b, 0.0) * max(inp.n_za - x + nU * inp.delta_za_ok, 0.0))
        )

    return lhs, rhs, a, b


def phase_error_upper_bound(inp: PhaseErrorInputs) -> tuple[float, tuple]:
    """Largest phase-error count x in [0, n_za] allowed by the inequality.

    The right side is concave in x (one root grows with x, the other shrinks),
    so the feasible x form an interval; its upper end lies on the decreasing
    branch past the maximiser and is found by bisection there.
    """
    S = inp.n_za
    if S <= 0:
        return 0.0, ()
    if inp.p_ZC >= 1.0:
        return S, ("vacuous",)
    lhs, rhs, a, b = _phase_inequality_sides(inp)
    # maximiser of sqrt(a (x + cz)) + sqrt(b (S - x + co)) on [0, S]
    cz = inp.n_slice_upper * inp.delta_za_err
    co = inp.n_slice_upper * inp.delta_za_ok
    if a + b > 0:
        x_star = (a * (S + co) - b * cz) / (a + b)
    else:
        x_star = 0.0
    x_star = min(max(x_star, 0.0), S)
    # rounding slack: with zero bias the sides touch at x_star (a double root)
    target = lhs - 1e-14 * abs(lhs)
    if rhs(S) >= target:
        return S, (("vacuous",) if S > 0 else ())
    if rhs(x_star) < target:
        return S, ("unsatisfiable",)
    lo, hi = x_star, S
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if rhs(mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(S, 1.0):
            break
    return lo, ()


# ---------------------------------------------------------------------------
# asymptotic rate


def _key_fraction(e_ph: float, e_Z: float, f_EC: float) -> float:
    if e_ph >= 0.5:
        return 0.0
    return 1.0 - binary_entropy(e_ph) - f_EC * binary_entropy(min(e_Z, 1.0))


def asymptotic_key_rate(mu: float, t_E: int, params: PhysicalParams, points: int = channel.SLICE_POINTS) -> KeyRateResult:
    """Key bits per emitted round for Code rounds at mu_A = mu_B = mu.

    The per-round normalisation carries every selection factor: the
    intensity choice p_mu^2, Code mode p_C, the Z_C coin choice p_ZC, both
    parties choosing Z (p_ZA p_ZB) and the slice probability Delta/2pi.
    The bias uses exact infinite-decoy Fock detection probabilities.
    """
    if t_E not in (1, 2):
        raise ValueError("t_E must be 1 or 2")
    if mu not in params.mus:
        params = params.with_(mus=(mu,) + tuple(m for m in params.mus[1:] if m != mu))
    p_mu = params.p_of(mu)
    rates = channel.code_mode_rates(mu, t_E, params, points)
    flags = []
    if mu == 0.0 or rates.gain <= 0.0:
        return KeyRateResult(mu, t_E, 0.0, 0.0, 0.5, rates.e_Z, rates.e_Y, 0.0, 0.0, 0.0, 0.0,
                             chain={"gain": rates.gain}, flags=("no_signal",))
    match = params.p_basis_match
    multi = channel.multiphoton_detection(mu, t_E, params)
    # per-round expected counts (N = 1)
    multi_count = p_mu**2 * params.p_T * match * multi
    n_code_slice = p_mu**2 * params.p_C * params.p_ZC * match * params.slice_fraction * rates.gain
    if params.p_XC > 0.0 and params.p_T > 0.0:
        bias = decoy.delta_bias(multi_count, n_code_slice, params.p_T, params.p_ZC)
    else:
        bias = 0.5
        flags.append("bias_unbounded")
    n_sif = p_mu**2 * params.p_C * params.p_ZC * params.p_Z**2 * params.slice_fraction * rates.gain
    p_Z_AB = params.p_Z**2 / match
    if abs(p_Z_AB - 0.5) < 1e-15:
        e_ph = phase_error_rate(rates.e_Y, bias)
    else:
        n_y = n_code_slice * (1.0 - p_Z_AB)
        inp = PhaseErrorInputs(
            n_slice_lower=n_code_slice / params.p_ZC,
            n_slice_upper=n_code_slice / params.p_ZC,
            n_xc1_upper=bias * n_code_slice * params.p_XC / params.p_ZC,
            n_ya=n_y,
            n_y_err=rates.e_Y * n_y,
            n_za=n_sif,
            p_ZC=params.p_ZC,
            p_Z_AB=p_Z_AB,
        )
        bound, fl = phase_error_upper_bound(inp)
        e_ph = bound / n_sif
        flags.extend(fl)
    frac = _key_fraction(e_ph, rates.e_Z, params.f_EC)
    lam = params.f_EC * binary_entropy(rates.e_Z) * n_sif
    rate = max(n_sif * frac, 0.0)
    chain = {
        "gain": rates.gain,
        "multiphoton_detection": multi,
        "multiphoton_count": multi_count,
        "code_slice_count": n_code_slice,
        "p_Z_AB": p_Z_AB,
    }
    return KeyRateResult(mu, t_E, n_sif, e_ph * n_sif, e_ph, rates.e_Z, rates.e_Y, bias, lam, rate, rate,
                         chain=chain, flags=tuple(flags))


def asymptotic_total_rate(mu: float, params: PhysicalParams) -> tuple[float, KeyRateResult, KeyRateResult]:
    r1 = asymptotic_key_rate(mu, 1, params)
    r2 = asymptotic_key_rate(mu, 2, params)
    return r1.rate + r2.rate, r1, r2


def asymptotic_key_length(mu: float, t_E: int, params: PhysicalParams, N: float) -> float:
    return N * asymptotic_key_rate(mu, t_E, params).rate


# ---------------------------------------------------------------------------
# finite size


def code_xc_bounds(n_zc: float, p_ZC: float, eps_lower: float, eps_upper: float):
    """Chernoff bounds on the unannounced X_C slice count from the Z_C count."""
    if n_zc < 1:
        return 0.0, math.inf, 0.0, 0.0
    p_XC = 1.0 - p_ZC
    d_lo = bounds.chernoff_delta(p_ZC, n_zc, eps_lower, "upper").delta
    d_hi = bounds.chernoff_delta(p_XC, n_zc, eps_upper, "lower").delta
    lower = max((1.0 - p_ZC - d_lo) / (p_ZC + d_lo), 0.0) * n_zc
    upper = (1.0 - p_ZC + d_hi) / (p_ZC - d_hi) * n_zc if p_ZC - d_hi > 0 else math.inf
    return lower, upper, d_lo, d_hi


def phase_error_upper_bound_finite(
    counts: ObservedCounts,
    mu_index: int,
    t_E: int,
    test_xc1_upper: float,
    budget: EpsilonBudget,
) -> tuple[float, dict, tuple]:
    """Upper bound on the phase-error count of the Z_A sifted key.

    ``test_xc1_upper`` bounds the Test-mode X_C = 1 count at (mu, mu); it is
    moved to the Code X_C events with a Chernoff-corrected fair-sampling ratio.
    """
    params = counts.params
    sl = counts.code_slice(mu_index, t_E)
    n_zc = sl.n_total
    _, y_err = sl.errors(t_E)
    chain = {"n_zc_slice": n_zc, "n_za": sl.n_z, "n_ya": sl.n_y, "n_y_err": y_err}
    if sl.n_z <= 0:
        return 0.0, chain, ()
    flags = []
    xc_lo, xc_hi, d_lo, d_hi = code_xc_bounds(n_zc, params.p_ZC, budget.eps_C_lower, budget.eps_C_upper)
    n_lower, n_upper = n_zc + xc_lo, n_zc + xc_hi
    chain.update(xc_lower=xc_lo, xc_upper=xc_hi, delta_C_lower=d_lo, delta_C_upper=d_hi)
    if not math.isfinite(n_upper):
        return sl.n_z, chain, ("vacuous",)
    # Test -> Code transfer
    s = params.p_T / (params.p_T + params.p_C * params.p_XC)
    if test_xc1_upper >= 1:
        d_tc = bounds.chernoff_delta(1.0 - s, test_xc1_upper, budget.eps_TC, "upper").delta
    else:
        d_tc = 0.0
    factor = decoy.transfer_factor(params.p_T, params.p_XC, d_tc)
    xc1_code = factor * test_xc1_upper
    chain.update(delta_TC=d_tc, transfer_factor=factor, xc1_code_upper=xc1_code)
    if not math.isfinite(xc1_code):
        return sl.n_z, chain, ("vacuous",)
    if n_lower >= 1:
        dz = {name: bounds.azuma_delta(n_lower, getattr(budget, name))
              for name in ("eps_XC1", "eps_YA_perp", "eps_ZA_perp", "eps_YA_par", "eps_ZA_par")}
    else:
        return sl.n_z, chain, ("vacuous",)
    # the observed error class is Y_perp for t_E = 1 and Y_par for t_E = 2
    err, ok = ("perp", "par") if t_E == 1 else ("par", "perp")
    inp = PhaseErrorInputs(
        n_slice_lower=n_lower,
        n_slice_upper=n_upper,
        n_xc1_upper=xc1_code,
        n_ya=sl.n_y,
        n_y_err=y_err,
        n_za=sl.n_z,
        p_ZC=params.p_ZC,
        p_Z_AB=params.p_Z**2 / params.p_basis_match,
        delta_xc1=dz["eps_XC1"],
        delta_ya_err=dz[f"eps_YA_{err}"],
        delta_za_err=dz[f"eps_ZA_{err}"],
        delta_ya_ok=dz[f"eps_YA_{ok}"],
        delta_za_ok=dz[f"eps_ZA_{ok}"],
    )
    chain.update({f"delta_{k[4:]}": v for k, v in dz.items()})
    bound, fl = phase_error_upper_bound(inp)
    flags.extend(fl)
    return bound, chain, tuple(flags)


def finite_key_length(
    counts: ObservedCounts,
    budget: EpsilonBudget,
    mu_index: int = 0,
    t_E: int = 1,
    decoy_nmax: int = decoy.FINITE_NMAX,
) -> KeyRateResult:
    """Finite-size key length for Code rounds at (mus[mu_index], mus[mu_index]) and t_E."""
    if t_E not in (1, 2):
        raise ValueError("t_E must be 1 or 2")
    params = counts.params
    mu = params.mus[mu_index]
    sl = counts.code_slice(mu_index, t_E)
    z_err, y_err = sl.errors(t_E)
    n_sif = sl.n_z
    e_Z = z_err / n_sif if n_sif > 0 else 0.0
    e_Y = y_err / sl.n_y if sl.n_y > 0 else 0.0
    if n_sif <= 0:
        return KeyRateResult(mu, t_E, 0.0, 0.0, 0.5, e_Z, e_Y, 0.5, 0.0, 0.0, 0.0, budget.eps_secret,
                             flags=("no_sifted_key",))
    model = decoy.IntensityModel.from_params(params)
    test = counts.test_counts(t_E, matched=True)
    est = decoy.estimate_fock_counts_finite(
        test, model, budget.eps_pair, budget.eps_low, rounds=counts.test_rounds(matched=True), n_max=decoy_nmax
    )
    test_xc1 = est.multiphoton_upper[mu_index]
    bound, chain, flags = phase_error_upper_bound_finite(counts, mu_index, t_E, test_xc1, budget)
    flags = tuple(est.flags) + flags
    e_ph = min(bound / n_sif, 1.0)
    lam = params.f_EC * binary_entropy(min(e_Z, 1.0)) * n_sif
    if e_ph >= 0.5:
        length = 0.0
    else:
        length = n_sif * (1.0 - binary_entropy(e_ph)) - math.log2(2.0 / budget.eps_PA) - lam
    length = max(length, 0.0)
    chain.update(
        test_counts=test,
        low_lower=est.low_lower,
        multiphoton_upper=est.multiphoton_upper,
        fock_bounds={f"{a}{b}": (v.lower, v.upper) for (a, b), v in est.bounds.items()},
    )
    eff_bias = chain.get("xc1_code_upper", 0.0) * params.p_ZC / params.p_XC / sl.n_total if sl.n_total else 0.5
    return KeyRateResult(mu, t_E, n_sif, bound, e_ph, e_Z, e_Y, min(eff_bias, 0.5), lam, length,
                         length / counts.N, budget.eps_secret, chain, flags)
