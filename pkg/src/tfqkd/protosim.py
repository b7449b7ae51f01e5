"""Monte-Carlo simulation of the protocol under the honest channel model.

Every round ends in one cell of a finite outcome space (``Category``).  The
batched sampler computes the exact probability of each cell and draws a
multinomial; the per-round sampler draws each protocol variable in order.
Test/Code assignment for equal intensities happens after the detection
result is known, as in the protocol, and is independent of it.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from . import channel
from .channel import PhysicalParams
from .states import Basis, BasisChoice

SCHEMA = "tfqkd-counts/1"
MAX_ROUNDS = 2**63 - 1
ROUND_CHUNK = 1_000_000
_IN_SLICE_POINTS = 129


class Category(NamedTuple):
    mode: str  # "T" or "C"
    i: int  # Alice's intensity index
    j: int  # Bob's intensity index
    t_E: int  # 0 = no announcement, 1 = D1, 2 = D2
    b_A: str  # "Z" or "Y"
    b_B: str
    coin: str  # "Z" or "X" in Code mode, "-" in Test mode
    in_slice: bool  # wrapped |theta_A - theta_B| <= Delta/2
    agree: bool  # j_A == j_B

    def key(self) -> str:
        return "|".join(str(v) for v in (self.mode, self.i, self.j, self.t_E, self.b_A, self.b_B, self.coin,
                                          int(self.in_slice), int(self.agree)))

    @classmethod
    def from_key(cls, key: str) -> "Category":
        parts = key.split("|")
        if len(parts) != 9:
            raise ValueError(f"malformed category key {key!r}")
        mode, i, j, t, ba, bb, coin, sl, ag = parts
        if mode not in "TC" or ba not in "ZY" or bb not in "ZY" or coin not in ("Z", "X", "-"):
            raise ValueError(f"malformed category key {key!r}")
        return cls(mode, int(i), int(j), int(t), ba, bb, coin, bool(int(sl)), bool(int(ag)))


def categories(k: int) -> list[Category]:
    out = []
    for i in range(k):
        for j in range(k):
            modes = ("T", "C") if i == j else ("T",)
            for mode in modes:
                coins = ("Z", "X") if mode == "C" else ("-",)
                for t in (0, 1, 2):
                    for ba in "ZY":
                        for bb in "ZY":
                            for coin in coins:
                                for sl in (False, True):
                                    for ag in (False, True):
                                        out.append(Category(mode, i, j, t, ba, bb, coin, sl, ag))
    return out


def _offset(b_A: str, b_B: str, parity: int) -> float:
    # relative encoding phase; depends on the bits only through their parity
    return BasisChoice(Basis(b_A), parity).phase - BasisChoice(Basis(b_B), 0).phase


def _announce_probs(mu_A, mu_B, offset, params: PhysicalParams):
    """(in-slice, out-of-slice) averages of (p_none, p_t1, p_t2)."""
    grid = np.linspace(-params.delta / 2, params.delta / 2, _IN_SLICE_POINTS)
    p1, p2 = channel.click_probs(grid + offset, mu_A, mu_B, params)
    in1 = simpson(p1, x=grid) / params.delta
    in2 = simpson(p2, x=grid) / params.delta
    full1, full2 = channel.test_mode_detection(mu_A, mu_B, params)
    f = params.slice_fraction
    if f < 1.0:
        out1 = max((full1 - f * in1) / (1.0 - f), 0.0)
        out2 = max((full2 - f * in2) / (1.0 - f), 0.0)
    else:
        out1 = out2 = 0.0
    return (1.0 - in1 - in2, in1, in2), (1.0 - out1 - out2, out1, out2)


def category_probabilities(params: PhysicalParams) -> tuple[list[Category], np.ndarray]:
    """Exact probability of every outcome cell for one round."""
    k = len(params.mus)
    cats = categories(k)
    p_basis = {"Z": params.p_Z, "Y": params.p_Y}
    f = params.slice_fraction
    cache = {}
    probs = np.empty(len(cats))
    for idx, c in enumerate(cats):
        p = params.p_mu[c.i] * params.p_mu[c.j]
        if c.i == c.j:
            p *= params.p_T if c.mode == "T" else params.p_C
        if c.mode == "C":
            p *= params.p_ZC if c.coin == "Z" else params.p_XC
        p *= p_basis[c.b_A] * p_basis[c.b_B] * 0.5  # two of the four bit pairs
        p *= f if c.in_slice else 1.0 - f
        parity = 0 if c.agree else 1
        ck = (c.i, c.j, c.b_A, c.b_B, parity)
        if ck not in cache:
            cache[ck] = _announce_probs(params.mus[c.i], params.mus[c.j], _offset(c.b_A, c.b_B, parity), params)
        probs[idx] = p * cache[ck][0 if c.in_slice else 1][c.t_E]
    probs = np.clip(probs, 0.0, None)
    return cats, probs / probs.sum()


@dataclass
class ObservedCounts:
    N: int | float
    counts: dict  # Category -> count
    params: PhysicalParams
    seed: int | None = None
    sampler: str = "batched"

    # --- selectors -----------------------------------------------------
    def total(self, **sel) -> float:
        return float(sum(v for c, v in self.counts.items() if all(getattr(c, a) == b for a, b in sel.items())))

    def test_counts(self, t_E: int, matched: bool = True) -> dict:
        """Per-intensity-pair Test counts with announcement t_E (C'=0 when matched)."""
        out = {}
        k = len(self.params.mus)
        for i in range(k):
            for j in range(k):
                out[(i, j)] = 0.0
        for c, v in self.counts.items():
            if c.mode == "T" and c.t_E == t_E and ((c.b_A == c.b_B) == matched):
                out[(c.i, c.j)] += v
        return out

    def test_rounds(self, matched: bool = True) -> dict:
        """Emitted Test rounds per intensity pair (all announcements)."""
        out = {}
        k = len(self.params.mus)
        for i in range(k):
            for j in range(k):
                out[(i, j)] = 0.0
        for c, v in self.counts.items():
            if c.mode == "T" and ((c.b_A == c.b_B) == matched):
                out[(c.i, c.j)] += v
        return out

    def code_slice(self, i: int, t_E: int) -> "CodeSliceCounts":
        """Z_C Code tallies inside the slice for mu_A = mu_B = mus[i]."""
        acc = {("Z", True): 0.0, ("Z", False): 0.0, ("Y", True): 0.0, ("Y", False): 0.0}
        for c, v in self.counts.items():
            if (c.mode == "C" and c.i == i and c.t_E == t_E and c.coin == "Z" and c.in_slice
                    and c.b_A == c.b_B):
                acc[(c.b_A, c.agree)] += v
        return CodeSliceCounts(acc[("Z", True)], acc[("Z", False)], acc[("Y", True)], acc[("Y", False)])

    # --- serialisation -------------------------------------------------
    def to_json(self) -> str:
        p = asdict(self.params)
        doc = {
            "schema": SCHEMA,
            "N": self.N,
            "seed": self.seed,
            "sampler": self.sampler,
            "params": p,
            "counts": {c.key(): (int(v) if float(v).is_integer() else float(v)) for c, v in self.counts.items()},
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ObservedCounts":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"counts file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
            raise ValueError(f"expected schema {SCHEMA!r}")
        for key in ("N", "params", "counts"):
            if key not in doc:
                raise ValueError(f"counts document lacks {key!r}")
        params = PhysicalParams(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc["params"].items()})
        counts = {}
        for key, v in doc["counts"].items():
            if not isinstance(v, (int, float)) or v < 0:
                raise ValueError(f"invalid count for {key!r}")
            counts[Category.from_key(key)] = v
        if abs(sum(counts.values()) - doc["N"]) > 1e-6 * max(1.0, doc["N"]):
            raise ValueError("category counts do not sum to N")
        return cls(doc["N"], counts, params, doc.get("seed"), doc.get("sampler", "batched"))


class CodeSliceCounts(NamedTuple):
    z_agree: float
    z_disagree: float
    y_agree: float
    y_disagree: float

    @property
    def n_z(self) -> float:
        return self.z_agree + self.z_disagree

    @property
    def n_y(self) -> float:
        return self.y_agree + self.y_disagree

    @property
    def n_total(self) -> float:
        return self.n_z + self.n_y

    def errors(self, t_E: int) -> tuple[float, float]:
        """(Z errors, Y errors); for t_E = 2 Alice's flip turns agreements into errors."""
        if t_E == 1:
            return self.z_disagree, self.y_disagree
        return self.z_agree, self.y_agree


def expected_counts(params: PhysicalParams, N: float) -> ObservedCounts:
    cats, probs = category_probabilities(params)
    return ObservedCounts(N, dict(zip(cats, N * probs)), params, None, "expected")


def _worker_rngs(seed: int | None, workers: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(workers)]


def _shards(N: int, workers: int) -> list[int]:
    base, extra = divmod(N, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _sample_batched(N: int, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.multinomial(N, probs).astype(np.int64)


def _sample_rounds(N: int, params: PhysicalParams, rng: np.random.Generator, index: dict) -> np.ndarray:
    """Draw rounds one protocol variable at a time, in chunks."""
    k = len(params.mus)
    out = np.zeros(len(index), dtype=np.int64)
    mus = np.asarray(params.mus)
    eta = channel.arm_transmissivity(params)
    keep = 1.0 - params.p_dark
    radix = _radix(k)
    lookup = _lookup_table(index, k)
    remaining = N
    while remaining > 0:
        n = min(remaining, ROUND_CHUNK)
        remaining -= n
        # Step 2: intensities, bases, bits, phases
        i = rng.choice(k, size=n, p=params.p_mu)
        j = rng.choice(k, size=n, p=params.p_mu)
        bA_y = rng.random(n) >= params.p_Z
        bB_y = rng.random(n) >= params.p_Z
        jA = rng.integers(0, 2, n)
        jB = rng.integers(0, 2, n)
        thA = rng.uniform(0.0, 2 * math.pi, n)
        thB = rng.uniform(0.0, 2 * math.pi, n)
        phA = np.where(bA_y, 1.5 * math.pi - jA * math.pi, jA * math.pi)
        phB = np.where(bB_y, 1.5 * math.pi - jB * math.pi, jB * math.pi)
        # Step 3: relay measurement
        phi = (thA + phA) - (thB + phB)
        n1, n2 = channel.detector_means(phi, mus[i], mus[j], eta, params.misalignment)
        c1 = rng.random(n) < 1.0 - keep * np.exp(-n1)
        c2 = rng.random(n) < 1.0 - keep * np.exp(-n2)
        tie = rng.random(n) < 0.5
        t = np.where(c1 & c2, np.where(tie, 1, 2), np.where(c1, 1, np.where(c2, 2, 0)))
        # Step 4: mode assignment after the announcement
        code = (i == j) & (rng.random(n) >= params.p_T)
        coin_x = code & (rng.random(n) >= params.p_ZC)
        dth = np.angle(np.exp(1j * (thA - thB)))
        in_slice = np.abs(dth) <= params.delta / 2
        agree = jA == jB
        fields = [code, i, j, t, bA_y, bB_y, coin_x, in_slice, agree]
        flat = np.zeros(n, dtype=np.int64)
        for f, r in zip(fields, radix):
            flat = flat * r + f.astype(np.int64)
        out += np.bincount(lookup[flat], minlength=len(index))[: len(index)]
    return out


def _radix(k: int) -> list[int]:
    return [2, k, k, 3, 2, 2, 2, 2, 2]


def _lookup_table(index: dict, k: int) -> np.ndarray:
    size = int(np.prod(_radix(k)))
    table = np.full(size, len(index), dtype=np.int64)  # sentinel for impossible cells
    for c, idx in index.items():
        digits = [int(c.mode == "C"), c.i, c.j, c.t_E, int(c.b_A == "Y"), int(c.b_B == "Y"),
                  int(c.coin == "X"), int(c.in_slice), int(c.agree)]
        flat = 0
        for d, r in zip(digits, _radix(k)):
            flat = flat * r + d
        table[flat] = idx
    return table


def simulate(
    params: PhysicalParams,
    N: int,
    seed: int | None = None,
    mode: str = "batched",
    workers: int = 1,
) -> ObservedCounts:
    """Simulate N rounds and tally every outcome cell.

    ``mode="per-round"`` draws each round explicitly; ``"batched"`` draws one
    multinomial per worker from the exact cell probabilities.  Each worker has
    its own Philox stream spawned from ``seed``.
    """
    if mode not in ("per-round", "batched"):
        raise ValueError("mode must be 'per-round' or 'batched'")
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > MAX_ROUNDS:
        raise OverflowError("round count exceeds the 64-bit tally range")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    cats, probs = category_probabilities(params)
    index = {c: n for n, c in enumerate(cats)}
    rngs = _worker_rngs(seed, workers)
    shards = _shards(N, workers)

    def run(w):
        if shards[w] == 0:
            return np.zeros(len(cats), dtype=np.int64)
        if mode == "batched":
            return _sample_batched(shards[w], probs, rngs[w])
        return _sample_rounds(shards[w], params, rngs[w], index)

    if workers == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(workers)))
    tally = np.sum(parts, axis=0)
    return ObservedCounts(N, {c: int(v) for c, v in zip(cats, tally)}, params, seed, mode)
