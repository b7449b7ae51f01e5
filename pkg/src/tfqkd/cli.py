"""Command-line front end: rate scans, finite-key evaluation, identity checks, simulation.

Config files are INI with optional sections [physics], [scan], [finite],
[verify] and [epsilon]; flags override config values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import channel, fock, keyrate, protosim, states
from .channel import PhysicalParams

log = logging.getLogger("tfqkd")

CSV_COLUMNS = ["L_km", "rate_total", "rate_mu_t1", "rate_mu_t2", "plob", "eZ", "eY", "delta_bias", "flags"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    eps_total: float = 1e-10
    L_min: float = 100.0
    L_max: float = 700.0
    L_step: float = 10.0
    mus: tuple = (0.0012,)
    N: float = 1e12
    seed: int | None = 0
    sampler: str = "batched"
    workers: int = 1
    mu_index: int = 0
    cutoff: int = 8
    grid_M: int = 64
    verify_mu: float = 0.0012

    def grid(self) -> list[float]:
        if self.L_step <= 0 or self.L_max < self.L_min:
            raise ConfigError("scan grid is empty")
        n = int(math.floor((self.L_max - self.L_min) / self.L_step + 1e-9)) + 1
        return [self.L_min + k * self.L_step for k in range(n)]

    @property
    def budget(self) -> keyrate.EpsilonBudget:
        return keyrate.EpsilonBudget.uniform(self.eps_total)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


_PHYS_TYPES = {f.name: f.type for f in fields(PhysicalParams)}


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if parser.has_section("physics"):
            kw = {}
            for key, val in parser.items("physics"):
                if key not in _PHYS_TYPES:
                    raise ConfigError(f"unknown physics key {key!r}")
                if key in ("mus", "p_mu"):
                    kw[key] = _floats(val)
                elif key == "attenuation":
                    kw[key] = val.strip()
                elif key == "delta" and "pi" in val:
                    kw[key] = eval(val, {"__builtins__": {}}, {"pi": math.pi})  # e.g. 2*pi/8
                else:
                    kw[key] = float(val)
            cfg.params = PhysicalParams(**kw)
        if parser.has_section("scan"):
            s = parser["scan"]
            cfg.L_min = s.getfloat("L_min", cfg.L_min)
            cfg.L_max = s.getfloat("L_max", cfg.L_max)
            cfg.L_step = s.getfloat("L_step", cfg.L_step)
            if "mu" in s:
                cfg.mus = _floats(s["mu"])
            cfg.workers = s.getint("workers", cfg.workers)
        if parser.has_section("finite"):
            s = parser["finite"]
            cfg.N = s.getfloat("N", cfg.N)
            cfg.seed = s.getint("seed", cfg.seed)
            cfg.sampler = s.get("sampler", cfg.sampler)
            cfg.mu_index = s.getint("mu_index", cfg.mu_index)
        if parser.has_section("epsilon"):
            cfg.eps_total = parser["epsilon"].getfloat("total", cfg.eps_total)
        if parser.has_section("verify"):
            s = parser["verify"]
            cfg.cutoff = s.getint("cutoff", cfg.cutoff)
            cfg.grid_M = s.getint("M", cfg.grid_M)
            cfg.verify_mu = s.getfloat("mu", cfg.verify_mu)
    except (ValueError, SyntaxError, NameError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# scan


def scan_row(L: float, mu: float, params: PhysicalParams, multi_mu: bool = False) -> dict:
    p = params.with_(L=L)
    total, r1, r2 = keyrate.asymptotic_total_rate(mu, p)
    plob = channel.plob_bound(L, p.alpha, p.attenuation) if L > 0 else math.inf
    flags = sorted(set(r1.flags) | set(r2.flags))
    if multi_mu:
        flags.insert(0, f"mu={mu:g}")
    if total > plob:
        flags.append("above_plob")
    return {
        "L_km": L,
        "rate_total": total,
        "rate_mu_t1": r1.rate,
        "rate_mu_t2": r2.rate,
        "plob": plob,
        "eZ": r1.e_Z,
        "eY": r1.e_Y,
        "delta_bias": r1.delta_bias,
        "flags": ";".join(flags),
    }


def rate_scan(cfg: RunConfig) -> list[dict]:
    grid = cfg.grid()
    if not cfg.mus:
        raise ConfigError("no intensity given")
    jobs = [(L, mu) for L in grid for mu in cfg.mus]
    multi = len(cfg.mus) > 1
    with ThreadPoolExecutor(max_workers=max(cfg.workers, 1)) as pool:
        rows = list(pool.map(lambda job: scan_row(job[0], job[1], cfg.params, multi), jobs))
    return rows  # pool.map preserves grid order


def _fmt(value, log10: bool) -> str:
    if isinstance(value, str):
        return value
    if log10 and not isinstance(value, bool):
        return "" if value <= 0 or not math.isfinite(value) else repr(math.log10(value))
    return repr(float(value))


def write_rows(rows: list[dict], fmt: str, out, log10: bool = False) -> None:
    if fmt == "json":
        json.dump(rows, out, indent=1)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        cells = []
        for c in CSV_COLUMNS:
            v = r[c]
            if c == "L_km":
                cells.append(repr(float(v)))
            elif c in ("rate_total", "rate_mu_t1", "rate_mu_t2", "plob"):
                cells.append(_fmt(v, log10))
            else:
                cells.append(_fmt(v, False))
        w.writerow(cells)


# ---------------------------------------------------------------------------
# finite


def finite_eval(cfg: RunConfig, counts: protosim.ObservedCounts | None = None) -> dict:
    if counts is None:
        counts = protosim.simulate(cfg.params, int(cfg.N), cfg.seed, cfg.sampler, cfg.workers)
    budget = cfg.budget
    results = [keyrate.finite_key_length(counts, budget, cfg.mu_index, t) for t in (1, 2)]
    return {
        "N": counts.N,
        "L_km": counts.params.L,
        "mu": counts.params.mus[cfg.mu_index],
        "eps_secret": budget.eps_secret,
        "eps_PA": budget.eps_PA,
        "eps_PE": budget.eps_PE,
        "results": [
            {
                "t_E": r.t_E,
                "n_sif": r.n_sif,
                "phase_error_bound": r.phase_error_bound,
                "e_ph": r.e_ph,
                "e_Z": r.e_Z,
                "e_Y": r.e_Y,
                "delta_bias": r.delta_bias,
                "lambda_EC": r.lambda_EC,
                "length": r.length,
                "rate": r.rate,
                "flags": list(r.flags),
            }
            for r in results
        ],
        "length_total": sum(r.length for r in results),
    }


# ---------------------------------------------------------------------------
# verify


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance


def verify(cfg: RunConfig, seed: int = 0) -> list[CheckResult]:
    mu, cut, M = cfg.verify_mu, cfg.cutoff, cfg.grid_M
    out = []
    coin = states.CoinDecomposition.from_basis_probs(cfg.params.p_Z, cfg.params.p_Z)
    worst = 0.0
    for nA, nB in states.LOW_PHOTON_SET:
        if nA > cut or nB > cut:
            continue
        v = states.prob_xc1_given_photons(nA, nB, 0.3, 1.1, mu, coin, cut)
        if not math.isnan(v):
            worst = max(worst, v)
    out.append(CheckResult("zero_bias_low_photon", worst, 1e-12))
    out.append(CheckResult("purification_identity", states.purification_identity_check(mu, cut, M), 1e-10))
    out.append(CheckResult("low_photon_basis_independence", states.low_photon_projections_match(0.7, mu, cut), 1e-12))
    dev = 0.0
    for basis in ("Z", "Y"):
        for bit in (0, 1):
            ch = states.BasisChoice(basis, bit)
            dev = max(dev, float(np.max(np.abs(states.sg_state_with_ref(ch, 0.4, mu, cut)
                                                - states.sg_state_actual(ch, 0.4, mu, cut)))))
    out.append(CheckResult("sg_marginal_matches_protocol", dev, 1e-12))
    rng = np.random.default_rng(seed)
    deficit = 0.0
    for _ in range(20):
        r = np.sqrt(rng.uniform(0, 0.05, 2))
        ph = rng.uniform(0, 2 * np.pi, 2)
        a, b = r * np.exp(1j * ph)
        s = fock.beam_splitter(fock.tensor(fock.coherent(a, cut), fock.coherent(b, cut)), 0, 1)
        t = fock.tensor(fock.coherent((a + b) / np.sqrt(2), cut), fock.coherent((a - b) / np.sqrt(2), cut))
        deficit = max(deficit, 1.0 - fock.fidelity(s, t))
    out.append(CheckResult("beam_splitter_coherent", deficit, 1e-9))
    return out


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfqkd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--output", "-o", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--mu", type=float, action="append", help="Code intensity (repeatable)")
        p.add_argument("--distance", type=float, help="distance L in km")
        p.add_argument("--seed", type=int)
        p.add_argument("--sampler", choices=("batched", "per-round"))
        p.add_argument("--attenuation", choices=channel.ATTENUATION_CONVENTIONS)
        p.add_argument("--workers", type=int)

    p = sub.add_parser("scan", help="asymptotic rate versus distance")
    common(p)
    p.add_argument("--L-min", type=float)
    p.add_argument("--L-max", type=float)
    p.add_argument("--L-step", type=float)
    p.add_argument("--log10", action="store_true", help="emit log10 of rates")

    p = sub.add_parser("finite", help="finite-size key length from simulated or stored counts")
    common(p)
    p.add_argument("--counts", help="counts JSON (schema tfqkd-counts/1)")
    p.add_argument("-N", "--rounds", type=float)

    p = sub.add_parser("verify", help="Fock-space identity checks")
    common(p)
    p.add_argument("--cutoff", type=int)

    p = sub.add_parser("simulate", help="simulate the protocol and write counts JSON")
    common(p)
    p.add_argument("-N", "--rounds", type=float)
    return ap


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    upd = {}
    if args.distance is not None:
        upd["L"] = args.distance
    if args.attenuation is not None:
        upd["attenuation"] = args.attenuation
    if args.mu:
        cfg.mus = tuple(args.mu)
        if args.command in ("finite", "simulate"):
            mus = tuple(args.mu) + tuple(m for m in cfg.params.mus[1:] if m not in args.mu)
            mus = mus[: len(cfg.params.mus)]
            upd["mus"] = mus
        if args.command == "verify":
            cfg.verify_mu = args.mu[0]
    if upd:
        cfg.params = cfg.params.with_(**upd)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.sampler is not None:
        cfg.sampler = args.sampler
    if args.workers is not None:
        cfg.workers = args.workers
    if getattr(args, "L_min", None) is not None:
        cfg.L_min = args.L_min
    if getattr(args, "L_max", None) is not None:
        cfg.L_max = args.L_max
    if getattr(args, "L_step", None) is not None:
        cfg.L_step = args.L_step
    if getattr(args, "rounds", None) is not None:
        cfg.N = args.rounds
    if getattr(args, "cutoff", None) is not None:
        cfg.cutoff = args.cutoff
    if args.command == "scan" and args.distance is not None:
        cfg.L_min = cfg.L_max = args.distance
        cfg.L_step = 1.0
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_flags(load_config(args.config), args)
        buf = io.StringIO()
        fmt = args.format
        status = 0
        if args.command == "scan":
            rows = rate_scan(cfg)
            write_rows(rows, fmt or "csv", buf, args.log10)
        elif args.command == "finite":
            counts = None
            if args.counts:
                with open(args.counts) as fh:
                    counts = protosim.ObservedCounts.from_json(fh.read())
            report = finite_eval(cfg, counts)
            if (fmt or "json") == "json":
                json.dump(report, buf, indent=1)
                buf.write("\n")
            else:
                w = csv.writer(buf, lineterminator="\n")
                keys = ["t_E", "n_sif", "phase_error_bound", "e_ph", "e_Z", "e_Y", "delta_bias", "lambda_EC",
                        "length", "rate"]
                w.writerow(keys + ["eps_secret", "flags"])
                for r in report["results"]:
                    w.writerow([r[k] for k in keys] + [report["eps_secret"], ";".join(r["flags"])])
        elif args.command == "verify":
            checks = verify(cfg)
            for c in checks:
                mark = "PASS" if c.passed else "FLAG"
                buf.write(f"{mark} {c.name}: max deviation {c.deviation:.3e} (tolerance {c.tolerance:.0e})\n")
            status = 0 if all(c.passed for c in checks) else 1
        elif args.command == "simulate":
            counts = protosim.simulate(cfg.params, int(cfg.N), cfg.seed, cfg.sampler, cfg.workers)
            buf.write(counts.to_json())
            buf.write("\n")
        text = buf.getvalue()
        if args.output:
            with open(args.output, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return status
    except (ConfigError, ValueError, OSError, OverflowError) as exc:
        print(f"tfqkd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
