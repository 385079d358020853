"""Experiment orchestration: configs, rate and measure-convergence runs,
distributional self-tests and report/CSV writers."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .coupling import CoupledSubordinator, build_slot_records, paste_subordinator, verify_interaction_identity
from .finite_system import AtomLog, generate_atoms, simulate_finite, slot_count
from .limit_system import PicardMeans, initial_drift_functional, picard_solve, simulate_mean_field
from .metric_a import check_assumption_a, coupled_a_distance, quantile_coupling_cost
from .model import InitialLaw, ModelSpec, constant_model, reference_model
from .stable_core import (CountLaw, RngStream, StableParams, laplace_band, random_sum_scaled,
                          sample_stable, sample_subordinator)

SCHEMA_VERSION = 1
ENV_SEED = "STABLECHAOS_SEED"
ENV_OUT = "STABLECHAOS_OUT"
LAMBDAS = (0.5, 1.0, 2.0, 4.0)
Z95 = 1.959963984540054


class ConfigError(ValueError):
    pass


def delta_exponent(alpha: float, q: float) -> float:
    return -(2.0 / (2.0 + q)) * (1.0 - q / alpha + q / 2.0)


def delta_rule(N: int, alpha: float, q: float, T: float = 1.0) -> float:
    """delta(N) = N^exponent, adjusted so that T/delta is an integer (and delta < 1)."""
    raw = N ** delta_exponent(alpha, q)
    n = max(int(math.floor(T / raw + 0.5)), int(math.floor(T)) + 1)
    return T / n


def exp_theory(alpha: float, q: float) -> float:
    return (1.0 - q / alpha) ** 2 - (q / alpha) ** 2 * q / (2.0 + q)


def secondary_exponent(q: float) -> float:
    """Extra N-exponent for drifts that are linear in the measure."""
    return -q if q < 0.5 else -0.5


@dataclass
class ExperimentConfig:
    alpha: float = 0.5
    q: float = 0.475
    model: dict = field(default_factory=lambda: {"family": "reference"})
    N_grid: tuple = (50, 100, 200, 400, 800)
    T: float = 1.0
    replications: int = 64
    delta: object = "auto"
    substeps: int = 10
    h: Optional[float] = None
    seed: int = 20240607
    out_dir: str = "results"
    workers: int = 1
    picard_horizon: float = 0.25
    picard_delta: float = 0.05
    picard_N: int = 400
    picard_iterations: int = 6
    reference_factor: int = 8
    measure_replications: int = 16
    suite_samples: int = 1_000_000
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.N_grid = tuple(int(n) for n in self.N_grid)
        try:
            self.params
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not self.N_grid or any(n < 2 for n in self.N_grid):
            raise ConfigError("N_grid needs entries >= 2")
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])):
            raise ConfigError("N_grid must be strictly increasing")
        if self.replications < 1 or self.measure_replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.delta != "auto":
            try:
                slot_count(self.T, float(self.delta))
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if self.workers < 1 or self.substeps < 1:
            raise ConfigError("workers and substeps must be >= 1")
        try:
            self.model_spec()
        except (ValueError, TypeError) as e:
            raise ConfigError(f"model: {e}") from None

    @property
    def params(self) -> StableParams:
        return StableParams(float(self.alpha), float(self.q))

    def model_spec(self) -> ModelSpec:
        m = dict(self.model)
        family = m.pop("family", "reference")
        init = InitialLaw.from_dict(m.pop("init")) if "init" in m else None
        if family == "reference":
            return reference_model(q=self.q, init=init, **m)
        if family == "constant":
            return constant_model(q=self.q, init=init, **m)
        raise ConfigError(f"unknown model family {family!r}")

    def delta_for(self, N: int) -> float:
        if self.delta == "auto":
            return delta_rule(N, self.alpha, self.q, self.T)
        return float(self.delta)

    def h_for(self, delta: float) -> float:
        return float(self.h) if self.h is not None else delta / self.substeps

    def stream(self, *keys) -> RngStream:
        return RngStream(int(self.seed)).substream(*keys)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["N_grid"] = list(self.N_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path, env=None) -> "ExperimentConfig":
        env = os.environ if env is None else env
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in {path}: {e}") from None
        if ENV_SEED in env:
            d["seed"] = int(env[ENV_SEED])
        if ENV_OUT in env:
            d["out_dir"] = env[ENV_OUT]
        return cls.from_dict(d)


def _map(fn, tasks, workers: int):
    """Ordered map; results never depend on ``workers``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _summary(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(Z95 * v.std(ddof=1) / math.sqrt(len(v)))


# ---------------------------------------------------------------- rate experiment

def coupled_pair(cfg: ExperimentConfig, N: int, r: int):
    """Finite run, coupled subordinator and paired mean-field run for one replication."""
    spec, params = cfg.model_spec(), cfg.params
    delta = cfg.delta_for(N)
    h = cfg.h_for(delta)
    rng = cfg.stream("rate", N, r)
    fin = simulate_finite(spec, params, N, cfg.T, delta, h, rng)
    records = build_slot_records(fin, spec, rng)
    sub = paste_subordinator(records, delta)
    mf = simulate_mean_field(spec, params, sub, fin.atoms, fin.init, h)
    return fin, records, sub, mf


def _rate_task(task) -> dict:
    cfg_dict, N, r = task
    cfg = ExperimentConfig.from_dict(cfg_dict)
    fin, records, sub, mf = coupled_pair(cfg, N, r)
    ident = verify_interaction_identity(fin, records, cfg.model_spec())
    return {
        "N": N, "rep": r, "delta": fin.delta,
        "error": coupled_a_distance(fin.final, mf.final, cfg.q),
        "r1_q": ident.abs_r1_q, "r2_q": ident.abs_r2_q,
        "identity_residual": ident.max_residual,
        "clamps": fin.clamp_count + mf.clamp_count,
        "warnings": fin.warnings + mf.warnings,
    }


@dataclass
class RateRow:
    N: int
    delta: float
    mean_error: float
    half_width: float
    R: int
    mean_r1_q: float
    mean_r2_q: float
    median_error: float


@dataclass
class RateReport:
    rows: list
    slope: Optional[float]
    slope_se: Optional[float]
    exp_theory: float
    secondary_exponent: float
    alpha: float
    q: float
    flags: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean_error for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        m = self.means
        return bool(np.all(np.diff(m) < 0))

    @property
    def slope_ok(self) -> bool:
        return self.slope is not None and self.slope < 0 and self.slope <= 0.5 * self.exp_theory

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "alpha": self.alpha, "q": self.q,
            "rows": [asdict(r) for r in self.rows],
            "slope": self.slope, "slope_se": self.slope_se,
            "exp_theory": self.exp_theory, "secondary_exponent": self.secondary_exponent,
            "strictly_decreasing": self.strictly_decreasing, "slope_ok": self.slope_ok,
            "flags": self.flags, "warnings": self.warnings,
        }


def fit_loglog(N, means) -> tuple[Optional[float], Optional[float]]:
    if len(N) < 2:
        return None, None
    if len(N) == 2:
        x, y = np.log(N), np.log(means)
        return float((y[1] - y[0]) / (x[1] - x[0])), None
    fit = stats.linregress(np.log(N), np.log(means))
    return float(fit.slope), float(fit.stderr)


def run_rate_experiment(cfg: ExperimentConfig) -> RateReport:
    tasks = [(cfg.to_dict(), N, r) for N in cfg.N_grid for r in range(cfg.replications)]
    results = _map(_rate_task, tasks, cfg.workers)
    rows, warnings = [], []
    for N in cfg.N_grid:
        res = [x for x in results if x["N"] == N]
        mean, hw = _summary([x["error"] for x in res])
        rows.append(RateRow(N, res[0]["delta"], mean, hw, len(res),
                            float(np.mean([x["r1_q"] for x in res])),
                            float(np.mean([x["r2_q"] for x in res])),
                            float(np.median([x["error"] for x in res]))))
        for x in res:
            warnings += [f"N={N} rep={x['rep']}: {w}" for w in x["warnings"]]
    slope, se = fit_loglog([r.N for r in rows], [r.mean_error for r in rows])
    flags = ["insufficient grid"] if len(rows) < 2 else []
    return RateReport(rows, slope, se, exp_theory(cfg.alpha, cfg.q), secondary_exponent(cfg.q),
                      cfg.alpha, cfg.q, flags, warnings)


def write_rate_outputs(report: RateReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rate_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "delta", "mean_error", "half_width", "R"])
        for r in report.rows:
            w.writerow([r.N, repr(r.delta), repr(r.mean_error), repr(r.half_width), r.R])
    write_json(report.to_dict(), out / "rate_report.json")


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


# ------------------------------------------------- empirical-measure convergence

def subset_atoms(atoms: AtomLog, n: int) -> AtomLog:
    keep = atoms.j < n
    return AtomLog(atoms.s[keep], atoms.j[keep], atoms.z[keep], atoms.u[keep], n, atoms.T, atoms.f_max)


def sampled_subordinator(params: StableParams, T: float, delta: float, rng: RngStream) -> CoupledSubordinator:
    n = slot_count(T, delta)
    path = sample_subordinator(params, delta * np.arange(n + 1), rng.generator())
    return CoupledSubordinator(delta, path.increments, ["sampled"] * n)


def _measure_task(task) -> dict:
    cfg_dict, N, r = task
    cfg = ExperimentConfig.from_dict(cfg_dict)
    spec, params = cfg.model_spec(), cfg.params
    delta = cfg.delta_for(N)
    h = cfg.h_for(delta)
    M = cfg.reference_factor * N
    rng = cfg.stream("measure", N, r)
    sub = sampled_subordinator(params, cfg.T, delta, rng.substream("sub"))
    atoms = generate_atoms(M, cfg.T, spec.f_max, params, rng)
    init = spec.initial_law.sample(rng.substream("init").generator(), M)
    ref = simulate_mean_field(spec, params, sub, atoms, init, h, tracked=())
    small = simulate_mean_field(spec, params, sub, subset_atoms(atoms, N), init[:N], h, tracked=())
    return {"N": N, "rep": r, "delta": delta,
            "w_q": quantile_coupling_cost(small.final, ref.final, cfg.q)}


@dataclass
class MeasureReport:
    rows: list
    reference_factor: int
    q: float

    @property
    def means(self) -> np.ndarray:
        return np.array([r["mean_w_q"] for r in self.rows])

    @property
    def monotone(self) -> bool:
        """Each step down the grid decreases, or rises by less than the
        combined half-widths."""
        for a, b in zip(self.rows, self.rows[1:]):
            if b["mean_w_q"] > a["mean_w_q"] + a["half_width"] + b["half_width"]:
                return False
        return True

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "q": self.q, "reference_factor": self.reference_factor,
                "rows": self.rows, "monotone": self.monotone}


def run_measure_convergence(cfg: ExperimentConfig) -> MeasureReport:
    tasks = [(cfg.to_dict(), N, r) for N in cfg.N_grid for r in range(cfg.measure_replications)]
    results = _map(_measure_task, tasks, cfg.workers)
    rows = []
    for N in cfg.N_grid:
        res = [x for x in results if x["N"] == N]
        mean, hw = _summary([x["w_q"] for x in res])
        rows.append({"N": N, "delta": res[0]["delta"], "mean_w_q": mean, "half_width": hw, "R": len(res)})
    return MeasureReport(rows, cfg.reference_factor, cfg.q)


def write_measure_outputs(report: MeasureReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "measure_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "delta", "mean_w_q", "half_width", "R"])
        for r in report.rows:
            w.writerow([r["N"], repr(r["delta"]), repr(r["mean_w_q"]), repr(r["half_width"]), r["R"]])
    write_json(report.to_dict(), out / "measure_report.json")


# ------------------------------------------------------------------- Picard

@dataclass
class PicardReport:
    distances: list
    ratios: list
    slot_gap: list
    half_widths: list
    horizon: float
    delta: float
    N: int

    @property
    def contracting(self) -> bool:
        d = np.asarray(self.distances)
        live = d[:-1] > 1e-14
        r = d[1:][live] / d[:-1][live]
        return bool(len(d) >= 2 and np.all(r < 1.0))

    @property
    def unique(self) -> bool:
        return bool(np.all(np.asarray(self.slot_gap) <= np.asarray(self.half_widths)))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self),
                "contracting": self.contracting, "unique": self.unique}


def run_picard(cfg: ExperimentConfig) -> PicardReport:
    """Iterate from mu(f) = f_max and from mu(f) = f_min on a common
    subordinator, atom log and initial condition."""
    spec, params = cfg.model_spec(), cfg.params
    T, delta, N = cfg.picard_horizon, cfg.picard_delta, cfg.picard_N
    n = slot_count(T, delta)
    rng = cfg.stream("picard")
    sub = sampled_subordinator(params, T, delta, rng.substream("sub"))
    atoms = generate_atoms(N, T, spec.f_max, params, rng)
    init = spec.initial_law.sample(rng.substream("init").generator(), N)
    d0 = initial_drift_functional(spec, init)
    h = cfg.h_for(delta)
    hi = picard_solve(spec, params, sub, atoms, init, PicardMeans.constant(spec.f_max, n, d0),
                      cfg.picard_iterations, h)
    lo = picard_solve(spec, params, sub, atoms, init, PicardMeans.constant(spec.f_min, n, d0),
                      cfg.picard_iterations, h)
    last_hi, last_lo = hi.trajectories[-1], lo.trajectories[-1]
    gap = np.abs(hi.means[-1].mu_f - lo.means[-1].mu_f)
    hw = np.array([Z95 * np.std(spec.rate(last_hi.slot_states[k]), ddof=1) / math.sqrt(N)
                   for k in range(n)])
    return PicardReport([float(x) for x in hi.distances], [float(x) for x in hi.ratios],
                        [float(x) for x in gap], [float(x) for x in hw], T, delta, N)


# ------------------------------------------------------ distribution suite

@dataclass
class SuiteEntry:
    name: str
    passed: bool
    statistic: float
    bound: float


def laplace_battery(samples, alpha: float, name: str, lams=LAMBDAS, target_alpha: float | None = None):
    """One entry per lambda: |mean exp(-lam Y) - exp(-lam^alpha)| against 3/(2 sqrt n)."""
    ta = alpha if target_alpha is None else target_alpha
    band = laplace_band(len(samples))
    out = []
    for lam in lams:
        dev = abs(float(np.mean(np.exp(-lam * samples))) - math.exp(-lam ** ta))
        out.append(SuiteEntry(f"{name}[lambda={lam}]", dev <= band, dev, band))
    return out


def two_sample_laplace(x, y, name: str, lams=LAMBDAS):
    band = 3.0 * math.sqrt(0.25 / len(x) + 0.25 / len(y))
    out = []
    for lam in lams:
        dev = abs(float(np.mean(np.exp(-lam * x)) - np.mean(np.exp(-lam * y))))
        out.append(SuiteEntry(f"{name}[lambda={lam}]", dev <= band, dev, band))
    return out


def correlation_entry(x, y, name: str) -> SuiteEntry:
    c = float(np.corrcoef(x, y)[0, 1])
    band = 3.0 / math.sqrt(len(x))
    return SuiteEntry(name, abs(c) <= band, c, band)


def constant_rate_slots(alpha: float, n_slots: int, rng: RngStream, N: int = 20, lam: float = 1.0,
                        delta: float = 0.5):
    """Slot records of a constant-rate run (b = 0, psi = 0, f = lam)."""
    params = StableParams(alpha, 0.5 * alpha)
    spec = constant_model(lam, f_max=lam, q=0.5 * alpha)
    T = n_slots * delta
    fin = simulate_finite(spec, params, N, T, delta, delta, rng, tracked=())
    return build_slot_records(fin, spec, rng.substream("coupling"))


def run_distribution_suite(cfg: ExperimentConfig, n: int | None = None, alpha_shift: float = 0.0,
                           slot_count_pooled: int = 100_000, q_count: int = 50) -> list[SuiteEntry]:
    """Sampler, random-sum, slot-record and distance-function batteries.

    ``alpha_shift`` moves the Laplace target to alpha + shift; a nonzero
    value is a negative control and must make the sampler battery fail.
    """
    n = cfg.suite_samples if n is None else n
    rng = cfg.stream("suite")
    entries: list[SuiteEntry] = []
    for alpha in (0.3, 0.5, 0.7, 0.9):
        p = StableParams(alpha, alpha / 2)
        y = sample_stable(p, rng.substream("laplace", repr(alpha)), size=n)
        entries += laplace_battery(y, alpha, f"laplace alpha={alpha}", target_alpha=alpha + alpha_shift)
    p = StableParams(0.5, 0.25)
    for k in (2, 5):
        g = rng.substream("selfsim", k).generator()
        lhs = sample_stable(p, g, size=(n // k, k)).sum(axis=1)
        rhs = k ** p.inv_alpha * sample_stable(p, g, size=n // k)
        entries += two_sample_laplace(lhs, rhs, f"self-similarity n={k}")
    P, _, yt = random_sum_scaled(p, CountLaw.poisson(5.0), rng.substream("randomsum"), size=n)
    entries += laplace_battery(yt, 0.5, "random sum", target_alpha=0.5 + alpha_shift)
    entries.append(correlation_entry(P, np.exp(-yt), "random sum corr(P, exp(-Y))"))
    rec = constant_rate_slots(0.5, slot_count_pooled, rng.substream("slots"))
    entries += laplace_battery(rec.dS / rec.delta ** (1.0 / rec.alpha), 0.5, "slot increments",
                               target_alpha=0.5 + alpha_shift)
    entries.append(correlation_entry(rec.P, rec.Y, "slot corr(P, Y)"))
    g = rng.substream("metric").generator()
    worst_fail = [(float(qq), name) for qq in g.uniform(0.01, 0.99, q_count)
                  for name, res in check_assumption_a(float(qq), rng=g).items() if not res.passed]
    entries.append(SuiteEntry("distance-function battery", not worst_fail, float(len(worst_fail)), 0.0))
    return entries


def suite_to_dict(entries) -> dict:
    return {"schema_version": SCHEMA_VERSION, "passed": all(e.passed for e in entries),
            "tests": [asdict(e) for e in entries]}
