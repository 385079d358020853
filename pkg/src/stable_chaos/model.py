"""Coefficient bundles (drift b, rate f, jump psi, initial law) and their checks.

Two families are simulated: the a-Lipschitz reference model and the
constant-coefficient degenerate family. Any object exposing the same
callables can still be validated, which is how test doubles are handled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .metric_a import EmpiricalMeasure, a_eval

VALIDATION_TOL = 1e-9


@dataclass(frozen=True)
class InitialLaw:
    kind: str = "uniform"
    low: float = 0.5
    high: float = 1.5
    mean: float = 0.0
    sigma: float = 0.5

    def __post_init__(self):
        if self.kind == "uniform":
            if not 0.0 < self.low < self.high:
                raise ValueError("uniform initial law needs 0 < low < high")
        elif self.kind == "lognormal":
            if not self.sigma > 0.0:
                raise ValueError("lognormal initial law needs sigma > 0")
        elif self.kind != "point":
            raise ValueError(f"unknown initial law {self.kind!r}")

    def sample(self, g: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return g.uniform(self.low, self.high, n)
        if self.kind == "lognormal":
            return g.lognormal(self.mean, self.sigma, n)
        return np.full(n, self.low)

    def moment(self, order: float) -> float:
        """Closed-form E[X0^order]."""
        if self.kind == "uniform":
            r = order + 1.0
            return (self.high ** r - self.low ** r) / (r * (self.high - self.low))
        if self.kind == "lognormal":
            return float(np.exp(order * self.mean + 0.5 * (order * self.sigma) ** 2))
        return self.low ** order

    def to_dict(self) -> dict:
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mean": self.mean, "sigma": self.sigma}
        if self.kind == "point":
            return {"kind": "point", "value": self.low}
        return {"kind": "uniform", "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "InitialLaw":
        d = dict(d)
        kind = d.pop("kind", "uniform")
        if kind == "point":
            return cls(kind="point", low=float(d["value"]))
        return cls(kind=kind, **{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients plus their declared bounds and a-Lipschitz constants.

    ``drift(x, mu_atoms)`` evaluates b(x_i, mu) for every entry of ``x``
    against the uniform empirical measure on ``mu_atoms``.
    """

    name: str
    q: float
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rate: Callable[[np.ndarray], np.ndarray]
    jump: Callable[[np.ndarray], np.ndarray]
    initial_law: InitialLaw
    b_sup: float
    f_min: float
    f_max: float
    psi_max: float
    lip_b_x: float
    lip_b_mu: float
    lip_f: float
    lip_psi: float
    linear_kernel: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    kind: Optional[int] = None
    params: Optional[np.ndarray] = field(default=None, compare=False)
    settings: dict = field(default_factory=dict, compare=False)

    @property
    def simulable(self) -> bool:
        return self.kind is not None

    def kernel_args(self):
        if not self.simulable:
            raise ValueError("simulation supports the built-in model families only")
        return self.kind, self.params

    def mean_rate(self, positions: np.ndarray) -> float:
        return float(np.mean(self.rate(np.asarray(positions, dtype=float))))

    def to_dict(self) -> dict:
        return {"family": self.name, **self.settings, "init": self.initial_law.to_dict()}


def reference_model(q: float = 0.475, kappa: float = 1.0, cap: float = 1.0, f_min: float = 0.5,
                    f_max: float = 2.0, psi0: float = 1.0,
                    init: InitialLaw | None = None) -> ModelSpec:
    """Mean reversion on the capped distance a~ = min(a, cap).

    b(x, mu) = kappa (mu(a~) - a~(x)),  f(x) = f_min + (f_max - f_min)(1 - exp(-a(x))),
    psi(x) = psi0 / (1 + a(x)).
    """
    if not (kappa > 0 and cap > 0 and psi0 > 0):
        raise ValueError("kappa, cap and psi0 must be positive")
    if not 0.0 < f_min <= f_max:
        raise ValueError("need 0 < f_min <= f_max")
    init = init or InitialLaw()

    def capped(x):
        return np.minimum(a_eval(q, np.asarray(x, dtype=float)), cap)

    def kernel(x, y):
        return kappa * (capped(y) - capped(x))

    def drift(x, mu_atoms):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return kappa * (np.mean(capped(mu_atoms)) - capped(x))

    def rate(x):
        return f_min + (f_max - f_min) * (1.0 - np.exp(-a_eval(q, np.asarray(x, dtype=float))))

    def jump(x):
        return psi0 / (1.0 + a_eval(q, np.asarray(x, dtype=float)))

    return ModelSpec(
        name="reference", q=q, drift=drift, rate=rate, jump=jump, initial_law=init,
        b_sup=kappa * cap, f_min=f_min, f_max=f_max, psi_max=psi0,
        lip_b_x=kappa, lip_b_mu=kappa, lip_f=f_max - f_min, lip_psi=psi0,
        linear_kernel=kernel, kind=K.KIND_REFERENCE,
        params=np.array([q, kappa, cap, f_min, f_max, psi0], dtype=float),
        settings=dict(kappa=kappa, cap=cap, f_min=f_min, f_max=f_max, psi0=psi0),
    )


def constant_model(rate: float, jump: float = 0.0, drift: float = 0.0, f_max: float | None = None,
                   q: float = 0.475, init: InitialLaw | None = None) -> ModelSpec:
    """b = drift, f = rate, psi = jump, all constant. ``f_max`` may exceed
    ``rate`` so that thinning rejects some candidates."""
    if drift < 0.0:
        raise ValueError("constant drift must be nonnegative")
    f_max = rate if f_max is None else f_max
    if rate > f_max:
        raise ValueError("rate exceeds the dominating rate f_max")
    init = init or InitialLaw()
    return ModelSpec(
        name="constant", q=q,
        drift=lambda x, mu: np.full(np.shape(np.atleast_1d(x)), float(drift)),
        rate=lambda x: np.full(np.shape(x), float(rate)),
        jump=lambda x: np.full(np.shape(x), float(jump)),
        initial_law=init, b_sup=abs(drift), f_min=rate, f_max=f_max, psi_max=jump,
        lip_b_x=0.0, lip_b_mu=0.0, lip_f=0.0, lip_psi=0.0,
        linear_kernel=lambda x, y: np.full(np.broadcast(x, y).shape, float(drift)),
        kind=K.KIND_CONSTANT, params=np.array([q, drift, rate, jump], dtype=float),
        settings=dict(rate=rate, jump=jump, drift=drift, f_max=f_max),
    )


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    bound: float
    witness: tuple = ()


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def raise_for_failure(self):
        if not self.passed:
            lines = [f"{c.name}: worst {c.worst:.6g} vs {c.bound:.6g}, witness {c.witness}"
                     for c in self.failures]
            raise ModelValidationError("model validation failed:\n" + "\n".join(lines))

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


class ModelValidationError(ValueError):
    pass


def _random_positions(g, n):
    scale = g.choice([1e-3, 1e-1, 1.0, 10.0, 1e3], n)
    return g.exponential(1.0, n) * scale


def validate_model(spec: ModelSpec, samples: int = 10_000, rng: np.random.Generator | None = None) -> ValidationReport:
    """Empirical check of bounds, signs and a-Lipschitz constants.

    Ratios against |a(x) - a(y)| are compared with the declared constants;
    the measure argument of b is probed through identity couplings of
    random empirical measures.
    """
    if samples < 10_000:
        raise ValueError("samples must be at least 10^4")
    g = rng if rng is not None else np.random.default_rng(0)
    q = spec.q
    checks: list[Check] = []

    def upper(name, values, bound, witnesses):
        excess = values - bound
        i = int(np.argmax(excess))
        checks.append(Check(name, bool(excess[i] <= VALIDATION_TOL), float(values[i]), float(bound),
                            tuple(float(w[i]) for w in witnesses)))

    def lower(name, values, bound, witnesses):
        deficit = bound - values
        i = int(np.argmax(deficit))
        checks.append(Check(name, bool(deficit[i] <= VALIDATION_TOL), float(values[i]), float(bound),
                            tuple(float(w[i]) for w in witnesses)))

    x = _random_positions(g, samples)
    y = _random_positions(g, samples)
    x[:5] = [0.0, 1.0, 1e6, 0.5, 2.0]
    fx, fy = spec.rate(x), spec.rate(y)
    px, py = spec.jump(x), spec.jump(y)
    da = np.abs(a_eval(q, x) - a_eval(q, y))

    checks.append(Check("f_min_positive", spec.f_min > 0.0, spec.f_min, 0.0))
    lower("rate_lower", fx, spec.f_min, (x,))
    upper("rate_upper", fx, spec.f_max, (x,))
    lower("jump_nonnegative", px, 0.0, (x,))
    upper("jump_upper", px, spec.psi_max, (x,))

    def lip(name, diff, const):
        viol = diff - const * da
        i = int(np.argmax(viol))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(da > 0, diff / da, 0.0)
        checks.append(Check(name, bool(viol[i] <= VALIDATION_TOL), float(np.max(ratio)), const,
                            (float(x[i]), float(y[i]))))

    lip("rate_a_lipschitz", np.abs(fx - fy), spec.lip_f)
    lip("jump_a_lipschitz", np.abs(px - py), spec.lip_psi)
    lip("rate_jump_eq_fq", np.abs(fx - fy) + np.abs(px - py), spec.lip_f + spec.lip_psi)

    # drift: random empirical measures of random sizes
    n_meas = max(samples // 100, 100)
    worst_sign = np.inf
    sign_w = ()
    b_abs = []
    bx_viol, bmu_viol = [], []
    bx_ratio, bmu_ratio = 0.0, 0.0
    bx_w, bmu_w = (), ()
    lin_err = 0.0
    for _ in range(n_meas):
        m = int(g.integers(1, 20))
        mu = _random_positions(g, m)
        nu = _random_positions(g, m)
        xs = _random_positions(g, 100)
        ys = _random_positions(g, 100)
        b0 = float(spec.drift(np.array([0.0]), mu)[0])
        if b0 < worst_sign:
            worst_sign, sign_w = b0, tuple(mu[:3])
        bx = spec.drift(xs, mu)
        by = spec.drift(ys, mu)
        b_abs.append(np.max(np.abs(bx)))
        dax = np.abs(a_eval(q, xs) - a_eval(q, ys))
        v = np.abs(bx - by) - spec.lip_b_x * dax
        i = int(np.argmax(v))
        bx_viol.append(v[i])
        if v[i] >= max(bx_viol):
            bx_w = (float(xs[i]), float(ys[i]))
        with np.errstate(divide="ignore", invalid="ignore"):
            bx_ratio = max(bx_ratio, float(np.max(np.where(dax > 0, np.abs(bx - by) / dax, 0.0))))
        coupling = float(np.mean(np.abs(a_eval(q, mu) - a_eval(q, nu))))
        bnu = spec.drift(xs, nu)
        vm = float(np.max(np.abs(bx - bnu))) - spec.lip_b_mu * coupling
        bmu_viol.append(vm)
        if vm >= max(bmu_viol):
            bmu_w = (float(mu[0]), float(nu[0]))
        if coupling > 0:
            bmu_ratio = max(bmu_ratio, float(np.max(np.abs(bx - bnu))) / coupling)
        if spec.linear_kernel is not None:
            mix = spec.drift(xs, np.concatenate([mu, nu]))
            lin_err = max(lin_err, float(np.max(np.abs(mix - 0.5 * (bx + bnu)))))
    checks.append(Check("drift_at_zero_nonnegative", bool(worst_sign >= -VALIDATION_TOL), worst_sign, 0.0, sign_w))
    checks.append(Check("drift_bound", bool(max(b_abs) <= spec.b_sup + VALIDATION_TOL), float(max(b_abs)), spec.b_sup))
    checks.append(Check("drift_a_lipschitz_x", bool(max(bx_viol) <= VALIDATION_TOL), bx_ratio, spec.lip_b_x, bx_w))
    checks.append(Check("drift_a_lipschitz_mu", bool(max(bmu_viol) <= VALIDATION_TOL), bmu_ratio, spec.lip_b_mu, bmu_w))
    if spec.linear_kernel is not None:
        checks.append(Check("drift_linear_in_mu", bool(lin_err <= VALIDATION_TOL), lin_err, 0.0))

    x0 = spec.initial_law.sample(g, samples)
    lower("initial_law_positive", x0, np.nextafter(0.0, 1.0), (x0,))
    return ValidationReport(checks)


def evaluate_coefficients(spec: ModelSpec, x: float, mu) -> tuple[float, float, float]:
    if x < 0.0:
        raise ValueError("state invariant violated upstream: negative position")
    atoms = mu.atoms if isinstance(mu, EmpiricalMeasure) else np.asarray(mu, dtype=float)
    if atoms.size == 0:
        raise ValueError("empty measure")
    b = float(spec.drift(np.array([x]), atoms)[0])
    f = float(np.asarray(spec.rate(np.array([x])))[0])
    psi = float(np.asarray(spec.jump(np.array([x])))[0])
    return b, f, psi


def declared_moment_order(alpha: float) -> float:
    return max(2.0 * alpha, 1.0)
