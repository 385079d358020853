"""The concave distance function ``a`` and transport costs built on it.

    a(x) = c1 x - c2 x^2          0 <= x <= 1
    a(x) = x^q + c                x >= 1
    a(-x) = -a(x)

with c1 = q + q|q-1|, c2 = q|q-1|/2 and c = q + q|q-1|/2 - 1. ``a`` is
linear near 0 and behaves like x^q at infinity.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

ORACLE_MAX_ATOMS = 256


@dataclass(frozen=True)
class DistanceFunctionA:
    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")

    @property
    def c1(self) -> float:
        return self.q + self.q * abs(self.q - 1.0)

    @property
    def c2(self) -> float:
        return 0.5 * self.q * abs(self.q - 1.0)

    @property
    def c(self) -> float:
        return self.q + 0.5 * self.q * abs(self.q - 1.0) - 1.0

    @property
    def lipschitz(self) -> float:
        return self.c1

    @property
    def dominance(self) -> float:
        """C in a(x) <= C min(x, x^q) on the half line."""
        return max(self.c1, 1.0)

    @property
    def ratio_bound(self) -> float:
        """sup |a''/a'| over the half line (attained at x = 1 from the left)."""
        return 2.0 * self.c2 / (self.c1 - 2.0 * self.c2)

    def __call__(self, x, order: int = 0):
        return a_eval(self.q, x, order)


def a_eval(q: float, x, order: int = 0):
    """a, a' or a'' at ``x`` (scalar or array). At x = +-1 the second
    derivative takes the left-branch value and at x = 0 the right limit."""
    fa = DistanceFunctionA(q)
    xa = np.asarray(x, dtype=float)
    sign = np.sign(xa)
    ax = np.abs(xa)
    inner = ax <= 1.0
    # np.where evaluates both branches; keep the power away from 0.
    safe = np.where(inner, 1.0, ax)
    if order == 0:
        val = np.where(inner, fa.c1 * ax - fa.c2 * ax * ax, safe ** q + fa.c)
        out = sign * val
    elif order == 1:
        out = np.where(inner, fa.c1 - 2.0 * fa.c2 * ax, q * safe ** (q - 1.0))
    elif order == 2:
        val = np.where(inner, -2.0 * fa.c2, q * (q - 1.0) * safe ** (q - 2.0))
        out = np.where(xa == 0.0, 1.0, sign) * val
    else:
        raise ValueError("order must be 0, 1 or 2")
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass
class EmpiricalMeasure:
    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float).ravel()
        if len(self.atoms) < 1:
            raise ValueError("empirical measure needs at least one atom")

    @property
    def n(self) -> int:
        return len(self.atoms)

    def integrate(self, fn) -> float:
        return float(np.mean(fn(self.atoms)))


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""


def check_assumption_a(q: float, grid_size: int = 1000, rng: np.random.Generator | None = None,
                       pairs: int = 10_000) -> dict[str, PropertyResult]:
    """Run the invariant battery for ``a`` on a grid plus random pairs.

    ``worst`` is the largest violation (positive means failed) except for
    the a''/a' entries, where it is the observed supremum.
    """
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    fa = DistanceFunctionA(q)
    g = rng if rng is not None else np.random.default_rng(0)
    tol = 1e-12

    xs = np.concatenate([np.linspace(0.0, 1.0, grid_size), np.geomspace(1.0, 1e3, grid_size)])
    xs = xs[np.abs(xs - 1.0) > 4 * np.finfo(float).eps]
    a0, a1, a2 = fa(xs), fa(xs, 1), fa(xs, 2)
    res: dict[str, PropertyResult] = {}

    def add(name, worst, detail=""):
        res[name] = PropertyResult(name, bool(worst <= tol), float(worst), detail)

    add("a(0)=0", abs(fa(0.0)))
    neg = -xs
    add("odd", float(np.max(np.abs(fa(neg) + a0))))
    add("branch_value_C0", abs((fa.c1 - fa.c2) - (1.0 + fa.c)))
    add("branch_slope_C1", abs((fa.c1 - 2 * fa.c2) - q))
    add("concave", float(np.max(a2)))
    add("lipschitz", float(np.max(a1 - fa.c1)))
    add("increasing", float(np.max(-np.diff(a0))) if np.all(np.diff(xs) > 0) else 0.0)
    add("positive_slope", float(np.max(-a1)))

    ratio = np.abs(a2 / a1)
    inner = xs <= 1.0
    outer = ~inner
    sup_inner = float(np.max(ratio[inner]))
    add("ratio_inner_closed_form", float(np.max(np.abs(ratio[inner] - 2 * fa.c2 / (fa.c1 - 2 * fa.c2 * xs[inner])))))
    add("ratio_outer_closed_form", float(np.max(np.abs(ratio[outer] - (1.0 - q) / xs[outer]))))
    res["ratio_bound"] = PropertyResult(
        "ratio_bound", bool(np.max(ratio) <= fa.ratio_bound + tol), float(np.max(ratio)),
        f"sup on [0,1] = {sup_inner:.6g}, closed form {fa.ratio_bound:.6g}",
    )

    pos = np.concatenate([np.linspace(0.0, 1.0, grid_size), np.geomspace(1e-6, 1e3, grid_size)])
    dom = fa(pos) - fa.dominance * np.minimum(pos, pos ** q)
    add("dominance", float(np.max(dom)))

    # Random triples: x >= 0, y real, z >= 0.
    x = g.exponential(2.0, pairs) * g.choice([1e-3, 1.0, 1e2], pairs)
    y = g.normal(0.0, 3.0, pairs) * g.choice([1e-3, 1.0, 1e2], pairs)
    z = g.exponential(2.0, pairs) * g.choice([1e-3, 1.0, 1e2], pairs)
    yp = np.abs(y)
    ax, ay, ayp = fa(x), fa(y), fa(yp)
    add("sublinear", float(np.max(fa(x + yp) - ax - ayp)))
    add("lemma_i", float(np.max(np.abs(ax - ay) - 2 * fa(np.abs(x - y)))))
    add("lemma_ii", float(np.max(np.abs(fa(x + z) - fa(y + z)) - 2 * fa(2 * np.abs(x - y)))))
    add("shift_contraction", float(np.max(np.abs(fa(x + z) - fa(yp + z)) - np.abs(ax - ayp))))
    add("a_lip_by_a", float(np.max(np.abs(ax - ayp) - fa(np.abs(x - yp)))))
    d1 = np.abs(fa(x, 1) - fa(yp, 1))
    da = np.abs(ax - ayp)
    add("derivative_by_a", float(np.max(d1 - fa.ratio_bound * da * (1 + 1e-12))))
    return res


def coupled_a_distance(xs, ys, q: float) -> float:
    """(1/n) sum |a(x_i) - a(y_i)|: the cost of the identity coupling."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 1:
        raise ValueError("coupled_a_distance needs equal-length nonempty inputs")
    return float(np.mean(np.abs(a_eval(q, xs) - a_eval(q, ys))))


def cost_matrix(x: np.ndarray, y: np.ndarray, q: float, cost: str = "power") -> np.ndarray:
    if cost == "power":
        return np.abs(x[:, None] - y[None, :]) ** q
    if cost == "a":
        return np.abs(a_eval(q, x)[:, None] - a_eval(q, y)[None, :])
    raise ValueError(f"unknown cost {cost!r}")


def _as_atoms(m) -> np.ndarray:
    return m.atoms if isinstance(m, EmpiricalMeasure) else np.asarray(m, dtype=float).ravel()


def wasserstein_q_exact(mu, nu, q: float, cost: str = "power") -> float:
    """Optimal transport cost between two uniform measures with equal atom
    counts, by minimum-cost assignment. ``cost`` is ``"power"`` for
    |x-y|^q (no outer root) or ``"a"`` for |a(x)-a(y)|."""
    x, y = _as_atoms(mu), _as_atoms(nu)
    if len(x) != len(y):
        raise ValueError("wasserstein_q_exact needs equal atom counts")
    if len(x) > ORACLE_MAX_ATOMS:
        raise ValueError("oracle regime exceeded; use coupled_a_distance")
    c = cost_matrix(x, y, q, cost)
    rows, cols = linear_sum_assignment(c)
    return float(c[rows, cols].sum() / len(x))


def wasserstein_bruteforce(mu, nu, q: float, cost: str = "power") -> float:
    """Exhaustive minimum over permutations (n <= 8)."""
    x, y = _as_atoms(mu), _as_atoms(nu)
    n = len(x)
    if n != len(y) or n > 8:
        raise ValueError("brute force needs equal counts n <= 8")
    c = cost_matrix(x, y, q, cost)
    idx = np.arange(n)
    best = min(c[idx, list(p)].sum() for p in itertools.permutations(range(n)))
    return float(best / n)


def quantile_coupling_cost(mu, nu, q: float, cost: str = "power") -> float:
    """Cost of the monotone (quantile) coupling between two uniform measures
    whose atom counts divide one another; an upper bound on the optimum."""
    x, y = np.sort(_as_atoms(mu)), np.sort(_as_atoms(nu))
    if len(x) > len(y):
        x, y = y, x
    if len(y) % len(x):
        raise ValueError("atom counts must divide one another")
    xr = np.repeat(x, len(y) // len(x))
    if cost == "power":
        return float(np.mean(np.abs(xr - y) ** q))
    return float(np.mean(np.abs(a_eval(q, xr) - a_eval(q, y))))


def wasserstein_p_sorted(mu, nu, p: float) -> float:
    """W_p for p >= 1 via sorted matching (convex cost, equal counts)."""
    if p < 1.0:
        raise ValueError("sorted matching is optimal only for p >= 1")
    x, y = np.sort(_as_atoms(mu)), np.sort(_as_atoms(nu))
    if len(x) != len(y):
        raise ValueError("equal atom counts required")
    return float(np.mean(np.abs(x - y) ** p) ** (1.0 / p))
