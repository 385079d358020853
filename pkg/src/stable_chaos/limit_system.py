"""Mean-field particle version of the limit dynamics and a Picard scheme.

Particles keep their own main jumps (same candidate atoms as the finite
run, re-accepted against their own state) and receive the common increment
(mu~_{k delta}(f))^(1/alpha) dS_k at the end of every slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .finite_system import AtomLog, Trajectory, run_system, slot_count, substeps_per_slot
from .metric_a import EmpiricalMeasure, coupled_a_distance
from .model import ModelSpec
from .stable_core import StableParams


def _check_inputs(sub, atoms: AtomLog, init):
    n_slots = slot_count(atoms.T, sub.delta)
    if len(sub.increments) != n_slots:
        raise ValueError(f"subordinator has {len(sub.increments)} slots, atom log spans {n_slots}")
    if len(init) != atoms.N:
        raise ValueError(f"{len(init)} initial positions for N={atoms.N} particles")
    return n_slots


def simulate_mean_field(spec: ModelSpec, params: StableParams, sub, atoms: AtomLog, init,
                        h: Optional[float] = None, rng=None, tracked=(0, 1)) -> Trajectory:
    """Mean-field system driven by ``sub`` and the main-jump marks of ``atoms``.

    ``rng`` is accepted for interface symmetry; the run itself is a
    deterministic function of its inputs.
    """
    _check_inputs(sub, atoms, init)
    n_sub = substeps_per_slot(sub.delta, h)
    return run_system("mean_field", spec, params, atoms, np.asarray(init, dtype=float), sub.delta,
                      n_sub, d_s=sub.increments, tracked=tracked)


@dataclass
class PicardMeans:
    """Per-slot summaries of an iterate's empirical law: mu(f) and the
    drift functional mu(a~) (ignored by models whose drift is free of mu)."""

    mu_f: np.ndarray
    mu_drift: np.ndarray

    @classmethod
    def constant(cls, value: float, n_slots: int, drift_value: float = 0.0) -> "PicardMeans":
        return cls(np.full(n_slots, float(value)), np.full(n_slots, float(drift_value)))


def initial_drift_functional(spec: ModelSpec, init) -> float:
    if spec.name != "reference":
        return 0.0
    cap = spec.settings["cap"]
    from .metric_a import a_eval
    return float(np.mean(np.minimum(a_eval(spec.q, np.asarray(init, dtype=float)), cap)))


def picard_iterate(spec: ModelSpec, params: StableParams, sub, prev_mean, atoms: AtomLog, init,
                   h: Optional[float] = None, rng=None, tracked=(0, 1)):
    """One Picard step with the law frozen to the previous iterate's per-slot values.

    ``prev_mean`` is a :class:`PicardMeans` or an array of mu(f) values; in
    the latter case the drift functional is taken from the initial law.
    Returns ``(trajectory, next_mean)``.
    """
    n_slots = _check_inputs(sub, atoms, init)
    if not isinstance(prev_mean, PicardMeans):
        mu_f = np.asarray(prev_mean, dtype=float)
        prev_mean = PicardMeans(mu_f, np.full(len(mu_f), initial_drift_functional(spec, init)))
    if len(prev_mean.mu_f) != n_slots:
        raise ValueError("prev_mean needs one value per slot")
    tol = 1e-12 * spec.f_max
    if np.any(prev_mean.mu_f < spec.f_min - tol) or np.any(prev_mean.mu_f > spec.f_max + tol):
        raise ValueError("prev_mean outside [f_min, f_max]")
    n_sub = substeps_per_slot(sub.delta, h)
    traj = run_system("picard", spec, params, atoms, np.asarray(init, dtype=float), sub.delta, n_sub,
                      d_s=sub.increments, frozen_mu_f=prev_mean.mu_f,
                      frozen_mu_drift=prev_mean.mu_drift, tracked=tracked)
    return traj, PicardMeans(traj.mu_f.copy(), traj.mu_drift.copy())


@dataclass
class PicardRun:
    trajectories: list
    means: list
    distances: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        d = self.distances
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


def picard_solve(spec: ModelSpec, params: StableParams, sub, atoms: AtomLog, init, start,
                 iterations: int = 6, h: Optional[float] = None) -> PicardRun:
    """Iterate from ``start`` and record sup over grid times of the coupled
    a-distance between successive iterates."""
    trajs, means = [], []
    prev = start
    for _ in range(iterations):
        traj, prev = picard_iterate(spec, params, sub, prev, atoms, init, h)
        trajs.append(traj)
        means.append(prev)
    d = [max(coupled_a_distance(a, b, spec.q) for a, b in zip(t0.slot_states, t1.slot_states))
         for t0, t1 in zip(trajs[:-1], trajs[1:])]
    return PicardRun(trajs, means, np.array(d))


def empirical_conditional_law(traj: Trajectory, t: float) -> EmpiricalMeasure:
    return EmpiricalMeasure(traj.state_at(t).copy())
