"""Exact-event simulation of the N-particle system by thinning.

Each particle j carries a Poisson process of candidate times at the
dominating rate f_max with marks z ~ U[0, f_max] and collateral sizes
u ~ nu. A candidate is accepted iff z <= f(X^j_{s-}); then particle j
jumps by psi(X^j_{s-}) and every other particle by u / N^(1/alpha).
Between candidates the coupled drift ODE is integrated by explicit Euler
with a fixed substep. All candidates are kept so that the coupling can
re-filter them with slot-frozen rates.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .model import ModelSpec
from .stable_core import RngStream, StableParams, sample_stable

log = logging.getLogger(__name__)

CLAMP_WARN_FRACTION = 1e-3


class NumericalAbort(RuntimeError):
    """Non-finite state encountered during a simulation."""


def slot_count(T: float, delta: float) -> int:
    n = int(round(T / delta))
    if n < 1 or abs(n * delta - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a multiple of delta={delta}")
    return n


def substeps_per_slot(delta: float, h: Optional[float]) -> int:
    if h is None:
        return 10
    if not 0.0 < h <= delta * (1 + 1e-12):
        raise ValueError("need 0 < h <= delta")
    return max(1, int(math.ceil(delta / h - 1e-9)))


@dataclass
class AtomLog:
    """Marked candidate points (s, j, z, u) of all particles, time ordered."""

    s: np.ndarray
    j: np.ndarray
    z: np.ndarray
    u: np.ndarray
    N: int
    T: float
    f_max: float
    accepted: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.s)

    def slots(self, delta: float) -> np.ndarray:
        """Slot index k with s in (k delta, (k+1) delta]."""
        n = slot_count(self.T, delta)
        k = np.ceil(self.s / delta).astype(np.int64) - 1
        return np.clip(k, 0, n - 1)

    def with_accepted(self, accepted: np.ndarray) -> "AtomLog":
        return AtomLog(self.s, self.j, self.z, self.u, self.N, self.T, self.f_max, accepted)

    def per_particle_counts(self) -> np.ndarray:
        return np.bincount(self.j, minlength=self.N)

    def write_csv(self, path):
        acc = self.accepted if self.accepted is not None else np.zeros(len(self), dtype=bool)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "j", "z", "u", "accepted_live"])
            for row in zip(self.s, self.j, self.z, self.u, acc):
                w.writerow([repr(float(row[0])), int(row[1]), repr(float(row[2])),
                            repr(float(row[3])), int(bool(row[4]))])


def generate_atoms(N: int, T: float, f_max: float, params: StableParams, rng: RngStream) -> AtomLog:
    """Candidate points of N independent marked Poisson processes.

    Particle j draws from substream ("atoms", j) so the log does not depend
    on how particles are scheduled.
    """
    parts_s, parts_j, parts_z, parts_u = [], [], [], []
    for j in range(N):
        g = rng.substream("atoms", j).generator()
        n = g.poisson(f_max * T)
        parts_s.append(np.sort(g.uniform(0.0, T, n)))
        parts_z.append(g.uniform(0.0, f_max, n))
        parts_u.append(sample_stable(params, g, size=n))
        parts_j.append(np.full(n, j, dtype=np.int64))
    s = np.concatenate(parts_s)
    j = np.concatenate(parts_j)
    order = np.lexsort((j, s))
    return AtomLog(s[order], j[order], np.concatenate(parts_z)[order],
                   np.concatenate(parts_u)[order], N, T, f_max)


@dataclass
class Trajectory:
    system: str
    N: int
    T: float
    delta: float
    n_sub: int
    alpha: float
    init: np.ndarray
    slot_states: np.ndarray
    atoms: AtomLog
    mu_f: np.ndarray
    mu_drift: np.ndarray
    live_collateral: np.ndarray
    tracked: np.ndarray
    tracked_times: np.ndarray
    tracked_positions: np.ndarray
    clamp_count: int
    step_count: int
    warnings: list = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return self.slot_states.shape[0] - 1

    @property
    def grid(self) -> np.ndarray:
        return self.delta * np.arange(self.n_slots + 1)

    @property
    def final(self) -> np.ndarray:
        return self.slot_states[-1]

    @property
    def h(self) -> float:
        return self.delta / self.n_sub

    @property
    def accepted_count(self) -> int:
        return int(np.count_nonzero(self.atoms.accepted))

    def state_at(self, t: float) -> np.ndarray:
        k = t / self.delta
        kk = int(round(k))
        if abs(k - kk) > 1e-9 or not 0 <= kk <= self.n_slots:
            raise ValueError(f"t={t} is not on the slot grid")
        return self.slot_states[kk]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "particle", "position"])
            for k, t in enumerate(self.grid):
                for i, x in enumerate(self.slot_states[k]):
                    w.writerow([repr(float(t)), i, repr(float(x))])

    def write_npz(self, path):
        np.savez(path, grid=self.grid, slot_states=self.slot_states, init=self.init,
                 tracked=self.tracked, tracked_times=self.tracked_times,
                 tracked_positions=self.tracked_positions)


def run_system(system: str, spec: ModelSpec, params: StableParams, atoms: AtomLog, init: np.ndarray,
               delta: float, n_sub: int, d_s=None, frozen_mu_f=None, frozen_mu_drift=None,
               tracked=(0, 1)) -> Trajectory:
    kind, p = spec.kernel_args()
    N = atoms.N
    n_slots = slot_count(atoms.T, delta)
    mode = {"finite": K.MODE_FINITE, "mean_field": K.MODE_MEAN_FIELD, "picard": K.MODE_PICARD}[system]
    zeros = np.zeros(n_slots)
    d_s = zeros if d_s is None else np.ascontiguousarray(d_s, dtype=float)
    fmuf = zeros if frozen_mu_f is None else np.ascontiguousarray(frozen_mu_f, dtype=float)
    fmud = zeros if frozen_mu_drift is None else np.ascontiguousarray(frozen_mu_drift, dtype=float)
    tracked = np.array([t for t in tracked if t < N], dtype=np.int64)
    x = np.array(init, dtype=float)
    out = K.run_kernel(x, atoms.s, atoms.j, atoms.z, atoms.u, atoms.slots(delta), n_slots, n_sub,
                       float(delta), kind, p, mode, float(N) ** (-1.0 / params.alpha),
                       1.0 / params.alpha, d_s, fmuf, fmud, tracked)
    slot_states, accepted, live, muf, mud, tr_t, tr_x, clamps, steps, status, k_done = out
    if status != K.STATUS_OK:
        raise NumericalAbort(f"{system} system: non-finite state in slot {k_done - 1} "
                             f"(N={N}, delta={delta}, t <= {k_done * delta:g})")
    traj = Trajectory(system, N, atoms.T, delta, n_sub, params.alpha, np.array(init, dtype=float),
                      slot_states, atoms.with_accepted(accepted), muf, mud, live, tracked,
                      tr_t, tr_x, int(clamps), int(steps))
    if steps and clamps > CLAMP_WARN_FRACTION * steps * N:
        msg = f"negativity clamp fired {clamps} times over {steps} Euler steps"
        traj.warnings.append(msg)
        log.warning(msg)
    return traj


def simulate_finite(spec: ModelSpec, params: StableParams, N: int, T: float, delta: float,
                    h: Optional[float], rng: RngStream, tracked=(0, 1),
                    atoms: AtomLog | None = None, init: np.ndarray | None = None) -> Trajectory:
    """Simulate the interacting system on [0, T] and keep the full atom log.

    ``atoms`` and ``init`` are drawn from ``rng`` substreams unless given.
    """
    if N < 2:
        raise ValueError("need N >= 2")
    if not 0.0 < delta < 1.0:
        raise ValueError("need 0 < delta < 1")
    n_sub = substeps_per_slot(delta, h)
    slot_count(T, delta)
    if atoms is None:
        atoms = generate_atoms(N, T, spec.f_max, params, rng)
    if init is None:
        init = spec.initial_law.sample(rng.substream("init").generator(), N)
    return run_system("finite", spec, params, atoms, init, delta, n_sub, tracked=tracked)


@dataclass
class InteractionPaths:
    grid: np.ndarray
    live: np.ndarray
    frozen: np.ndarray

    @property
    def r1(self) -> np.ndarray:
        return self.live - self.frozen


def frozen_acceptance(traj: Trajectory, spec) -> np.ndarray:
    """z <= f(X^j at the left end of the atom's slot)."""
    if traj.slot_states is None:
        raise ValueError("missing slot-start state")
    slots = traj.atoms.slots(traj.delta)
    x_frozen = traj.slot_states[slots, traj.atoms.j]
    return traj.atoms.z <= np.asarray(spec.rate(x_frozen))


def _cumulative_by_slot(values, slots, n_slots):
    per_slot = np.bincount(slots, weights=values, minlength=n_slots)
    return np.concatenate(([0.0], np.cumsum(per_slot)))


def interaction_paths(traj: Trajectory, spec: ModelSpec) -> InteractionPaths:
    """Interaction term with live and with slot-frozen acceptance, at the
    slot boundaries."""
    atoms = traj.atoms
    if atoms.accepted is None:
        raise ValueError("atom log carries no live acceptance flags")
    scale = float(traj.N) ** (-1.0 / traj.alpha)
    slots = atoms.slots(traj.delta)
    live = _cumulative_by_slot(np.where(atoms.accepted, atoms.u, 0.0), slots, traj.n_slots) * scale
    frozen_acc = frozen_acceptance(traj, spec)
    frozen = _cumulative_by_slot(np.where(frozen_acc, atoms.u, 0.0), slots, traj.n_slots) * scale
    return InteractionPaths(traj.grid, live, frozen)
