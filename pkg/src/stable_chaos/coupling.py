"""Coupled subordinator built from the finite system's atom log.

On slot k = (k delta, (k+1) delta] the atoms accepted with the frozen rate
f(X^j_{k delta}) give a count P_k and a scaled sum A_k. Then

    Y_k  = (N / P_k)^(1/alpha) A_k      (fresh draw from nu if P_k = 0)
    dS_k = delta^(1/alpha) Y_k

so that A_k = (P_k / (N delta))^(1/alpha) dS_k holds slot by slot.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .finite_system import Trajectory, frozen_acceptance, interaction_paths
from .stable_core import RngStream, StableParams, sample_stable

IDENTITY_RTOL = 2.0 ** -40

PROVENANCE_ATOMS = "constructed-from-atoms"
PROVENANCE_FRESH = "fresh-draw"


class CouplingIdentityError(AssertionError):
    """The per-slot scaling identity failed beyond rounding."""


@dataclass(frozen=True)
class SlotRecord:
    k: int
    P: int
    A: float
    Y: float
    dS: float
    provenance: str


@dataclass
class SlotRecords:
    """Columnar per-slot records; indexing yields :class:`SlotRecord`."""

    k: np.ndarray
    P: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    dS: np.ndarray
    fresh: np.ndarray
    mu_f: np.ndarray
    N: int
    delta: float
    alpha: float

    def __len__(self) -> int:
        return len(self.k)

    def __getitem__(self, i) -> SlotRecord:
        return SlotRecord(int(self.k[i]), int(self.P[i]), float(self.A[i]), float(self.Y[i]),
                          float(self.dS[i]), PROVENANCE_FRESH if self.fresh[i] else PROVENANCE_ATOMS)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "P_k", "A_k", "Y_k", "dS_k", "provenance"])
            for r in self:
                w.writerow([r.k, r.P, repr(r.A), repr(r.Y), repr(r.dS), r.provenance])


@dataclass
class CoupledSubordinator:
    delta: float
    increments: np.ndarray
    provenance: list

    @property
    def grid(self) -> np.ndarray:
        return self.delta * np.arange(len(self.increments) + 1)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    @property
    def T(self) -> float:
        return self.delta * len(self.increments)


def build_slot_records(traj: Trajectory, spec, rng: RngStream) -> SlotRecords:
    """Per-slot counts, sums and stable variables from the frozen re-filtering.

    Empty slots take Y_k from substream ("fresh", k) of ``rng``, which must
    be disjoint from the streams that produced the atoms.
    """
    if not isinstance(rng, RngStream):
        raise TypeError("build_slot_records needs an RngStream for keyed fresh draws")
    if traj.slot_states is None or traj.slot_states.shape[0] != traj.n_slots + 1:
        raise ValueError("missing slot-start state")
    alpha = traj.alpha
    inv = 1.0 / alpha
    n = traj.n_slots
    N = traj.N
    atoms = traj.atoms
    slots = atoms.slots(traj.delta)
    acc = frozen_acceptance(traj, spec)
    P = np.bincount(slots[acc], minlength=n).astype(np.int64)
    A = np.bincount(slots[acc], weights=atoms.u[acc], minlength=n) * float(N) ** (-inv)
    fresh = P == 0
    Y = np.empty(n)
    nz = ~fresh
    Y[nz] = (N / P[nz].astype(float)) ** inv * A[nz]
    params = StableParams(alpha, 0.5 * alpha)
    for k in np.flatnonzero(fresh):
        Y[k] = sample_stable(params, rng.substream("fresh", int(k)))
    dS = traj.delta ** inv * Y
    mu_f = np.array([np.mean(spec.rate(traj.slot_states[k])) for k in range(n)])
    return SlotRecords(np.arange(n), P, A, Y, dS, fresh, mu_f, N, traj.delta, alpha)


def paste_subordinator(records: SlotRecords, delta: float) -> CoupledSubordinator:
    if len(records) == 0:
        raise ValueError("no slot records")
    if not np.array_equal(records.k, np.arange(len(records))):
        raise ValueError("gap in slot indices")
    if np.any(records.dS <= 0.0):
        raise ValueError("subordinator increments must be positive")
    prov = [PROVENANCE_FRESH if f else PROVENANCE_ATOMS for f in records.fresh]
    return CoupledSubordinator(float(delta), np.array(records.dS, dtype=float), prov)


def identity_residuals(records: SlotRecords) -> np.ndarray:
    """Relative residual of A_k (N delta / P_k)^(1/alpha) = dS_k on nonempty slots."""
    nz = records.P > 0
    lhs = records.A[nz] * (records.N * records.delta / records.P[nz].astype(float)) ** (1.0 / records.alpha)
    return np.abs(lhs - records.dS[nz]) / records.dS[nz]


@dataclass
class IdentityReport:
    max_residual: float
    nonempty_slots: int
    E: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r2_boundary: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    q: float

    @property
    def r(self) -> np.ndarray:
        return self.r1 + self.r2

    @property
    def abs_r_q(self) -> float:
        return float(abs(self.r[-1]) ** self.q)

    @property
    def abs_r1_q(self) -> float:
        return float(abs(self.r1[-1]) ** self.q)

    @property
    def abs_r2_q(self) -> float:
        return float(abs(self.r2[-1]) ** self.q)

    def summary(self) -> dict:
        return {
            "max_identity_residual": self.max_residual,
            "nonempty_slots": self.nonempty_slots,
            "E_mean": float(np.mean(self.E)),
            "E_sd": float(np.std(self.E)),
            "R1_T": float(self.r1[-1]),
            "R2_T": float(self.r2[-1]),
            "abs_R_T_q": self.abs_r_q,
        }


def verify_interaction_identity(traj: Trajectory, records: SlotRecords, spec, q: float | None = None) -> IdentityReport:
    """Check the slot identity and split A^N - int mu(f)^(1/alpha) dS into
    the frozen-rate error R1 and the Poisson-replacement error R2.

    R2 at grid time m delta is sum_{k<m} E_k dS_k. ``r2_boundary`` recomputes
    it with the upper-integer slot convention, where the extra slot's
    contribution is cancelled by the boundary terms E1 and E2.
    """
    q = spec.q if q is None else q
    res = identity_residuals(records)
    worst = float(res.max()) if res.size else 0.0
    if worst > IDENTITY_RTOL:
        k = int(np.flatnonzero(records.P > 0)[int(np.argmax(res))])
        raise CouplingIdentityError(f"slot {k}: relative residual {worst:.3e} exceeds 2^-40")
    inv = 1.0 / records.alpha
    n = len(records)
    E = (records.P / (records.N * records.delta)) ** inv - records.mu_f ** inv
    ed = E * records.dS
    r2 = np.concatenate(([0.0], np.cumsum(ed)))
    paths = interaction_paths(traj, spec)
    integral = np.concatenate(([0.0], np.cumsum(records.mu_f ** inv * records.dS)))
    r2_direct = paths.frozen - integral
    scale = np.maximum(1.0, np.abs(paths.frozen) + np.abs(integral))
    if np.max(np.abs(r2_direct - r2) / scale) > 1e-9:
        raise CouplingIdentityError("R2 decomposition does not match A^{N,delta} - integral")
    E1 = np.zeros(n + 1)
    E2 = np.zeros(n + 1)
    E1[:n] = records.A
    E2[:n] = records.mu_f ** inv * records.dS
    through = np.concatenate((np.cumsum(ed), [np.sum(ed)]))
    r2_boundary = through - E1 + E2
    return IdentityReport(worst, int(np.count_nonzero(records.P)), E, paths.r1, r2, r2_boundary, E1, E2, q)
