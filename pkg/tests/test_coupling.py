import math

import numpy as np
import pytest

from stable_chaos.coupling import (IDENTITY_RTOL, PROVENANCE_ATOMS, PROVENANCE_FRESH, CouplingIdentityError,
                                   SlotRecords, build_slot_records, identity_residuals, paste_subordinator,
                                   verify_interaction_identity)
from stable_chaos.finite_system import AtomLog, simulate_finite
from stable_chaos.harness import constant_rate_slots, delta_exponent, delta_rule
from stable_chaos.model import constant_model, reference_model
from stable_chaos.stable_core import RngStream, StableParams, laplace_band

P = StableParams(0.5, 0.475)


def _single_atom_run(u0=3.0, N=4):
    spec = constant_model(1.0, f_max=1.0)
    atoms = AtomLog(np.array([0.3]), np.array([2]), np.array([0.5]), np.array([u0]), N, 1.0, 1.0)
    traj = simulate_finite(spec, P, N, 1.0, 0.5, None, RngStream(0), atoms=atoms, init=np.ones(N))
    return spec, traj


def test_single_atom_slot():
    spec, traj = _single_atom_run()
    rec = build_slot_records(traj, spec, RngStream(1))
    r0 = rec[0]
    assert r0.P == 1 and r0.provenance == PROVENANCE_ATOMS
    assert r0.A == pytest.approx(3.0 / 16)
    assert r0.Y == pytest.approx(3.0)
    assert r0.dS == pytest.approx(0.25 * 3.0)
    assert rec[1].P == 0 and rec[1].provenance == PROVENANCE_FRESH and rec[1].Y > 0


def test_fresh_draw_is_keyed_by_slot():
    spec, traj = _single_atom_run()
    a = build_slot_records(traj, spec, RngStream(1))
    b = build_slot_records(traj, spec, RngStream(1))
    assert a.Y[1] == b.Y[1]
    with pytest.raises(TypeError):
        build_slot_records(traj, spec, np.random.default_rng(0))


def test_identity_reference_run():
    spec = reference_model()
    traj = simulate_finite(spec, P, 200, 1.0, delta_rule(200, 0.5, 0.475), None, RngStream(2))
    rec = build_slot_records(traj, spec, RngStream(2))
    assert np.all(identity_residuals(rec) <= IDENTITY_RTOL)
    rep = verify_interaction_identity(traj, rec, spec)
    assert rep.max_residual <= IDENTITY_RTOL
    assert rep.r2_boundary[-1] == pytest.approx(rep.r2[-1], abs=1e-12)


def test_identity_violation_is_hard_failure():
    spec = reference_model()
    traj = simulate_finite(spec, P, 50, 1.0, 0.5, None, RngStream(3))
    rec = build_slot_records(traj, spec, RngStream(3))
    rec.dS[0] *= 1 + 1e-9
    with pytest.raises(CouplingIdentityError):
        verify_interaction_identity(traj, rec, spec)


def test_paste():
    spec, traj = _single_atom_run()
    rec = build_slot_records(traj, spec, RngStream(1))
    sub = paste_subordinator(rec, 0.5)
    assert np.allclose(sub.values, np.concatenate(([0], np.cumsum(rec.dS))))
    assert sub.provenance == [PROVENANCE_ATOMS, PROVENANCE_FRESH]
    one = SlotRecords(*(np.asarray(v)[:1] for v in (rec.k, rec.P, rec.A, rec.Y, rec.dS, rec.fresh, rec.mu_f)),
                      rec.N, rec.delta, rec.alpha)
    assert len(paste_subordinator(one, 0.5).increments) == 1
    gap = SlotRecords(np.array([0, 2]), rec.P, rec.A, rec.Y, rec.dS, rec.fresh, rec.mu_f, rec.N, rec.delta,
                      rec.alpha)
    with pytest.raises(ValueError, match="gap in slot indices"):
        paste_subordinator(gap, 0.5)


def test_all_empty_slots_are_fresh():
    spec = constant_model(0.0, f_max=1.0)
    traj = simulate_finite(spec, P, 10, 4.0, 0.5, None, RngStream(4))
    rec = build_slot_records(traj, spec, RngStream(4))
    assert np.all(rec.fresh) and np.all(rec.P == 0)
    assert len(set(rec.Y.tolist())) == len(rec)


def test_slot_marginals_and_independence():
    rec = constant_rate_slots(0.5, 100_000, RngStream(5))
    y = rec.dS / rec.delta ** 2
    for lam in (0.5, 1.0, 2.0, 4.0):
        assert abs(np.mean(np.exp(-lam * y)) - math.exp(-lam ** 0.5)) <= laplace_band(len(y))
    assert abs(np.corrcoef(rec.P, rec.Y)[0, 1]) <= 3 / math.sqrt(len(rec))


def test_poisson_count_sd():
    rec = constant_rate_slots(0.5, 20_000, RngStream(6), N=400, lam=1.0, delta=0.5)
    ratio = rec.P / (rec.N * rec.delta)
    assert np.std(ratio) == pytest.approx(math.sqrt(1.0 / 200), rel=0.1)


def test_subordinator_at_T_from_constant_rate():
    spec = constant_model(1.0)
    vals = []
    for r in range(3000):
        traj = simulate_finite(spec, P, 20, 1.0, 0.5, 0.5, RngStream(7).substream(r), tracked=())
        vals.append(paste_subordinator(build_slot_records(traj, spec, RngStream(7).substream(r)), 0.5).values[-1])
    vals = np.array(vals)
    assert abs(np.mean(np.exp(-vals)) - math.exp(-1)) <= laplace_band(len(vals))


def test_replacement_error_shrinks_with_N():
    spec = reference_model()
    m = {}
    for N in (100, 400):
        v = []
        for r in range(64):
            rng = RngStream(8).substream(N, r)
            traj = simulate_finite(spec, P, N, 1.0, 0.25, None, rng, tracked=())
            rep = verify_interaction_identity(traj, build_slot_records(traj, spec, rng), spec)
            v.append(rep.abs_r2_q)
        m[N] = np.median(v)
    assert m[400] < m[100]


def test_delta_rule():
    assert delta_exponent(0.5, 0.475) == pytest.approx(-0.23232, abs=1e-5)
    assert 1000 ** delta_exponent(0.5, 0.475) == pytest.approx(0.2010, abs=1e-4)
    assert [delta_rule(n, 0.5, 0.475) for n in (50, 100, 200, 400, 800)] == pytest.approx(
        [0.5, 1 / 3, 1 / 3, 0.25, 0.2])


def test_slot_csv(tmp_path):
    spec, traj = _single_atom_run()
    rec = build_slot_records(traj, spec, RngStream(1))
    rec.write_csv(tmp_path / "slots.csv")
    lines = (tmp_path / "slots.csv").read_text().splitlines()
    assert lines[0] == "k,P_k,A_k,Y_k,dS_k,provenance" and len(lines) == 3
