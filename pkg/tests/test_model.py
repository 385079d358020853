import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stable_chaos.metric_a import EmpiricalMeasure, a_eval
from stable_chaos.model import (InitialLaw, ModelSpec, ModelValidationError, constant_model, declared_moment_order,
                                evaluate_coefficients, reference_model, validate_model)


def test_reference_model_validates():
    rep = validate_model(reference_model(), 10_000, np.random.default_rng(0))
    assert rep.passed, rep.failures
    assert rep["rate_a_lipschitz"].worst <= 1.5 + 1e-9
    assert rep["drift_linear_in_mu"].worst <= 1e-12


def test_constant_rate_passes_trivially():
    rep = validate_model(constant_model(0.5), 10_000)
    assert rep.passed
    assert rep["rate_a_lipschitz"].worst == 0.0


def test_unbounded_rate_fails_with_witness():
    base = constant_model(0.5)
    bad = ModelSpec(**{**base.__dict__, "rate": lambda x: np.asarray(x, dtype=float), "kind": None})
    rep = validate_model(bad, 10_000)
    names = [c.name for c in rep.failures]
    assert "rate_upper" in names
    assert rep["rate_upper"].witness
    with pytest.raises(ModelValidationError):
        rep.raise_for_failure()


def test_validate_needs_samples():
    with pytest.raises(ValueError):
        validate_model(reference_model(), 100)


def test_evaluate_coefficients_examples():
    spec = reference_model()
    b, f, psi = evaluate_coefficients(spec, 0.7, EmpiricalMeasure([0.7]))
    assert b == 0.0
    mu = [0.5, 2.0, 4.0]
    b0, _, _ = evaluate_coefficients(spec, 0.0, mu)
    assert b0 == pytest.approx(np.mean(np.minimum(a_eval(0.475, np.array(mu)), 1.0)))
    assert b0 >= 0
    _, f_inf, _ = evaluate_coefficients(spec, 1e6, mu)
    assert f_inf == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError, match="state invariant violated upstream"):
        evaluate_coefficients(spec, -1e-3, mu)


def test_reference_bounds_on_random_positions():
    spec = reference_model()
    g = np.random.default_rng(1)
    x = g.exponential(5.0, 100_000)
    f = spec.rate(x)
    assert f.min() >= 0.5 and f.max() <= 2.0
    psi = spec.jump(x)
    assert np.all(psi > 0) and np.all(psi <= 1.0)
    b = spec.drift(x[:1000], x[1000:2000])
    assert np.max(np.abs(b)) <= 2 * 1.0 * 1.0


@given(st.lists(st.floats(0, 50), min_size=3, max_size=3), st.lists(st.floats(0, 50), min_size=3, max_size=3),
       st.floats(0, 50))
@settings(max_examples=50, deadline=None)
def test_drift_linear_in_measure(mu, nu, x):
    spec = reference_model()
    mix = spec.drift(np.array([x]), np.array(mu + nu))[0]
    avg = 0.5 * (spec.drift(np.array([x]), np.array(mu))[0] + spec.drift(np.array([x]), np.array(nu))[0])
    assert mix == pytest.approx(avg, abs=1e-12)


def test_initial_law_roundtrip_and_moment():
    law = InitialLaw()
    assert InitialLaw.from_dict(law.to_dict()) == law
    assert law.moment(declared_moment_order(0.5)) == pytest.approx(1.0)
    ln = InitialLaw("lognormal", mean=0.0, sigma=0.3)
    assert InitialLaw.from_dict(ln.to_dict()) == ln
    with pytest.raises(ValueError):
        InitialLaw("uniform", low=0.0, high=1.0)


def test_model_parameter_checks():
    with pytest.raises(ValueError):
        reference_model(f_min=0.0)
    with pytest.raises(ValueError):
        constant_model(2.0, f_max=1.0)
