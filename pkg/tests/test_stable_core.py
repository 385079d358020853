import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma

from stable_chaos.stable_core import (CountLaw, IncrementPath, RngStream, StableParams, jump_measure_tail,
                                      laplace_band, random_sum_scaled, sample_stable, sample_subordinator)

LAMS = (0.5, 1.0, 2.0, 4.0)


def laplace_ok(y, alpha, lams=LAMS):
    band = laplace_band(len(y))
    return all(abs(np.mean(np.exp(-lam * y)) - math.exp(-lam ** alpha)) <= band for lam in lams)


def test_params_validation():
    with pytest.raises(ValueError, match="requires q < alpha"):
        StableParams(0.5, 0.5)
    with pytest.raises(ValueError):
        StableParams(1.0, 0.2)
    with pytest.raises(ValueError):
        StableParams(0.5, 0.0)


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(7, 1).substream("atoms", 3).generator().random(5)
    b = RngStream(7, 1).substream("atoms", 3).generator().random(5)
    c = RngStream(7, 2).substream("atoms", 3).generator().random(5)
    d = RngStream(7, 1).substream("atoms", 4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


@given(st.floats(0.05, 0.95), st.integers(0, 2 ** 32))
@settings(max_examples=40, deadline=None)
def test_draws_positive_finite(alpha, seed):
    y = sample_stable(StableParams(alpha, alpha / 2), np.random.default_rng(seed), size=200)
    assert np.all(y > 0) and np.all(np.isfinite(y))


def test_scalar_draw():
    y = sample_stable(StableParams(0.5, 0.25), RngStream(1))
    assert isinstance(y, float) and y > 0


def test_laplace_at_one():
    n = 10 ** 6
    y = sample_stable(StableParams(0.5, 0.25), RngStream(11), size=n)
    assert abs(np.mean(np.exp(-y)) - 0.367879) <= 1.0 / (2 * math.sqrt(n)) * 3


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
def test_laplace_battery(alpha):
    y = sample_stable(StableParams(alpha, alpha / 2), RngStream(12, 0, (int(alpha * 10),)), size=10 ** 6)
    assert laplace_ok(y, alpha)


def test_fractional_moment_closed_form():
    p = StableParams(0.5, 0.25)
    assert p.fractional_moment() == pytest.approx(1.44641, abs=1e-5)
    assert p.fractional_moment() == pytest.approx(gamma(0.5) / gamma(0.75))


def test_fractional_moment_monte_carlo_stable_across_seeds():
    p = StableParams(0.5, 0.25)
    est = [np.mean(sample_stable(p, RngStream(s), size=2 * 10 ** 6) ** 0.25) for s in (1, 2, 3)]
    for e in est:
        assert e == pytest.approx(1.44641, rel=0.01)


def test_alpha_moment_grows_with_sample_size():
    # E[Y^alpha] = inf: block means grow like log(block size); E[Y^q] does not
    p = StableParams(0.5, 0.25)
    y = sample_stable(p, RngStream(5), size=(200, 10 ** 4))
    for r, grows in ((0.5, True), (0.25, False)):
        small = np.median(np.mean(y[:, :100] ** r, axis=1))
        big = np.median(np.mean(y ** r, axis=1))
        if grows:
            assert big > small + 1.0
        else:
            assert abs(big - small) < 0.1


def test_kanter_against_inverse_laplace_oracle():
    # second sampler: for alpha = 1/2, nu is the Levy law, Y = 1 / (4 G), G ~ Gamma(1/2, 1)
    g = np.random.default_rng(3)
    levy = 1.0 / (4.0 * g.gamma(0.5, 1.0, 10 ** 6))
    assert laplace_ok(levy, 0.5)
    ours = sample_stable(StableParams(0.5, 0.25), RngStream(3), size=10 ** 6)
    assert np.mean(levy ** 0.25) == pytest.approx(np.mean(ours ** 0.25), rel=0.01)


@pytest.mark.parametrize("k", [2, 5])
def test_self_similarity(k):
    p = StableParams(0.5, 0.25)
    g = RngStream(21, 0, (k,)).generator()
    n = 200_000
    lhs = sample_stable(p, g, size=(n, k)).sum(axis=1)
    rhs = k ** 2 * sample_stable(p, g, size=n)
    band = 3 * math.sqrt(0.5 / n)
    for lam in LAMS:
        assert abs(np.mean(np.exp(-lam * lhs)) - np.mean(np.exp(-lam * rhs))) <= band


def test_subordinator_errors_and_shapes():
    p = StableParams(0.5, 0.25)
    with pytest.raises(ValueError, match="degenerate grid"):
        sample_subordinator(p, [], RngStream(0))
    with pytest.raises(ValueError, match="degenerate grid"):
        sample_subordinator(p, [0.0], RngStream(0))
    path = sample_subordinator(p, [0.0, 0.3, 1.0], RngStream(0))
    assert isinstance(path, IncrementPath)
    assert path.values[0] == 0.0 and np.all(np.diff(path.values) >= 0)


def test_subordinator_unit_interval_is_nu():
    p = StableParams(0.5, 0.25)
    g = RngStream(31).generator()
    s = np.array([sample_subordinator(p, [0.0, 1.0], g).increments[0] for _ in range(20_000)])
    assert laplace_ok(s, 0.5)


def test_subordinator_two_halves_add_up():
    p = StableParams(0.5, 0.25)
    g = RngStream(32).generator()
    s = np.array([sample_subordinator(p, [0.0, 0.5, 1.0], g).values[-1] for _ in range(40_000)])
    assert abs(np.mean(np.exp(-s)) - math.exp(-1)) <= laplace_band(len(s))


def test_subordinator_small_step():
    p = StableParams(0.5, 0.25)
    inc = sample_subordinator(p, np.linspace(0, 1e-4, 1001), RngStream(33)).increments
    assert np.mean(np.exp(-inc)) > 0.999


def test_increment_path_rejects_negative():
    with pytest.raises(ValueError):
        IncrementPath([0.0, 1.0], [-1.0])


def test_random_sum_fixed_counts():
    p = StableParams(0.5, 0.25)
    P, Z, Y = random_sum_scaled(p, CountLaw.fixed(0), RngStream(1))
    assert P == 0 and Z == 0.0 and Y > 0
    P, Z, Y = random_sum_scaled(p, CountLaw.fixed(1), RngStream(1))
    assert P == 1 and Y == Z


def test_random_sum_identity_exact():
    p = StableParams(0.5, 0.25)
    P, Z, Y = random_sum_scaled(p, CountLaw.poisson(5.0), RngStream(2), size=10_000)
    nz = P > 0
    assert np.allclose(Z[nz], P[nz] ** 2.0 * Y[nz], rtol=1e-12)


def test_random_sum_conditional_law_independent_of_count():
    p = StableParams(0.5, 0.25)
    P, _, Y = random_sum_scaled(p, CountLaw.poisson(5.0), RngStream(3), size=10 ** 6)
    for k in (3, 5, 7):
        sel = Y[P == k]
        assert abs(np.mean(np.exp(-sel)) - math.exp(-1)) <= laplace_band(len(sel))
    assert abs(np.corrcoef(P, np.exp(-Y))[0, 1]) <= 3 / math.sqrt(len(P))


def test_jump_measure_tail():
    p = StableParams(0.5, 0.25)
    assert jump_measure_tail(p, 1.0) == pytest.approx(1 / math.sqrt(math.pi))
    quad, _ = integrate.quad(lambda x: 0.5 * x ** -1.5 / gamma(0.5), 1.0, np.inf)
    assert jump_measure_tail(p, 1.0) == pytest.approx(quad, rel=1e-8)
    assert jump_measure_tail(p, 4.0) / jump_measure_tail(p, 1.0) == pytest.approx(0.5)
    assert jump_measure_tail(p, 1e12) < 1e-5
    with pytest.raises(ValueError, match="tail mass diverges at 0"):
        jump_measure_tail(p, 0.0)
