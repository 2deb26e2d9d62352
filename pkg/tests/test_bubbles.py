import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_lambda, bubble, bubble_dr
from suite import suite_grid
from wavemaps.bubbles import (bubble_state, modulation_fit, proximity, proximity_min,
                              proximity_objective, q_eval, single_bubble_fit, two_bubble_state)
from wavemaps.exceptions import ParameterError
from wavemaps.functionals import energy, potential_energy
from wavemaps.grid import FieldState, geometric_ratio, make_grid
from wavemaps.scenarios import two_bubble_perturbed

# brute-force lambda for Q_3 + 0.01 r/(1 + r^2), k = 1
# (oracles.brute_force_lambda, 10^4 points on [2, 4.5])
BUMP_LAMBDA_ORACLE = 2.989434949483182


@pytest.mark.parametrize("k", [1, 2, 3])
def test_q_eval_values(k):
    assert q_eval(1.0, k, 1.0) == pytest.approx(np.pi / 2)
    assert q_eval(0.3, k, 0.0) == 0.0
    assert q_eval(0.3, k, np.inf) == pytest.approx(np.pi)
    assert q_eval(0.3, k, 1e12) == pytest.approx(np.pi)
    assert q_eval(2.0, 1, 2.0) == pytest.approx(np.pi / 2)


def test_bubble_state_class():
    g = make_grid(50.0, 256)
    s = bubble_state(g, 2.0, time=1.5)
    assert (s.ell, s.m, s.time) == (0, 1, 1.5)


def test_two_bubble_shape_and_sign():
    g = make_grid(1000.0, 4096, "geometric", geometric_ratio(1e-5, 1000.0, 4096))
    plus = two_bubble_state(g, 1, 0.1, 10.0)
    minus = two_bubble_state(g, -1, 0.1, 10.0)
    assert (plus.ell, plus.m) == (0, 0)
    assert abs(plus.psi[0]) < 1e-2 and abs(plus.psi[-1]) < 0.03
    # the plateau peaks at r = sqrt(lam mu) = 1 with value pi - 4 arctan(0.1)
    i = np.argmax(plus.psi)
    assert g.r[i] == pytest.approx(1.0, rel=1e-2)
    assert plus.psi[i] == pytest.approx(np.pi - 4 * np.arctan(0.1), rel=1e-6)
    np.testing.assert_array_equal(minus.psi, -plus.psi)


def test_two_bubble_requires_ordered_scales():
    g = make_grid(10.0, 64)
    for lam, mu in ((1.0, 1.0), (2.0, 1.0), (0.0, 1.0)):
        with pytest.raises(ParameterError):
            two_bubble_state(g, 1, lam, mu)
    with pytest.raises(ParameterError):
        two_bubble_state(g, 0, 0.1, 1.0)


def test_two_bubble_background_keeps_its_velocity_and_class():
    g = make_grid(10.0, 64)
    bg = FieldState(g, np.full(64, 0.01), np.full(64, 0.2), time=3.0)
    s = two_bubble_state(g, 1, 0.1, 1.0, bg)
    np.testing.assert_array_equal(s.psidot, bg.psidot)
    assert s.time == 3.0
    np.testing.assert_allclose(s.psi, q_eval(0.1, 1, g.r) - q_eval(1.0, 1, g.r) + 0.01)


def test_two_bubble_energy_is_twice_the_bubble():
    g = make_grid(1e4, 16384, "geometric", geometric_ratio(1e-6, 1e4, 16384), k=2)
    e = energy(two_bubble_state(g, -1, 0.01, 1.0)).total
    assert e == pytest.approx(16 * np.pi, rel=1e-2)


def test_single_fit_recovers_exact_bubble():
    g = make_grid(300.0, 30000)
    f = single_bubble_fit(g, q_eval(3.0, 1, g.r))
    assert f.lam == pytest.approx(3.0, rel=1e-3)
    assert f.distance < 1e-3 and not f.low_confidence


def test_single_fit_with_bump_matches_brute_force():
    g = make_grid(50.0, 4096)
    psi = q_eval(3.0, 1, g.r) + 0.01 * g.r / (1 + g.r**2)
    f = single_bubble_fit(g, psi)
    assert f.lam == pytest.approx(3.0, rel=0.02)
    assert f.lam == pytest.approx(BUMP_LAMBDA_ORACLE, rel=1e-3)


@pytest.mark.slow
def test_brute_force_lambda_oracle_value():
    lam, _ = brute_force_lambda(lambda r: bubble(3.0, 1, r) + 0.01 * r / (1 + r * r),
                                lambda r: bubble_dr(3.0, 1, r) + 0.01 * (1 - r * r) / (1 + r * r) ** 2,
                                1, 2.0, 4.5)
    assert lam == pytest.approx(BUMP_LAMBDA_ORACLE, rel=1e-12)


def test_single_fit_without_crossing_scans():
    g = make_grid(50.0, 2048)
    # too flat to reach pi/2: falls back to the scan
    f = single_bubble_fit(g, 0.4 * q_eval(2.0, 1, g.r))
    assert f.lam > 0 and f.distance > 0


def test_single_fit_distance_shrinks_with_energy_excess():
    g = make_grid(100.0, 8192)
    q = q_eval(2.0, 1, g.r)
    bump = (g.r / 2.0) * np.exp(-((g.r - 4.0) / 2.0) ** 2)
    excess, dist = [], []
    for eps in (0.2, 0.1, 0.05, 0.02):
        psi = q + eps * bump
        excess.append(potential_energy(g, psi) - potential_energy(g, q))
        dist.append(single_bubble_fit(g, psi).distance)
    assert all(np.diff(excess) < 0) and all(np.diff(dist) < 0)


def test_proximity_of_exact_pair():
    g = suite_grid(2)
    s = two_bubble_state(g, 1, 0.01, 1.0)
    plus = proximity(s, 1)
    assert plus.d_value <= 1e-4 * (1 + 1e-6)
    assert plus.d_value == plus.residual_sq + plus.separation
    assert plus.lam <= plus.mu
    assert proximity(s, -1).d_value >= 1.0


def test_proximity_min_picks_the_sign():
    g = suite_grid(1)
    for iota in (1, -1):
        fit, sign = proximity_min(two_bubble_state(g, iota, 0.02, 2.0))
        assert sign == iota == fit.sign


def test_proximity_rejects_nontrivial_class():
    g = suite_grid(1)
    with pytest.raises(ParameterError):
        proximity(bubble_state(g, 1.0), 1)
    with pytest.raises(ParameterError):
        proximity(FieldState(g, np.zeros(g.N)), 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), eps=st.sampled_from([0.0, 0.01, 0.3]),
       iota=st.sampled_from([1, -1]))
def test_sign_symmetry_is_exact(seed, eps, iota):
    g = suite_grid(1)
    s = two_bubble_perturbed(g, iota, 0.01, 1.0, eps, seed=seed)
    a, b = proximity(s, 1), proximity(-s, -1)
    assert a.d_value == b.d_value and a.lam == b.lam and a.mu == b.mu
    (fa, sa), (fb, sb) = proximity_min(s), proximity_min(-s)
    assert fa.d_value == fb.d_value
    if fa.d_value != proximity(s, -sa).d_value:
        assert sa == -sb


def test_scaling_equivariance():
    g = make_grid(100.0, 1024, "geometric", geometric_ratio(1e-3, 100.0, 1024))
    s = two_bubble_perturbed(g, -1, 0.02, 2.0, 0.05, seed=4)
    scaled = FieldState(g.scaled(4.0), s.psi, s.psidot / 4.0)
    a, b = proximity(s, -1), proximity(scaled, -1)
    assert b.lam == pytest.approx(4 * a.lam, rel=1e-8)
    assert b.mu == pytest.approx(4 * a.mu, rel=1e-8)
    assert b.d_value == pytest.approx(a.d_value, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(np.log(1e-3), np.log(100.0)), y=st.floats(np.log(1e-3), np.log(100.0)),
       which=st.integers(0, 2))
def test_result_never_exceeds_a_probe(x, y, which):
    states = _probe_states()
    s, sign = states[which]
    fit = proximity(s, sign)
    lam, mu = np.exp(min(x, y)), np.exp(max(x, y))
    res, sep = proximity_objective(s, sign, lam, mu)
    assert fit.d_value <= res + sep + 1e-12


_PROBE_CACHE = []


def _probe_states():
    if not _PROBE_CACHE:
        g = suite_grid(1)
        _PROBE_CACHE.extend([
            (two_bubble_perturbed(g, 1, 0.01, 1.0, 0.1, seed=9), 1),
            (two_bubble_perturbed(g, 1, 0.01, 1.0, 0.1, seed=9), -1),
            (FieldState(g, 0.5 * np.exp(-(g.r - 3.0) ** 2)), 1),
        ])
    return _PROBE_CACHE


def test_proximity_decreases_with_perturbation_size():
    g = suite_grid(1)
    d = [proximity(two_bubble_perturbed(g, 1, 0.01, 1.0, eps, seed=3), 1).d_value
         for eps in (0.3, 0.1, 0.03, 0.01)]
    assert all(np.diff(d) <= 0)


def test_modulation_fit_returns_exact_scales():
    g = suite_grid(1)
    s = two_bubble_state(g, 1, 0.05, 2.0)
    fit = modulation_fit(s, 1, (0.06, 1.8))
    assert fit.lam == pytest.approx(0.05, rel=1e-5)
    assert fit.mu == pytest.approx(2.0, rel=1e-5)
    assert fit.residual_sq < 1e-10
