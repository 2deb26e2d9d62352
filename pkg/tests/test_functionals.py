import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bubble, bubble_dr, continuum_energy
from wavemaps.evolution import Trajectory
from wavemaps.exceptions import ParameterError
from wavemaps.functionals import (e_norm, e_norm_sq, energy, h_norm, h_norm_sq, local_e_norm,
                                  potential_energy, strichartz_norm)
from wavemaps.grid import FieldState, geometric_ratio, integrate, make_grid

# continuum energy of Q_0.01 - Q_1 for k = 2 by adaptive quadrature (oracles.continuum_energy)
TWO_BUBBLE_ENERGY_K2 = 50.25541285647782


def geo(R, N, r_min, k=1):
    return make_grid(R, N, "geometric", geometric_ratio(r_min, R, N), k=k)


def test_energy_of_class_constants_vanishes():
    g = make_grid(10.0, 128)
    for ell in (0, 1, -2):
        rep = energy(FieldState(g, np.full(128, ell * np.pi), ell=ell, m=ell))
        assert rep.total == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_bubble_energy_is_4_pi_k(k, lam):
    g = geo(1e4 * lam, 16384, 1e-5 * lam, k)
    rep = energy(FieldState(g, bubble(lam, k, g.r), m=1))
    assert rep.total == pytest.approx(4 * np.pi * k, rel=1e-3)
    assert rep.kinetic == 0.0


def test_continuum_oracle_reproduces_bubble_energy():
    e = continuum_energy(lambda r: bubble(1.0, 1, r), lambda r: bubble_dr(1.0, 1, r), 1,
                         [1e-8, 1e-2, 1.0, 1e2, 1e8])
    assert e == pytest.approx(4 * np.pi, rel=1e-10)


def test_two_bubble_energy_matches_quadrature_oracle():
    g = geo(1e4, 16384, 1e-6, k=2)
    psi = bubble(0.01, 2, g.r) - bubble(1.0, 2, g.r)
    e = energy(FieldState(g, psi)).total
    assert e == pytest.approx(TWO_BUBBLE_ENERGY_K2, rel=1e-4)
    assert e == pytest.approx(16 * np.pi, rel=1e-2)


def test_energy_parts_add_up():
    g = make_grid(10.0, 512)
    s = FieldState(g, np.sin(g.r) * np.exp(-g.r), np.cos(g.r) * np.exp(-g.r))
    rep = energy(s)
    assert rep.total == rep.kinetic + rep.potential
    assert rep.kinetic > 0 and rep.potential > 0
    assert rep.potential == potential_energy(g, s.psi)


def test_h_norm_of_gaussian_profile():
    # int ((d_r psi)^2 + psi^2/r^2) r dr for psi = r exp(-r^2) equals 1/2
    g = make_grid(8.0, 65536)
    psi = g.r * np.exp(-g.r**2)
    assert h_norm_sq(g, psi) == pytest.approx(0.5, abs=1e-8)


def test_norm_trivial_cases():
    g = make_grid(10.0, 256)
    assert e_norm(FieldState(g, np.zeros(256))) == 0.0
    v = np.exp(-g.r)
    s = FieldState(g, np.zeros(256), v)
    assert e_norm_sq(s) == pytest.approx(g.volumes @ v**2, rel=1e-15)


def test_e_norm_requires_trivial_class_or_offset():
    g = make_grid(50.0, 256)
    s = FieldState(g, bubble(1.0, 1, g.r), m=1)
    with pytest.raises(ParameterError):
        e_norm(s)
    assert np.isfinite(e_norm(s, offset=0.0))


def test_local_norm_on_degenerate_interval_is_zero():
    g = make_grid(10.0, 256)
    s = FieldState(g, np.exp(-g.r))
    assert local_e_norm(s, 3.0, 3.0) == 0.0
    with pytest.raises(ParameterError):
        local_e_norm(s, 4.0, 3.0)


def test_bubble_exterior_tail_decays_like_inverse_square():
    g = make_grid(400.0, 40000)
    s = FieldState(g, bubble(1.0, 1, g.r), m=1)
    ratio = local_e_norm(s, 10.0, 400.0, np.pi) / local_e_norm(s, 20.0, 400.0, np.pi)
    assert ratio == pytest.approx(4.0, rel=0.1)


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(0.0, 10.0), seed=st.integers(0, 2**32 - 1))
def test_local_norms_add_up_to_global(rho, seed):
    g = make_grid(10.0, 128, "geometric", 0.95)
    rng = np.random.default_rng(seed)
    s = FieldState(g, rng.standard_normal(128) * g.r / (1 + g.r**2), rng.standard_normal(128))
    total = e_norm_sq(s)
    parts = local_e_norm(s, 0.0, rho) + local_e_norm(s, rho, 10.0)
    assert parts == pytest.approx(total, rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(amp=st.floats(0.0, 1.0), width=st.floats(0.3, 3.0))
def test_potential_energy_below_norm_bound(amp, width):
    # sin^2 x <= x^2 and |psi| <= 1 give E_p / (2 pi) <= ||psi||_H^2 / 2
    g = make_grid(20.0, 512)
    psi = amp * (g.r / width) * np.exp(-((g.r / width) ** 2)) * np.sqrt(2 * np.e)
    psi = np.clip(psi, -1, 1)
    assert potential_energy(g, psi) / (2 * np.pi) <= 0.5 * h_norm_sq(g, psi) * (1 + 1e-12)
    assert potential_energy(g, psi) >= 0


def test_energy_vanishes_only_on_constants():
    g = make_grid(10.0, 256)
    assert potential_energy(g, np.zeros(256)) == 0.0
    assert potential_energy(g, 1e-4 * np.exp(-g.r**2)) > 1e-10


def test_energy_is_scale_invariant():
    g = geo(50.0, 4096, 1e-4, k=1)
    f = lambda r: 0.8 * r * np.exp(-r * r)  # noqa: E731
    s = FieldState(g, f(g.r), 0.3 * f(g.r))
    scaled = FieldState(g.scaled(3.0), f(g.r), 0.3 * f(g.r) / 3.0)
    assert energy(scaled).total == pytest.approx(energy(s).total, rel=1e-12)
    # the same check through resampling on an unrelated grid
    g2 = geo(150.0, 8192, 3e-4, k=1)
    resampled = FieldState(g2, f(g2.r / 3.0), 0.3 * f(g2.r / 3.0) / 3.0)
    assert energy(resampled).total == pytest.approx(energy(s).total, rel=1e-6)


def test_h_norm_agrees_with_integrate_on_smooth_data():
    g = make_grid(8.0, 8192)
    psi = g.r * np.exp(-g.r**2)
    dpsi = (1 - 2 * g.r**2) * np.exp(-g.r**2)
    assert h_norm(g, psi) ** 2 == pytest.approx(integrate(g, dpsi**2 + psi**2 / g.r**2), rel=1e-6)


def _traj(g, fields, times):
    return Trajectory([FieldState(g, f, time=t) for f, t in zip(fields, times)])


def test_strichartz_norm_of_zero_is_zero():
    g = make_grid(10.0, 64)
    assert strichartz_norm(_traj(g, [np.zeros(64)] * 3, [0, 1, 2]), 0.0, 2.0) == 0.0


def test_strichartz_norm_of_static_field():
    g = make_grid(10.0, 4096)
    psi = g.r * np.exp(-g.r**2)
    inner = np.sqrt(integrate(g, psi**6 / g.r**4))
    s = strichartz_norm(_traj(g, [psi] * 3, [0.0, 1.0, 2.0]), 0.0, 2.0)
    assert s == pytest.approx((2 * inner) ** (1 / 3), rel=1e-12)


def test_strichartz_norm_requires_covered_window():
    g = make_grid(10.0, 64)
    tr = _traj(g, [np.zeros(64)] * 3, [0, 1, 2])
    with pytest.raises(ParameterError):
        strichartz_norm(tr, 0.0, 3.0)
    with pytest.raises(ParameterError):
        strichartz_norm(tr, 1.0, 1.0)
