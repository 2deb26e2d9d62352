import numpy as np
import pytest

from wavemaps.exceptions import ConfigError, ParameterError, SnapshotFormatError
from wavemaps.functionals import e_norm, energy
from wavemaps.grid import check_class, geometric_ratio, make_grid
from wavemaps.io import write_snapshot
from wavemaps.scenarios import (SCENARIOS, below_threshold, linear_burst, make_initial_data,
                                truncated_bubble, two_bubble_perturbed, validate_params)


def test_zero():
    g = make_grid(10.0, 64)
    s = make_initial_data("zero", {}, g)
    assert (s.ell, s.m) == (0, 0) and energy(s).total == 0.0


def test_pure_bubble_energy():
    g = make_grid(1e4, 16384, "geometric", geometric_ratio(1e-5, 1e4, 16384))
    s = make_initial_data("pure_bubble", {"lam": 1.0}, g)
    assert (s.ell, s.m) == (0, 1)
    assert energy(s).total == pytest.approx(4 * np.pi, rel=1e-3)


def test_truncated_bubble_has_compact_deviation():
    g = make_grid(4.0, 4096)
    s = truncated_bubble(g, 0.05, 1.0)
    assert (s.ell, s.m) == (0, 0) and check_class(s) == []
    assert np.all(s.psi[g.r > 1.0] == 0) and np.all(s.psidot == 0)
    inner = g.r <= 0.5
    np.testing.assert_allclose(s.psi[inner], 2 * np.arctan(g.r[inner] / 0.05))
    moving = truncated_bubble(g, 0.05, 1.0, velocity=1.0)
    assert np.all(moving.psidot[g.r > 1.0] == 0) and moving.psidot.max() > 0
    with pytest.raises(ParameterError):
        truncated_bubble(g, 2.0, 1.0)
    with pytest.raises(ParameterError):
        truncated_bubble(g, 0.1, 5.0)


@pytest.mark.parametrize("k", [1, 2])
def test_below_threshold_energy_contract(k):
    g = make_grid(30.0, 1024, k=k)
    big = below_threshold(g, amplitude=50.0)
    assert energy(big).total < 0.9 * 8 * k * np.pi
    tuned = below_threshold(g, energy_fraction=0.5)
    assert energy(tuned).total == pytest.approx(0.5 * 8 * k * np.pi, rel=1e-10)
    with pytest.raises(ParameterError):
        below_threshold(g, energy_fraction=0.95)


def test_perturbed_two_bubble_is_seeded_and_sized():
    g = make_grid(50.0, 1024, "geometric", 0.99)
    a = two_bubble_perturbed(g, 1, 0.1, 2.0, 0.05, seed=3)
    b = two_bubble_perturbed(g, 1, 0.1, 2.0, 0.05, seed=3)
    c = two_bubble_perturbed(g, 1, 0.1, 2.0, 0.05, seed=4)
    assert np.array_equal(a.psi, b.psi) and np.array_equal(a.psidot, b.psidot)
    assert not np.array_equal(a.psi, c.psi)
    base = two_bubble_perturbed(g, 1, 0.1, 2.0, 0.0, seed=3)
    pert = a.replace(psi=a.psi - base.psi)
    assert e_norm(pert) == pytest.approx(0.05, rel=1e-12)


def test_outgoing_burst_moves_outwards():
    from wavemaps.evolution import linear_evolve
    g = make_grid(40.0, 2048)
    s = linear_burst(g, amplitude=0.1, center=10.0, width=1.0)
    tr = linear_evolve(s, 5.0, cadence=5.0)
    peak = g.r[np.argmax(np.abs(tr.final.psi))]
    assert peak == pytest.approx(15.0, abs=0.5)
    assert np.max(np.abs(tr.final.psi[g.r < 8.0])) < 0.05 * np.max(np.abs(tr.final.psi))


def test_custom_csv_loads_snapshot(tmp_path):
    g = make_grid(10.0, 64)
    s = linear_burst(g, amplitude=0.2, center=5.0)
    path = write_snapshot(tmp_path / "s.csv", s)
    loaded = make_initial_data("custom_csv", {"path": str(path)}, make_grid(5.0, 32))
    assert np.array_equal(loaded.psi, s.psi)
    bad = tmp_path / "bad.csv"
    bad.write_text("# k=1\nr,psi,psidot\n1,0,0\n")
    with pytest.raises(SnapshotFormatError):
        make_initial_data("custom_csv", {"path": str(bad)}, g)


def test_parameter_validation():
    with pytest.raises(ConfigError) as info:
        validate_params("two_bubble", {"iota": 1, "lam": 0.1})
    assert info.value.key == "scenario.params.mu"
    with pytest.raises(ConfigError) as info:
        validate_params("zero", {"amplitude": 1})
    assert info.value.key == "scenario.params.amplitude"
    with pytest.raises(ConfigError) as info:
        validate_params("nope", {})
    assert info.value.key == "scenario.name"


def test_every_scenario_documents_its_class():
    assert set(SCENARIOS) == {"zero", "pure_bubble", "two_bubble", "two_bubble_perturbed",
                              "below_threshold", "truncated_bubble", "linear_burst", "custom_csv"}
    for spec in SCENARIOS.values():
        assert spec.klass
