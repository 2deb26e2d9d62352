"""Initial-data generators.

Every scenario is a function ``(grid, **params) -> FieldState`` registered in
``SCENARIOS`` together with its required and optional parameters, so that
configurations can be validated before anything is computed.  Randomised
scenarios draw from ``numpy.random.default_rng(seed)`` (the PCG64 generator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bubbles import q_eval, two_bubble_state
from .exceptions import ConfigError, ParameterError
from .functionals import e_norm, energy
from .grid import FieldState, RadialGrid

__all__ = [
    "SCENARIOS",
    "Scenario",
    "make_initial_data",
    "zero",
    "pure_bubble",
    "two_bubble",
    "two_bubble_perturbed",
    "below_threshold",
    "truncated_bubble",
    "linear_burst",
    "custom_csv",
]

BELOW_THRESHOLD_CAP = 0.9


def _cutoff(r, inner, outer):
    """Smooth 1 -> 0 transition between ``inner`` and ``outer``."""
    x = np.clip((r - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


def zero(grid: RadialGrid) -> FieldState:
    return FieldState(grid, np.zeros(grid.N))


def pure_bubble(grid: RadialGrid, lam: float = 1.0) -> FieldState:
    if lam <= 0:
        raise ParameterError("lam must be positive")
    return FieldState(grid, q_eval(lam, grid.k, grid.r), ell=0, m=1)


def two_bubble(grid: RadialGrid, iota: int, lam: float, mu: float) -> FieldState:
    return two_bubble_state(grid, iota, lam, mu)


def two_bubble_perturbed(grid: RadialGrid, iota: int, lam: float, mu: float,
                         eps: float, seed: int = 0, modes: int = 8) -> FieldState:
    """Two-bubble plus a random smooth perturbation of energy norm ``eps``.

    The perturbation is a sum of ``modes`` bumps ``(r/c)^k exp(-(r/c)^2)``
    with centres log-uniform in ``[lam, 10 mu]`` (clipped to the grid) and
    normal coefficients, in both ``psi`` and ``psidot``.
    """
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    rng = np.random.default_rng(seed)
    r, k = grid.r, grid.k
    lo = np.log(max(lam, r[1]))
    hi = np.log(min(10.0 * mu, 0.25 * grid.R_max))
    centres = np.exp(rng.uniform(lo, hi, size=(2, modes)))
    coef = rng.standard_normal(size=(2, modes))

    def bumps(c, a, scale):
        x = r[None, :] / c[:, None]
        return a @ (x**k * np.exp(-x * x)) * scale

    pert = FieldState(grid, bumps(centres[0], coef[0], 1.0),
                      bumps(centres[1], coef[1], 1.0) / centres[1].mean())
    size = e_norm(pert)
    scale = eps / size if size > 0 else 0.0
    base = two_bubble_state(grid, iota, lam, mu)
    return base.replace(psi=base.psi + scale * pert.psi, psidot=scale * pert.psidot)


def _bump(grid, width):
    x = grid.r / width
    return x**grid.k * np.exp(-x * x)


def below_threshold(grid: RadialGrid, amplitude: float = 1.0, width: float = 1.0,
                    energy_fraction: float | None = None) -> FieldState:
    """``amplitude (r/w)^k exp(-(r/w)^2)`` at rest, below the two-bubble energy.

    With ``energy_fraction`` the amplitude is solved for so that
    ``E = energy_fraction * 8 k pi``.  Otherwise the amplitude is shrunk by
    factors of 0.9 until ``E < 0.9 * 8 k pi``.  The final energy is checked.
    """
    if width <= 0:
        raise ParameterError("width must be positive")
    threshold = 8.0 * grid.k * np.pi
    shape = _bump(grid, width)

    def e_of(a):
        return energy(FieldState(grid, a * shape)).total

    if energy_fraction is not None:
        if not 0 < energy_fraction < BELOW_THRESHOLD_CAP:
            raise ParameterError(f"energy_fraction must lie in (0, {BELOW_THRESHOLD_CAP})")
        target = energy_fraction * threshold
        # energy need not be monotone in the amplitude; bracket the first crossing
        lo, hi = 0.0, 1e-2
        while e_of(hi) < target:
            lo, hi = hi, 2.0 * hi
            if hi > 1e6:
                raise ParameterError("cannot reach the requested energy")
        amplitude = brentq(lambda a: e_of(a) - target, lo, hi, xtol=1e-14, rtol=1e-14)
    a = float(amplitude)
    while e_of(a) >= BELOW_THRESHOLD_CAP * threshold:
        a *= 0.9
    state = FieldState(grid, a * shape)
    if not energy(state).total < BELOW_THRESHOLD_CAP * threshold:
        raise ParameterError("below_threshold energy contract violated")
    return state


def truncated_bubble(grid: RadialGrid, lam: float, cutoff: float,
                     velocity: float = 0.0) -> FieldState:
    """``chi Q_lam`` with ``chi = 1`` on ``r <= cutoff/2`` and 0 beyond ``cutoff``.

    ``velocity > 0`` adds ``psidot = velocity * chi * r dQ_lam/dr``, which
    pushes the bubble to concentrate.  Class (0, 0).
    """
    if not 0 < lam < cutoff:
        raise ParameterError("need 0 < lam < cutoff")
    if cutoff > grid.R_max:
        raise ParameterError("cutoff beyond R_max")
    r, k = grid.r, grid.k
    chi = _cutoff(r, 0.5 * cutoff, cutoff)
    x = (r / lam) ** k
    r_dq = 2.0 * k * x / (1.0 + x * x)
    return FieldState(grid, chi * q_eval(lam, k, r), velocity * chi * r_dq)


def linear_burst(grid: RadialGrid, amplitude: float = 0.1, center: float = 10.0,
                 width: float = 1.0, outgoing: bool = True) -> FieldState:
    """Gaussian shell ``amplitude exp(-((r - center)/width)^2)``, tapered at the origin.

    ``outgoing`` sets ``psidot = -(psi_r + psi/(2r))``, the leading-order
    outgoing condition for cylindrical waves.
    """
    if width <= 0 or center <= 0:
        raise ParameterError("center and width must be positive")
    r, k = grid.r, grid.k
    taper = (1.0 - np.exp(-(r / width) ** 2)) ** k
    g = np.exp(-((r - center) / width) ** 2)
    psi = amplitude * taper * g
    if not outgoing:
        return FieldState(grid, psi)
    dg = -2.0 * (r - center) / width**2 * g
    dtaper = k * (1.0 - np.exp(-(r / width) ** 2)) ** (k - 1) * 2.0 * r / width**2 * np.exp(-(r / width) ** 2)
    dpsi = amplitude * (taper * dg + dtaper * g)
    return FieldState(grid, psi, -(dpsi + psi / (2.0 * r)))


def custom_csv(grid: RadialGrid, path: str) -> FieldState:
    """Load a snapshot file; its own grid is used, ``grid`` only supplies defaults."""
    from .io import read_snapshot

    return read_snapshot(path, grid)


@dataclass(frozen=True)
class Scenario:
    func: object
    required: tuple
    optional: tuple
    klass: str


SCENARIOS = {
    "zero": Scenario(zero, (), (), "(0, 0)"),
    "pure_bubble": Scenario(pure_bubble, (), ("lam",), "(0, 1)"),
    "two_bubble": Scenario(two_bubble, ("iota", "lam", "mu"), (), "(0, 0)"),
    "two_bubble_perturbed": Scenario(two_bubble_perturbed, ("iota", "lam", "mu", "eps"),
                                     ("seed", "modes"), "(0, 0)"),
    "below_threshold": Scenario(below_threshold, (), ("amplitude", "width", "energy_fraction"),
                                "(0, 0)"),
    "truncated_bubble": Scenario(truncated_bubble, ("lam", "cutoff"), ("velocity",), "(0, 0)"),
    "linear_burst": Scenario(linear_burst, (), ("amplitude", "center", "width", "outgoing"),
                             "(0, 0)"),
    "custom_csv": Scenario(custom_csv, ("path",), (), "from file"),
}


def validate_params(name: str, params: dict) -> None:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}",
                          key="scenario.name")
    spec = SCENARIOS[name]
    allowed = set(spec.required) | set(spec.optional)
    for key in params:
        if key not in allowed:
            raise ConfigError(f"scenario {name!r} has no parameter {key!r}",
                              key=f"scenario.params.{key}")
    for key in spec.required:
        if key not in params:
            raise ConfigError(f"scenario {name!r} needs parameter {key!r}",
                              key=f"scenario.params.{key}")


def make_initial_data(name: str, params: dict | None, grid: RadialGrid) -> FieldState:
    params = dict(params or {})
    validate_params(name, params)
    return SCENARIOS[name].func(grid, **params)
