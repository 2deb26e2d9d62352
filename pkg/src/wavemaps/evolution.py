"""Time integration of the equivariant wave map equation and its linearisation.

Both flows are semi-discrete Hamiltonian systems: the spatial operator is the
gradient of the discrete energy in :mod:`wavemaps.functionals` divided by the
cell volumes, and the outer node is held at its initial value.  Classical RK4
advances the pair ``(psi, psidot)``.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import NumericError, ParameterError
from .grid import FieldState, RadialGrid

__all__ = [
    "StepControl",
    "Termination",
    "Trajectory",
    "flux_laplacian",
    "nonlinear_rhs",
    "linear_rhs",
    "step",
    "evolve",
    "linear_evolve",
    "scale_proxy",
    "estimate_blowup_time",
    "rescale_state",
    "rescale_trajectory",
    "reverse",
]

SERIES_KEYS = ("time", "dt", "energy", "energy_kin", "energy_pot", "e_norm",
               "local_e_interior", "local_e_exterior", "scale")


class Termination(str, Enum):
    REACHED_T_FINAL = "reached_t_final"
    BLOWUP_UNDERRESOLVED = "blowup_underresolved"
    ENERGY_CAP_HIT = "energy_cap_hit"
    STEP_FLOOR_HIT = "step_floor_hit"


BLOWUP_TERMINATIONS = (Termination.BLOWUP_UNDERRESOLVED, Termination.ENERGY_CAP_HIT,
                       Termination.STEP_FLOOR_HIT)


@dataclass(frozen=True)
class StepControl:
    """Step-size policy.

    ``energy_cap`` bounds the energy-space norm of ``psi - ell*pi``;
    ``resolution_floor`` is the smallest inner bubble scale, in units of the
    local node spacing, that still counts as resolved.  A step whose relative
    change of the conserved quantity exceeds ``energy_tol`` is retried with
    half the step; after ``restore_after`` accepted steps the step doubles
    again up to ``cfl * h_min``.
    """

    cfl: float = 0.5
    dt_min: float = 1e-9
    energy_cap: float = 100.0
    resolution_floor: float = 2.0
    energy_tol: float = 1e-7
    restore_after: int = 8

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ParameterError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.dt_min <= 0:
            raise ParameterError("dt_min must be positive")
        if self.energy_cap <= 0:
            raise ParameterError("energy_cap must be positive")
        if self.resolution_floor < 2:
            raise ParameterError("resolution_floor must be >= 2")
        if self.energy_tol <= 0 or self.restore_after < 1:
            raise ParameterError("energy_tol must be positive and restore_after >= 1")


@dataclass
class Trajectory:
    """Snapshots of one evolution plus per-step scalar series.

    ``series`` maps each name in ``SERIES_KEYS`` to an array with one entry
    per accepted step (the first entry describes the initial state, ``dt=0``).
    """

    snapshots: list
    series: dict = field(default_factory=dict)
    termination: Termination = Termination.REACHED_T_FINAL
    flow: str = "nonlinear"
    wall_time: float = 0.0

    def __post_init__(self):
        times = self.times
        if np.any(np.diff(times) <= 0):
            raise ParameterError("snapshot times must be strictly increasing")
        if self.snapshots:
            g = self.snapshots[0].grid
            if any(s.grid is not g and not np.array_equal(s.grid.r, g.r) for s in self.snapshots):
                raise ParameterError("all snapshots must share one grid")
        self.termination = Termination(self.termination)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots], dtype=float)

    @property
    def grid(self) -> RadialGrid:
        return self.snapshots[0].grid

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]

    def energy_drift(self) -> float:
        e = np.asarray(self.series.get("energy", []))
        if e.size == 0:
            return 0.0
        return float(abs(e[-1] - e[0]) / max(abs(e[0]), 1e-300)) if e[0] != 0 else float(abs(e[-1]))

    def e_norm_drift(self) -> float:
        e = np.asarray(self.series.get("e_norm", []))
        if e.size == 0 or e[0] == 0:
            return float(abs(e[-1])) if e.size else 0.0
        return float(abs(e[-1] - e[0]) / e[0])


def flux_laplacian(grid: RadialGrid, psi, origin_value: float) -> np.ndarray:
    """Conservative ``r^-1 d_r (r d_r psi)`` at nodes ``1..N-1``; zero at ``r_N``.

    The innermost flux uses ``origin_value`` at ``r = 0``.  The operator is
    minus the gradient of the discrete gradient energy divided by
    ``2 * grid.volumes``.
    """
    left = np.empty_like(psi)
    left[0] = origin_value
    left[1:] = psi[:-1]
    flux = grid.faces * (psi - left) / grid.h
    out = np.zeros_like(psi)
    out[:-1] = (flux[1:] - flux[:-1]) / grid.volumes[:-1]
    return out


def _nonlinear_accel(grid, psi, ell):
    acc = flux_laplacian(grid, psi, ell * np.pi)
    acc[:-1] -= grid.k**2 * np.sin(2.0 * psi[:-1]) / (2.0 * grid.r[:-1] ** 2)
    return acc


def _linear_accel(grid, psi, ell):
    c = ell * np.pi
    acc = flux_laplacian(grid, psi, c)
    acc[:-1] -= grid.k**2 * (psi[:-1] - c) / grid.r[:-1] ** 2
    return acc


_ACCEL = {"nonlinear": _nonlinear_accel, "linear": _linear_accel}


def _rhs(state, accel):
    v = state.psidot.copy()
    v[-1] = 0.0
    a = accel(state.grid, state.psi, state.ell)
    bad = np.flatnonzero(~np.isfinite(a))
    if bad.size:
        raise NumericError(f"non-finite right-hand side at node {int(bad[0])}", index=int(bad[0]))
    return v, a


def nonlinear_rhs(state: FieldState):
    """``(psidot, Laplacian(psi) - k^2 sin(2 psi) / (2 r^2))``, zero at the outer node."""
    return _rhs(state, _nonlinear_accel)


def linear_rhs(state: FieldState):
    """``(psidot, -L_0 (psi - ell*pi))``: the flow linearised about ``ell*pi``."""
    return _rhs(state, _linear_accel)


def _rk4(grid, psi, v, dt, accel, ell):
    def f(p, q):
        a = accel(grid, p, ell)
        qq = q.copy()
        qq[-1] = 0.0
        return qq, a

    k1p, k1v = f(psi, v)
    k2p, k2v = f(psi + 0.5 * dt * k1p, v + 0.5 * dt * k1v)
    k3p, k3v = f(psi + 0.5 * dt * k2p, v + 0.5 * dt * k2v)
    k4p, k4v = f(psi + dt * k3p, v + dt * k3v)
    new_psi = psi + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    new_v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    new_psi[-1] = psi[-1]
    new_v[-1] = v[-1]
    return new_psi, new_v


def _check_flow(flow):
    if flow not in _ACCEL:
        raise ParameterError(f"unknown flow {flow!r}")


def step(state: FieldState, dt: float, flow: str = "nonlinear", cfl: float = 1.0) -> FieldState:
    """One RK4 step of size ``dt``; requires ``dt <= cfl * h_min``."""
    _check_flow(flow)
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if dt > cfl * state.grid.h_min * (1 + 1e-12):
        raise ParameterError(f"dt={dt} violates the CFL bound {cfl} * h_min = {cfl * state.grid.h_min}")
    psi, v = _rk4(state.grid, state.psi, state.psidot, dt, _ACCEL[flow], state.ell)
    bad = np.flatnonzero(~(np.isfinite(psi) & np.isfinite(v)))
    if bad.size:
        raise NumericError(f"non-finite state at node {int(bad[0])}", index=int(bad[0]))
    return state.replace(psi=psi, psidot=v, time=state.time + dt)


def reverse(state: FieldState) -> FieldState:
    """Time reversal ``(psi, psidot) -> (psi, -psidot)``."""
    return state.replace(psidot=-state.psidot)


def scale_proxy(grid: RadialGrid, psi, ell: int = 0) -> float:
    """Innermost radius where ``|psi - ell*pi|`` reaches ``pi/2``; NaN if never."""
    dev = np.abs(psi - ell * np.pi)
    hit = np.flatnonzero(dev >= 0.5 * np.pi)
    if hit.size == 0:
        return float("nan")
    i = int(hit[0])
    if i == 0:
        return float(grid.r[0])
    r0, r1, d0, d1 = grid.r[i - 1], grid.r[i], dev[i - 1], dev[i]
    return float(r0 + (0.5 * np.pi - d0) * (r1 - r0) / (d1 - d0))


class _Monitor:
    """Vectorised per-step diagnostics on a fixed grid."""

    def __init__(self, grid, ell, m, interior_radius):
        self.grid, self.ell, self.m = grid, ell, m
        self.inner_nodes = grid.r <= interior_radius
        self.inner_ints = grid.faces <= interior_radius
        self.k2_over_r2 = grid.k**2 / grid.r**2

    def __call__(self, psi, v):
        g = self.grid
        vol = g.volumes
        kin_d = vol * v**2
        left = np.empty_like(psi)
        left[0] = self.ell * np.pi
        left[1:] = psi[:-1]
        grad_d = g.faces * (psi - left) ** 2 / g.h
        pot = np.pi * (grad_d.sum() + vol @ (np.sin(psi) ** 2 * self.k2_over_r2))
        kin = np.pi * kin_d.sum()
        phi_in = psi - self.ell * np.pi
        phi_out = psi - self.m * np.pi
        node_in = kin_d + vol * self.k2_over_r2 * phi_in**2
        node_out = kin_d + vol * self.k2_over_r2 * phi_out**2
        grad_out = g.faces * (phi_out - (left - self.m * np.pi)) ** 2 / g.h
        e_norm = np.sqrt(grad_d.sum() + node_in.sum())
        inner = grad_d[self.inner_ints].sum() + node_in[self.inner_nodes].sum()
        outer = grad_out[~self.inner_ints].sum() + node_out[~self.inner_nodes].sum()
        return {"energy": kin + pot, "energy_kin": kin, "energy_pot": pot, "e_norm": e_norm,
                "local_e_interior": inner, "local_e_exterior": outer,
                "scale": scale_proxy(g, psi, self.ell)}


def evolve(state: FieldState, t_final: float, control: StepControl | None = None,
           cadence: float | None = None, flow: str = "nonlinear",
           interior_radius: float = 1.0) -> Trajectory:
    """Integrate from ``state.time`` to ``t_final`` and record a trajectory.

    Steps are ``cfl * h_min`` long, shortened to land on snapshot times
    ``state.time + j * cadence`` and on ``t_final``.  Termination reasons:
    ``reached_t_final``; ``blowup_underresolved`` when the inner scale proxy
    drops below ``resolution_floor`` local spacings; ``energy_cap_hit`` when
    the energy-space norm of ``psi - ell*pi`` exceeds the cap;
    ``step_floor_hit`` when the step would fall below ``dt_min``.
    """
    _check_flow(flow)
    control = control or StepControl()
    if not t_final > state.time:
        raise ParameterError(f"t_final={t_final} must exceed the start time {state.time}")
    if cadence is not None and cadence <= 0:
        raise ParameterError("cadence must be positive")
    grid, ell = state.grid, state.ell
    accel = _ACCEL[flow]
    monitor = _Monitor(grid, ell, state.m, interior_radius)
    t0 = state.time
    n_snap = int(np.floor((t_final - t0) / cadence + 1e-9)) if cadence else 0
    marks = [t0 + j * cadence for j in range(1, n_snap + 1)] if cadence else []
    if not marks or marks[-1] < t_final - 1e-12 * max(1.0, abs(t_final)):
        marks.append(t_final)
    else:
        marks[-1] = t_final

    def conserved(d):
        return d["energy"] if flow == "nonlinear" else d["e_norm"] ** 2

    psi, v = state.psi.copy(), state.psidot.copy()
    diag = monitor(psi, v)
    series = {key: [] for key in SERIES_KEYS}

    def record(t, dt, d):
        series["time"].append(t)
        series["dt"].append(dt)
        for key in SERIES_KEYS[2:]:
            series[key].append(d[key])

    record(t0, 0.0, diag)
    snaps = [state]
    dt_base = control.cfl * grid.h_min
    dt_cur = dt_base
    streak = 0
    t = t0
    termination = Termination.REACHED_T_FINAL
    clock = _time.perf_counter()
    mark_i = 0
    while mark_i < len(marks):
        target = marks[mark_i]
        remaining = target - t
        landing = remaining <= dt_cur * (1 + 1e-9)
        dt = remaining if landing else dt_cur
        new_psi, new_v = _rk4(grid, psi, v, dt, accel, ell)
        if not (np.all(np.isfinite(new_psi)) and np.all(np.isfinite(new_v))):
            change = np.inf
            new_diag = None
        else:
            new_diag = monitor(new_psi, new_v)
            c0, c1 = conserved(diag), conserved(new_diag)
            change = abs(c1 - c0) / c0 if c0 > 0 else abs(c1)
        if change > control.energy_tol:
            dt_cur = 0.5 * min(dt_cur, dt)
            streak = 0
            if dt_cur < control.dt_min:
                termination = Termination.STEP_FLOOR_HIT
                break
            continue
        psi, v, diag = new_psi, new_v, new_diag
        t = target if landing else t + dt
        record(t, dt, diag)
        if dt_cur < dt_base:
            streak += 1
            if streak >= control.restore_after:
                dt_cur, streak = min(2.0 * dt_cur, dt_base), 0
        if landing:
            snaps.append(state.replace(psi=psi.copy(), psidot=v.copy(), time=t))
            mark_i += 1
        lam = diag["scale"]
        if np.isfinite(lam) and lam < control.resolution_floor * grid.spacing_at(lam):
            termination = Termination.BLOWUP_UNDERRESOLVED
        elif diag["e_norm"] > control.energy_cap:
            termination = Termination.ENERGY_CAP_HIT
        if termination is not Termination.REACHED_T_FINAL:
            break
    if termination is not Termination.REACHED_T_FINAL and snaps[-1].time < t:
        snaps.append(state.replace(psi=psi.copy(), psidot=v.copy(), time=t))
    out = Trajectory(snapshots=snaps,
                     series={key: np.asarray(val, dtype=float) for key, val in series.items()},
                     termination=termination, flow=flow,
                     wall_time=_time.perf_counter() - clock)
    return out


def linear_evolve(state: FieldState, t_final: float, control: StepControl | None = None,
                  cadence: float | None = None, interior_radius: float = 1.0) -> Trajectory:
    """:func:`evolve` with the linearised flow."""
    return evolve(state, t_final, control, cadence, flow="linear", interior_radius=interior_radius)


def estimate_blowup_time(trajectory: Trajectory, samples: int = 10):
    """Extrapolate the scale proxy linearly to zero over the last resolved samples.

    Returns ``(t_plus, spread)`` where ``spread`` is the disagreement between
    fits over the last ``samples`` and the last ``samples // 2`` points, or
    ``(None, None)`` when the proxy is not shrinking.
    """
    if "scale" in trajectory.series and len(trajectory.series["scale"]):
        t = np.asarray(trajectory.series["time"])
        lam = np.asarray(trajectory.series["scale"])
    else:
        t = trajectory.times
        lam = np.array([scale_proxy(s.grid, s.psi, s.ell) for s in trajectory.snapshots])
    ok = np.isfinite(lam)
    t, lam = t[ok], lam[ok]
    if t.size < 3:
        return None, None

    def root(n):
        tt, ll = t[-n:], lam[-n:]
        a, b = np.polyfit(tt, ll, 1)
        return -b / a if a < 0 else None

    n = min(samples, t.size)
    full = root(n)
    half = root(max(n // 2, 2))
    if full is None:
        return None, None
    full = max(full, float(t[-1]))
    spread = abs(full - half) if half is not None else float("inf")
    return float(full), float(spread)


def rescale_state(state: FieldState, factor: float) -> FieldState:
    """Energy-critical rescaling ``(psi(r/f), f^-1 psidot(r/f))`` on the scaled grid.

    Time stamps scale by ``factor`` as well.
    """
    return FieldState(state.grid.scaled(factor), state.psi, state.psidot / factor,
                      ell=state.ell, m=state.m, time=state.time * factor)


def rescale_trajectory(traj: Trajectory, factor: float) -> Trajectory:
    grid = traj.grid.scaled(factor)
    snaps = [FieldState(grid, s.psi, s.psidot / factor, s.ell, s.m, s.time * factor)
             for s in traj.snapshots]
    series = dict(traj.series)
    for key in ("time", "dt", "scale"):
        if key in series:
            series[key] = np.asarray(series[key]) * factor
    return Trajectory(snapshots=snaps, series=series, termination=traj.termination,
                      flow=traj.flow)
