"""Trajectory diagnostics: radiation and profile extraction, scale tracking,
energy budgets and the outcome classifier.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .bubbles import BubbleFit, modulation_fit, proximity_min, q_eval, single_bubble_fit
from .evolution import (BLOWUP_TERMINATIONS, StepControl, Termination, Trajectory,
                        estimate_blowup_time, linear_evolve, reverse)
from .exceptions import InsufficientDataError, ParameterError
from .functionals import energy, local_e_norm
from .grid import FieldState

__all__ = [
    "RadiationFit",
    "ScaleSeries",
    "EnergyBudget",
    "Thresholds",
    "Verdict",
    "RunVerdict",
    "subtract",
    "propagate_linear",
    "extract_radiation_global",
    "extract_blowup_profile",
    "track_scales",
    "energy_budget",
    "classify_outcome",
]


def subtract(state: FieldState, other: FieldState) -> FieldState:
    """``state - other`` with class labels subtracted as well."""
    return state.replace(psi=state.psi - other.psi, psidot=state.psidot - other.psidot,
                         ell=state.ell - other.ell, m=state.m - other.m)


def _smooth_step(r, rho, width):
    """0 for ``r <= rho - width``, 1 for ``r >= rho``, C^1 in between."""
    if width <= 0:
        return (r >= rho).astype(float)
    x = np.clip((r - (rho - width)) / width, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _advance(state, t_target, control):
    """Linear propagation of ``state`` to ``t_target`` in either time direction."""
    if np.isclose(t_target, state.time, rtol=0, atol=1e-12):
        return state.replace(time=t_target)
    if t_target > state.time:
        out = linear_evolve(state, t_target, control).final
        reached = out.time
    else:
        back = reverse(state).replace(time=-state.time)
        out = reverse(linear_evolve(back, -t_target, control).final)
        reached = -out.time
    if not np.isclose(reached, t_target, rtol=1e-12, atol=1e-12):
        raise ParameterError(f"linear propagation stopped at t={reached}, target {t_target}")
    return out.replace(time=t_target)


def propagate_linear(state: FieldState, times, control: StepControl | None = None):
    """Linear-flow states at each of ``times`` (any order), chaining evolutions."""
    times = np.asarray(times, dtype=float)
    out = [None] * times.size
    order = np.argsort(times)
    fwd = [i for i in order if times[i] >= state.time]
    bwd = [i for i in order[::-1] if times[i] < state.time]
    for chain in (fwd, bwd):
        cur = state
        for i in chain:
            cur = _advance(cur, times[i], control)
            out[i] = cur
    return out


@dataclass
class RadiationFit:
    """Radiation extracted from a trajectory.

    ``kind == "linear"``: ``radiation_state`` is a linear wave at ``t_ref``.
    ``kind == "static"``: it is a time-independent profile.
    ``cutoff_series`` and ``mismatch_series`` are indexed by ``times``; the
    mismatch is the energy norm of ``psi(t) - radiation(t)`` on ``r >= cutoff``.
    """

    kind: str
    radiation_state: FieldState
    t_ref: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cutoff_series: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mismatch_series: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t_plus: float | None = None
    bubble_sign: int = 0
    control: StepControl | None = None

    @classmethod
    def static(cls, profile: FieldState) -> RadiationFit:
        return cls("static", profile, profile.time)

    def at(self, time: float) -> FieldState:
        return self.at_times([time])[0]

    def at_times(self, times) -> list:
        times = np.asarray(times, dtype=float)
        if self.kind == "static":
            return [self.radiation_state.replace(time=t) for t in times]
        return propagate_linear(self.radiation_state, times, self.control)


def _late(times, window):
    t0, t1 = times[0], times[-1]
    return times >= t0 + (1.0 - window) * (t1 - t0) - 1e-12 * max(1.0, abs(t1))


def extract_radiation_global(trajectory: Trajectory,
                             A: Callable[[float], float] = lambda t: 0.5 * t,
                             window: float = 0.5, taper: float = 1.0,
                             weight_power: float = 2.0,
                             control: StepControl | None = None) -> RadiationFit:
    """Fit one linear wave to the exterior ``r >= t - A(t)`` of the late snapshots.

    Each snapshot in the last ``window`` fraction of the run is cut off
    smoothly below ``rho = t - A(t)`` (over a band of width ``taper``),
    propagated backwards with the linear flow to the first matched time and
    averaged with weights ``(t - t_first + dt)^weight_power``, ``dt`` being
    the mean snapshot spacing.  Later snapshots have shed more of their
    nonlinear part, so the default quadratic weights favour them;
    ``weight_power=0`` gives the plain mean.  Linearity lets the backwards
    pass run once, accumulating the cut-off fields as it reaches each
    snapshot time.  The average is then propagated forwards and compared
    with each snapshot on ``r >= rho``.
    """
    if trajectory.termination is not Termination.REACHED_T_FINAL:
        raise ParameterError("radiation extraction needs a trajectory that reached t_final")
    first = trajectory.snapshots[0]
    if first.ell != 0:
        raise ParameterError(f"expected class (0, m), got ({first.ell}, {first.m})")
    grid, m = first.grid, first.m
    times = trajectory.times
    idx = np.flatnonzero(_late(times, window) & (times > 0))
    if idx.size < 2:
        raise InsufficientDataError("need at least two late snapshots for radiation matching")
    rho = np.array([t - A(t) for t in times[idx]])
    if np.any(rho >= grid.R_max):
        raise ParameterError(f"cutoff {rho.max():.6g} exceeds R_max={grid.R_max}; enlarge R_max")
    if np.any(rho <= 0):
        raise ParameterError("cutoff radius t - A(t) must be positive on the matching window")
    n = idx.size
    tw = times[idx]
    w = (tw - tw[0] + (tw[-1] - tw[0]) / (n - 1)) ** weight_power
    w = w / w.sum()

    def exterior(j):
        s = trajectory.snapshots[idx[j]]
        chi = w[j] * _smooth_step(grid.r, rho[j], taper)
        return FieldState(grid, chi * (s.psi - m * np.pi), chi * s.psidot, time=s.time)

    acc = exterior(n - 1)
    for j in range(n - 2, -1, -1):
        acc = _advance(acc, times[idx[j]], control)
        ext = exterior(j)
        acc = acc.replace(psi=acc.psi + ext.psi, psidot=acc.psidot + ext.psidot)
    t_ref = float(times[idx[0]])
    fit = RadiationFit("linear", acc, t_ref, control=control)
    forward = fit.at_times(times[idx])
    mismatch = []
    for j, lin in enumerate(forward):
        s = trajectory.snapshots[idx[j]]
        diff = FieldState(grid, s.psi - m * np.pi - lin.psi, s.psidot - lin.psidot)
        mismatch.append(np.sqrt(local_e_norm(diff, rho[j], grid.R_max)))
    fit.times = times[idx].copy()
    fit.cutoff_series = rho
    fit.mismatch_series = np.array(mismatch)
    return fit


def _bubble_sign(state):
    dev = state.psi - state.ell * np.pi
    hit = np.flatnonzero(np.abs(dev) >= 0.5 * np.pi)
    return int(np.sign(dev[hit[0]])) if hit.size else 0


def extract_blowup_profile(trajectory: Trajectory, c: float = 2.0,
                           t_plus: float | None = None, window: float = 0.5,
                           subtract_bubble: bool = True, refine: int = 2,
                           pair: bool = False) -> RadiationFit:
    """Static exterior profile of a concentrating solution.

    Averages ``(psi, psidot)`` pointwise over the late snapshots, each one
    only on ``r >= c (t_plus - t)``.  Inside the smallest cutoff the profile
    is continued by ``ell*pi + (P(rho) - ell*pi) (r/rho)^k``.  With
    ``subtract_bubble`` the concentrating bubble is removed: first its
    asymptotic value ``iota*pi``, then, for ``refine`` rounds, the fitted
    ``iota Q_lam(t)`` of every snapshot, whose tail ``~ lam(t)/r`` would
    otherwise bias the average.  ``psi(t) - profile`` is then close to
    ``iota Q_lam(t)``.  With ``pair`` (class (0, 0), ``subtract_bubble``
    ignored) the refinement subtracts tracked two-bubble fits instead.
    ``t_plus`` defaults to :func:`estimate_blowup_time`.
    """
    if c <= 0:
        raise ParameterError("c must be positive")
    if t_plus is None:
        if trajectory.termination not in BLOWUP_TERMINATIONS:
            raise ParameterError("pass t_plus for a trajectory that did not blow up")
        t_plus, _ = estimate_blowup_time(trajectory)
        if t_plus is None:
            raise InsufficientDataError("scale proxy is not shrinking; cannot estimate T+")
    grid = trajectory.grid
    times = trajectory.times
    rho_all = c * (t_plus - times)
    idx = np.flatnonzero(_late(times, window) & (times < t_plus) & (rho_all < grid.R_max))
    if idx.size < 5:
        raise InsufficientDataError(f"{idx.size} usable late snapshots, need at least 5")
    rho = rho_all[idx]
    snaps = [trajectory.snapshots[i] for i in idx]
    last = snaps[-1]
    pair = pair and last.ell == 0 and last.m == 0
    iota = _bubble_sign(last) if subtract_bubble and not pair else 0
    mask = grid.r[None, :] >= rho[:, None]
    count = mask.sum(axis=0)
    covered = count > 0
    j0 = int(np.argmax(covered))
    inner = ~covered
    base = last.ell * np.pi
    shape = (grid.r[inner] / grid.r[j0]) ** grid.k
    psi = np.stack([s.psi for s in snaps])
    vel = np.stack([s.psidot for s in snaps])
    prof_v = np.zeros(grid.N)
    prof_v[covered] = (vel * mask).sum(axis=0)[covered] / count[covered]
    prof_v[inner] = prof_v[j0] * shape

    def average(fields):
        prof = np.zeros(grid.N)
        prof[covered] = (fields * mask).sum(axis=0)[covered] / count[covered]
        prof[inner] = base + (prof[j0] - base) * shape
        return prof

    bubble = np.full(grid.N, iota * np.pi)
    prof = average(psi - bubble)
    rounds = refine if pair or (iota != 0 and last.ell == 0) else 0
    for _ in range(rounds):
        if pair:
            phis = Trajectory([s.replace(psi=s.psi - prof, psidot=s.psidot - prof_v) for s in snaps])
            sc = track_scales(phis)
            bubble = sc.sign[:, None] * (q_eval(sc.lam[:, None], grid.k, grid.r[None, :])
                                         - q_eval(sc.mu[:, None], grid.k, grid.r[None, :]))
        else:
            lams = [single_bubble_fit(grid, iota * (s.psi - prof)).lam for s in snaps]
            bubble = iota * q_eval(np.array(lams)[:, None], grid.k, grid.r[None, :])
        prof = average(psi - bubble)
    profile = FieldState(grid, prof, prof_v, ell=last.ell, m=last.m - iota, time=last.time)
    mismatch = []
    for s, rr in zip(snaps, rho):
        diff = FieldState(grid, s.psi - iota * np.pi - prof, s.psidot - prof_v)
        # start at the first node of this snapshot's range so no interval straddles the cut
        start = grid.r[min(np.searchsorted(grid.r, rr), grid.N - 1)]
        mismatch.append(np.sqrt(local_e_norm(diff, start, grid.R_max)))
    return RadiationFit("static", profile, float(last.time), times=times[idx].copy(),
                        cutoff_series=rho, mismatch_series=np.array(mismatch),
                        t_plus=float(t_plus), bubble_sign=iota)


@dataclass
class ScaleSeries:
    times: np.ndarray
    sign: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    d_value: np.ndarray
    residual_sq: np.ndarray
    converged: np.ndarray
    fits: list

    def rows(self):
        """Rows of the fits table: time, sign, lambda, mu, residual_sq, separation, d_value, converged."""
        return [(float(t), int(f.sign), float(f.lam), float(f.mu), float(f.residual_sq),
                 float(f.separation), float(f.d_value), bool(f.converged))
                for t, f in zip(self.times, self.fits)]


def track_scales(trajectory: Trajectory, radiation: RadiationFit | None = None,
                 stride: int = 1, modulation_gate: float = 0.1) -> ScaleSeries:
    """Two-bubble fit of every ``stride``-th snapshot, seeded by the previous one.

    When ``radiation`` is given it is subtracted first.  Where the residual
    part of ``d`` is below ``modulation_gate`` the state is close to the
    two-bubble family and the scales are refined on the residual alone (see
    :func:`modulation_fit`); elsewhere the proximity optimum is reported.
    Non-converged samples are kept and flagged.
    """
    if len(trajectory.snapshots) < 2:
        raise InsufficientDataError("scale tracking needs at least two snapshots")
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    snaps = trajectory.snapshots[::stride]
    rad = radiation.at_times([s.time for s in snaps]) if radiation is not None else None
    seed = None
    fits = []
    for i, s in enumerate(snaps):
        phi = subtract(s, rad[i]) if rad is not None else s
        fit, sign = proximity_min(phi, seed)
        seed = (fit.lam, fit.mu)
        if fit.residual_sq < modulation_gate:
            mod = modulation_fit(phi, sign, seed)
            fit = BubbleFit(sign=sign, lam=mod.lam, mu=mod.mu, residual_sq=fit.residual_sq,
                            separation=fit.separation, d_value=fit.d_value,
                            converged=fit.converged and mod.converged)
        fits.append(fit)
    return ScaleSeries(
        times=np.array([s.time for s in snaps]),
        sign=np.array([f.sign for f in fits], dtype=int),
        lam=np.array([f.lam for f in fits]),
        mu=np.array([f.mu for f in fits]),
        d_value=np.array([f.d_value for f in fits]),
        residual_sq=np.array([f.residual_sq for f in fits]),
        converged=np.array([f.converged for f in fits], dtype=bool),
        fits=fits,
    )


@dataclass(frozen=True)
class EnergyBudget:
    total: float
    bubbles: float
    radiation: float
    deficit: float


def energy_budget(state: FieldState, fit: BubbleFit | None = None,
                  radiation: FieldState | None = None) -> EnergyBudget:
    """``deficit = E(state) - 8 k pi - E(radiation)``.

    The bubble pair always contributes ``2 E(Q) = 8 k pi``; ``fit`` is
    accepted for the record but does not change the arithmetic.
    """
    total = energy(state).total
    bubbles = 8.0 * state.k * np.pi
    rad = energy(radiation).total if radiation is not None else 0.0
    return EnergyBudget(total=total, bubbles=bubbles, radiation=rad,
                        deficit=total - bubbles - rad)


class Verdict(str, Enum):
    SCATTERING = "scattering"
    ONE_BUBBLE_BLOWUP = "one_bubble_blowup"
    TWO_BUBBLE_BLOWUP = "two_bubble_blowup"
    GLOBAL_TWO_BUBBLE = "global_two_bubble"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Thresholds:
    """Classifier conventions (not physical constants)."""

    interior_radius: float = 1.0
    scatter_decay: float = 0.01
    scatter_d: float = 0.1
    one_bubble_distance: float = 0.1
    d_small: float = 0.01
    ratio_small: float = 0.1
    horizon_small: float = 0.1
    global_horizon_small: float = 0.5
    trend_fraction: float = 0.8
    trend_window: float = 0.5
    trend_floor: float = 1e-3

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunVerdict:
    verdict: Verdict
    iota: int
    gates: dict
    evidence: dict
    failing: list
    notes: list
    config_hash: str

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "iota": self.iota, "gates": self.gates,
                "failing_gates": self.failing, "notes": self.notes,
                "threshold_hash": self.config_hash, "evidence": self.evidence}


def _decreasing(x, th: Thresholds) -> bool:
    """Nonincreasing in at least ``trend_fraction`` of steps over the trailing window, net decrease."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2:
        return False
    start = int(np.floor((1.0 - th.trend_window) * (x.size - 1)))
    w = x[start:]
    if w.size < 2:
        return False
    steps = np.diff(w) <= 1e-12 * np.abs(w[:-1])
    return bool(w[-1] < w[0] and steps.mean() >= th.trend_fraction)


def _gate(value, threshold, passed):
    return {"value": None if value is None or not np.isfinite(value) else float(value),
            "threshold": float(threshold), "passed": bool(passed)}


def _settled(x, threshold, th: Thresholds) -> bool:
    """Trailing window entirely below ``trend_floor * threshold`` (no trend left to see)."""
    x = np.asarray(x, dtype=float)
    start = int(np.floor((1.0 - th.trend_window) * (x.size - 1)))
    w = x[start:]
    return bool(w.size >= 2 and np.all(np.isfinite(w)) and np.all(w < th.trend_floor * threshold))


def _small_and_decreasing(series, threshold, th):
    series = np.asarray(series, dtype=float)
    final = series[-1] if series.size else np.nan
    ok = (series.size >= 2 and np.isfinite(final) and final < threshold
          and (_decreasing(series, th) or _settled(series, threshold, th)))
    return _gate(final, threshold, ok)


def _two_bubble_gates(scales: ScaleSeries, horizon, horizon_threshold, th):
    ratio = scales.lam / scales.mu
    ok = horizon > 0
    mu_h = scales.mu[ok] / horizon[ok]
    return {
        "d_small_decreasing": _small_and_decreasing(scales.d_value, th.d_small, th),
        "ratio_small_decreasing": _small_and_decreasing(ratio, th.ratio_small, th),
        "horizon_small_decreasing": _small_and_decreasing(mu_h, horizon_threshold, th),
    }


def _interior_norms(trajectory, radius):
    out = []
    for s in trajectory.snapshots:
        out.append(np.sqrt(local_e_norm(s, 0.0, radius, offset=s.ell * np.pi)))
    return np.array(out)


def classify_outcome(trajectory: Trajectory, scales: ScaleSeries | None = None,
                     radiation: RadiationFit | None = None,
                     thresholds: Thresholds | None = None, stride: int = 1) -> RunVerdict:
    """Sort a run into one of the four asymptotic alternatives, or undetermined.

    Every gate of the chosen alternative must pass.  Global runs are tested
    for scattering, then for a two-bubble with horizon ``t``; blow-up runs
    for one bubble, then for two bubbles with horizon ``T+ - t``.
    """
    th = thresholds or Thresholds()
    notes = []
    evidence = {}
    first = trajectory.snapshots[0]
    trivial = first.ell == 0 and first.m == 0
    term = trajectory.termination

    def finish(verdict, iota, gates, failing):
        return RunVerdict(verdict=verdict, iota=int(iota), gates=gates, evidence=evidence,
                          failing=failing, notes=notes, config_hash=th.config_hash())

    def need_scales(rad):
        if scales is not None:
            return scales
        if not trivial:
            return None
        return track_scales(trajectory, rad, stride=stride)

    if term is Termination.REACHED_T_FINAL:
        interior = _interior_norms(trajectory, th.interior_radius)
        peak = float(interior.max())
        evidence["interior_norm"] = interior.tolist()
        sc = need_scales(radiation)
        gates = {"interior_decay": _gate(
            interior[-1] / peak if peak > 0 else 0.0, th.scatter_decay,
            peak == 0 or interior[-1] <= th.scatter_decay * peak)}
        if sc is None:
            notes.append("two-bubble fits need class (0, 0); d gates not evaluated")
            gates["d_floor"] = _gate(None, th.scatter_d, False)
        else:
            evidence.update(_scale_evidence(sc))
            gates["d_floor"] = _gate(sc.d_value.min(), th.scatter_d,
                                     bool(np.all(sc.d_value >= th.scatter_d)))
        if all(g["passed"] for g in gates.values()):
            return finish(Verdict.SCATTERING, 0, gates, [])
        failing = [f"scattering.{k}" for k, g in gates.items() if not g["passed"]]
        all_gates = {f"scattering.{k}": g for k, g in gates.items()}
        if sc is not None:
            tb = _two_bubble_gates(sc, sc.times, th.global_horizon_small, th)
            all_gates.update({f"global_two_bubble.{k}": g for k, g in tb.items()})
            if all(g["passed"] for g in tb.values()):
                return finish(Verdict.GLOBAL_TWO_BUBBLE, _iota(sc, th), all_gates, [])
            failing += [f"global_two_bubble.{k}" for k, g in tb.items() if not g["passed"]]
        return finish(Verdict.UNDETERMINED, 0, all_gates, failing)

    if term not in BLOWUP_TERMINATIONS:
        notes.append(f"termination {term.value} is not a blow-up signal")
        return finish(Verdict.UNDETERMINED, 0, {}, ["termination"])
    try:
        rad = radiation or extract_blowup_profile(trajectory)
    except (InsufficientDataError, ParameterError) as exc:
        notes.append(f"blow-up profile unavailable: {exc}")
        return finish(Verdict.UNDETERMINED, 0, {}, ["blowup_profile"])
    t_plus = rad.t_plus if rad.t_plus is not None else estimate_blowup_time(trajectory)[0]
    if t_plus is None:
        notes.append("blow-up time could not be estimated")
        return finish(Verdict.UNDETERMINED, 0, {}, ["blowup_time"])
    evidence["t_plus"] = float(t_plus)
    iota = rad.bubble_sign
    all_gates, failing = {}, []
    late = [s for s in trajectory.snapshots if s.time in set(rad.times.tolist())]
    if iota != 0 and late:
        profile = rad.radiation_state
        dist, lam = [], []
        for s in late:
            phi = iota * (s.psi - profile.psi)
            f = single_bubble_fit(s.grid, phi)
            dist.append(f.distance)
            lam.append(f.lam)
        horizon = t_plus - np.array([s.time for s in late])
        evidence["single_distance"] = dist
        evidence["single_lambda"] = lam
        ob = {"distance_small_decreasing": _small_and_decreasing(dist, th.one_bubble_distance, th),
              "lambda_horizon_small_decreasing": _small_and_decreasing(
                  np.array(lam) / horizon, th.horizon_small, th)}
        all_gates.update({f"one_bubble_blowup.{k}": g for k, g in ob.items()})
        if all(g["passed"] for g in ob.values()):
            return finish(Verdict.ONE_BUBBLE_BLOWUP, iota, all_gates, [])
        failing += [f"one_bubble_blowup.{k}" for k, g in ob.items() if not g["passed"]]
    if trivial:
        try:
            pair_rad = extract_blowup_profile(trajectory, t_plus=t_plus, pair=True)
        except InsufficientDataError as exc:
            notes.append(f"two-bubble profile unavailable: {exc}")
            pair_rad = None
        if pair_rad is not None:
            sub = Trajectory([s for s in trajectory.snapshots if s.time in set(pair_rad.times.tolist())],
                             termination=term, flow=trajectory.flow)
            sc = scales if scales is not None else track_scales(sub, pair_rad, stride=stride)
            evidence.update(_scale_evidence(sc))
            tb = _two_bubble_gates(sc, t_plus - sc.times, th.horizon_small, th)
            all_gates.update({f"two_bubble_blowup.{k}": g for k, g in tb.items()})
            if all(g["passed"] for g in tb.values()):
                return finish(Verdict.TWO_BUBBLE_BLOWUP, _iota(sc, th), all_gates, [])
            failing += [f"two_bubble_blowup.{k}" for k, g in tb.items() if not g["passed"]]
    return finish(Verdict.UNDETERMINED, 0, all_gates, failing)


def _iota(sc: ScaleSeries, th: Thresholds) -> int:
    small = sc.d_value < th.d_small
    signs = sc.sign[small] if small.any() else sc.sign[-1:]
    return int(signs[-1])


def _scale_evidence(sc: ScaleSeries) -> dict:
    return {"times": sc.times.tolist(), "d": sc.d_value.tolist(), "lambda": sc.lam.tolist(),
            "mu": sc.mu.tolist(), "sign": sc.sign.tolist()}
