"""Run orchestration: generate, evolve, diagnose, write.

Everything written into a run directory is a deterministic function of the
configuration, except ``timing.json`` which holds wall-clock times.
"""

from __future__ import annotations

import copy
import itertools
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (classify_outcome, energy_budget, extract_blowup_profile,
                       extract_radiation_global, track_scales)
from .config import RunConfig, load_config
from .evolution import BLOWUP_TERMINATIONS, SERIES_KEYS, Termination, Trajectory, evolve
from .exceptions import ConfigError, InsufficientDataError, ParameterError, WaveMapsError
from .grid import check_class
from .io import read_snapshot, write_json, write_snapshot, write_table
from .scenarios import make_initial_data

__all__ = ["run", "analyze", "sweep", "parse_grid_spec", "FITS_HEADER", "INDEX_HEADER"]

FITS_HEADER = ("time", "sign", "lambda", "mu", "residual_sq", "separation", "d_value", "converged")
INDEX_HEADER = ("run", "status", "verdict", "final_d", "energy", "energy_drift", "termination")
PLOT_MAX_RADII = 512
PLOT_MAX_TIMES = 200


def _snapshot_name(i):
    return f"snap_{i:05d}.csv"


def _write_outputs_evolution(out: Path, traj: Trajectory):
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(traj.snapshots):
        write_snapshot(snap_dir / _snapshot_name(i), s)
    cols = [traj.series[key] for key in SERIES_KEYS]
    write_table(out / "series.csv", SERIES_KEYS, zip(*cols))


def _emit_plotdata(out: Path, traj: Trajectory):
    pdir = out / "plotdata"
    pdir.mkdir(exist_ok=True)
    g = traj.grid
    ri = np.unique(np.linspace(0, g.N - 1, min(PLOT_MAX_RADII, g.N)).astype(int))
    ti = np.unique(np.linspace(0, len(traj.snapshots) - 1,
                               min(PLOT_MAX_TIMES, len(traj.snapshots))).astype(int))
    rows = []
    for i in ti:
        s = traj.snapshots[i]
        rows += [(s.time, g.r[j], s.psi[j], s.psidot[j]) for j in ri]
    write_table(pdir / "field_long.csv", ("time", "r", "psi", "psidot"), rows)
    t = traj.series["time"]
    step = max(1, t.size // 2000)
    rows = [(t[i], key, traj.series[key][i]) for i in range(0, t.size, step)
            for key in SERIES_KEYS[1:]]
    write_table(pdir / "series_long.csv", ("time", "quantity", "value"), rows)


def _diagnose(cfg: RunConfig, traj: Trajectory):
    """Run the enabled diagnostics; returns (summary, fits rows, radiation rows, verdict)."""
    diag = cfg.diagnostics
    first = traj.snapshots[0]
    trivial = first.ell == 0 and first.m == 0
    summary = {"notes": []}
    radiation = None
    if diag.radiation:
        try:
            if traj.termination is Termination.REACHED_T_FINAL:
                radiation = extract_radiation_global(traj, control=cfg.control)
            elif traj.termination in BLOWUP_TERMINATIONS:
                radiation = extract_blowup_profile(traj)
        except (InsufficientDataError, ParameterError) as exc:
            summary["notes"].append(f"radiation: {exc}")
    rad_rows = []
    if radiation is not None:
        rad_rows = list(zip(radiation.times, radiation.cutoff_series, radiation.mismatch_series))
        summary["radiation_kind"] = radiation.kind
    scales = None
    if diag.fit and trivial:
        use = radiation if radiation is not None and radiation.kind == "linear" else None
        scales = track_scales(traj, use, stride=diag.stride)
        summary["final_d"] = float(scales.d_value[-1])
        summary["final_sign"] = int(scales.sign[-1])
    elif diag.fit:
        summary["notes"].append("two-bubble fits skipped: initial class is not (0, 0)")
    if diag.budget and scales is not None:
        rad_state = None
        if radiation is not None and radiation.kind == "linear":
            rad_state = radiation.at(traj.final.time)
        b = energy_budget(traj.final, scales.fits[-1], rad_state)
        summary["budget"] = {"total": b.total, "bubbles": b.bubbles,
                             "radiation": b.radiation, "deficit": b.deficit}
    verdict = None
    if diag.classify:
        use = radiation if radiation is not None and radiation.kind == "linear" else None
        verdict = classify_outcome(traj, scales, use, cfg.thresholds, stride=diag.stride)
    fits = scales.rows() if scales is not None else []
    return summary, fits, rad_rows, verdict


def _write_diagnostics(out: Path, fits, rad_rows, verdict):
    write_table(out / "fits.csv", FITS_HEADER,
                [(t, s, lam, mu, res, sep, d, int(c)) for t, s, lam, mu, res, sep, d, c in fits])
    if rad_rows:
        write_table(out / "radiation.csv", ("time", "cutoff", "mismatch"), rad_rows)
    if verdict is not None:
        write_json(out / "verdict.json", verdict.to_dict())


def _error(out: Path, exc: BaseException, stage: str) -> int:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"stage": stage, "type": type(exc).__name__, "message": str(exc),
               "key": getattr(exc, "key", None)}
    if not isinstance(exc, WaveMapsError):
        payload["traceback"] = traceback.format_exc()
    write_json(out / "error.json", payload)
    return 1


def run(config, output_dir=None) -> int:
    """Execute one configured run; returns the exit status (0 on success)."""
    stage = "config"
    out = Path(output_dir) if output_dir is not None else None
    try:
        cfg = config if isinstance(config, RunConfig) else (
            RunConfig.from_dict(config) if isinstance(config, dict) else load_config(config))
        out = out or cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        stage = "initial_data"
        grid = cfg.grid.build(cfg.k)
        state = make_initial_data(cfg.scenario.name, cfg.scenario_params(), grid)
        problems = check_class(state)
        stage = "evolve"
        traj = evolve(state, state.time + cfg.t_final, cfg.control, cfg.cadence, cfg.flow)
        _write_outputs_evolution(out, traj)
        if cfg.emit_plotdata:
            _emit_plotdata(out, traj)
        stage = "diagnostics"
        summary, fits, rad_rows, verdict = _diagnose(cfg, traj)
        _write_diagnostics(out, fits, rad_rows, verdict)
        record = {
            "version": __version__,
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "termination": traj.termination.value,
            "flow": traj.flow,
            "class": [state.ell, state.m],
            "class_problems": problems,
            "steps": int(traj.series["time"].size - 1),
            "snapshots": len(traj.snapshots),
            "t_end": float(traj.final.time),
            "energy_initial": float(traj.series["energy"][0]),
            "energy_final": float(traj.series["energy"][-1]),
            "energy_drift": traj.energy_drift(),
            "e_norm_drift": traj.e_norm_drift(),
            "verdict": verdict.verdict.value if verdict is not None else None,
            **summary,
        }
        write_json(out / "run.json", record)
        write_json(out / "timing.json", {"wall_time": traj.wall_time})
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure must leave error.json behind
        if out is None:
            out = Path(".")
        return _error(out, exc, stage)


def _load_run(run_dir: Path):
    record = json.loads((run_dir / "run.json").read_text())
    cfg = RunConfig.from_dict(record["config"])
    paths = sorted((run_dir / "snapshots").glob("snap_*.csv"))
    if not paths:
        raise InsufficientDataError(f"no snapshots in {run_dir}")
    snaps, grid = [], None
    for p in paths:
        s = read_snapshot(p, grid)
        grid = s.grid
        snaps.append(s)
    series = {}
    series_path = run_dir / "series.csv"
    if series_path.exists():
        data = np.genfromtxt(series_path, delimiter=",", names=True)
        series = {key: np.atleast_1d(data[key]) for key in SERIES_KEYS}
    traj = Trajectory(snaps, series, termination=record["termination"], flow=record["flow"])
    return cfg, record, traj


def analyze(run_dir) -> int:
    """Recompute diagnostics from the stored snapshots of a run directory."""
    run_dir = Path(run_dir)
    try:
        cfg, record, traj = _load_run(run_dir)
        summary, fits, rad_rows, verdict = _diagnose(cfg, traj)
        _write_diagnostics(run_dir, fits, rad_rows, verdict)
        record.update(summary)
        record["verdict"] = verdict.verdict.value if verdict is not None else None
        write_json(run_dir / "run.json", record)
        return 0
    except Exception as exc:  # noqa: BLE001
        return _error(run_dir, exc, "analyze")


def parse_grid_spec(items) -> dict:
    """``["a.b=1,2", "c=x"]`` -> ``{"a.b": [1, 2], "c": ["x"]}`` with YAML scalars."""
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ConfigError(f"grid entry {item!r} must look like key=v1,v2", key=item)
        grid[key.strip()] = [yaml.safe_load(v) for v in values.split(",")]
    return grid


def _set_path(data: dict, dotted: str, value):
    parts = dotted.split(".")
    cur = data
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot set {dotted!r}", key=dotted)
    cur[parts[-1]] = value


def _sweep_one(args):
    cfg_dict, out = args
    status = run(cfg_dict, out)
    return status


def sweep(template, grid: dict, jobs: int = 1, output_dir=None) -> int:
    """Run the Cartesian product of ``grid`` over ``template``; writes index.csv.

    Runs are independent and may execute in parallel.  Per-run failures are
    recorded in the index and the sweep continues.  Wall times go to
    ``timing.csv`` so that ``index.csv`` is reproducible byte for byte.
    """
    if isinstance(template, (str, Path)):
        base = yaml.safe_load(Path(template).read_text()) or {}
    else:
        base = copy.deepcopy(template)
    RunConfig.from_dict(base)
    keys = list(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    root = Path(output_dir) if output_dir is not None else RunConfig.from_dict(base).output_dir()
    root.mkdir(parents=True, exist_ok=True)
    jobs_list = []
    for i, combo in enumerate(combos):
        cfg = copy.deepcopy(base)
        for key, value in zip(keys, combo):
            _set_path(cfg, key, value)
        cfg["output"] = str(root / f"run_{i:04d}")
        jobs_list.append((cfg, root / f"run_{i:04d}"))
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(_sweep_one, jobs_list))
    else:
        statuses = [_sweep_one(j) for j in jobs_list]
    rows, timing = [], []
    for (cfg, out), combo, status in zip(jobs_list, combos, statuses):
        rec = {}
        if (out / "run.json").exists():
            rec = json.loads((out / "run.json").read_text())
        wall = None
        if (out / "timing.json").exists():
            wall = json.loads((out / "timing.json").read_text())["wall_time"]
        rows.append((out.name, *combo, "ok" if status == 0 else "failed",
                     rec.get("verdict") or "", rec.get("final_d", ""),
                     rec.get("energy_initial", ""), rec.get("energy_drift", ""),
                     rec.get("termination", "")))
        timing.append((out.name, "" if wall is None else float(wall)))
    header = (INDEX_HEADER[0], *keys, *INDEX_HEADER[1:])
    write_table(root / "index.csv", header, rows)
    write_table(root / "timing.csv", ("run", "wall_time"), timing)
    return 0 if all(s == 0 for s in statuses) else 1
