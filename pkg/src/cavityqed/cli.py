"""Command-line pipelines: decay-rate scans, dynamics runs, field frames.

    cavityqed purcell|dynamics|frames --config cfg.json --out dir
                                      [--threads N] [--cache dir]

Configs are strict JSON (see :mod:`cavityqed.config`).  Data files are CSV
with fixed formatting so identical configs give byte-identical outputs;
everything time-stamped or environment-dependent lives in JSON sidecars.
Progress and diagnostics go to stderr as line-delimited JSON events.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import field as fld
from .cache import cached_quantize
from .config import (ConfigError, DynamicsConfig, FieldFramesConfig,
                     PurcellScanConfig, RunConfig, config_to_dict, load_config)
from .geometry import AtomSpec, ParabolicCavity, ProlateCavity
from .kernel import (KernelMatrix, NotConverged, PoleProximity, gamma_free,
                     purcell_parabolic_semiclassical, purcell_pole)
from .modes import MissedModes, WindowTooWide

__all__ = ["main", "run_purcell_scan", "run_dynamics", "run_field_frames"]

_NUMERICAL_ERRORS = (NotConverged, PoleProximity, dyn.HorizonExceeded,
                     dyn.IntegratorFailure, dyn.NonDecayedEdges, MissedModes,
                     WindowTooWide, fld.ResolutionCap,
                     fld.MissingPhotonAmplitudes)


def log_event(**kw):
    print(json.dumps(kw, sort_keys=True, default=str), file=sys.stderr, flush=True)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, columns: list[str], rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _sidecar(path, payload: dict):
    payload = dict(payload)
    payload["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _vertex_scale(cavity) -> float:
    return cavity.focal_length if isinstance(cavity, ParabolicCavity) \
        else cavity.vertex_gap


def _estimate_epsilon(cfg: RunConfig) -> float:
    """A-priori regularization scale: 10x expected combined mode spacing."""
    c = cfg.constants.c
    if isinstance(cfg.cavity, ParabolicCavity):
        per_channel = 2.0 * math.pi * c / cfg.cavity.xi_cutoff
        channels = 6.0
    else:
        per_channel = math.pi * c / cfg.cavity.vertex_gap
        channels = 12.0
    return 10.0 * per_channel / channels


def run_purcell_scan(cfg: RunConfig, out_dir, cache_dir=None, threads: int = 1):
    """Decay-ratio scan over the scaled focal length u = 2 pi f / lambda."""
    exp: PurcellScanConfig = cfg.experiment
    f = _vertex_scale(cfg.cavity)
    c = cfg.constants.c
    omegas = np.array(sorted(exp.u_grid)) * c / f
    eps = exp.epsilon if exp.epsilon is not None else _estimate_epsilon(cfg)
    margin = exp.pole_window if exp.pole_window is not None else 30.0 * eps
    window = (max(float(omegas.min()) - margin, 0.25 * float(omegas.min())),
              float(omegas.max()) + margin)
    log_event(event="scan_basis_build", window=window, provenance=cfg.basis.provenance)
    basis = cached_quantize(cfg.cavity, window, cfg.basis.settings(store_profiles=False),
                            cfg.constants, cfg.basis.provenance, cache_dir,
                            log=log_event)
    log_event(event="scan_basis_ready", modes=len(basis))

    dipole = cfg.atoms[0].dipole
    focus = cfg.atoms[0].focus_index

    def one_point(u):
        w_eg = u * c / f
        atom = AtomSpec.at_focus(cfg.cavity, focus, w_eg, dipole)
        km = KernelMatrix.from_basis(basis, [atom], cfg.constants)
        sc = purcell_parabolic_semiclassical(u)
        try:
            pr = purcell_pole(km, 0, epsilon=eps,
                              window_half_width=min(margin, w_eg - window[0],
                                                    window[1] - w_eg),
                              require_certificate=False)
            return (u, sc.ratio, pr.ratio, pr.epsilon, bool(pr.converged))
        except NotConverged as exc:
            log_event(event="scan_point_not_converged", u=u, error=str(exc))
            return (u, sc.ratio, float("nan"), eps, False)

    u_sorted = sorted(exp.u_grid)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one_point, u_sorted))
    else:
        rows = [one_point(u) for u in u_sorted]
    for row in rows:
        log_event(event="scan_point", u=row[0], ratio_exact=row[2],
                  converged=row[4])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "purcell_scan.csv"
    write_csv(csv_path, ["u", "ratio_semiclassical", "ratio_exact",
                         "epsilon_used", "converged"], rows)
    _sidecar(out_dir / "purcell_scan.json", {
        "config": config_to_dict(cfg),
        "columns": {
            "u": "2*pi*f/lambda_eg (dimensionless)",
            "ratio_semiclassical": "Gamma/Gamma_free, vertex-bounce series",
            "ratio_exact": "Gamma/Gamma_free, regularized pole formula",
            "epsilon_used": "rad/time",
            "converged": "eps-doubling certificate within tolerance",
        },
        "free_space_reference": 1.0,
        "n_modes": len(basis),
        "basis_window": list(basis.window),
    })
    return [csv_path]


def _trajectory_rows(traj, g_free):
    two = traj.b2 is not None
    rows = []
    for i, t in enumerate(traj.t):
        row = [t * g_free, traj.b1[i].real, traj.b1[i].imag]
        if two:
            row += [traj.b2[i].real, traj.b2[i].imag]
        row.append(traj.P1[i])
        if two:
            row.append(traj.P2[i])
        row.append(traj.norm_series[i] if traj.norm_series is not None
                   else float("nan"))
        rows.append(row)
    cols = ["t", "Re_b1", "Im_b1"] + (["Re_b2", "Im_b2"] if two else []) \
        + ["P1"] + (["P2"] if two else []) + ["norm"]
    return cols, rows


def _dynamics_setup(cfg: RunConfig, store_profiles: bool, cache_dir):
    w_eg = cfg.atoms[0].transition_omega
    atoms = [AtomSpec.at_focus(cfg.cavity, a.focus_index, a.transition_omega,
                               a.dipole) for a in cfg.atoms]
    half = cfg.basis.window_half_width or 0.4 * w_eg
    window = (w_eg - half, w_eg + half)
    basis = cached_quantize(cfg.cavity, window,
                            cfg.basis.settings(store_profiles=store_profiles),
                            cfg.constants, cfg.basis.provenance, cache_dir,
                            log=log_event)
    log_event(event="dynamics_basis_ready", modes=len(basis))
    km = KernelMatrix.from_basis(basis, atoms, cfg.constants)
    tau = dyn.exchange_time(cfg.cavity, cfg.constants)
    tau_scale = tau if tau is not None else dyn.shortest_path_time(cfg.cavity,
                                                                   cfg.constants)
    return basis, km, atoms, tau, tau_scale


def run_dynamics(cfg: RunConfig, out_dir, cache_dir=None, threads: int = 1):
    """Excitation-exchange trajectories by the exact and Laplace engines."""
    exp: DynamicsConfig = cfg.experiment
    basis, km, atoms, tau, tau_scale = _dynamics_setup(cfg, False, cache_dir)
    t_max = exp.t_max_over_tau * tau_scale
    horizon = dyn.validated_horizon(km)
    if t_max > horizon:
        raise dyn.HorizonExceeded(
            f"t_max {t_max:.3g} exceeds validated horizon {horizon:.3g};"
            " widen the basis window or cutoff")
    t = np.linspace(0.0, t_max, exp.samples)
    g_free = km.gamma_free

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    trajs = {}
    if "exact" in exp.engines:
        trajs["exact"] = dyn.evolve_exact(km, exp.initial_atom, t,
                                          method=exp.integrator)
        log_event(event="dynamics_engine_done", engine="exact")
    if "laplace" in exp.engines:
        trajs["laplace"], _ = dyn.trajectory_from_laplace(km, exp.initial_atom, t)
        log_event(event="dynamics_engine_done", engine="laplace")

    for name, traj in trajs.items():
        cols, rows = _trajectory_rows(traj, g_free)
        path = out_dir / f"trajectory_{name}.csv"
        write_csv(path, cols, rows)
        paths.append(path)

    agreement = None
    if "exact" in trajs and "laplace" in trajs:
        a, b = trajs["exact"], trajs["laplace"]
        scale = max(np.max(np.abs(a.b1)), 1e-300)
        agreement = float(np.max(np.abs(a.b1 - b.b1)) / scale)
        if a.b2 is not None:
            agreement = max(agreement,
                            float(np.max(np.abs(a.b2 - b.b2)) / scale))
    drift = None
    if "exact" in trajs and trajs["exact"].norm_series is not None:
        drift = float(np.max(np.abs(trajs["exact"].norm_series - 1.0)))

    report = {
        "config": config_to_dict(cfg),
        "tau": tau,
        "tau_scale": tau_scale,
        "gamma_free": g_free,
        "gamma_free_times_tau": g_free * tau if tau is not None else None,
        "max_norm_drift": drift,
        "engines_agreement": agreement,
        "validated_horizon": horizon,
        "n_modes": len(basis),
        "t_unit": "1/Gamma_free",
    }
    _sidecar(out_dir / "dynamics_report.json", report)
    log_event(event="dynamics_done", agreement=agreement, norm_drift=drift)
    return paths


def run_field_frames(cfg: RunConfig, out_dir, cache_dir=None, threads: int = 1):
    """Energy-density snapshots at the requested multiples of tau."""
    exp: FieldFramesConfig = cfg.experiment
    basis, km, atoms, tau, tau_scale = _dynamics_setup(cfg, True, cache_dir)
    t_max_over = exp.t_max_over_tau or (max(exp.times_over_tau) + 0.05)
    t_max = t_max_over * tau_scale
    horizon = dyn.validated_horizon(km)
    if t_max > horizon:
        raise dyn.HorizonExceeded("frame horizon exceeds the validated range")
    t = np.linspace(0.0, t_max, exp.samples)
    traj = dyn.evolve_exact(km, exp.initial_atom, t, method="eigen",
                            store_photon=True)
    log_event(event="frames_trajectory_done", samples=exp.samples)
    renderer = fld.FieldRenderer(basis, electric_only=exp.electric_only)
    grid = fld.SliceGrid.for_cavity(cfg.cavity, nx=exp.nx, nz=exp.nz)
    g_free = km.gamma_free
    unit = fld.default_unit_scale(cfg.cavity, atoms[0].omega, g_free,
                                  cfg.constants)

    def render(idx_time):
        i, t_over = idx_time
        snap = fld.snapshot(t_over * tau_scale, traj, renderer, grid,
                            unit_scale=unit)
        return i, t_over, snap

    items = list(enumerate(exp.times_over_tau))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(render, items))
    else:
        results = [render(it) for it in items]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    frame_meta = []
    for i, t_over, snap in sorted(results):
        stem = f"frame_{i:03d}"
        csv_path = out_dir / f"{stem}.csv"
        meta = fld.write_snapshot_csv(snap, csv_path, out_dir / f"{stem}.json",
                                      extra_meta={"t_over_tau": t_over})
        paths.append(csv_path)
        total = snap.field_energy_grid + snap.atom_energy
        budget = cfg.constants.hbar * atoms[0].omega
        frame_meta.append({
            "frame": stem, "t_over_tau": t_over,
            "field_energy_grid": snap.field_energy_grid,
            "field_energy_modes": snap.field_energy_modes,
            "atom_energy": snap.atom_energy,
            "total_over_quantum": total / budget,
        })
        log_event(event="frame_done", frame=stem,
                  total_over_quantum=total / budget)
    _sidecar(out_dir / "frames_report.json", {
        "config": config_to_dict(cfg),
        "tau": tau, "tau_scale": tau_scale, "gamma_free": g_free,
        "unit_scale": unit, "frames": frame_meta, "n_modes": len(basis),
    })
    return paths


_RUNNERS = {"purcell": run_purcell_scan, "dynamics": run_dynamics,
            "frames": run_field_frames}
_EXPECTED_KIND = {"purcell": "purcell_scan", "dynamics": "dynamics",
                  "frames": "field_frames"}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cavityqed",
        description="Spontaneous emission and photon exchange in parabolic "
                    "and prolate-ellipsoidal mirror cavities")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("purcell", "decay-ratio scan over scaled focal length"),
                            ("dynamics", "excitation-exchange trajectories"),
                            ("frames", "energy-density snapshots")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--cache", default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if cfg.experiment.kind != _EXPECTED_KIND[args.command]:
            raise ConfigError(
                f"config experiment kind {cfg.experiment.kind!r} does not "
                f"match subcommand {args.command!r}")
    except ConfigError as exc:
        log_event(event="config_error", error=str(exc))
        return 2

    try:
        out = cfg.output_dir if args.out is None else args.out
        _RUNNERS[args.command](cfg, out, cache_dir=args.cache,
                               threads=args.threads)
    except ConfigError as exc:
        log_event(event="config_error", error=str(exc))
        return 2
    except _NUMERICAL_ERRORS as exc:
        log_event(event="numerical_failure", error=str(exc),
                  kind=type(exc).__name__)
        return 3
    except Exception as exc:  # invariant violations and unexpected states
        log_event(event="internal_error", error=str(exc),
                  kind=type(exc).__name__)
        return 4
    log_event(event="run_complete", command=args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
