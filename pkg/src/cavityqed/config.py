"""Run configuration: strict JSON schema with explicit unit tags.

Every dimensionful field is an object {"value": x, "unit": "<dimension>"}
whose unit string must match the expected dimension exactly; dimensionless
groups (scaled focal length, decay-per-travel-time, aspect ratio) are always
derived, never entered.  Unknown keys are rejected at every level so configs
stay reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import (CavitySpec, ParabolicCavity, PhysicalConstants,
                       ProlateCavity)
from .modes import QuantizeSettings

__all__ = ["ConfigError", "RunConfig", "load_config", "config_to_dict"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _require_keys(d: dict, where: str, required: set[str], optional: set[str] = frozenset()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - required - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where}: missing fields {sorted(missing)}")


def _quantity(d, where: str, unit: str) -> float:
    _require_keys(d, where, {"value", "unit"})
    if d["unit"] != unit:
        raise ConfigError(f"{where}: expected unit {unit!r}, got {d['unit']!r}")
    v = d["value"]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{where}: value must be a number")
    return float(v)


def _tag(value: float, unit: str) -> dict:
    return {"value": value, "unit": unit}


@dataclass(frozen=True)
class AtomConfig:
    focus_index: int
    dipole: float
    transition_omega: float | None  # derived per scan point for purcell runs


@dataclass(frozen=True)
class BasisConfig:
    provenance: str = "exact"
    window_half_width: float | None = None
    channel_weight_cut: float = 1e-5
    ppo: float = 25.0
    store_profiles: bool = False
    store_ppo: float = 14.0

    def settings(self, store_profiles: bool | None = None) -> QuantizeSettings:
        return QuantizeSettings(
            ppo=self.ppo,
            channel_weight_cut=self.channel_weight_cut,
            store_profiles=self.store_profiles if store_profiles is None else store_profiles,
            store_ppo=self.store_ppo)


@dataclass(frozen=True)
class PurcellScanConfig:
    kind: str
    u_grid: tuple[float, ...]
    epsilon: float | None = None
    pole_window: float | None = None


@dataclass(frozen=True)
class DynamicsConfig:
    kind: str
    t_max_over_tau: float
    samples: int
    initial_atom: int
    integrator: str = "eigen"
    engines: tuple[str, ...] = ("exact", "laplace")


@dataclass(frozen=True)
class FieldFramesConfig:
    kind: str
    times_over_tau: tuple[float, ...]
    nx: int = 161
    nz: int = 321
    samples: int = 721
    t_max_over_tau: float | None = None
    initial_atom: int = 1
    electric_only: bool = False


@dataclass(frozen=True)
class RunConfig:
    constants: PhysicalConstants
    cavity: CavitySpec
    atoms: tuple[AtomConfig, ...]
    basis: BasisConfig
    experiment: object
    output_dir: str | None = None


def _parse_cavity(d) -> CavitySpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("cavity: missing 'kind'")
    if d["kind"] == "parabolic":
        _require_keys(d, "cavity", {"kind", "focal_length", "xi_cutoff"})
        return ParabolicCavity(
            focal_length=_quantity(d["focal_length"], "cavity.focal_length", "length"),
            xi_cutoff=_quantity(d["xi_cutoff"], "cavity.xi_cutoff", "length"))
    if d["kind"] == "prolate":
        _require_keys(d, "cavity", {"kind", "interfocal_distance", "vertex_gap"})
        return ProlateCavity(
            interfocal_distance=_quantity(d["interfocal_distance"],
                                          "cavity.interfocal_distance", "length"),
            vertex_gap=_quantity(d["vertex_gap"], "cavity.vertex_gap", "length"))
    raise ConfigError(f"cavity.kind must be 'parabolic' or 'prolate', got {d['kind']!r}")


def _parse_atom(d, i, experiment_kind) -> AtomConfig:
    where = f"atoms[{i}]"
    if experiment_kind == "purcell_scan":
        _require_keys(d, where, {"focus_index", "dipole"})
        omega = None
    else:
        _require_keys(d, where, {"focus_index", "dipole", "transition_omega"})
        omega = _quantity(d["transition_omega"], f"{where}.transition_omega",
                          "rad/time")
    return AtomConfig(
        focus_index=int(d["focus_index"]),
        dipole=_quantity(d["dipole"], f"{where}.dipole", "charge*length"),
        transition_omega=omega)


def _parse_basis(d) -> BasisConfig:
    _require_keys(d, "basis", set(), {"provenance", "window_half_width",
                                      "channel_weight_cut", "ppo",
                                      "store_profiles", "store_ppo"})
    kw = {}
    if "provenance" in d:
        if d["provenance"] not in ("exact", "wkb"):
            raise ConfigError("basis.provenance must be 'exact' or 'wkb'")
        kw["provenance"] = d["provenance"]
    if "window_half_width" in d:
        kw["window_half_width"] = _quantity(d["window_half_width"],
                                            "basis.window_half_width", "rad/time")
    for key in ("channel_weight_cut", "ppo", "store_ppo"):
        if key in d:
            kw[key] = float(d[key])
    if "store_profiles" in d:
        kw["store_profiles"] = bool(d["store_profiles"])
    return BasisConfig(**kw)


def _parse_experiment(d):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("experiment: missing 'kind'")
    kind = d["kind"]
    if kind == "purcell_scan":
        _require_keys(d, "experiment", {"kind", "u_grid"},
                      {"epsilon", "pole_window"})
        u = d["u_grid"]
        if (not isinstance(u, list) or not u
                or any(not isinstance(x, (int, float)) or x <= 0 for x in u)):
            raise ConfigError("experiment.u_grid must be a list of positive numbers")
        eps = _quantity(d["epsilon"], "experiment.epsilon", "rad/time") \
            if "epsilon" in d else None
        pw = _quantity(d["pole_window"], "experiment.pole_window", "rad/time") \
            if "pole_window" in d else None
        return PurcellScanConfig(kind=kind, u_grid=tuple(float(x) for x in u),
                                 epsilon=eps, pole_window=pw)
    if kind == "dynamics":
        _require_keys(d, "experiment", {"kind", "t_max_over_tau", "samples",
                                        "initial_atom"},
                      {"integrator", "engines"})
        engines = tuple(d.get("engines", ["exact", "laplace"]))
        if any(e not in ("exact", "laplace") for e in engines):
            raise ConfigError("experiment.engines entries must be exact|laplace")
        integ = d.get("integrator", "eigen")
        if integ not in ("eigen", "rk4"):
            raise ConfigError("experiment.integrator must be eigen|rk4")
        return DynamicsConfig(kind=kind, t_max_over_tau=float(d["t_max_over_tau"]),
                              samples=int(d["samples"]),
                              initial_atom=int(d["initial_atom"]),
                              integrator=integ, engines=engines)
    if kind == "field_frames":
        _require_keys(d, "experiment", {"kind", "times_over_tau"},
                      {"nx", "nz", "samples", "t_max_over_tau", "initial_atom",
                       "electric_only"})
        times = d["times_over_tau"]
        if not isinstance(times, list) or not times:
            raise ConfigError("experiment.times_over_tau must be a non-empty list")
        return FieldFramesConfig(
            kind=kind, times_over_tau=tuple(float(x) for x in times),
            nx=int(d.get("nx", 161)), nz=int(d.get("nz", 321)),
            samples=int(d.get("samples", 721)),
            t_max_over_tau=float(d["t_max_over_tau"]) if "t_max_over_tau" in d else None,
            initial_atom=int(d.get("initial_atom", 1)),
            electric_only=bool(d.get("electric_only", False)))
    raise ConfigError(f"unknown experiment kind {kind!r}")


def parse_config(doc: dict) -> RunConfig:
    _require_keys(doc, "config", {"schema_version", "cavity", "atoms",
                                  "experiment"},
                  {"constants", "basis", "output_dir"})
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc['schema_version']!r}")
    cd = doc.get("constants", {})
    _require_keys(cd, "constants", set(), {"c", "hbar", "epsilon0"})
    constants = PhysicalConstants(c=float(cd.get("c", 1.0)),
                                  hbar=float(cd.get("hbar", 1.0)),
                                  epsilon0=float(cd.get("epsilon0", 1.0)))
    experiment = _parse_experiment(doc["experiment"])
    cavity = _parse_cavity(doc["cavity"])
    if not isinstance(doc["atoms"], list) or not (1 <= len(doc["atoms"]) <= 2):
        raise ConfigError("atoms must be a list of 1 or 2 entries")
    atoms = tuple(_parse_atom(a, i, experiment.kind)
                  for i, a in enumerate(doc["atoms"]))
    for a in atoms:
        if isinstance(cavity, ParabolicCavity) and a.focus_index != 1:
            raise ConfigError("parabolic cavity supports focus_index 1 only")
        if a.focus_index not in (1, 2):
            raise ConfigError("focus_index must be 1 or 2")
    if len(atoms) == 2:
        if {a.focus_index for a in atoms} != {1, 2}:
            raise ConfigError("two atoms must occupy the two distinct foci")
        if len({(a.dipole, a.transition_omega) for a in atoms}) != 1:
            raise ConfigError("atoms must be identical two-level systems")
    basis = _parse_basis(doc.get("basis", {}))
    out = doc.get("output_dir")
    try:
        cfg = RunConfig(constants=constants, cavity=cavity, atoms=atoms,
                        basis=basis, experiment=experiment, output_dir=out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: RunConfig) -> dict:
    """Lossless serialization back to the JSON schema."""
    if isinstance(cfg.cavity, ParabolicCavity):
        cav = {"kind": "parabolic",
               "focal_length": _tag(cfg.cavity.focal_length, "length"),
               "xi_cutoff": _tag(cfg.cavity.xi_cutoff, "length")}
    else:
        cav = {"kind": "prolate",
               "interfocal_distance": _tag(cfg.cavity.interfocal_distance, "length"),
               "vertex_gap": _tag(cfg.cavity.vertex_gap, "length")}
    atoms = []
    for a in cfg.atoms:
        entry = {"focus_index": a.focus_index,
                 "dipole": _tag(a.dipole, "charge*length")}
        if a.transition_omega is not None:
            entry["transition_omega"] = _tag(a.transition_omega, "rad/time")
        atoms.append(entry)
    b = cfg.basis
    basis = {"provenance": b.provenance, "channel_weight_cut": b.channel_weight_cut,
             "ppo": b.ppo, "store_profiles": b.store_profiles,
             "store_ppo": b.store_ppo}
    if b.window_half_width is not None:
        basis["window_half_width"] = _tag(b.window_half_width, "rad/time")
    e = cfg.experiment
    if isinstance(e, PurcellScanConfig):
        exp = {"kind": e.kind, "u_grid": list(e.u_grid)}
        if e.epsilon is not None:
            exp["epsilon"] = _tag(e.epsilon, "rad/time")
        if e.pole_window is not None:
            exp["pole_window"] = _tag(e.pole_window, "rad/time")
    elif isinstance(e, DynamicsConfig):
        exp = {"kind": e.kind, "t_max_over_tau": e.t_max_over_tau,
               "samples": e.samples, "initial_atom": e.initial_atom,
               "integrator": e.integrator, "engines": list(e.engines)}
    else:
        exp = {"kind": e.kind, "times_over_tau": list(e.times_over_tau),
               "nx": e.nx, "nz": e.nz, "samples": e.samples,
               "initial_atom": e.initial_atom,
               "electric_only": e.electric_only}
        if e.t_max_over_tau is not None:
            exp["t_max_over_tau"] = e.t_max_over_tau
    doc = {"schema_version": SCHEMA_VERSION,
           "constants": {"c": cfg.constants.c, "hbar": cfg.constants.hbar,
                         "epsilon0": cfg.constants.epsilon0},
           "cavity": cav, "atoms": atoms, "basis": basis, "experiment": exp}
    if cfg.output_dir is not None:
        doc["output_dir"] = cfg.output_dir
    return doc
