"""Mode-basis disk cache.

NPZ tables keyed by a hash of the cavity, window, provenance and solver
settings; profile sample arrays are ragged and stored concatenated with
offset tables.  A format-version integer guards against stale layouts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .geometry import ParabolicCavity, PhysicalConstants, ProlateCavity
from .modes import (ModeBasis, ModeProfile, QuantizeSettings, quantize_exact,
                    quantize_wkb)

__all__ = ["FORMAT_VERSION", "basis_cache_key", "save_basis", "load_basis",
           "cached_quantize", "cache_dir_from_env"]

FORMAT_VERSION = 1
_ENV_VAR = "CAVITYQED_CACHE"


def cache_dir_from_env(explicit: str | None = None) -> Path | None:
    if explicit:
        return Path(explicit)
    env = os.environ.get(_ENV_VAR)
    return Path(env) if env else None


def _cavity_fields(cavity) -> dict:
    if isinstance(cavity, ParabolicCavity):
        return {"kind": "parabolic", "focal_length": cavity.focal_length,
                "xi_cutoff": cavity.xi_cutoff}
    return {"kind": "prolate", "interfocal_distance": cavity.interfocal_distance,
            "vertex_gap": cavity.vertex_gap}


def basis_cache_key(cavity, window, provenance: str,
                    settings: QuantizeSettings,
                    constants: PhysicalConstants) -> str:
    payload = {
        "format": FORMAT_VERSION,
        "cavity": _cavity_fields(cavity),
        "window": [float(window[0]), float(window[1])],
        "provenance": provenance,
        "settings": asdict(settings),
        "constants": asdict(constants),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def save_basis(basis: ModeBasis, path) -> None:
    arrays = {
        "format_version": np.array([FORMAT_VERSION]),
        "window": np.asarray(basis.window, dtype=float),
        "omega": basis.omega, "sep": basis.sep, "channel": basis.channel,
        "n_long": basis.n_long, "parity": basis.parity, "norm": basis.norm,
        "gz1": basis.gz1, "gz2": basis.gz2,
        "constants": np.array([basis.constants.c, basis.constants.hbar,
                               basis.constants.epsilon0]),
        "has_profiles": np.array([basis.profiles is not None]),
    }
    cav = _cavity_fields(basis.cavity)
    arrays["cavity_kind"] = np.array([cav["kind"]])
    arrays["cavity_params"] = np.array(
        [cav.get("focal_length", cav.get("interfocal_distance")),
         cav.get("xi_cutoff", cav.get("vertex_gap", 0.0))])
    arrays["provenance"] = np.array([basis.provenance])
    if basis.profiles is not None:
        for side in ("xi", "eta"):
            ss, us, dus, offs = [], [], [], [0]
            for p in basis.profiles:
                s = getattr(p, f"s_{side}")
                ss.append(s)
                us.append(getattr(p, f"u_{side}"))
                dus.append(getattr(p, f"du_{side}"))
                offs.append(offs[-1] + len(s))
            arrays[f"prof_{side}_s"] = np.concatenate(ss)
            arrays[f"prof_{side}_u"] = np.concatenate(us)
            arrays[f"prof_{side}_du"] = np.concatenate(dus)
            arrays[f"prof_{side}_off"] = np.array(offs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez_compressed(tmp, **arrays)
    os.replace(tmp, path)


def load_basis(path) -> ModeBasis:
    with np.load(path, allow_pickle=False) as z:
        if int(z["format_version"][0]) != FORMAT_VERSION:
            raise ValueError("mode cache format version mismatch")
        kind = str(z["cavity_kind"][0])
        p = z["cavity_params"]
        if kind == "parabolic":
            cavity = ParabolicCavity(float(p[0]), float(p[1]))
        else:
            cavity = ProlateCavity(float(p[0]), float(p[1]))
        c = z["constants"]
        constants = PhysicalConstants(float(c[0]), float(c[1]), float(c[2]))
        profiles = None
        if bool(z["has_profiles"][0]):
            profiles = []
            off_xi = z["prof_xi_off"]
            off_eta = z["prof_eta_off"]
            for i in range(len(z["omega"])):
                sl_xi = slice(off_xi[i], off_xi[i + 1])
                sl_eta = slice(off_eta[i], off_eta[i + 1])
                profiles.append(ModeProfile(
                    s_xi=z["prof_xi_s"][sl_xi], u_xi=z["prof_xi_u"][sl_xi],
                    du_xi=z["prof_xi_du"][sl_xi],
                    s_eta=z["prof_eta_s"][sl_eta], u_eta=z["prof_eta_u"][sl_eta],
                    du_eta=z["prof_eta_du"][sl_eta]))
        return ModeBasis(
            cavity=cavity, constants=constants,
            provenance=str(z["provenance"][0]),
            window=(float(z["window"][0]), float(z["window"][1])),
            omega=z["omega"], sep=z["sep"], channel=z["channel"],
            n_long=z["n_long"], parity=z["parity"], norm=z["norm"],
            gz1=z["gz1"], gz2=z["gz2"], profiles=profiles)


def cached_quantize(cavity, window, settings: QuantizeSettings,
                    constants: PhysicalConstants, provenance: str = "exact",
                    cache_dir=None, log=None) -> ModeBasis:
    """Quantize with a read-through disk cache (when a directory is given)."""
    cache_dir = cache_dir_from_env(cache_dir)
    path = None
    if cache_dir is not None:
        key = basis_cache_key(cavity, window, provenance, settings, constants)
        path = Path(cache_dir) / f"basis_{key}.npz"
        if path.exists():
            if log:
                log(event="basis_cache_hit", path=str(path))
            return load_basis(path)
    fn = quantize_exact if provenance == "exact" else quantize_wkb
    basis = fn(cavity, window, settings, constants)
    if path is not None:
        save_basis(basis, path)
        if log:
            log(event="basis_cache_store", path=str(path), modes=len(basis))
    return basis
