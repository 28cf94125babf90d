"""Normally ordered energy density of the one-photon field.

For the one-excitation state the normally ordered density is

    w(r, t) = eps0 |E+|^2 + (1/mu0) |B+|^2,
    E+ = i sum_i sqrt(hbar w_i / 2 eps0) f_i(t) g_i(r),
    B+ = i sum_i sqrt(hbar w_i / 2 eps0) f_i(t) (k_i / c) u_i(r) e_phi,

where u_i is the azimuthal potential of mode i (curl(e_phi u_i) = g_i, and
curl g_i = k_i^2 u_i e_phi supplies the magnetic profile).  The vacuum term
is absent by normal ordering, so the vacuum state gives exactly zero.

Every mode profile is separable, so on a curvilinear tensor grid each field
component is a matrix product (profiles x amplitudes x profiles); frames
re-contract cached profile matrices against the photon amplitudes.  Volume
integrals are taken in curvilinear coordinates where the cavity boundary is
a grid line, avoiding mask artifacts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import AmplitudeTrajectory, exchange_time
from .geometry import (CavitySpec, ParabolicCavity, PhysicalConstants,
                       ProlateCavity, volume_weight)
from .modes import ModeBasis
from .oned import ladder_grid
from .separated import eta_problem, xi_problem

__all__ = [
    "SliceGrid",
    "FieldSnapshot",
    "FieldRenderer",
    "energy_density_at",
    "snapshot",
    "write_snapshot_csv",
    "MissingPhotonAmplitudes",
    "ResolutionCap",
]

MASK_SENTINEL = -1.0


class MissingPhotonAmplitudes(ValueError):
    """Trajectory does not carry photon amplitudes for the requested time."""


class ResolutionCap(ValueError):
    """Requested slice resolution exceeds the configured cap."""


@dataclass(frozen=True)
class SliceGrid:
    """Cartesian slice through the symmetry axis (the x-z plane)."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    nx: int
    nz: int

    @classmethod
    def for_cavity(cls, cavity: CavitySpec, nx: int = 201, nz: int = 401,
                   pad: float = 1.02):
        if isinstance(cavity, ProlateCavity):
            a, b = cavity.semi_major, cavity.semi_minor
            return cls(-pad * b, pad * b, -pad * a, pad * a, nx, nz)
        f = cavity.focal_length
        z_hi = 3.0 * f
        x_hi = math.sqrt(4.0 * f * (z_hi + f))
        return cls(-x_hi, x_hi, -pad * f, z_hi, nx, nz)


@dataclass
class FieldSnapshot:
    """Energy density on a Cartesian slice at one instant."""

    t: float
    tau: float | None
    grid: SliceGrid
    energy_density: np.ndarray      # (nz, nx), MASK_SENTINEL outside
    unit_scale: float
    focal_markers: list
    electric_only: bool
    field_energy_grid: float        # 2 pi curvilinear quadrature of w
    field_energy_modes: float       # sum hbar w_i |f_i|^2
    atom_energy: float              # hbar w_eg (P1 + P2)
    mask_sentinel: float = MASK_SENTINEL


def default_unit_scale(cavity: CavitySpec, omega_eg: float, g_free: float,
                       constants: PhysicalConstants) -> float:
    """Heatmap unit: 3 pi hbar w_eg Gamma_free / (80 d^2 c) for the ellipsoid."""
    if isinstance(cavity, ProlateCavity):
        d = cavity.interfocal_distance
        return 3.0 * math.pi * constants.hbar * omega_eg * g_free \
            / (80.0 * d * d * constants.c)
    return 1.0


class FieldRenderer:
    """Cached tensor-grid contraction engine for one mode basis."""

    def __init__(self, basis: ModeBasis, electric_only: bool = False,
                 render_ppo: float = 14.0):
        if basis.profiles is None:
            raise ValueError("field rendering needs a basis with stored profiles")
        self.basis = basis
        self.cavity = basis.cavity
        self.constants = basis.constants
        self.electric_only = electric_only
        prolate = isinstance(self.cavity, ProlateCavity)

        k_hi = float(basis.omega.max()) / self.constants.c
        sep_all = basis.sep
        p_ref = {"k": k_hi, "sep": np.array([sep_all.min(), sep_all.max()])}
        segs_xi = ladder_grid(xi_problem(self.cavity), p_ref, ppo=render_ppo)
        segs_eta = ladder_grid(eta_problem(self.cavity), p_ref, ppo=render_ppo)
        self.s_xi = np.concatenate([seg.s0 + seg.h * np.arange(1, seg.n + 1)
                                    for seg in segs_xi])
        s_eta_half = np.concatenate([seg.s0 + seg.h * np.arange(1, seg.n + 1)
                                     for seg in segs_eta])
        if prolate:
            eta_n = 1.0 - s_eta_half
            self.eta = np.concatenate([-eta_n[eta_n > 0], eta_n[::-1]])
            self.xi = 1.0 + self.s_xi
        else:
            self.eta = s_eta_half
            self.xi = self.s_xi

        n_m = len(basis)
        n_xi, n_eta = len(self.xi), len(self.eta)
        self.P = np.empty((n_xi, n_m), dtype=np.float32)
        self.dP = np.empty((n_xi, n_m), dtype=np.float32)
        self.T = np.empty((n_eta, n_m), dtype=np.float32)
        self.dT = np.empty((n_eta, n_m), dtype=np.float32)
        from scipy.interpolate import CubicSpline

        for i, prof in enumerate(basis.profiles):
            su = CubicSpline(prof.s_xi, prof.u_xi)
            sdu = CubicSpline(prof.s_xi, prof.du_xi)
            s = np.clip(self.s_xi, prof.s_xi[0], prof.s_xi[-1])
            u = su(s)
            du = sdu(s)
            seed = self.s_xi < prof.s_xi[0]
            slope = prof.u_xi[0] / prof.s_xi[0]
            self.P[:, i] = np.where(seed, self.s_xi * slope, u)
            self.dP[:, i] = np.where(seed, slope, du)

            tu = CubicSpline(prof.s_eta, prof.u_eta)
            tdu = CubicSpline(prof.s_eta, prof.du_eta)
            if prolate:
                s_eta = 1.0 - np.abs(self.eta)
                sc = np.clip(s_eta, prof.s_eta[0], prof.s_eta[-1])
                u = tu(sc)
                du_ds = tdu(sc)
                seed = s_eta < prof.s_eta[0]
                slope = prof.u_eta[0] / prof.s_eta[0]
                u = np.where(seed, s_eta * slope, u)
                du_ds = np.where(seed, slope, du_ds)
                pf = np.where(self.eta >= 0, 1.0, float(basis.parity[i]))
                self.T[:, i] = pf * u
                self.dT[:, i] = np.where(self.eta >= 0, -1.0, 1.0) * pf * du_ds
            else:
                sc = np.clip(self.eta, prof.s_eta[0], prof.s_eta[-1])
                u = tu(sc)
                du = tdu(sc)
                seed = self.eta < prof.s_eta[0]
                slope = prof.u_eta[0] / prof.s_eta[0]
                self.T[:, i] = np.where(seed, self.eta * slope, u)
                self.dT[:, i] = np.where(seed, slope, du)

        # geometric prefactor fields on the tensor grid
        XI = self.xi[:, None]
        ETA = self.eta[None, :]
        if prolate:
            c0 = self.cavity.c0
            den = XI * XI - ETA * ETA
            self.pref_xi = -1.0 / (c0 * np.sqrt((XI * XI - 1.0) * den))
            self.pref_eta = 1.0 / (c0 * np.sqrt((1.0 - ETA * ETA) * den))
            self.pref_u = 1.0 / (c0 * c0 * np.sqrt((XI * XI - 1.0) * (1.0 - ETA * ETA)))
        else:
            self.pref_xi = 2.0 / np.sqrt(XI * (XI + ETA))
            self.pref_eta = -2.0 / np.sqrt(ETA * (XI + ETA))
            self.pref_u = 1.0 / np.sqrt(XI * ETA)
        self.vol_weight = volume_weight(self.cavity, XI, ETA)
        # u = F G = u_xi u_eta * pref_u with the parabola convention
        if prolate:
            self.pref_u = 1.0 / (np.sqrt(XI * XI - 1.0) * np.sqrt(1.0 - ETA * ETA))

        cst = self.constants
        self.mode_coeff = np.sqrt(cst.hbar * basis.omega / (2.0 * cst.epsilon0))
        self.mode_k = basis.omega / cst.c

    def _contract(self, left: np.ndarray, w: np.ndarray, right: np.ndarray):
        re = (left * w.real.astype(np.float32)[None, :]) @ right.T
        im = (left * w.imag.astype(np.float32)[None, :]) @ right.T
        return re.astype(np.float64) + 1j * im.astype(np.float64)

    def energy_density(self, f_modes: np.ndarray) -> np.ndarray:
        """w(xi, eta) for photon amplitudes f_modes (lab frame, complex)."""
        w_e = self.mode_coeff * f_modes
        s_xi = self.pref_xi * self._contract(self.P, w_e, self.dT)
        s_eta = self.pref_eta * self._contract(self.dP, w_e, self.T)
        out = np.abs(s_xi) ** 2 + np.abs(s_eta) ** 2
        if not self.electric_only:
            w_b = w_e * self.mode_k
            s_u = self.pref_u * self._contract(self.P, w_b, self.T)
            out += np.abs(s_u) ** 2
        return self.constants.epsilon0 * out

    def total_energy(self, w_grid: np.ndarray) -> float:
        """2 pi int w * h_xi h_eta h_phi dxi deta on the tensor grid."""
        wx = _trapz_weights(self.xi)
        we = _trapz_weights(self.eta)
        return float(2.0 * math.pi
                     * wx @ (w_grid * self.vol_weight) @ we)

    def to_cartesian(self, w_grid: np.ndarray, grid: SliceGrid) -> np.ndarray:
        """Resample onto the Cartesian slice; sentinel outside the cavity."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((self.xi, self.eta), w_grid,
                                         bounds_error=False, fill_value=None)
        x = np.linspace(grid.x_min, grid.x_max, grid.nx)
        z = np.linspace(grid.z_min, grid.z_max, grid.nz)
        X, Z = np.meshgrid(x, z)
        rho = np.abs(X)
        cav = self.cavity
        if isinstance(cav, ProlateCavity):
            c0 = cav.c0
            r1 = np.sqrt(rho ** 2 + (Z - c0) ** 2)
            r2 = np.sqrt(rho ** 2 + (Z + c0) ** 2)
            xi = (r1 + r2) / (2.0 * c0)
            eta = np.clip((r2 - r1) / (2.0 * c0), -1.0, 1.0)
            inside = xi <= cav.xi_boundary
            xi = np.clip(xi, self.xi[0], self.xi[-1])
        else:
            r = np.sqrt(rho ** 2 + Z ** 2)
            xi = np.clip(r + Z, self.xi[0], self.xi[-1])
            eta = r - Z
            inside = (eta <= cav.eta_boundary) & (r + Z <= self.xi[-1])
            eta = np.clip(eta, self.eta[0], self.eta[-1])
        vals = interp(np.stack([xi.ravel(), eta.ravel()], axis=1)).reshape(Z.shape)
        vals = np.maximum(vals, 0.0)
        return np.where(inside, vals, MASK_SENTINEL)


def _trapz_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


def _photon_at(traj: AmplitudeTrajectory, t: float) -> np.ndarray:
    """Photon amplitudes at time t (rotating-frame interpolation)."""
    if traj.photon is None:
        raise MissingPhotonAmplitudes("trajectory carries no photon amplitudes")
    tg = traj.t
    if t < tg[0] - 1e-12 or t > tg[-1] + 1e-12:
        raise MissingPhotonAmplitudes(f"time {t} outside the trajectory range")
    j = int(np.clip(np.searchsorted(tg, t), 1, len(tg) - 1))
    t0, t1 = tg[j - 1], tg[j]
    lam = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
    w_eg = traj.omega_eg
    rot = traj.photon[j - 1] * np.exp(1j * w_eg * t0) * (1 - lam) \
        + traj.photon[j] * np.exp(1j * w_eg * t1) * lam
    return rot * np.exp(-1j * w_eg * t)


def energy_density_at(point, t: float, traj: AmplitudeTrajectory,
                      renderer: FieldRenderer) -> float:
    """w(r, t) at a single point, interpolated from the tensor grid."""
    from .geometry import to_curvilinear

    xi, eta, _ = to_curvilinear(point, renderer.cavity)
    f_t = _photon_at(traj, t)
    w_grid = renderer.energy_density(f_t)
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator((renderer.xi, renderer.eta), w_grid,
                                     bounds_error=False, fill_value=None)
    return float(max(interp([[np.clip(xi, renderer.xi[0], renderer.xi[-1]),
                              np.clip(eta, renderer.eta[0], renderer.eta[-1])]])[0],
                     0.0))


def snapshot(t: float, traj: AmplitudeTrajectory, renderer: FieldRenderer,
             grid: SliceGrid | None = None, unit_scale: float | None = None,
             max_pixels: int = 4_000_000) -> FieldSnapshot:
    """Energy-density slice at time ``t`` in units of ``unit_scale``."""
    cavity = renderer.cavity
    constants = renderer.constants
    if grid is None:
        grid = SliceGrid.for_cavity(cavity)
    if grid.nx * grid.nz > max_pixels:
        raise ResolutionCap(f"{grid.nx}x{grid.nz} exceeds {max_pixels} pixels")
    f_t = _photon_at(traj, t)
    w_grid = renderer.energy_density(f_t)
    e_grid = renderer.total_energy(w_grid)
    e_modes = float(np.sum(renderer.basis.omega * constants.hbar
                           * np.abs(f_t) ** 2))
    w_eg = traj.omega_eg
    p1 = float(np.interp(t, traj.t, traj.P1))
    p2 = float(np.interp(t, traj.t, traj.P2)) if traj.P2 is not None else 0.0
    atom_e = constants.hbar * w_eg * (p1 + p2)
    if unit_scale is None:
        from .kernel import gamma_free as _gf

        unit_scale = default_unit_scale(
            cavity, w_eg, _gf(_first_atom(renderer, traj), constants), constants)
    img = renderer.to_cartesian(w_grid, grid)
    scaled = np.where(img == MASK_SENTINEL, MASK_SENTINEL, img / unit_scale)
    markers = [cavity.focus_position(1).tolist()]
    if isinstance(cavity, ProlateCavity):
        markers.append(cavity.focus_position(2).tolist())
    return FieldSnapshot(t=t, tau=traj.tau, grid=grid, energy_density=scaled,
                         unit_scale=unit_scale, focal_markers=markers,
                         electric_only=renderer.electric_only,
                         field_energy_grid=e_grid, field_energy_modes=e_modes,
                         atom_energy=atom_e)


def _first_atom(renderer: FieldRenderer, traj: AmplitudeTrajectory):
    from .geometry import AtomSpec

    return AtomSpec.at_focus(renderer.cavity, 1, traj.omega_eg, 1.0)


def write_snapshot_csv(snap: FieldSnapshot, csv_path, json_path=None,
                       extra_meta: dict | None = None):
    """Row-major CSV (header row with grid metadata) + JSON sidecar."""
    g = snap.grid
    header = (f"# energy density slice, rows z in [{g.z_min:.17g},{g.z_max:.17g}]"
              f" ({g.nz}), cols x in [{g.x_min:.17g},{g.x_max:.17g}] ({g.nx}),"
              f" unit={snap.unit_scale:.17g}, mask={snap.mask_sentinel}")
    rows = [header]
    for r in snap.energy_density:
        rows.append(",".join(f"{v:.9g}" for v in r))
    with open(csv_path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    meta = {
        "t": snap.t,
        "tau": snap.tau,
        "unit_scale": snap.unit_scale,
        "unit": "3*pi*hbar*omega_eg*Gamma_free/(80*d^2*c)" if snap.tau is not None
                else "energy/volume (natural units)",
        "extents": {"x": [g.x_min, g.x_max], "z": [g.z_min, g.z_max]},
        "resolution": {"nx": g.nx, "nz": g.nz},
        "mask_sentinel": snap.mask_sentinel,
        "focal_markers": snap.focal_markers,
        "electric_only": snap.electric_only,
        "field_energy_grid": snap.field_energy_grid,
        "field_energy_modes": snap.field_energy_modes,
        "atom_energy": snap.atom_energy,
    }
    if extra_meta:
        meta.update(extra_meta)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
    return meta
