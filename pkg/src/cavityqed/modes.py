"""Cavity eigenmodes coupling to axial dipoles: exact and WKB construction.

A mode is labeled (channel, n): the channel index counts nodes of the
mirror/angular profile (the separation-constant ladder), n the longitudinal
nodes toward the wall.  Only channels whose focal coupling survives the
endpoint penetration factors are constructed; that channel cutoff is an
explicit, convergence-tested setting.

The exact path scans a dense frequency grid per channel with the batched
Numerov sweep, brackets sign changes of the wall mismatch and refines them;
norm integrals and focal couplings come out of the same sweeps.  The WKB
path replaces both by phase-integral conditions and semiclassical norm
integrals, sharing every downstream consumer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import wkb as _wkb
from .geometry import (AtomSpec, CavitySpec, ParabolicCavity, PhysicalConstants,
                       ProlateCavity, azimuthal_curl, to_curvilinear, unit_vectors)
from .oned import RadialProblem, ladder_grid, propagate, refine_roots
from .separated import (eta_problem, gz_focus_raw, norm_weights_eta,
                        norm_weights_xi, normalization_squared, xi_problem)

__all__ = [
    "Mode",
    "ModeProfile",
    "ModeBasis",
    "QuantizeSettings",
    "quantize_exact",
    "quantize_wkb",
    "normalize_mode",
    "mode_field_at",
    "mode_z_at_focus",
    "ModeFieldEvaluator",
    "dense_mode_field",
    "WindowTooWide",
    "MissedModes",
]


class WindowTooWide(RuntimeError):
    """Estimated mode count exceeds the configured cap."""


class MissedModes(RuntimeError):
    """Node-count bookkeeping detected a skipped eigenvalue."""


@dataclass
class ModeProfile:
    """Decimated normal-form samples (u, u') along both coordinates.

    Stored in the endpoint variable s of each radial problem, already
    divided by the mode normalization.
    """

    s_xi: np.ndarray
    u_xi: np.ndarray
    du_xi: np.ndarray
    s_eta: np.ndarray
    u_eta: np.ndarray
    du_eta: np.ndarray


@dataclass
class Mode:
    """One cavity eigenmode of the axial-dipole-coupled family."""

    quantum_numbers: tuple[int, int]   # (channel, longitudinal nodes)
    omega: float
    separation_constant: float
    normalization: float               # divisor applied to unit-slope seeds
    gz_focus1: float
    gz_focus2: float                   # 0 for the parabola
    parity: int                        # eta-parity (+1/-1); +1 for parabola
    profile: ModeProfile | None = None


@dataclass
class ModeBasis:
    """Ordered mode set inside a frequency window."""

    cavity: CavitySpec
    constants: PhysicalConstants
    provenance: str                     # "exact" or "wkb"
    window: tuple[float, float]         # angular frequency
    omega: np.ndarray
    sep: np.ndarray
    channel: np.ndarray
    n_long: np.ndarray
    parity: np.ndarray
    norm: np.ndarray
    gz1: np.ndarray
    gz2: np.ndarray
    profiles: list[ModeProfile] | None = None

    def __len__(self):
        return len(self.omega)

    @property
    def modes(self) -> tuple[Mode, ...]:
        out = []
        for i in range(len(self.omega)):
            out.append(Mode(
                quantum_numbers=(int(self.channel[i]), int(self.n_long[i])),
                omega=float(self.omega[i]),
                separation_constant=float(self.sep[i]),
                normalization=float(self.norm[i]),
                gz_focus1=float(self.gz1[i]),
                gz_focus2=float(self.gz2[i]),
                parity=int(self.parity[i]),
                profile=self.profiles[i] if self.profiles is not None else None,
            ))
        return tuple(out)

    def gz_at_focus(self, focus_index: int) -> np.ndarray:
        if focus_index == 1:
            return self.gz1
        if focus_index == 2 and isinstance(self.cavity, ProlateCavity):
            return self.gz2
        raise ValueError("invalid focus index for this cavity")


@dataclass(frozen=True)
class QuantizeSettings:
    """Resolution and truncation knobs for basis construction."""

    ppo: float = 25.0                  # Numerov points per local wavelength
    store_profiles: bool = False
    store_ppo: float = 14.0            # stored-sample density for field work
    channel_weight_cut: float = 1e-5   # focal-coupling weight threshold
    max_channels: int = 80
    sep_samples: int = 18              # spline samples for sep(k) per channel
    locate_per_spacing: float = 4.0    # mismatch grid density vs mode spacing
    max_modes: int = 120_000
    refine_iters: int = 20


# ---------------------------------------------------------------------------
# separation-constant ladders (channels)
# ---------------------------------------------------------------------------

def _parabola_sep_top(cavity: ParabolicCavity, k: float) -> float:
    """Largest separation constant carrying at least pi/8 of mirror phase.

    Above this value the mirror coordinate has no quantizable allowed
    region (the turning point reaches the wall), so no channel lives there.
    """
    prob = eta_problem(cavity)
    cap = 0.25 * k * k * cavity.eta_boundary

    def phase_margin(sep):
        try:
            return _wkb.phase_data(prob, {"k": k, "sep": sep}).phi - math.pi / 8.0
        except _wkb.TurningPointFailure:
            return -1.0

    if phase_margin(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 0.995 * cap
    if phase_margin(hi) > 0.0:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if phase_margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def _sep_search_range(cavity: CavitySpec, k: float, cut: float):
    """Conservative separation-constant range for channels that couple."""
    xmax = math.log(max(4.0 / max(cut, 1e-12), 10.0)) / (2.0 * math.pi) + 1.4
    if isinstance(cavity, ParabolicCavity):
        return -xmax * k, min(xmax * k, _parabola_sep_top(cavity, k))
    kap = k * cavity.c0
    span = 4.0 * xmax * kap
    return max(kap * kap - span, 1.0), kap * kap + span


def _channel_weight(cavity: CavitySpec, k: float, sep: float) -> float:
    """Focal-coupling suppression product of both coordinate endpoints."""
    if isinstance(cavity, ParabolicCavity):
        x = sep / k
    else:
        kap = k * cavity.c0
        x = (sep - kap * kap) / (4.0 * kap)
    return float(_wkb.coulomb_penetration_sq(x) * _wkb.coulomb_penetration_sq(-x))


@dataclass
class _Channel:
    label: int          # mirror node count (parabola) or l (ellipsoid)
    parity: int
    nodes_half: int     # node count of the half-range angular solution
    sep_ref: float      # separation constant at the discovery wavenumber
    k_ref: float = 0.0
    spacing_ref: float = 1.0


def _count_nodes(res, index: int, parity: int) -> int:
    n = int(res.nodes[index])
    if parity < 0 and bool(res.last_edge_cross[index]):
        n -= 1  # the equator zero is the parity node, not an interior one
    return n


def _sep_eigen_at_k(cavity: CavitySpec, k: float, settings: QuantizeSettings,
                    sep_lo: float, sep_hi: float) -> list[_Channel]:
    """All separation eigenvalues in [sep_lo, sep_hi] at fixed wavenumber."""
    prob = eta_problem(cavity)
    prolate = isinstance(cavity, ProlateCavity)

    mid = 0.5 * (sep_lo + sep_hi)
    phi_hi = _wkb.phase_data(prob, {"k": k, "sep": sep_lo}).phi
    phi_mid = _wkb.phase_data(prob, {"k": k, "sep": mid}).phi
    dphi = abs(phi_hi - phi_mid) / max(abs(mid - sep_lo), 1e-300)
    spacing = math.pi / max(dphi, 1e-12)
    n_grid = int(max(64, min(6000, 6.0 * (sep_hi - sep_lo) / spacing)))
    grid_sep = np.linspace(sep_lo, sep_hi, n_grid)

    params = {"k": k, "sep": grid_sep}
    lad = ladder_grid(prob, params, ppo=settings.ppo)
    res = propagate(prob, params, lad)

    channels: list[_Channel] = []
    parities = (1, -1) if prolate else (1,)
    for parity in parities:
        bc = "neumann" if parity > 0 else "dirichlet"
        mm = res.mismatch(bc)
        sg = np.sign(mm)
        idx = np.nonzero(sg[:-1] * sg[1:] < 0)[0]
        if len(idx) == 0:
            continue

        def mism(v, bc=bc):
            return propagate(prob, {"k": k, "sep": np.atleast_1d(v)}, lad).mismatch(bc)

        roots = refine_roots(mism, grid_sep[idx], grid_sep[idx + 1],
                             mm[idx], mm[idx + 1], iters=settings.refine_iters)
        fin = propagate(prob, {"k": k, "sep": roots}, lad)
        for j, sep in enumerate(roots):
            nh = _count_nodes(fin, j, parity)
            label = (1 + 2 * nh + (1 if parity < 0 else 0)) if prolate else nh
            channels.append(_Channel(label=label, parity=parity,
                                     nodes_half=nh, sep_ref=float(sep)))
    channels.sort(key=lambda c: c.label)
    return channels


def _refine_sep_near(cavity, settings, k: float, guess: float, width: float,
                     parity: int, expect_nodes: int | None) -> float | None:
    """Bracket and refine one separation eigenvalue near a prediction."""
    prob = eta_problem(cavity)
    bc = "neumann" if parity > 0 else "dirichlet"
    for grow in (1.0, 3.0, 9.0, 27.0):
        lo, hi = guess - grow * width, guess + grow * width
        probe = np.linspace(lo, hi, 17)
        lad = ladder_grid(prob, {"k": k, "sep": probe}, ppo=settings.ppo)

        def mism(v):
            return propagate(prob, {"k": k, "sep": np.atleast_1d(v)}, lad).mismatch(bc)

        mm = mism(probe)
        sg = np.sign(mm)
        idx = np.nonzero(sg[:-1] * sg[1:] < 0)[0]
        if len(idx) == 0:
            continue
        mids = 0.5 * (probe[idx] + probe[idx + 1])
        for j in np.argsort(np.abs(mids - guess)):
            root = refine_roots(mism, probe[idx[j]:idx[j] + 1],
                                probe[idx[j] + 1:idx[j] + 2],
                                mm[idx[j]:idx[j] + 1],
                                mm[idx[j] + 1:idx[j] + 2],
                                iters=settings.refine_iters)
            if expect_nodes is None:
                return float(root[0])
            fin = propagate(prob, {"k": k, "sep": root}, lad)
            if _count_nodes(fin, 0, parity) == expect_nodes:
                return float(root[0])
    return None


def _track_channel(cavity, settings, k_samples: np.ndarray, k0: float,
                   ch: _Channel, spacing_guess: float) -> np.ndarray:
    """Follow one separation branch across the window (NaN where lost)."""
    out = np.full(len(k_samples), np.nan)
    i0 = int(np.argmin(np.abs(k_samples - k0)))
    out[i0] = ch.sep_ref
    order = list(range(i0 + 1, len(k_samples))) + list(range(i0 - 1, -1, -1))
    for i in order:
        anchor = i - 1 if i > i0 else i + 1
        if math.isnan(out[anchor]):
            continue
        anchor2 = anchor - 1 if i > i0 else anchor + 1
        if 0 <= anchor2 < len(k_samples) and not math.isnan(out[anchor2]):
            slope = (out[anchor] - out[anchor2]) / (k_samples[anchor] - k_samples[anchor2])
        else:
            slope = _dsep_dk_estimate(cavity, k_samples[anchor], out[anchor])
        guess = out[anchor] + slope * (k_samples[i] - k_samples[anchor])
        out[i] = np.nan
        root = _refine_sep_near(cavity, settings, float(k_samples[i]), guess,
                                0.3 * spacing_guess, ch.parity, ch.nodes_half)
        if root is not None:
            out[i] = root
    return out


def _dsep_dk_estimate(cavity: CavitySpec, k: float, sep: float) -> float:
    if isinstance(cavity, ParabolicCavity):
        return sep / k if k > 0 else 0.0
    return 2.0 * k * cavity.c0 ** 2  # the ladder tracks kappa^2


# ---------------------------------------------------------------------------
# exact quantization
# ---------------------------------------------------------------------------

def quantize_exact(cavity: CavitySpec, window: tuple[float, float],
                   settings: QuantizeSettings = QuantizeSettings(),
                   constants: PhysicalConstants = PhysicalConstants()) -> ModeBasis:
    """All coupled eigenmodes with omega inside ``window``, by shooting.

    Per channel, the wall mismatch is sampled at ``locate_per_spacing``
    points per semiclassically estimated spacing (so no eigenvalue can slip
    between grid points when the counts agree) and every bracket is refined
    by a batched safeguarded secant.  Raises :class:`WindowTooWide` against
    runaway requests and :class:`MissedModes` when longitudinal node counts
    skip.
    """
    w_lo, w_hi = window
    if not (0 < w_lo < w_hi):
        raise ValueError("window must satisfy 0 < omega_lo < omega_hi")
    k_lo, k_hi = w_lo / constants.c, w_hi / constants.c
    prolate = isinstance(cavity, ProlateCavity)
    cut = settings.channel_weight_cut

    # channel relevance can shift across a wide window: discover at both ends
    channels: dict[tuple[int, int], _Channel] = {}
    for k_anchor in {k_hi, k_lo}:
        found = _sep_eigen_at_k(cavity, k_anchor, settings,
                                *_sep_search_range(cavity, k_anchor, cut))
        if not found:
            continue
        wts = np.array([_channel_weight(cavity, k_anchor, c.sep_ref) for c in found])
        seps_sorted = np.sort([c.sep_ref for c in found])
        spacing = float(np.median(np.diff(seps_sorted))) if len(found) > 1 \
            else abs(found[0].sep_ref) + 1.0
        for c, w in zip(found, wts):
            if w < cut * wts.max():
                continue
            key = (c.label, c.parity)
            if key not in channels or k_anchor == k_hi:
                c.k_ref = k_anchor
                c.spacing_ref = spacing
                channels[key] = c
    channels = [channels[k] for k in sorted(channels)]
    if not channels:
        return _assemble_basis(cavity, constants, "exact", window, [],
                               settings.store_profiles)
    if len(channels) > settings.max_channels:
        raise WindowTooWide(f"{len(channels)} channels exceed the configured cap")
    k_samples = np.linspace(k_lo, k_hi, max(6, settings.sep_samples))

    prob_xi = xi_problem(cavity)
    prob_eta = eta_problem(cavity)
    wxi = norm_weights_xi(cavity)
    weta = norm_weights_eta(cavity)

    records = []
    for ch in channels:
        sep_k = _track_channel(cavity, settings, k_samples, ch.k_ref, ch,
                               ch.spacing_ref)
        good = ~np.isnan(sep_k)
        if good.sum() < 4:
            continue
        spline = CubicSpline(k_samples[good], sep_k[good])
        k_min_ch = float(k_samples[good].min())
        k_max_ch = float(k_samples[good].max())

        dphi_dk = _channel_phase_slope(prob_xi, spline, k_min_ch, k_max_ch)
        dk_mode = math.pi / max(dphi_dk, 1e-12)
        n_grid = int(math.ceil((k_max_ch - k_min_ch) / dk_mode
                               * settings.locate_per_spacing)) + 2
        if n_grid > settings.max_modes:
            raise WindowTooWide(
                f"channel {ch.label}: {n_grid} mismatch samples exceed max_modes")
        kg = np.linspace(k_min_ch, k_max_ch, n_grid)
        params = {"k": kg, "sep": spline(kg)}
        lad = ladder_grid(prob_xi, params, ppo=settings.ppo)
        mm = propagate(prob_xi, params, lad).mismatch(prob_xi.bc)
        sg = np.sign(mm)
        idx = np.nonzero(sg[:-1] * sg[1:] < 0)[0]
        if len(idx) == 0:
            continue

        def mism_k(v):
            return propagate(prob_xi, {"k": v, "sep": spline(v)}, lad).mismatch(prob_xi.bc)

        roots = refine_roots(mism_k, kg[idx], kg[idx + 1], mm[idx], mm[idx + 1],
                             iters=settings.refine_iters)
        stride = max(1, int(round(settings.ppo / settings.store_ppo))) \
            if settings.store_profiles else 0
        fin_xi = propagate(prob_xi, {"k": roots, "sep": spline(roots)}, lad,
                           weights=wxi, store_stride=stride)
        nlong = fin_xi.nodes
        if np.any(np.diff(nlong) != 1):
            raise MissedModes(f"channel {ch.label}: longitudinal node counts "
                              f"skip ({nlong.tolist()[:10]} ...)")

        lad_eta = ladder_grid(prob_eta, {"k": roots, "sep": spline(roots)},
                              ppo=settings.ppo)
        fin_eta = propagate(prob_eta, {"k": roots, "sep": spline(roots)}, lad_eta,
                            weights=weta, store_stride=stride)

        fac = 2.0 if prolate else 1.0
        n2 = normalization_squared(cavity, roots, fin_xi.integrals[0],
                                   fin_xi.integrals[1],
                                   fac * fin_eta.integrals[0],
                                   fac * fin_eta.integrals[1])
        norm = np.sqrt(n2)
        gz1 = gz_focus_raw(cavity) / norm
        gz2 = ch.parity * gz1 if prolate else np.zeros_like(gz1)

        for j in range(len(roots)):
            if not (k_lo <= roots[j] <= k_hi):
                continue
            prof = None
            if settings.store_profiles:
                prof = ModeProfile(
                    s_xi=fin_xi.s_stored, u_xi=fin_xi.u_stored[:, j] / norm[j],
                    du_xi=fin_xi.du_stored[:, j] / norm[j],
                    s_eta=fin_eta.s_stored, u_eta=fin_eta.u_stored[:, j] / norm[j],
                    du_eta=fin_eta.du_stored[:, j] / norm[j])
            records.append((float(roots[j]), float(spline(roots[j])), ch.label,
                            int(nlong[j]), ch.parity, float(norm[j]),
                            float(gz1[j]), float(gz2[j]) if prolate else 0.0,
                            prof))

    return _assemble_basis(cavity, constants, "exact", window, records,
                           settings.store_profiles)


def _channel_phase_slope(prob_xi, spline, k_min, k_max) -> float:
    """max |d Phi_xi / dk| along the channel, separation following k."""
    best = 0.0
    for k in (k_min, 0.5 * (k_min + k_max), k_max):
        dk = 1e-4 * k
        a = max(k - dk, k_min)
        b = min(k + dk, k_max)
        pa = _wkb.phase_data(prob_xi, {"k": a, "sep": float(spline(a))}).phi
        pb = _wkb.phase_data(prob_xi, {"k": b, "sep": float(spline(b))}).phi
        best = max(best, abs(pb - pa) / (b - a))
    return best


def _assemble_basis(cavity, constants, provenance, window, records,
                    keep_profiles: bool) -> ModeBasis:
    records = sorted(records, key=lambda r: (r[0], r[2]))
    c = constants.c
    return ModeBasis(
        cavity=cavity, constants=constants, provenance=provenance, window=window,
        omega=np.array([r[0] * c for r in records]),
        sep=np.array([r[1] for r in records]),
        channel=np.array([r[2] for r in records], dtype=int),
        n_long=np.array([r[3] for r in records], dtype=int),
        parity=np.array([r[4] for r in records], dtype=int),
        norm=np.array([r[5] for r in records]),
        gz1=np.array([r[6] for r in records]),
        gz2=np.array([r[7] for r in records]),
        profiles=[r[8] for r in records] if keep_profiles else None,
    )


# ---------------------------------------------------------------------------
# WKB quantization
# ---------------------------------------------------------------------------

def _parabola_sep_condition(prob_eta, cavity, k: float, q: int):
    """Mirror-coordinate quantization for channel q at fixed k."""
    def f(sep):
        pd = _wkb.phase_data(prob_eta, {"k": k, "sep": sep})
        return pd.phi - _wkb.quantization_target(q, pd.inner_kind, "neumann")
    return f


def _prolate_sep_condition(prob_eta, cavity, k: float, n_half: int, parity: int):
    wall = "neumann" if parity > 0 else "dirichlet"
    target = _wkb.quantization_target(n_half, "singular", wall)

    def f(sep):
        pd = _wkb.phase_data(prob_eta, {"k": k, "sep": sep})
        t = target
        if pd.inner_kind == "turning":
            t = _wkb.quantization_target(n_half, "turning", wall)
        return pd.phi - t
    return f


def _solve_sep_wkb(cavity, k: float, ch: _Channel, cut: float) -> float:
    prob_eta = eta_problem(cavity)
    if isinstance(cavity, ParabolicCavity):
        f = _parabola_sep_condition(prob_eta, cavity, k, ch.nodes_half)
    else:
        f = _prolate_sep_condition(prob_eta, cavity, k, ch.nodes_half, ch.parity)
    lo, hi = _sep_search_range(cavity, k, min(cut, 1e-7))
    xs = np.linspace(lo, hi, 64)
    vals = np.array([f(x) for x in xs])
    sg = np.sign(vals)
    idx = np.nonzero(sg[:-1] * sg[1:] < 0)[0]
    if len(idx) == 0:
        return float("nan")
    i = idx[0] if isinstance(cavity, ProlateCavity) else idx[-1]
    try:
        return brentq(f, xs[i], xs[i + 1], rtol=1e-13)
    except ValueError:
        return float("nan")


def quantize_wkb(cavity: CavitySpec, window: tuple[float, float],
                 settings: QuantizeSettings = QuantizeSettings(),
                 constants: PhysicalConstants = PhysicalConstants()) -> ModeBasis:
    """Phase-integral spectrum over the window (no profile storage).

    One quantization function fixes the separation constant along the
    mirror/angular coordinate; the longitudinal condition introduced by the
    wall selects the frequencies.  Norm integrals use the semiclassical
    envelope with the Coulomb endpoint connection, making couplings directly
    comparable with the exact path.
    """
    w_lo, w_hi = window
    k_lo, k_hi = w_lo / constants.c, w_hi / constants.c
    prolate = isinstance(cavity, ProlateCavity)
    cut = settings.channel_weight_cut
    prob_xi = xi_problem(cavity)
    prob_eta = eta_problem(cavity)
    wxi = norm_weights_xi(cavity)
    weta = norm_weights_eta(cavity)

    # channel list from the same discovery geometry as the exact path
    channels: list[_Channel] = []
    best = 0.0
    misses = 0
    for n_half in range(settings.max_channels):
        alive = False
        for parity in ((1, -1) if prolate else (1,)):
            ch = _Channel(label=(1 + 2 * n_half + (1 if parity < 0 else 0))
                          if prolate else n_half,
                          parity=parity, nodes_half=n_half, sep_ref=math.nan)
            sep = _solve_sep_wkb(cavity, k_hi, ch, cut)
            if math.isnan(sep):
                continue
            w = _channel_weight(cavity, k_hi, sep)
            best = max(best, w)
            if w >= cut * best:
                ch.sep_ref = sep
                channels.append(ch)
                alive = True
        if not alive and channels:
            misses += 1
            if misses >= 3:
                break

    records = []
    for ch in channels:
        ks = np.linspace(k_lo, k_hi, max(8, settings.sep_samples))
        seps = np.array([_solve_sep_wkb(cavity, float(k), ch, cut) for k in ks])
        ok = ~np.isnan(seps)
        if ok.sum() < 4:
            continue
        spl = CubicSpline(ks[ok], seps[ok])
        phis, kinds = [], []
        for k in ks[ok]:
            pd = _wkb.phase_data(prob_xi, {"k": float(k), "sep": float(spl(k))})
            phis.append(pd.phi)
            kinds.append(pd.inner_kind)
        phis = np.array(phis)
        inner = kinds[-1]
        phi_spl = CubicSpline(ks[ok], phis)
        n_lo = int(math.floor((phis[0] - _wkb.quantization_target(0, inner, "neumann"))
                              / math.pi))
        n_hi = int(math.ceil((phis[-1] - _wkb.quantization_target(0, inner, "neumann"))
                             / math.pi))
        for n in range(max(n_lo - 1, 0), n_hi + 2):
            target = _wkb.quantization_target(n, inner, "neumann")
            f = phis - target
            if f[0] > 0 or f[-1] < 0:
                continue
            i = int(np.searchsorted(f > 0, True))
            a = float(ks[ok][max(i - 1, 0)])
            b = float(ks[ok][min(i, ok.sum() - 1)])
            try:
                k_n = brentq(lambda k: float(phi_spl(k)) - target, a, b, rtol=1e-13)
            except ValueError:
                continue
            if not (k_lo <= k_n <= k_hi):
                continue
            sep_n = float(spl(k_n))
            p = {"k": k_n, "sep": sep_n}
            pd_xi = _wkb.phase_data(prob_xi, p)
            pd_eta = _wkb.phase_data(prob_eta, p)
            i_xi = _wkb.wkb_norm_integrals(prob_xi, p, pd_xi, wxi)
            i_eta = _wkb.wkb_norm_integrals(prob_eta, p, pd_eta, weta)
            fac = 2.0 if prolate else 1.0
            n2 = normalization_squared(cavity, k_n, i_xi[0], i_xi[1],
                                       fac * i_eta[0], fac * i_eta[1])
            if not (n2 > 0):
                continue
            norm = math.sqrt(n2)
            gz1 = gz_focus_raw(cavity) / norm
            gz2 = ch.parity * gz1 if prolate else 0.0
            records.append((k_n, sep_n, ch.label, n, ch.parity, norm, gz1, gz2, None))

    return _assemble_basis(cavity, constants, "wkb", window, records, False)


# ---------------------------------------------------------------------------
# normalization and field evaluation
# ---------------------------------------------------------------------------

def normalize_mode(mode: Mode, cavity: CavitySpec,
                   constants: PhysicalConstants = PhysicalConstants(),
                   ppo: float = 160.0) -> Mode:
    """Recompute the normalization by dense quadrature and rescale.

    Uses the conductor-wall identity int |g|^2 dV = k^2 int u^2 dV whose 2D
    integral separates into four 1D weights; the amplitude of the stored
    profile cancels, so scaling F by any constant leaves the result
    unchanged.
    """
    k = mode.omega / constants.c
    p = {"k": k, "sep": mode.separation_constant}
    prob_xi, prob_eta = xi_problem(cavity), eta_problem(cavity)
    stride = max(1, int(round(ppo / 14.0)))
    r_xi = propagate(prob_xi, p, ladder_grid(prob_xi, p, ppo=ppo),
                     weights=norm_weights_xi(cavity), store_stride=stride)
    r_eta = propagate(prob_eta, p, ladder_grid(prob_eta, p, ppo=ppo),
                      weights=norm_weights_eta(cavity), store_stride=stride)
    fac = 2.0 if isinstance(cavity, ProlateCavity) else 1.0
    n2 = normalization_squared(cavity, k, float(r_xi.integrals[0][0]),
                               float(r_xi.integrals[1][0]),
                               fac * float(r_eta.integrals[0][0]),
                               fac * float(r_eta.integrals[1][0]))
    norm = math.sqrt(n2)
    gz1 = gz_focus_raw(cavity) / norm
    prolate = isinstance(cavity, ProlateCavity)
    prof = ModeProfile(
        s_xi=r_xi.s_stored, u_xi=r_xi.u_stored[:, 0] / norm,
        du_xi=r_xi.du_stored[:, 0] / norm,
        s_eta=r_eta.s_stored, u_eta=r_eta.u_stored[:, 0] / norm,
        du_eta=r_eta.du_stored[:, 0] / norm)
    return replace(mode, normalization=norm, gz_focus1=gz1,
                   gz_focus2=mode.parity * gz1 if prolate else 0.0,
                   profile=prof)


def mode_z_at_focus(mode: Mode, atom: AtomSpec) -> float:
    """z-component of the normalized mode profile at the atom's focus."""
    return mode.gz_focus1 if atom.focus_index == 1 else mode.gz_focus2


class ModeFieldEvaluator:
    """Interpolating evaluator of one mode's vector profile.

    Cubic interpolation of the stored normal-form samples, with the linear
    endpoint seed below the first stored point.  Fine for rendering and
    quadrature; oracle-grade point values come from
    :func:`dense_mode_field`.
    """

    def __init__(self, mode: Mode, cavity: CavitySpec):
        if mode.profile is None:
            raise ValueError("mode carries no stored profile")
        self.cavity = cavity
        self.mode = mode
        pr = mode.profile
        self._uxi = CubicSpline(pr.s_xi, pr.u_xi)
        self._duxi = CubicSpline(pr.s_xi, pr.du_xi)
        self._ueta = CubicSpline(pr.s_eta, pr.u_eta)
        self._dueta = CubicSpline(pr.s_eta, pr.du_eta)
        self._lims = (pr.s_xi[0], pr.s_xi[-1], pr.s_eta[0], pr.s_eta[-1])

    def _eval(self, spline, dspline, s, smin, smax):
        s = np.asarray(s, dtype=float)
        sc = np.clip(s, smin, smax)
        u = spline(sc)
        du = dspline(sc)
        seed = s < smin
        if np.any(seed):
            slope = spline(smin) / smin
            u = np.where(seed, s * slope, u)
            du = np.where(seed, slope, du)
        return u, du

    def radial(self, xi):
        """(P, P') against the radial coordinate (u_xi in its s variable)."""
        smin, smax, _, _ = self._lims
        s = np.asarray(xi, float) if isinstance(self.cavity, ParabolicCavity) \
            else np.asarray(xi, float) - 1.0
        return self._eval(self._uxi, self._duxi, s, smin, smax)

    def angular(self, eta):
        """(T, dT/deta) with parity continuation to eta < 0 (ellipsoid)."""
        _, _, smin, smax = self._lims
        if isinstance(self.cavity, ParabolicCavity):
            u, du = self._eval(self._ueta, self._dueta, np.asarray(eta, float),
                               smin, smax)
            return u, du
        eta = np.asarray(eta, float)
        s = 1.0 - np.abs(eta)
        u, du_ds = self._eval(self._ueta, self._dueta, s, smin, smax)
        pf = np.where(eta >= 0, 1.0, float(self.mode.parity))
        T = pf * u
        dT = np.where(eta >= 0, -1.0, 1.0) * pf * du_ds
        return T, dT

    def components(self, xi, eta):
        """(g_xi, g_eta) of the normalized mode, broadcast over arrays."""
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        P, dP = self.radial(xi)
        T, dT = self.angular(eta)
        if isinstance(self.cavity, ParabolicCavity):
            g_xi = 2.0 * P * dT / np.sqrt(xi * (xi + eta))
            g_eta = -2.0 * T * dP / np.sqrt(eta * (xi + eta))
            return g_xi, g_eta
        c0 = self.cavity.c0
        den = xi * xi - eta * eta
        g_xi = -P * dT / (c0 * np.sqrt((xi * xi - 1.0) * den))
        g_eta = T * dP / (c0 * np.sqrt((1.0 - eta * eta) * den))
        return g_xi, g_eta

    def gz_on_axis(self, xi, eta) -> float:
        """Stable z-component on the symmetry axis (rho = 0)."""
        P, dP = (float(v) for v in self.radial(xi))
        T, dT = (float(v) for v in self.angular(eta))
        if isinstance(self.cavity, ParabolicCavity):
            return 2.0 * (P * dT + dP * T) / (xi + eta)
        c0 = self.cavity.c0
        den = xi * xi - eta * eta
        return (xi * dP * T - eta * P * dT) / (c0 * den)


def mode_field_at(mode: Mode, cavity: CavitySpec, point) -> np.ndarray:
    """Complex Cartesian field 3-vector of the normalized mode at ``point``.

    Modes are real standing waves by convention; the return is complex for
    interface uniformity.  At a focus the stored focal value is returned;
    elsewhere on the axis the transverse components vanish identically.
    """
    xi, eta, phi = to_curvilinear(point, cavity)
    rho = math.hypot(point[0], point[1])
    scale = cavity.eta_boundary if isinstance(cavity, ParabolicCavity) else cavity.c0
    if rho < 1e-9 * scale:
        if isinstance(cavity, ProlateCavity):
            if abs(eta - 1.0) < 1e-12 and abs(xi - 1.0) < 1e-12:
                return np.array([0, 0, mode.gz_focus1], dtype=complex)
            if abs(eta + 1.0) < 1e-12 and abs(xi - 1.0) < 1e-12:
                return np.array([0, 0, mode.gz_focus2], dtype=complex)
        elif xi < 1e-12 * scale and eta < 1e-12 * scale:
            return np.array([0, 0, mode.gz_focus1], dtype=complex)
        ev = ModeFieldEvaluator(mode, cavity)
        return np.array([0.0, 0.0, ev.gz_on_axis(xi, eta)], dtype=complex)
    ev = ModeFieldEvaluator(mode, cavity)
    g_xi, g_eta = ev.components(xi, eta)
    e_xi, e_eta, _ = unit_vectors(cavity, xi, eta, phi)
    return (float(g_xi) * e_xi + float(g_eta) * e_eta).astype(complex)


# ---------------------------------------------------------------------------
# oracle-grade dense evaluation
# ---------------------------------------------------------------------------

def _dense_solution(problem: RadialProblem, k: float, sep: float,
                    s_points: np.ndarray, rtol: float = 1e-12):
    """(u, u') at arbitrary s by direct high-order integration."""
    p = {"k": k, "sep": sep}
    A = float(np.asarray(problem.A(p)).ravel()[0])
    B0 = float(np.asarray(problem.B0(p)).ravel()[0])
    a1, a2 = -0.5 * A, (0.5 * A * A - B0) / 6.0
    s_max = float(np.max(s_points))
    s0 = min(1e-4 / max(abs(A), math.sqrt(abs(B0)), 1.0 / problem.s_end), 1e-6 * s_max)

    def rhs(s, y):
        q = float(np.asarray(problem.Q(np.array([[s]]), p))[0, 0])
        return [y[1], -q * y[0]]

    y0 = [s0 * (1 + s0 * (a1 + s0 * a2)), 1 + s0 * (2 * a1 + 3 * a2 * s0)]
    pts = np.unique(np.clip(np.asarray(s_points, float), s0, None))
    sol = solve_ivp(rhs, (s0, s_max * (1 + 1e-12)), y0, method="DOP853",
                    rtol=rtol, atol=1e-14, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"dense integration failed for {problem.label}")

    def at(s):
        s = np.asarray(s, float)
        y = sol.sol(np.clip(s, s0, None))
        u = np.where(s < s0, s * y0[0] / s0, y[0])
        du = np.where(s < s0, y0[0] / s0, y[1])
        return u, du
    return at


def dense_mode_field(cavity: CavitySpec, k: float, sep: float, parity: int = 1,
                     norm: float = 1.0, rtol: float = 1e-12) -> Callable:
    """High-accuracy field evaluator g(point) for Helmholtz-residual oracles.

    Solves both separated equations once with a dense high-order integrator
    and assembles the curl through the generic metric formulas, so the
    result is independent of the Numerov pipeline it validates.
    """
    prob_xi, prob_eta = xi_problem(cavity), eta_problem(cavity)
    at_xi = _dense_solution(prob_xi, k, sep, np.array([prob_xi.s_end]), rtol)
    at_eta = _dense_solution(prob_eta, k, sep, np.array([prob_eta.s_end]), rtol)
    prolate = isinstance(cavity, ProlateCavity)

    def field(point):
        xi, eta, phi = to_curvilinear(point, cavity, check=False)
        if prolate:
            s_xi, s_eta = xi - 1.0, 1.0 - abs(eta)
            u_xi, du_xi = at_xi(s_xi)
            u_eta, du_eta_ds = at_eta(s_eta)
            pf = 1.0 if eta >= 0 else float(parity)
            dxi = xi * xi - 1.0
            deta = 1.0 - eta * eta
            F = u_xi / math.sqrt(dxi)
            dF = du_xi / math.sqrt(dxi) - u_xi * xi / dxi ** 1.5
            T = pf * u_eta
            dT = (-1.0 if eta >= 0 else 1.0) * pf * du_eta_ds
            G = T / math.sqrt(deta)
            dG = dT / math.sqrt(deta) + T * eta / deta ** 1.5
        else:
            u_xi, du_xi = at_xi(xi)
            u_eta, du_eta = at_eta(eta)
            F = u_xi / math.sqrt(xi)
            dF = du_xi / math.sqrt(xi) - 0.5 * u_xi / xi ** 1.5
            G = u_eta / math.sqrt(eta)
            dG = du_eta / math.sqrt(eta) - 0.5 * u_eta / eta ** 1.5
        g_xi, g_eta = azimuthal_curl(cavity, xi, eta, float(F), float(dF),
                                     float(G), float(dG))
        e_xi, e_eta, _ = unit_vectors(cavity, xi, eta, phi)
        return (float(g_xi) * e_xi + float(g_eta) * e_eta) / norm

    return field
