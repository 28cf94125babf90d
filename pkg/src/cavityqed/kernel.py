"""Laplace-domain memory kernel and Purcell-type decay rates.

The one-excitation dynamics is governed by the kernel

    A[a,b](s) = sum_j kappa[a,j] kappa[b,j] / (s + i w_j),
    kappa[a,j] = sqrt(w_j / (2 eps0 hbar)) * D * g_j_z(x_a),

built here from a truncated mode basis with real standing-wave couplings.
``T1 = A - delta_ab Gamma_free/2`` is the subtracted kernel whose smallness
at resonance measures how closely the basis emulates free space.

Decay rates follow two routes: the regularized pole formula
``Gamma(eps) = 2 Re A[a,a](eps - i w_eg)`` over the basis (with a smooth
spectral tail completing the truncated sum, and an eps-doubling convergence
certificate), and, for the parabolic mirror, the closed vertex-bounce series

    Gamma/Gamma_free = 1 + 2 sum_M 3 cos[2M(u - pi/2)]
                       * (2M S(u) coth(2M S(u)) - 1) / sinh^2(2M S(u)),

with u = 2 pi f / lambda and S(u) = int_0^u sin^2(y)/y dy, each M counting
round trips between focus and vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import AtomSpec, CavitySpec, PhysicalConstants, ProlateCavity
from .modes import ModeBasis

__all__ = [
    "gamma_free",
    "KernelMatrix",
    "kernel_A",
    "kernel_T1",
    "PoleProximity",
    "NotConverged",
    "S_integral",
    "PurcellSeries",
    "purcell_parabolic_semiclassical",
    "PoleRate",
    "purcell_pole",
]


class PoleProximity(ValueError):
    """Kernel evaluated too close to one of its imaginary-axis poles."""


class NotConverged(RuntimeError):
    """A convergence certificate failed."""


def gamma_free(atom: AtomSpec, constants: PhysicalConstants = PhysicalConstants()) -> float:
    """Free-space spontaneous decay rate of the z-oriented dipole.

    Equals twice the real part of the free-space mode-continuum kernel at
    the transition frequency; the continuum integral collapses to
    D^2 w^3 / (3 pi eps0 hbar c^3).
    """
    w, d = atom.omega, atom.dipole
    return d * d * w ** 3 / (3.0 * math.pi * constants.epsilon0
                             * constants.hbar * constants.c ** 3)


@dataclass
class KernelMatrix:
    """Mode sum evaluator for the memory kernel of 1 or 2 atoms."""

    omega: np.ndarray            # mode angular frequencies, ascending
    coupling: np.ndarray         # kappa[a, j], real
    atoms: tuple[AtomSpec, ...]
    constants: PhysicalConstants
    window: tuple[float, float]
    basis: ModeBasis | None = None

    @classmethod
    def from_basis(cls, basis: ModeBasis, atoms, constants: PhysicalConstants | None = None):
        constants = constants or basis.constants
        atoms = tuple(atoms)
        if len(atoms) not in (1, 2):
            raise ValueError("kernel supports 1 or 2 atoms")
        if len({(a.omega, a.dipole) for a in atoms}) > 1:
            raise ValueError("atoms must be identical two-level systems")
        rows = []
        for a in atoms:
            gz = basis.gz_at_focus(a.focus_index)
            rows.append(np.sqrt(basis.omega / (2.0 * constants.epsilon0
                                               * constants.hbar)) * a.dipole * gz)
        return cls(omega=basis.omega.copy(), coupling=np.array(rows),
                   atoms=atoms, constants=constants, window=basis.window,
                   basis=basis)

    @classmethod
    def from_arrays(cls, omega, coupling, atoms, constants=PhysicalConstants(),
                    window=None):
        """Synthetic kernel from explicit mode data (testing, emulation)."""
        omega = np.asarray(omega, dtype=float)
        coupling = np.atleast_2d(np.asarray(coupling, dtype=float))
        order = np.argsort(omega)
        if window is None:
            window = (float(omega.min()), float(omega.max()))
        return cls(omega=omega[order], coupling=coupling[:, order],
                   atoms=tuple(atoms), constants=constants, window=window)

    @property
    def gamma_free(self) -> float:
        return gamma_free(self.atoms[0], self.constants)

    def _check_pole(self, s, tol):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        wmax = float(self.omega.max())
        dmin = np.min(np.abs(s[:, None] + 1j * self.omega[None, :]))
        if dmin < tol * wmax:
            raise PoleProximity(f"s within {dmin:.3e} of a kernel pole")

    def A(self, a: int, b: int, s, pole_tol: float = 1e-12):
        """A[a,b](s) for scalar or array s (truncated mode sum)."""
        self._check_pole(s, pole_tol)
        s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
        kk = self.coupling[a] * self.coupling[b]
        out = np.empty(len(s_arr), dtype=complex)
        chunk = max(1, int(4e6 / max(len(self.omega), 1)))
        for i in range(0, len(s_arr), chunk):
            sl = s_arr[i:i + chunk, None]
            out[i:i + chunk] = np.sum(kk[None, :] / (sl + 1j * self.omega[None, :]),
                                      axis=1)
        return out[0] if np.isscalar(s) or np.asarray(s).ndim == 0 else out

    def A_matrix(self, s: complex) -> np.ndarray:
        """Full n_atoms x n_atoms kernel matrix at one s value."""
        n = len(self.atoms)
        m = np.empty((n, n), dtype=complex)
        for a in range(n):
            for b in range(a, n):
                m[a, b] = m[b, a] = self.A(a, b, s)
        return m

    def coupling_density_cubed_fit(self) -> float:
        """c3 of the smooth spectral model sum kappa^2 ~ c3 w^3 dw.

        The focal coupling density of a large cavity averages to the free
        space law; the window-integrated fit washes out the geometric
        oscillation.
        """
        w_lo, w_hi = self.window
        total = float(np.sum(self.coupling[0] * self.coupling[0]))
        return total / ((w_hi ** 4 - w_lo ** 4) / 4.0)

    def tail_bound(self, a: int, b: int, s) -> float:
        """Magnitude bound for the modes outside the window (smooth model)."""
        c3 = self.coupling_density_cubed_fit()
        w_lo, w_hi = self.window
        s = complex(s)

        def integrand(w):
            return c3 * w ** 3 / abs(s + 1j * w)

        lo, _ = integrate.quad(integrand, max(w_lo - 10 * (w_hi - w_lo), 1e-9 * w_lo),
                               w_lo, limit=200)
        hi, _ = integrate.quad(integrand, w_hi, w_hi + 10 * (w_hi - w_lo), limit=200)
        return lo + hi


def kernel_A(km: KernelMatrix, a: int, b: int, s):
    """Truncated kernel value and a tail-magnitude estimate."""
    return km.A(a, b, s), km.tail_bound(a, b, s if np.ndim(s) == 0 else np.asarray(s).ravel()[0])


def kernel_T1(km: KernelMatrix, a: int, b: int, s):
    """Subtracted kernel T1[a,b](s) = A[a,b](s) - delta_ab Gamma_free/2."""
    val = km.A(a, b, s)
    if a == b:
        val = val - 0.5 * km.gamma_free
    return val


# ---------------------------------------------------------------------------
# vertex-bounce series for the parabolic mirror
# ---------------------------------------------------------------------------

def S_integral(u: float) -> float:
    """int_0^u sin^2(y)/y dy by adaptive quadrature (limit 0 at y = 0)."""
    u = float(u)
    if u < 0:
        raise ValueError("u must be non-negative")
    if u == 0.0:
        return 0.0
    if u < 1e-3:
        # integrated series of sin^2(y)/y = y - y^3/3 + 2 y^5/45 - ...
        return u * u / 2.0 - u ** 4 / 12.0 + u ** 6 / 135.0

    def f(y):
        return math.sin(y) ** 2 / y if y > 0 else 0.0

    breaks = np.arange(0.0, u, math.pi)
    val, _ = integrate.quad(f, 0.0, u, points=breaks[1:-1] if len(breaks) > 2 else None,
                            limit=max(200, 4 * len(breaks)), epsabs=1e-13, epsrel=1e-13)
    return val


@dataclass(frozen=True)
class PurcellSeries:
    """Partial sum of the vertex-bounce decay-ratio series."""

    ratio: float
    last_term: float
    m_used: int


def purcell_parabolic_semiclassical(u: float, m_max: int | None = None,
                                    rel_tol: float = 1e-10) -> PurcellSeries:
    """Decay ratio Gamma/Gamma_free of the parabolic mirror, closed series.

    ``u = 2 pi f / lambda`` scales the focal length by the transition
    wavelength.  Terms are summed adaptively until the last one falls below
    ``rel_tol`` of the running sum (or to ``m_max`` when given); the last
    term magnitude is returned as truncation indicator.
    """
    if u <= 0.0:
        raise ValueError("u must be positive (the series degenerates at u = 0)")
    s_u = S_integral(u)
    total = 1.0
    last = math.inf
    cap = m_max if m_max is not None else 1_000_000
    m = 0
    for m in range(1, cap + 1):
        x = 2.0 * m * s_u
        if x > 350.0:
            last = 0.0
            break
        sh = math.sinh(x)
        term = 6.0 * math.cos(2.0 * m * (u - 0.5 * math.pi)) \
            * (x * (math.cosh(x) / sh) - 1.0) / (sh * sh)
        total += term
        last = abs(term)
        if m_max is None and last < rel_tol * abs(total):
            break
    else:
        if m_max is None:
            raise NotConverged(f"series not converged after {cap} terms at u={u}")
    return PurcellSeries(ratio=total, last_term=last, m_used=m)


# ---------------------------------------------------------------------------
# regularized pole rate over a truncated basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoleRate:
    """Regularized pole-formula decay rate with its certificate."""

    gamma: float
    ratio: float
    epsilon: float
    n_modes: int
    tail_fraction: float
    gamma_doubled_eps: float
    certificate_rel_diff: float
    converged: bool


def _lorentzian_sum(km: KernelMatrix, a: int, w_eg: float, eps: float,
                    mask) -> float:
    kk = km.coupling[a][mask] ** 2
    det = km.omega[mask] - w_eg
    return float(np.sum(kk * eps / (eps * eps + det * det)))


def _tail_rate(km: KernelMatrix, w_eg: float, eps: float, w_lo: float,
               w_hi: float) -> float:
    """Smooth-model completion of the Lorentzian sum outside [w_lo, w_hi]."""
    c3 = km.coupling_density_cubed_fit()

    def integrand(w):
        return c3 * w ** 3 * eps / (eps * eps + (w - w_eg) ** 2)

    span = w_hi - w_lo
    lo_edge = max(w_eg - 0.6 * w_eg, 1e-12 * w_eg)
    lo, _ = integrate.quad(integrand, lo_edge, w_lo, limit=400)
    hi, _ = integrate.quad(integrand, w_hi, w_eg + max(0.6 * w_eg, 2 * span), limit=400)
    return lo + hi


def purcell_pole(km: KernelMatrix, atom_index: int = 0,
                 epsilon: float | None = None,
                 window_half_width: float | None = None,
                 certificate_tol: float = 0.05,
                 require_certificate: bool = True) -> PoleRate:
    """Gamma(eps) = 2 Re A[a,a](eps - i w_eg) with smooth tail completion.

    ``epsilon`` defaults to 10x the mean mode spacing near the transition
    frequency; the certificate compares against 2*eps and fails the result
    when the relative difference exceeds ``certificate_tol``.
    """
    a = atom_index
    atom = km.atoms[a]
    w_eg = atom.omega
    w_lo_b, w_hi_b = km.window
    if window_half_width is None:
        w = min(w_eg - w_lo_b, w_hi_b - w_eg)
    else:
        w = window_half_width
        if w_eg - w < w_lo_b - 1e-12 * w_eg or w_eg + w > w_hi_b + 1e-12 * w_eg:
            raise ValueError("basis window does not cover the requested width")
    if w <= 0:
        raise ValueError("transition frequency outside the basis window")
    mask = np.abs(km.omega - w_eg) <= w
    n_sel = int(mask.sum())
    if n_sel < 8:
        raise NotConverged(f"only {n_sel} modes near the transition frequency")

    if epsilon is None:
        core = np.abs(km.omega - w_eg) <= 0.5 * w
        spacing = w / max(int(core.sum()), 1)
        epsilon = 10.0 * spacing

    g_free = km.gamma_free
    out = []
    for eps in (epsilon, 2.0 * epsilon):
        core_sum = _lorentzian_sum(km, a, w_eg, eps, mask)
        tail = _tail_rate(km, w_eg, eps, w_eg - w, w_eg + w)
        out.append((2.0 * (core_sum + tail), tail / max(core_sum + tail, 1e-300)))
    gamma, tail_frac = out[0]
    gamma2, _ = out[1]
    rel = abs(gamma - gamma2) / max(abs(gamma), 1e-300)
    ok = rel <= certificate_tol
    if require_certificate and not ok:
        raise NotConverged(f"eps-doubling certificate failed: rel diff {rel:.3f}")
    return PoleRate(gamma=gamma, ratio=gamma / g_free, epsilon=epsilon,
                    n_modes=n_sel, tail_fraction=tail_frac,
                    gamma_doubled_eps=gamma2, certificate_rel_diff=rel,
                    converged=ok)
