"""Coordinates, cavity parameterization and differential helpers.

Two ideally conducting mirror geometries, both bodies of revolution about z:

* Parabolic mirror with focal length ``f``, focus at the origin.  Parabolic
  coordinates ``xi = r + z``, ``eta = r - z`` (so ``z = (xi-eta)/2``,
  ``rho = sqrt(xi*eta)``).  The mirror is the surface ``eta = 2f``; the open
  side is regularized by an artificial conducting wall at ``xi = xi_cutoff``.

* Prolate ellipsoid of revolution with interfocal distance ``d`` and
  vertex-to-focus gap ``f``.  With ``c0 = d/2``: ``z = c0*xi*eta``,
  ``rho = c0*sqrt((xi^2-1)(1-eta^2))``, ``xi in [1, xi0]``,
  ``eta in [-1, 1]`` and wall at ``xi0 = 1 + 2f/d``.  Focus 1 sits at
  ``z = +c0`` (eta = +1), focus 2 at ``z = -c0``.

All lengths are dimensionful; natural units (c = hbar = epsilon0 = 1) are
the default via :class:`PhysicalConstants`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalConstants",
    "ParabolicCavity",
    "ProlateCavity",
    "CavitySpec",
    "AtomSpec",
    "PointOutsideDomain",
    "GridMismatch",
    "to_parabolic",
    "from_parabolic",
    "to_prolate",
    "from_prolate",
    "to_curvilinear",
    "scale_factors",
    "volume_weight",
    "unit_vectors",
    "inside",
    "azimuthal_curl",
    "curl_of_azimuthal_field",
    "vector_to_cartesian",
    "helmholtz_residual",
    "divergence_residual",
]


class PointOutsideDomain(ValueError):
    """Raised when a point does not lie inside the cavity volume."""


class GridMismatch(ValueError):
    """Raised when sampled profiles and coordinate grids are inconsistent."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Speed of light, reduced Planck constant and vacuum permittivity.

    Defaults are natural units; all observables of interest are reported as
    dimensionless ratios so the choice only fixes bookkeeping.
    """

    c: float = 1.0
    hbar: float = 1.0
    epsilon0: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.hbar > 0 and self.epsilon0 > 0):
            raise ValueError("physical constants must be strictly positive")


@dataclass(frozen=True)
class ParabolicCavity:
    """Half-open parabolic mirror, focus at the origin, opening toward +z.

    ``xi_cutoff`` places the artificial conducting wall that discretizes the
    open channel; observables must be checked for stability under doubling
    it.  It must exceed ``10 * focal_length``.
    """

    focal_length: float
    xi_cutoff: float

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal_length must be positive")
        if self.xi_cutoff < 10.0 * self.focal_length:
            raise ValueError("xi_cutoff must be at least 10 * focal_length")

    @property
    def eta_boundary(self) -> float:
        """Mirror surface coordinate: eta0 = 2f (rho^2 = 4f(z+f))."""
        return 2.0 * self.focal_length

    @property
    def focus(self) -> np.ndarray:
        return np.zeros(3)

    def focus_position(self, index: int) -> np.ndarray:
        if index != 1:
            raise ValueError("parabolic cavity has a single usable focus (index 1)")
        return self.focus


@dataclass(frozen=True)
class ProlateCavity:
    """Prolate ellipsoidal mirror with atoms at the two foci."""

    interfocal_distance: float
    vertex_gap: float

    def __post_init__(self):
        if self.interfocal_distance <= 0 or self.vertex_gap <= 0:
            raise ValueError("interfocal_distance and vertex_gap must be positive")

    @property
    def c0(self) -> float:
        """Focal half-distance."""
        return 0.5 * self.interfocal_distance

    @property
    def semi_major(self) -> float:
        return 0.5 * self.interfocal_distance + self.vertex_gap

    @property
    def semi_minor(self) -> float:
        a, c0 = self.semi_major, self.c0
        return math.sqrt(a * a - c0 * c0)

    @property
    def xi_boundary(self) -> float:
        return self.semi_major / self.c0

    def focus_position(self, index: int) -> np.ndarray:
        if index == 1:
            return np.array([0.0, 0.0, self.c0])
        if index == 2:
            return np.array([0.0, 0.0, -self.c0])
        raise ValueError("focus index must be 1 or 2")


CavitySpec = ParabolicCavity | ProlateCavity


@dataclass(frozen=True)
class AtomSpec:
    """Two-level emitter pinned to a cavity focus, dipole along z.

    ``omega`` is the transition angular frequency, ``dipole`` the magnitude
    of the transition dipole moment.  The position is derived from the
    cavity, never entered by hand.
    """

    focus_index: int
    omega: float
    dipole: float
    position: np.ndarray

    def __post_init__(self):
        if self.omega <= 0 or self.dipole <= 0:
            raise ValueError("omega and dipole must be positive")

    @classmethod
    def at_focus(cls, cavity: CavitySpec, focus_index: int, omega: float,
                 dipole: float) -> "AtomSpec":
        pos = cavity.focus_position(focus_index)
        return cls(focus_index=focus_index, omega=omega, dipole=dipole, position=pos)

    def wavelength(self, constants: PhysicalConstants = PhysicalConstants()) -> float:
        return 2.0 * math.pi * constants.c / self.omega


# ---------------------------------------------------------------------------
# Coordinate maps
# ---------------------------------------------------------------------------

def to_parabolic(point, cavity: ParabolicCavity, *, check: bool = True):
    """Cartesian -> (xi, eta, phi) for the parabolic cavity."""
    x, y, z = np.asarray(point, dtype=float)
    r = math.sqrt(x * x + y * y + z * z)
    xi = r + z
    eta = r - z
    phi = math.atan2(y, x)
    if check and not _inside_parabolic(cavity, xi, eta):
        raise PointOutsideDomain(f"point {point} outside parabolic cavity")
    return xi, eta, phi


def from_parabolic(coords, cavity: ParabolicCavity) -> np.ndarray:
    xi, eta, phi = coords
    z = 0.5 * (xi - eta)
    rho = math.sqrt(max(xi * eta, 0.0))
    return np.array([rho * math.cos(phi), rho * math.sin(phi), z])


def to_prolate(point, cavity: ProlateCavity, *, check: bool = True):
    """Cartesian -> (xi, eta, phi) for the prolate ellipsoidal cavity."""
    x, y, z = np.asarray(point, dtype=float)
    c0 = cavity.c0
    r1 = math.sqrt(x * x + y * y + (z - c0) ** 2)
    r2 = math.sqrt(x * x + y * y + (z + c0) ** 2)
    xi = (r1 + r2) / (2.0 * c0)
    eta = (r2 - r1) / (2.0 * c0)
    xi = max(xi, 1.0)
    eta = min(max(eta, -1.0), 1.0)
    phi = math.atan2(y, x)
    if check and not _inside_prolate(cavity, xi):
        raise PointOutsideDomain(f"point {point} outside prolate cavity")
    return xi, eta, phi


def from_prolate(coords, cavity: ProlateCavity) -> np.ndarray:
    xi, eta, phi = coords
    c0 = cavity.c0
    z = c0 * xi * eta
    rho = c0 * math.sqrt(max((xi * xi - 1.0) * (1.0 - eta * eta), 0.0))
    return np.array([rho * math.cos(phi), rho * math.sin(phi), z])


def to_curvilinear(point, cavity: CavitySpec, *, check: bool = True):
    if isinstance(cavity, ParabolicCavity):
        return to_parabolic(point, cavity, check=check)
    return to_prolate(point, cavity, check=check)


def _inside_parabolic(cavity, xi, eta, tol=1e-12):
    scale = cavity.eta_boundary
    return (-tol * scale <= eta <= cavity.eta_boundary * (1 + tol)
            and -tol * scale <= xi <= cavity.xi_cutoff * (1 + tol))


def _inside_prolate(cavity, xi, tol=1e-12):
    return xi <= cavity.xi_boundary * (1 + tol)


def inside(cavity: CavitySpec, point, tol: float = 1e-12) -> bool:
    try:
        to_curvilinear(point, cavity, check=True)
    except PointOutsideDomain:
        return False
    return True


# ---------------------------------------------------------------------------
# Metric data
# ---------------------------------------------------------------------------

def scale_factors(cavity: CavitySpec, xi, eta):
    """Metric scale factors (h_xi, h_eta, h_phi); array-friendly."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if isinstance(cavity, ParabolicCavity):
        h_xi = 0.5 * np.sqrt((xi + eta) / xi)
        h_eta = 0.5 * np.sqrt((xi + eta) / eta)
        h_phi = np.sqrt(xi * eta)
        return h_xi, h_eta, h_phi
    c0 = cavity.c0
    d_xi = xi * xi - 1.0
    d_eta = 1.0 - eta * eta
    h_xi = c0 * np.sqrt((xi * xi - eta * eta) / d_xi)
    h_eta = c0 * np.sqrt((xi * xi - eta * eta) / d_eta)
    h_phi = c0 * np.sqrt(d_xi * d_eta)
    return h_xi, h_eta, h_phi


def volume_weight(cavity: CavitySpec, xi, eta):
    """h_xi * h_eta * h_phi, the (xi, eta) part of the volume element.

    Separable in both geometries: (xi+eta)/4 for the parabola and
    c0^3 (xi^2 - eta^2) for the ellipsoid.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if isinstance(cavity, ParabolicCavity):
        return 0.25 * (xi + eta)
    return cavity.c0 ** 3 * (xi * xi - eta * eta)


def unit_vectors(cavity: CavitySpec, xi: float, eta: float, phi: float):
    """Orthonormal frame (e_xi, e_eta, e_phi) in Cartesian components."""
    cp, sp = math.cos(phi), math.sin(phi)
    e_rho = np.array([cp, sp, 0.0])
    e_phi = np.array([-sp, cp, 0.0])
    e_z = np.array([0.0, 0.0, 1.0])
    if isinstance(cavity, ParabolicCavity):
        s = math.sqrt(xi + eta)
        e_xi = (math.sqrt(eta) * e_rho + math.sqrt(xi) * e_z) / s
        e_eta = (math.sqrt(xi) * e_rho - math.sqrt(eta) * e_z) / s
        return e_xi, e_eta, e_phi
    s = math.sqrt(xi * xi - eta * eta)
    rxi = math.sqrt(max(xi * xi - 1.0, 0.0))
    reta = math.sqrt(max(1.0 - eta * eta, 0.0))
    e_xi = (xi * reta * e_rho + eta * rxi * e_z) / s
    e_eta = (-eta * rxi * e_rho + xi * reta * e_z) / s
    return e_xi, e_eta, e_phi


# ---------------------------------------------------------------------------
# Curl of an azimuthal field H = e_phi * F(xi) G(eta)
# ---------------------------------------------------------------------------

def azimuthal_curl(cavity: CavitySpec, xi, eta, F, dF, G, dG):
    """Frame components (g_xi, g_eta) of curl(e_phi F(xi) G(eta)).

    Inputs are values and first derivatives of the separated profiles at
    (xi, eta); broadcasting over arrays is supported.  The phi component
    vanishes identically.  Signs account for the handedness of each
    coordinate triple ((xi, eta, phi) is right-handed for the parabola,
    (eta, xi, phi) for the ellipsoid).
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    h_xi, h_eta, h_phi = scale_factors(cavity, xi, eta)
    if isinstance(cavity, ParabolicCavity):
        # d/deta (h_phi G) = sqrt(xi) * d/deta (sqrt(eta) G)
        d_eta_hG = np.sqrt(xi) * (np.sqrt(eta) * dG + G / (2.0 * np.sqrt(eta)))
        d_xi_hF = np.sqrt(eta) * (np.sqrt(xi) * dF + F / (2.0 * np.sqrt(xi)))
        g_xi = F * d_eta_hG / (h_eta * h_phi)
        g_eta = -G * d_xi_hF / (h_xi * h_phi)
        return g_xi, g_eta
    c0 = cavity.c0
    rxi = np.sqrt(xi * xi - 1.0)
    reta = np.sqrt(1.0 - eta * eta)
    d_eta_hG = c0 * rxi * (reta * dG - eta * G / reta)
    d_xi_hF = c0 * reta * (rxi * dF + xi * F / rxi)
    g_xi = -F * d_eta_hG / (h_eta * h_phi)
    g_eta = G * d_xi_hF / (h_xi * h_phi)
    return g_xi, g_eta


def curl_of_azimuthal_field(cavity: CavitySpec, xi_grid, F, eta_grid, G,
                            dF=None, dG=None):
    """curl(e_phi F G) on the tensor grid xi_grid x eta_grid.

    ``F`` and ``G`` are 1D profile samples; derivatives are differenced
    from the samples when not supplied.  Returns (g_xi, g_eta) as 2D arrays
    indexed [i_xi, i_eta]; the phi component is identically zero and the
    result carries no phi dependence.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    eta_grid = np.asarray(eta_grid, dtype=float)
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if F.shape != xi_grid.shape or G.shape != eta_grid.shape:
        raise GridMismatch("profile samples do not match their grids")
    if dF is None:
        dF = np.gradient(F, xi_grid, edge_order=2)
    if dG is None:
        dG = np.gradient(G, eta_grid, edge_order=2)
    XI = xi_grid[:, None]
    ETA = eta_grid[None, :]
    return azimuthal_curl(cavity, XI, ETA, F[:, None], dF[:, None],
                          G[None, :], dG[None, :])


def vector_to_cartesian(cavity: CavitySpec, xi: float, eta: float, phi: float,
                        v_xi: float, v_eta: float, v_phi: float = 0.0) -> np.ndarray:
    e_xi, e_eta, e_phi = unit_vectors(cavity, xi, eta, phi)
    return v_xi * e_xi + v_eta * e_eta + v_phi * e_phi


# ---------------------------------------------------------------------------
# Finite-difference oracles on a Cartesian micro-stencil
# ---------------------------------------------------------------------------

_D2_W = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D1_W = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFFS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


def helmholtz_residual(field_fn, point, k: float, h: float | None = None) -> float:
    """|(laplacian + k^2) g| / (k^2 |g|) at ``point`` by 4th-order stencils.

    ``field_fn`` maps a Cartesian point to a 3-vector.  Used as the
    operational correctness check for reconstructed mode fields.
    """
    point = np.asarray(point, dtype=float)
    if h is None:
        h = 0.02 / k
    lap = np.zeros(3)
    for axis in range(3):
        for w, o in zip(_D2_W, _OFFS):
            p = point.copy()
            p[axis] += o * h
            lap += w * np.asarray(field_fn(p))
    lap /= h * h
    g0 = np.asarray(field_fn(point))
    res = lap + k * k * g0
    return float(np.linalg.norm(res) / (k * k * np.linalg.norm(g0)))


def divergence_residual(field_fn, point, k: float, h: float | None = None) -> float:
    """|div g| / (k |g|) at ``point`` by 4th-order stencils."""
    point = np.asarray(point, dtype=float)
    if h is None:
        h = 0.02 / k
    div = 0.0
    for axis in range(3):
        for w, o in zip(_D1_W, _OFFS):
            p = point.copy()
            p[axis] += o * h
            div += w * np.asarray(field_fn(p))[axis]
    div /= h
    g0 = np.asarray(field_fn(point))
    return float(abs(div) / (k * np.linalg.norm(g0)))
