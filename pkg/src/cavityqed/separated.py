"""Separated Helmholtz equations for the azimuthal-potential mode family.

The cavity modes that couple to z-oriented dipoles at the foci are
``g = curl(e_phi F(xi) G(eta))``.  Requiring ``(laplacian + k^2) g = 0``
makes ``F G e^{i phi}`` a scalar Helmholtz solution with unit azimuthal
index, which separates:

parabolic (z = (xi-eta)/2, rho = sqrt(xi eta)):

    (xi F')' + (k^2 xi/4 - 1/(4 xi) + b) F = 0
    (eta G')' + (k^2 eta/4 - 1/(4 eta) - b) G = 0

prolate (z = c0 xi eta, kappa = k c0):

    ((xi^2-1) F')' + (kappa^2 xi^2 - lam - 1/(xi^2-1)) F = 0
    ((1-eta^2) G')' + (lam - kappa^2 eta^2 - 1/(1-eta^2)) G = 0

In normal form the substitutions u = sqrt(xi) F (parabolic) and
P = sqrt(xi^2-1) F, T = sqrt(1-eta^2) G (prolate) remove the first-derivative
terms exactly; for this azimuthal index the residual 1/s^2 potentials cancel
as well, leaving u'' + Q u = 0 with only a regular-singular 1/s pole at the
focus/axis endpoint:

    parabolic:  Q_xi = k^2/4 + b/xi,            Q_eta = k^2/4 - b/eta
    prolate:    Q_xi = (kappa^2 xi^2 - lam)/(xi^2-1),
                Q_eta = (lam - kappa^2 eta^2)/(1-eta^2)

The conductor conditions (tangential E = 0) become pure Neumann conditions
on the normal-form solutions: u'(xi_cutoff) = 0, u'(eta0) = 0 (parabola) and
P'(xi0) = 0 (ellipsoid); the angular prolate equation is regular at both
poles, handled by parity matching at eta = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import CavitySpec, ParabolicCavity, PhysicalConstants, ProlateCavity
from .oned import RadialProblem

__all__ = [
    "SeparatedODE",
    "separated_odes",
    "xi_problem",
    "eta_problem",
    "norm_weights_xi",
    "norm_weights_eta",
    "normalization_squared",
    "gz_focus_raw",
    "UnsupportedCavity",
]


class UnsupportedCavity(TypeError):
    """Raised for cavity kinds the separation does not apply to."""


@dataclass(frozen=True)
class SeparatedODE:
    """One separated equation, in self-adjoint and normal form.

    Self-adjoint form: (p(x) y')' + q(x) y = 0 for the physical profile
    y = F or G.  ``problem`` is the equivalent normal-form radial problem in
    the endpoint variable s, with ``x_of_s``/``s_of_x`` the coordinate maps
    and ``profile_of_u`` converting normal-form samples back to the profile.
    """

    coordinate: str
    p: Callable[[np.ndarray], np.ndarray]
    q: Callable[[np.ndarray], np.ndarray]
    problem: RadialProblem
    x_of_s: Callable[[np.ndarray], np.ndarray]
    s_of_x: Callable[[np.ndarray], np.ndarray]
    profile_of_u: Callable[[np.ndarray, np.ndarray], np.ndarray]


def xi_problem(cavity: CavitySpec) -> RadialProblem:
    """Normal-form problem along the 'radial' coordinate (wall at the end)."""
    if isinstance(cavity, ParabolicCavity):
        return RadialProblem(
            label="parabolic-xi",
            s_end=cavity.xi_cutoff,
            Q=lambda s, p: 0.25 * np.asarray(p["k"]) ** 2 + np.asarray(p["sep"]) / s,
            A=lambda p: np.asarray(p["sep"], dtype=float),
            B0=lambda p: 0.25 * np.asarray(p["k"], dtype=float) ** 2,
            bc="neumann",
        )
    if isinstance(cavity, ProlateCavity):
        c0 = cavity.c0

        def Q(s, p):
            kap2 = (np.asarray(p["k"]) * c0) ** 2
            xi = 1.0 + s
            return (kap2 * xi * xi - np.asarray(p["sep"])) / (s * (s + 2.0))

        return RadialProblem(
            label="prolate-xi",
            s_end=cavity.xi_boundary - 1.0,
            Q=Q,
            A=lambda p: 0.5 * ((np.asarray(p["k"], dtype=float) * c0) ** 2
                               - np.asarray(p["sep"], dtype=float)),
            B0=lambda p: 0.25 * (3.0 * (np.asarray(p["k"], dtype=float) * c0) ** 2
                                 + np.asarray(p["sep"], dtype=float)),
            bc="neumann",
        )
    raise UnsupportedCavity(f"unsupported cavity {type(cavity).__name__}")


def eta_problem(cavity: CavitySpec) -> RadialProblem:
    """Normal-form problem along the 'angular' coordinate.

    Parabola: s = eta, mirror wall at eta0 = 2f (Neumann).  Ellipsoid:
    s = 1 - eta measured from the north pole; the equation is matched by
    parity at the equator s = 1, so ``bc`` there is a parity tag resolved by
    the caller (u'(1) = 0 for even, u(1) = 0 for odd solutions).
    """
    if isinstance(cavity, ParabolicCavity):
        return RadialProblem(
            label="parabolic-eta",
            s_end=cavity.eta_boundary,
            Q=lambda s, p: 0.25 * np.asarray(p["k"]) ** 2 - np.asarray(p["sep"]) / s,
            A=lambda p: -np.asarray(p["sep"], dtype=float),
            B0=lambda p: 0.25 * np.asarray(p["k"], dtype=float) ** 2,
            bc="neumann",
        )
    if isinstance(cavity, ProlateCavity):
        c0 = cavity.c0

        def Q(s, p):
            kap2 = (np.asarray(p["k"]) * c0) ** 2
            eta = 1.0 - s
            return (np.asarray(p["sep"]) - kap2 * eta * eta) / (s * (2.0 - s))

        return RadialProblem(
            label="prolate-eta",
            s_end=1.0,
            Q=Q,
            A=lambda p: 0.5 * (np.asarray(p["sep"], dtype=float)
                               - (np.asarray(p["k"], dtype=float) * c0) ** 2),
            B0=lambda p: 0.25 * (3.0 * (np.asarray(p["k"], dtype=float) * c0) ** 2
                                 + np.asarray(p["sep"], dtype=float)),
            bc="neumann",
        )
    raise UnsupportedCavity(f"unsupported cavity {type(cavity).__name__}")


def separated_odes(cavity: CavitySpec, omega: float, separation_constant: float,
                   constants: PhysicalConstants = PhysicalConstants()):
    """Pair of separated ODE definitions (xi equation, eta equation).

    Correctness is operational: reconstructing ``curl(e_phi F G)`` from exact
    solutions of the returned equations must leave a vanishing vector
    Helmholtz residual (see geometry.helmholtz_residual).
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    k = omega / constants.c
    b = separation_constant

    if isinstance(cavity, ParabolicCavity):
        ode_xi = SeparatedODE(
            coordinate="xi",
            p=lambda x: np.asarray(x, dtype=float),
            q=lambda x: 0.25 * k * k * np.asarray(x) - 0.25 / np.asarray(x) + b,
            problem=xi_problem(cavity),
            x_of_s=lambda s: s,
            s_of_x=lambda x: x,
            profile_of_u=lambda s, u: u / np.sqrt(s),
        )
        ode_eta = SeparatedODE(
            coordinate="eta",
            p=lambda x: np.asarray(x, dtype=float),
            q=lambda x: 0.25 * k * k * np.asarray(x) - 0.25 / np.asarray(x) - b,
            problem=eta_problem(cavity),
            x_of_s=lambda s: s,
            s_of_x=lambda x: x,
            profile_of_u=lambda s, u: u / np.sqrt(s),
        )
        return ode_xi, ode_eta

    if isinstance(cavity, ProlateCavity):
        kap2 = (k * cavity.c0) ** 2
        ode_xi = SeparatedODE(
            coordinate="xi",
            p=lambda x: np.asarray(x) ** 2 - 1.0,
            q=lambda x: kap2 * np.asarray(x) ** 2 - b - 1.0 / (np.asarray(x) ** 2 - 1.0),
            problem=xi_problem(cavity),
            x_of_s=lambda s: 1.0 + s,
            s_of_x=lambda x: np.asarray(x) - 1.0,
            profile_of_u=lambda s, u: u / np.sqrt(s * (s + 2.0)),
        )
        ode_eta = SeparatedODE(
            coordinate="eta",
            p=lambda x: 1.0 - np.asarray(x) ** 2,
            q=lambda x: b - kap2 * np.asarray(x) ** 2 - 1.0 / (1.0 - np.asarray(x) ** 2),
            problem=eta_problem(cavity),
            x_of_s=lambda s: 1.0 - s,
            s_of_x=lambda x: 1.0 - np.asarray(x),
            profile_of_u=lambda s, u: u / np.sqrt(s * (2.0 - s)),
        )
        return ode_xi, ode_eta

    raise UnsupportedCavity(f"unsupported cavity {type(cavity).__name__}")


# ---------------------------------------------------------------------------
# Norm integrals and focal couplings from normal-form solutions
# ---------------------------------------------------------------------------
#
# mode normalization: with conductor walls, int |curl(e_phi u)|^2 dV equals
# k^2 int u^2 dV (surface terms vanish), and the 2D volume weight separates:
#
#   parabola:  N^2 = 2 pi k^2/4 * [I_xi(1) I_eta(1/s) + I_xi(1/s) I_eta(1)]
#   ellipsoid: N^2 = 2 pi k^2 c0^3 [I_xi(xi^2 w) I_eta(w) - I_xi(w) I_eta(eta^2 w)]
#
# where I(W) = int u(s)^2 W(s) ds along each coordinate and w is the
# weight taking u^2 back to F^2 or G^2.  The eta integrals of the ellipsoid
# run over half the range and are doubled by parity.

def norm_weights_xi(cavity: CavitySpec):
    """(outer, plain) weights W(s) for the xi-coordinate norm integrals."""
    if isinstance(cavity, ParabolicCavity):
        return (lambda s: 1.0), (lambda s: 1.0 / s)
    return ((lambda s: (1.0 + s) ** 2 / (s * (s + 2.0))),
            (lambda s: 1.0 / (s * (s + 2.0))))


def norm_weights_eta(cavity: CavitySpec):
    """(outer, plain) weights W(s) for the eta-coordinate norm integrals."""
    if isinstance(cavity, ParabolicCavity):
        return (lambda s: 1.0), (lambda s: 1.0 / s)
    return ((lambda s: (1.0 - s) ** 2 / (s * (2.0 - s))),
            (lambda s: 1.0 / (s * (2.0 - s))))


def normalization_squared(cavity: CavitySpec, k: float,
                          i_xi_outer, i_xi_plain, i_eta_outer, i_eta_plain):
    """N^2 such that u -> u/N gives int |g|^2 dV = 1.

    For the ellipsoid the eta integrals must already cover the full range
    (twice the half-range values).
    """
    if isinstance(cavity, ParabolicCavity):
        return 2.0 * np.pi * k * k * 0.25 * (
            i_xi_outer * i_eta_plain + i_xi_plain * i_eta_outer)
    c0 = cavity.c0
    return 2.0 * np.pi * k * k * c0 ** 3 * (
        i_xi_outer * i_eta_plain - i_xi_plain * i_eta_outer)


def gz_focus_raw(cavity: CavitySpec) -> float:
    """z-component of curl(e_phi u_xi u_eta) at focus 1 for unit-slope seeds.

    With the regular normal-form solutions seeded as u ~ s, the limit of the
    field's z-component at the focus is a pure geometry factor: 2 for the
    parabola and 1/(2 c0) for the ellipsoid (focus 2 picks up the eta-parity
    sign).
    """
    if isinstance(cavity, ParabolicCavity):
        return 2.0
    return 1.0 / (2.0 * cavity.c0)
