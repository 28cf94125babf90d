"""Semiclassical (phase-integral) quantization and normalization.

For each normal-form problem u'' + Q u = 0 the accumulated phase over the
classically allowed region,

    Phi = int sqrt(Q(s)) ds,

obeys a Bohr-Sommerfeld-type condition  Phi = pi (n + 1) - phi_a - phi_b
with endpoint constants

    phi = -pi/4   regular-singular endpoint with Q ~ A/s, A > 0 (the
                  regular solution connects like a Coulomb/Langer wave)
    phi = +pi/4   smooth turning point
    phi = +pi/2   Neumann wall (u' = 0)
    phi =  0      Dirichlet wall (u = 0)

The parabola quantizes through a single separation function (the mirror
coordinate) plus the longitudinal condition introduced by the cutoff wall;
the ellipsoid has two genuine conditions.  Amplitudes at the singular
endpoint connect through the Coulomb penetration factor
C0(x)^2 = 2 pi x / (e^{2 pi x} - 1), which also supplies semiclassical norm
integrals and focal couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .geometry import CavitySpec, ParabolicCavity, PhysicalConstants, ProlateCavity
from . import separated
from .oned import RadialProblem

__all__ = [
    "coulomb_penetration_sq",
    "PhaseData",
    "phase_data",
    "phase_derivative_k",
    "wkb_norm_integrals",
    "TurningPointFailure",
]


class TurningPointFailure(RuntimeError):
    """Raised when the classically allowed region cannot be classified."""


def coulomb_penetration_sq(x) -> np.ndarray:
    """C0(x)^2 = 2 pi x / (exp(2 pi x) - 1), continuous through x = 0.

    Squared amplitude ratio between the regular solution near a 1/s
    endpoint and its oscillatory tail; x > 0 is the repulsive (suppressed)
    side.
    """
    x = np.asarray(x, dtype=float)
    y = 2.0 * np.pi * x
    out = np.where(np.abs(y) < 1e-8, 1.0 - 0.5 * y, y / np.expm1(np.where(np.abs(y) < 1e-8, 1.0, y)))
    return out


@dataclass(frozen=True)
class PhaseData:
    """Allowed-region phase integral of one radial problem."""

    phi: float            # int sqrt(Q) over the allowed region
    s_turn: float         # inner boundary of the allowed region (0 if none)
    inner_kind: str       # "singular" or "turning"
    eta_eff: float        # effective Coulomb parameter -A/(2 sqrt(B0))


def _scalar_params(params: dict) -> dict:
    return {k: float(np.asarray(v).ravel()[0]) for k, v in params.items()}


def _q_scalar(problem: RadialProblem, params: dict):
    def q(s):
        return float(np.asarray(problem.Q(np.array([[s]]), params))[0, 0])
    return q


def phase_data(problem: RadialProblem, params: dict,
               s_end: float | None = None) -> PhaseData:
    """Classify the allowed region and integrate its phase.

    Square-root behavior at the inner boundary is removed by substitution,
    so plain adaptive quadrature converges fast.
    """
    params = _scalar_params(params)
    if s_end is None:
        s_end = problem.s_end
    q = _q_scalar(problem, params)
    A = float(np.asarray(problem.A(params)).ravel()[0])
    B0 = float(np.asarray(problem.B0(params)).ravel()[0])
    eta_eff = -A / (2.0 * math.sqrt(abs(B0))) if B0 > 0 else math.copysign(math.inf, -A)

    s_lo = 1e-12 * s_end
    if A >= 0.0 or q(s_lo) > 0.0:
        s_turn, kind = 0.0, "singular"
    else:
        # forbidden near the endpoint; locate the turning point
        if q(s_end) <= 0.0:
            raise TurningPointFailure(
                f"{problem.label}: no classically allowed region up to the wall")
        lo, hi = s_lo, s_end
        if q(lo) > 0:
            raise TurningPointFailure(f"{problem.label}: ambiguous turning structure")
        s_turn = optimize.brentq(q, lo, hi, xtol=1e-14 * s_end, rtol=1e-14)
        kind = "turning"

    span = s_end - s_turn
    s_mid = s_turn + min(0.2 * span, max(0.05 * span, 4.0 * abs(A) / max(B0, 1e-300)))

    if kind == "singular":
        def integrand(w):
            s = w * w
            return 2.0 * w * math.sqrt(max(q(s), 0.0))
        p1, _ = integrate.quad(integrand, math.sqrt(s_lo), math.sqrt(s_mid), limit=200)
    else:
        def integrand(w):
            s = s_turn + w * w
            return 2.0 * w * math.sqrt(max(q(s), 0.0))
        p1, _ = integrate.quad(integrand, 0.0, math.sqrt(s_mid - s_turn), limit=200)

    def integrand2(s):
        return math.sqrt(max(q(s), 0.0))
    p2, _ = integrate.quad(integrand2, s_mid, s_end, limit=400)
    return PhaseData(phi=p1 + p2, s_turn=s_turn, inner_kind=kind, eta_eff=eta_eff)


def phase_derivative_k(problem: RadialProblem, params: dict,
                       dk: float | None = None) -> float:
    """d Phi / d k at fixed separation constant, by central differences."""
    params = _scalar_params(params)
    k = params["k"]
    if dk is None:
        dk = 1e-4 * k
    up = dict(params, k=k + dk)
    dn = dict(params, k=k - dk)
    return (phase_data(problem, up).phi - phase_data(problem, dn).phi) / (2.0 * dk)


def endpoint_phase(kind: str) -> float:
    return {"singular": -0.25 * math.pi, "turning": 0.25 * math.pi,
            "neumann": 0.5 * math.pi, "dirichlet": 0.0}[kind]


def quantization_target(n: int, inner_kind: str, wall_kind: str) -> float:
    """Phase required for the n-th state (n = interior node count)."""
    return math.pi * (n + 1) - endpoint_phase(inner_kind) - endpoint_phase(wall_kind)


def wkb_norm_integrals(problem: RadialProblem, params: dict, pd: PhaseData,
                       weights, s_end: float | None = None) -> list[float]:
    """Semiclassical int u^2 W ds for the unit-slope-seeded solution.

    The seed u ~ s fixes the oscillatory amplitude through the Coulomb
    connection at the singular endpoint: A^2 = 1 / (C0(eta_eff)^2 B0), with
    the envelope referenced to Q = B0.
    """
    params = _scalar_params(params)
    if s_end is None:
        s_end = problem.s_end
    q = _q_scalar(problem, params)
    B0 = float(np.asarray(problem.B0(params)).ravel()[0])
    c0sq = float(coulomb_penetration_sq(pd.eta_eff))
    amp2_sqrtB = math.sqrt(abs(B0)) / (2.0 * c0sq * abs(B0))  # A^2 sqrt(B0) / 2

    span = s_end - pd.s_turn
    s_mid = pd.s_turn + min(0.2 * span, max(0.05 * span, 1e-3 * span * 50))
    out = []
    for W in weights:
        if pd.inner_kind == "singular":
            def integrand(w, W=W):
                s = w * w
                return 2.0 * w * W(s) / math.sqrt(max(q(s), 1e-300))
            i1, _ = integrate.quad(integrand, 1e-9 * math.sqrt(s_end),
                                   math.sqrt(s_mid), limit=200)
        else:
            def integrand(w, W=W):
                s = pd.s_turn + w * w
                return 2.0 * w * W(s) / math.sqrt(max(q(s), 1e-300))
            i1, _ = integrate.quad(integrand, 1e-6 * math.sqrt(span),
                                   math.sqrt(s_mid - pd.s_turn), limit=200)

        def integrand2(s, W=W):
            return W(s) / math.sqrt(max(q(s), 1e-300))
        i2, _ = integrate.quad(integrand2, s_mid, s_end, limit=400)
        out.append(amp2_sqrtB * (i1 + i2))
    return out
