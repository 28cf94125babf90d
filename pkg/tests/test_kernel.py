import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import sici

from cavityqed.geometry import (AtomSpec, ParabolicCavity, PhysicalConstants,
                                ProlateCavity)
from cavityqed.kernel import (KernelMatrix, NotConverged, PoleProximity,
                              PurcellSeries, S_integral, gamma_free,
                              kernel_A, kernel_T1,
                              purcell_parabolic_semiclassical, purcell_pole)

CST = PhysicalConstants()
CAV = ParabolicCavity(1.0, 20.0)
PRO = ProlateCavity(2.0, 1.0)
EULER_GAMMA = 0.5772156649015329


def make_atom(omega=1.0, gamma=None, dipole=None):
    """Atom with either an explicit dipole or a targeted free-space rate."""
    if dipole is None:
        gamma = 0.01 if gamma is None else gamma
        dipole = math.sqrt(3.0 * math.pi * gamma / omega ** 3)
    return AtomSpec.at_focus(CAV, 1, omega=omega, dipole=dipole)


def flat_kernel(atom, half_width_rates=60.0, per_rate=12.0, n_atoms=1,
                cross_sign=1.0):
    """Free-space emulating comb: uniform spacing, flat coupling density."""
    gf = gamma_free(atom, CST)
    dw = gf / per_rate
    om = np.arange(atom.omega - half_width_rates * gf,
                   atom.omega + half_width_rates * gf, dw)
    assert om.min() > 0
    kk = math.sqrt(gf * dw / (2.0 * math.pi)) * np.ones(len(om))
    rows = [kk]
    atoms = [atom]
    if n_atoms == 2:
        rows.append(kk * cross_sign)
        atoms.append(AtomSpec.at_focus(PRO, 2, atom.omega, atom.dipole))
    return KernelMatrix.from_arrays(om, np.array(rows), atoms, CST)


# --- free-space rate -------------------------------------------------------

def test_gamma_free_frozen_value():
    # brute-force continuum oracle (below) fixes this as D^2 w^3/(3 pi)
    # in natural units; w = D = 1 gives 1/(3 pi)
    atom = make_atom(dipole=1.0)
    assert gamma_free(atom, CST) == pytest.approx(1.0 / (3.0 * math.pi), rel=1e-12)
    assert gamma_free(atom, CST) == pytest.approx(0.106103, rel=1e-5)


def test_gamma_free_continuum_oracle_quadrature():
    # z-projected free-space mode density rho_z(w) = w^2/(3 pi^2 c^3);
    # Gamma = 2 Re of the broadened continuum kernel at the transition
    atom = make_atom(dipole=1.0)
    w_eg = atom.omega
    vals = []
    for eps in (3e-3, 1e-3, 3e-4):
        v = 2.0 * integrate.quad(
            lambda w: (w / 2.0) * (w * w / (3 * math.pi ** 2))
            * eps / (eps * eps + (w - w_eg) ** 2),
            max(w_eg - 3000 * eps, 1e-9), w_eg + 3000 * eps, limit=2000)[0]
        vals.append(v)
    target = gamma_free(atom, CST)
    errs = [abs(v - target) / target for v in vals]
    assert errs[-1] < 2e-3
    assert errs[2] < errs[0]  # converges as the broadening shrinks


def test_gamma_free_scalings():
    base = gamma_free(make_atom(1.0, dipole=1.0), CST)
    assert gamma_free(make_atom(2.0, dipole=1.0), CST) == pytest.approx(8 * base, rel=1e-12)
    assert gamma_free(make_atom(1.0, dipole=3.0), CST) == pytest.approx(9 * base, rel=1e-12)


# --- kernel sums -----------------------------------------------------------

def test_kernel_single_mode_arithmetic():
    atom = make_atom(dipole=1.0)
    km = KernelMatrix.from_arrays([1.0], [[math.sqrt(0.5)]], [atom], CST)
    val = km.A(0, 0, 1.0 + 0j)
    assert val == pytest.approx(0.5 / (1 + 1j), rel=1e-14)
    assert val == pytest.approx(0.25 - 0.25j, rel=1e-14)


def test_kernel_symmetry():
    km = flat_kernel(make_atom(), n_atoms=2)
    s = 0.3 + 0.7j
    assert km.A(0, 1, s) == pytest.approx(km.A(1, 0, s), rel=1e-14)


def test_kernel_reality_reflection():
    # with real mode data, conj(A(s)) equals the kernel of the frequency-
    # reflected spectrum at conj(s)
    atom = make_atom()
    km = flat_kernel(atom)
    km_ref = KernelMatrix.from_arrays(-km.omega[::-1], km.coupling[:, ::-1],
                                      km.atoms, CST,
                                      window=(-km.window[1], -km.window[0]))
    s = 0.2 + 0.9j
    assert np.conj(km.A(0, 0, s)) == pytest.approx(km_ref.A(0, 0, np.conj(s)),
                                                   rel=1e-13)


def test_kernel_positive_spectral_density():
    atom = make_atom()
    km = flat_kernel(atom)
    gf = km.gamma_free
    for w in np.linspace(atom.omega - 30 * gf, atom.omega + 30 * gf, 7):
        assert km.A(0, 0, 1e-4 - 1j * w).real > 0


def test_kernel_pole_proximity_error():
    km = flat_kernel(make_atom())
    with pytest.raises(PoleProximity):
        km.A(0, 0, 1e-16 - 1j * km.omega[3])


def test_kernel_large_s_bound():
    km = flat_kernel(make_atom())
    total = np.sum(km.coupling[0] ** 2)
    for s in (50.0, 500.0, 5000.0):
        assert abs(km.A(0, 0, s)) <= total / s * 1.0000001


def test_kernel_A_reports_tail_estimate():
    atom = make_atom()
    km = flat_kernel(atom)
    val, tail = kernel_A(km, 0, 0, 1e-2 - 1j * atom.omega)
    assert np.isfinite(tail) and tail >= 0


def test_T1_off_diagonal_and_symmetry():
    atom = make_atom()
    km = flat_kernel(atom, n_atoms=2, cross_sign=-1.0)
    s = 0.2 - 1j * atom.omega
    assert kernel_T1(km, 0, 1, s) == pytest.approx(km.A(0, 1, s), rel=1e-14)
    assert kernel_T1(km, 0, 1, s) == pytest.approx(kernel_T1(km, 1, 0, s), rel=1e-14)


def test_T1_diagonal_vanishes_for_free_space_emulation():
    atom = make_atom()
    km = flat_kernel(atom, half_width_rates=80.0, per_rate=16.0)
    gf = km.gamma_free
    t11 = kernel_T1(km, 0, 0, 0.5 * gf - 1j * atom.omega)
    assert abs(t11) <= 0.05 * gf / 2.0


# --- S integral ------------------------------------------------------------

def test_S_integral_basics():
    assert S_integral(0.0) == 0.0
    # Taylor oracle: integral of sin^2(y)/y = y - y^3/3 + ... is u^2/2 + O(u^4)
    for u in (1e-4, 5e-4, 1e-3):
        assert S_integral(u) == pytest.approx(u * u / 2.0 - u ** 4 / 12.0, rel=1e-6)
    with pytest.raises(ValueError):
        S_integral(-1.0)


@pytest.mark.parametrize("u", [1.0, 5.0, 10.0])
def test_S_integral_cosine_integral_identity(u):
    # independent oracle: S(u) = (ln(2u) + gamma_Euler - Ci(2u)) / 2
    ci = sici(2.0 * u)[1]
    oracle = 0.5 * (math.log(2.0 * u) + EULER_GAMMA - ci)
    assert S_integral(u) == pytest.approx(oracle, abs=1e-9)


def test_S_integral_quadrature_accuracy():
    for u in (0.3, 2.0, 25.0, 100.0):
        ref = integrate.quad(lambda y: math.sin(y) ** 2 / y if y else 0.0,
                             0, u, limit=800, epsabs=1e-14)[0]
        assert S_integral(u) == pytest.approx(ref, abs=1e-10)


# --- vertex-bounce series --------------------------------------------------

def test_purcell_series_domain_error():
    with pytest.raises(ValueError):
        purcell_parabolic_semiclassical(0.0)


def test_purcell_series_large_u_limit():
    res = purcell_parabolic_semiclassical(1000.0)
    assert isinstance(res, PurcellSeries)
    assert res.ratio == pytest.approx(1.0, abs=1e-5)


def test_purcell_series_terms_decay_geometrically():
    u = 3.0
    s_u = S_integral(u)
    terms = []
    for m in range(1, 9):
        x = 2 * m * s_u
        terms.append(abs(6 * (x / math.tanh(x) - 1) / math.sinh(x) ** 2))
    # ratio bounded by e^{-4 S(u)} up to slowly varying polynomial factors
    for t1, t2 in zip(terms, terms[1:]):
        assert t2 / t1 < 3.0 * math.exp(-4.0 * s_u)


def test_purcell_series_truncation_indicator():
    res = purcell_parabolic_semiclassical(4.0)
    assert res.last_term <= 1e-10 * abs(res.ratio)
    assert purcell_parabolic_semiclassical(4.0, m_max=2).m_used == 2


def test_purcell_series_partial_sums_cauchy():
    u = 2.0
    vals = [purcell_parabolic_semiclassical(u, m_max=m).ratio for m in range(1, 10)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1] + 1e-15)


# --- pole formula ----------------------------------------------------------

def test_pole_single_resonant_mode():
    atom = make_atom()
    kap = 0.37
    km = KernelMatrix.from_arrays(
        [atom.omega], [[kap]], [atom], CST,
        window=(0.5 * atom.omega, 1.5 * atom.omega))
    # Gamma(eps) = 2 kap^2 / eps: diverges as eps -> 0, which is why eps
    # must exceed the local mode spacing of a discrete basis
    for eps in (1e-3, 1e-2):
        g = 2.0 * km.A(0, 0, eps - 1j * atom.omega).real
        assert g == pytest.approx(2 * kap ** 2 / eps, rel=1e-10)


def test_pole_flat_basis_recovers_free_space():
    atom = make_atom()
    km = flat_kernel(atom, half_width_rates=80.0, per_rate=14.0)
    pr = purcell_pole(km, 0, require_certificate=True)
    assert pr.ratio == pytest.approx(1.0, rel=0.02)
    assert pr.converged and pr.certificate_rel_diff < 0.05
    assert pr.n_modes > 100


def test_pole_requires_coverage():
    atom = make_atom()
    km = flat_kernel(atom, half_width_rates=20.0)
    with pytest.raises(ValueError):
        purcell_pole(km, 0, window_half_width=30.0 * km.gamma_free)
