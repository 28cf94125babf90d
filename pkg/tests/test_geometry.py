import math

import numpy as np
import pytest

from cavityqed.geometry import (AtomSpec, ParabolicCavity, PhysicalConstants,
                                PointOutsideDomain, ProlateCavity,
                                curl_of_azimuthal_field, from_parabolic,
                                from_prolate, inside, scale_factors,
                                to_parabolic, to_prolate, unit_vectors,
                                vector_to_cartesian, volume_weight)

PAR = ParabolicCavity(focal_length=1.0, xi_cutoff=40.0)
PRO = ProlateCavity(interfocal_distance=2.0, vertex_gap=1.0)
RNG = np.random.default_rng(7)


def test_constants_positive():
    with pytest.raises(ValueError):
        PhysicalConstants(c=-1.0)
    c = PhysicalConstants()
    assert c.c == c.hbar == c.epsilon0 == 1.0


def test_cavity_invariants():
    with pytest.raises(ValueError):
        ParabolicCavity(focal_length=1.0, xi_cutoff=5.0)  # below 10 f
    with pytest.raises(ValueError):
        ProlateCavity(interfocal_distance=-1.0, vertex_gap=1.0)
    assert PRO.semi_major == pytest.approx(2.0)
    assert PRO.xi_boundary == pytest.approx(2.0)
    assert PRO.semi_major > PRO.c0


def test_atom_positions_derived():
    a1 = AtomSpec.at_focus(PRO, 1, omega=3.0, dipole=0.5)
    a2 = AtomSpec.at_focus(PRO, 2, omega=3.0, dipole=0.5)
    assert np.allclose(a1.position, [0, 0, 1.0])
    assert np.allclose(a2.position, [0, 0, -1.0])
    with pytest.raises(ValueError):
        AtomSpec.at_focus(PAR, 2, omega=1.0, dipole=1.0)
    assert np.allclose(AtomSpec.at_focus(PAR, 1, 1.0, 1.0).position, 0.0)


def test_parabolic_round_trip_random():
    worst = 0.0
    for _ in range(1000):
        xi = RNG.uniform(1e-3, 35.0)
        eta = RNG.uniform(1e-3, 2.0)
        phi = RNG.uniform(-math.pi, math.pi)
        p = from_parabolic((xi, eta, phi), PAR)
        xi2, eta2, phi2 = to_parabolic(p, PAR)
        p2 = from_parabolic((xi2, eta2, phi2), PAR)
        worst = max(worst, np.max(np.abs(p2 - p)) / max(np.linalg.norm(p), 1e-6))
    assert worst <= 1e-12


def test_prolate_round_trip_random():
    worst = 0.0
    for _ in range(1000):
        xi = RNG.uniform(1.0 + 1e-6, 1.999)
        eta = RNG.uniform(-0.999, 0.999)
        phi = RNG.uniform(-math.pi, math.pi)
        p = from_prolate((xi, eta, phi), PRO)
        xi2, eta2, phi2 = to_prolate(p, PRO)
        p2 = from_prolate((xi2, eta2, phi2), PRO)
        worst = max(worst, np.max(np.abs(p2 - p)))
    assert worst <= 1e-12


def test_parabola_vertex_maps_to_boundary():
    # implicit surface rho^2 = 4 f (z + f): vertex at (0,0,-f)
    f = PAR.focal_length
    xi, eta, _ = to_parabolic((0.0, 0.0, -f), PAR)
    assert eta == pytest.approx(PAR.eta_boundary, rel=1e-14)
    assert xi == pytest.approx(0.0, abs=1e-14)
    # a generic point of the implicit surface also lands on eta0
    z = 0.7
    rho = math.sqrt(4 * f * (z + f))
    _, eta_s, _ = to_parabolic((rho, 0.0, z), PAR)
    assert eta_s == pytest.approx(PAR.eta_boundary, rel=1e-12)


def test_prolate_focus_and_boundary_coordinates():
    xi, eta, _ = to_prolate((0, 0, PRO.c0), PRO)
    assert (xi, eta) == (pytest.approx(1.0), pytest.approx(1.0))
    xi, eta, _ = to_prolate((0, 0, -PRO.c0), PRO)
    assert (xi, eta) == (pytest.approx(1.0), pytest.approx(-1.0))
    xi, eta, _ = to_prolate((0, 0, 0.0), PRO)
    assert (xi, eta) == (pytest.approx(1.0), pytest.approx(0.0))
    # boundary points: xi0 = (d/2 + f)/(d/2)
    for _ in range(40):
        th = RNG.uniform(0, math.pi)
        p = [PRO.semi_minor * math.sin(th), 0.0, PRO.semi_major * math.cos(th)]
        xi, _, _ = to_prolate(p, PRO, check=False)
        assert xi == pytest.approx(PRO.xi_boundary, abs=1e-12)


def test_outside_domain_raises():
    with pytest.raises(PointOutsideDomain):
        to_prolate((0, 0, 5.0), PRO)
    with pytest.raises(PointOutsideDomain):
        to_parabolic((0, 0, -2.0), PAR)  # below the mirror
    assert not inside(PRO, (0, 0, 5.0))
    assert inside(PRO, (0.1, 0.0, 0.0))


@pytest.mark.parametrize("cavity", [PAR, PRO])
def test_metric_reproduces_cartesian_line_element(cavity):
    conv = to_parabolic if isinstance(cavity, ParabolicCavity) else to_prolate
    back = from_parabolic if isinstance(cavity, ParabolicCavity) else from_prolate
    for _ in range(60):
        if isinstance(cavity, ParabolicCavity):
            q = (RNG.uniform(0.5, 20), RNG.uniform(0.2, 1.8), RNG.uniform(0, 6))
        else:
            q = (RNG.uniform(1.05, 1.9), RNG.uniform(-0.9, 0.9), RNG.uniform(0, 6))
        h = scale_factors(cavity, q[0], q[1])
        assert all(v > 0 for v in h)
        d = 1e-6
        for axis, hv in ((0, h[0]), (1, h[1]), (2, h[2])):
            dq = list(q)
            dq[axis] += d
            step = np.linalg.norm(back(dq, cavity) - back(q, cavity))
            assert step / d == pytest.approx(hv, rel=1e-4)


@pytest.mark.parametrize("cavity", [PAR, PRO])
def test_unit_vectors_orthonormal_right_frame(cavity):
    for _ in range(40):
        if isinstance(cavity, ParabolicCavity):
            xi, eta = RNG.uniform(0.5, 20), RNG.uniform(0.2, 1.8)
        else:
            xi, eta = RNG.uniform(1.05, 1.9), RNG.uniform(-0.9, 0.9)
        phi = RNG.uniform(0, 2 * math.pi)
        e = unit_vectors(cavity, xi, eta, phi)
        for i in range(3):
            assert np.linalg.norm(e[i]) == pytest.approx(1.0, abs=1e-12)
            for j in range(i + 1, 3):
                assert abs(e[i] @ e[j]) < 1e-12


def test_curl_zero_for_zero_profiles():
    xi = np.linspace(0.5, 5.0, 30)
    eta = np.linspace(0.2, 1.8, 20)
    g_xi, g_eta = curl_of_azimuthal_field(PAR, xi, np.zeros_like(xi), eta,
                                          np.ones_like(eta))
    assert np.all(g_xi == 0) and np.all(g_eta == 0)


def test_curl_against_known_uniform_field():
    # H_phi = rho/2 has curl exactly e_z: in parabolic coordinates
    # rho = sqrt(xi eta), so F = sqrt(xi)/2 and G = sqrt(eta)
    xi = np.linspace(0.5, 6.0, 41)
    eta = np.linspace(0.2, 1.8, 31)
    F = np.sqrt(xi) / 2.0
    G = np.sqrt(eta)
    dF = 0.25 / np.sqrt(xi)
    dG = 0.5 / np.sqrt(eta)
    g_xi, g_eta = curl_of_azimuthal_field(PAR, xi, F, eta, G, dF, dG)
    for i in (3, 20, 38):
        for j in (2, 15, 28):
            v = vector_to_cartesian(PAR, xi[i], eta[j], 0.3,
                                    g_xi[i, j], g_eta[i, j])
            assert np.allclose(v, [0, 0, 1.0], atol=1e-10)


def test_curl_grid_mismatch_error():
    from cavityqed.geometry import GridMismatch

    with pytest.raises(GridMismatch):
        curl_of_azimuthal_field(PAR, np.linspace(1, 2, 5), np.zeros(4),
                                np.linspace(0, 1, 3), np.zeros(3))


@pytest.mark.parametrize("cavity", [PAR, PRO])
def test_volume_weight_matches_scale_factors(cavity):
    if isinstance(cavity, ParabolicCavity):
        xi, eta = 3.7, 1.2
    else:
        xi, eta = 1.4, -0.3
    h = scale_factors(cavity, xi, eta)
    assert volume_weight(cavity, xi, eta) == pytest.approx(h[0] * h[1] * h[2],
                                                           rel=1e-13)
