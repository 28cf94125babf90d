import math

import numpy as np
import pytest

from cavityqed.oned import (NoRootInBracket, RadialProblem, ladder_grid,
                            propagate, shoot_eigen)

# particle in a box: u'' + k^2 u = 0, u(0) = u(L) = 0
L = 1.0
BOX = RadialProblem(
    label="box", s_end=L,
    Q=lambda s, p: 0.0 * s + np.asarray(p["k"]) ** 2,
    A=lambda p: 0.0 * np.asarray(p["k"], dtype=float),
    B0=lambda p: np.asarray(p["k"], dtype=float) ** 2,
    bc="dirichlet")


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_box_eigenvalues_to_1e10(n):
    k_true = n * math.pi / L
    k, res = shoot_eigen(BOX, lambda k: {"k": k}, (k_true - 0.3, k_true + 0.3),
                         ppo=1500)
    assert abs(k - k_true) <= 1e-10
    interior = int(res.nodes[0]) - int(res.last_edge_cross[0])
    assert interior == n - 1  # Sturm oscillation count


def test_box_no_root_in_bracket():
    with pytest.raises(NoRootInBracket):
        shoot_eigen(BOX, lambda k: {"k": k}, (3.5, 4.5), ppo=300)


def test_node_count_monotonicity():
    ks = []
    for n in range(1, 7):
        k_true = n * math.pi / L
        k, res = shoot_eigen(BOX, lambda k: {"k": k},
                             (k_true - 0.3, k_true + 0.3), ppo=400)
        ks.append(k)
        assert int(res.nodes[0]) - int(res.last_edge_cross[0]) == n - 1
    assert np.all(np.diff(ks) > 0)


def test_coulomb_problem_against_high_order_integration():
    """Numerov vs DOP853 on u'' + (k^2/4 + b/s) u = 0."""
    from scipy.integrate import solve_ivp

    k, b = 3.0, 1.7
    prob = RadialProblem(
        label="coulomb", s_end=8.0,
        Q=lambda s, p: 0.25 * p["k"] ** 2 + p["b"] / s,
        A=lambda p: np.asarray(p["b"], dtype=float),
        B0=lambda p: 0.25 * np.asarray(p["k"], dtype=float) ** 2)
    grid = ladder_grid(prob, {"k": k, "b": b}, ppo=300)
    res = propagate(prob, {"k": k, "b": b}, grid)

    s0 = 1e-9
    a1 = -b / 2.0
    a2 = (b * b / 2.0 - k * k / 4.0) / 6.0
    sol = solve_ivp(lambda s, y: [y[1], -(0.25 * k * k + b / s) * y[0]],
                    (s0, 8.0), [s0 * (1 + a1 * s0), 1 + 2 * a1 * s0],
                    rtol=1e-12, atol=1e-14, method="DOP853")
    assert res.u_end[0] == pytest.approx(sol.y[0, -1], rel=2e-8)
    assert res.du_end[0] == pytest.approx(sol.y[1, -1], rel=2e-7)


def test_weighted_integrals_simpson():
    # sin(ks)/k from the series seed; int u^2 ds and int u^2/s ds
    from scipy.integrate import quad

    k = 2.0
    grid = ladder_grid(BOX, {"k": k}, ppo=400, s_end=L)
    res = propagate(BOX, {"k": k}, grid, weights=(lambda s: 1.0, lambda s: 1.0 / s))
    exact0 = quad(lambda s: (math.sin(k * s) / k) ** 2, 0, L)[0]
    exact1 = quad(lambda s: (math.sin(k * s) / k) ** 2 / s, 1e-12, L)[0]
    assert res.integrals[0][0] == pytest.approx(exact0, rel=1e-7)
    assert res.integrals[1][0] == pytest.approx(exact1, rel=1e-6)


def test_batched_matches_scalar():
    ks = np.array([2.0, 3.5, 7.0])
    grid = ladder_grid(BOX, {"k": ks}, ppo=200)
    res = propagate(BOX, {"k": ks}, grid)
    for i, k in enumerate(ks):
        one = propagate(BOX, {"k": float(k)}, grid)
        assert res.u_end[i] == pytest.approx(one.u_end[0], rel=1e-13)


def test_stored_profile_matches_solution():
    k = 4.0
    grid = ladder_grid(BOX, {"k": k}, ppo=300)
    res = propagate(BOX, {"k": k}, grid, store_stride=2)
    u_exact = np.sin(k * res.s_stored) / k
    du_exact = np.cos(k * res.s_stored)
    assert np.max(np.abs(res.u_stored[:, 0] - u_exact)) < 2e-7
    assert np.max(np.abs(res.du_stored[:, 0] - du_exact)) < 2e-6
