import numpy as np
import pytest
import scipy.linalg

from h2hinf import gare, hinf, lti
from h2hinf.errors import NumericalError

from conftest import random_stable_plant, scalar_plant

# root of 1 - 2p - 0.75 p^2 = 0 (scalar GARE with a=-1, b1=b2=q=r=1, gamma=2)
P_SCALAR = (-2.0 + np.sqrt(7.0)) / 1.5


def admissible_fixture(rng, n, m=1, qw=1, gamma_scale=2.0):
    """Stable random plant with K1=0 admissible and a workable gamma."""
    plant = random_stable_plant(rng, n, m=m, qw=qw)
    k0 = np.zeros((m, n))
    norm = hinf.hinf_norm(plant, k0).norm
    return plant, k0, gamma_scale * max(norm, 1.0)


def test_riccati_residual_scalar_root():
    plant = scalar_plant()
    resid = gare.riccati_residual(plant, [[P_SCALAR]], 2.0)
    assert resid <= 1e-10


def test_riccati_residual_zero_matrix():
    plant = scalar_plant()
    resid = gare.riccati_residual(plant, [[0.0]], 2.0)
    assert resid == pytest.approx(np.linalg.norm(plant.Q, "fro"))


def test_riccati_residual_rejects_asymmetric():
    rng = np.random.default_rng(0)
    plant = random_stable_plant(rng, 2)
    with pytest.raises(ValueError):
        gare.riccati_residual(plant, [[1.0, 0.5], [0.4, 1.0]], 2.0)


def test_inner_iteration_degenerate_gains_is_lyapunov():
    rng = np.random.default_rng(1)
    plant = random_stable_plant(rng, 3, m=2, qw=1)
    p = gare.inner_iteration(plant, np.zeros((2, 3)), np.zeros((1, 3)), 5.0)
    ref = lti.solve_lyapunov(plant.A, plant.Q)
    assert np.allclose(p, ref, rtol=1e-10)


def test_inner_iteration_fixed_point_of_scalar_gare():
    plant = scalar_plant()
    k_star = np.array([[P_SCALAR]])
    l_star = np.array([[P_SCALAR / 4.0]])
    p = gare.inner_iteration(plant, k_star, l_star, 2.0)
    assert p[0, 0] == pytest.approx(P_SCALAR, rel=1e-10)


def test_inner_iteration_substitution_residual(rng):
    for _ in range(5):
        plant = random_stable_plant(rng, 3, m=1, qw=1)
        k = rng.normal(size=(1, 3)) * 0.1
        l = rng.normal(size=(1, 3)) * 0.05
        acl = plant.A - plant.B1 @ k + plant.B2 @ l
        if not lti.is_hurwitz(acl):
            continue
        gamma = 4.0
        p = gare.inner_iteration(plant, k, l, gamma)
        qgam = plant.Q + k.T @ plant.R @ k
        resid = acl.T @ p + p @ acl + qgam - gamma**2 * (l.T @ l)
        assert np.linalg.norm(resid, "fro") <= 1e-10 * (1 + np.linalg.norm(p, "fro"))


def test_inner_iteration_rejects_unstable_pair():
    plant = scalar_plant(a=-1.0)
    with pytest.raises(NumericalError, match="admissible region"):
        gare.inner_iteration(plant, [[-3.0]], [[0.0]], 2.0)


def test_solve_game_scalar_fixture():
    plant = scalar_plant()
    sol = gare.solve_game(plant, 2.0, [[0.0]])
    assert sol.P[0, 0] == pytest.approx(P_SCALAR, abs=1e-10)
    assert sol.K_star[0, 0] == pytest.approx(P_SCALAR, abs=1e-10)
    assert sol.L_star[0, 0] == pytest.approx(P_SCALAR / 4.0, abs=1e-10)
    assert sol.residual <= 1e-8 * (1 + np.linalg.norm(sol.P) ** 2)


def test_solve_game_rejects_inadmissible_k1():
    plant = scalar_plant()
    with pytest.raises(ValueError, match="not admissible"):
        gare.solve_game(plant, 2.0, [[-5.0]])
    with pytest.raises(ValueError, match="not admissible"):
        gare.solve_game(plant, 0.9, [[0.0]])  # norm 1 >= gamma


def test_solve_game_lqr_limit_matches_h2_riccati(rng):
    for n in (1, 2, 3):
        plant, k0, _ = admissible_fixture(rng, n)
        sol = gare.solve_game(plant, 1e6, k0, check_hinf=False)
        lqr = scipy.linalg.solve_continuous_are(plant.A, plant.B1, plant.Q, plant.R)
        assert np.allclose(sol.P, lqr, rtol=1e-6)
        spectral = gare.solve_gare_spectral(plant, gamma=None)
        assert np.allclose(sol.P, spectral, rtol=1e-6)


def test_solve_game_matches_spectral_oracle(rng):
    for _ in range(5):
        plant, k0, gamma = admissible_fixture(rng, 3, m=2, qw=1)
        sol = gare.solve_game(plant, gamma, k0)
        direct = gare.solve_gare_spectral(plant, gamma)
        assert np.allclose(sol.P, direct, rtol=1e-7, atol=1e-9)
        assert gare.riccati_residual(plant, direct, gamma) <= 1e-7 * (1 + np.linalg.norm(direct) ** 2)


def test_solve_game_consistent_with_hinf_bound(rng):
    plant, k0, gamma = admissible_fixture(rng, 3)
    sol = gare.solve_game(plant, gamma, k0)
    assert hinf.hinf_norm(plant, sol.K_star).norm < gamma


def test_solve_game_insensitive_to_inner_cap(rng):
    plant, k0, gamma = admissible_fixture(rng, 2)
    p30 = gare.solve_game(plant, gamma, k0, max_inner=30).P
    p60 = gare.solve_game(plant, gamma, k0, max_inner=60).P
    assert np.allclose(p30, p60, rtol=1e-8)


def test_double_loop_psd_monotone(rng):
    # Within one outer step the disturbance player improves, so the inner
    # iterates are PSD-nondecreasing; across outer steps the control player
    # improves, so the per-step converged values are PSD-nonincreasing.
    for _ in range(5):
        plant, k0, gamma = admissible_fixture(rng, 3)
        sol = gare.solve_game(plant, gamma, k0, keep_history=True)
        by_outer = {}
        for it in sol.history:
            by_outer.setdefault(it.p, []).append(it.P)
        for iterates in by_outer.values():
            for earlier, later in zip(iterates, iterates[1:]):
                gap = later + 1e-8 * np.eye(3) - earlier
                assert np.linalg.eigvalsh(gap).min() >= -1e-8
        finals = [iterates[-1] for _, iterates in sorted(by_outer.items())]
        for earlier, later in zip(finals, finals[1:]):
            gap = earlier + 1e-8 * np.eye(3) - later
            assert np.linalg.eigvalsh(gap).min() >= -1e-8


def test_history_iterates_keep_two_player_loop_hurwitz(rng):
    plant, k0, gamma = admissible_fixture(rng, 3)
    sol = gare.solve_game(plant, gamma, k0, keep_history=True)
    for it in sol.history:
        acl = gare.closed_loop_matrix(plant, it.K, it.L)
        assert lti.spectral_abscissa(acl) < 0


def test_game_cost_trace_scalar():
    plant = scalar_plant()
    assert gare.game_cost_trace(plant, [[P_SCALAR]]) == pytest.approx(P_SCALAR, rel=1e-12)


def test_game_cost_trace_no_disturbance():
    plant = lti.LtiPlant(A=[[-1.0]], B1=[[1.0]], B2=[[0.0]], C=[[1.0], [0.0]], D=[[0.0], [1.0]])
    assert gare.game_cost_trace(plant, [[2.0]]) == 0.0


def test_game_cost_trace_orthogonal_invariance(rng):
    plant = random_stable_plant(rng, 3)
    p = rng.normal(size=(3, 3))
    p = p @ p.T + np.eye(3)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rotated = lti.LtiPlant(
        A=q.T @ plant.A @ q,
        B1=q.T @ plant.B1,
        B2=q.T @ plant.B2,
        C=plant.C @ q,
        D=plant.D,
    )
    assert gare.game_cost_trace(rotated, q.T @ p @ q) == pytest.approx(
        gare.game_cost_trace(plant, p), rel=1e-10
    )


def test_policy_gradient_zero_at_optimum(rng):
    plant, k0, gamma = admissible_fixture(rng, 2)
    sol = gare.solve_game(plant, gamma, k0)
    grad = gare.policy_gradient(plant, sol.K_star, gamma)
    assert np.linalg.norm(grad) <= 1e-8


def _fd_gradient(plant, k, gamma, h=1e-6):
    grad = np.zeros_like(k)
    for i in range(k.shape[0]):
        for j in range(k.shape[1]):
            kp = k.copy()
            kp[i, j] += h
            km = k.copy()
            km[i, j] -= h
            jp = gare.game_cost_trace(plant, gare.fixed_gain_value(plant, kp, gamma))
            jm = gare.game_cost_trace(plant, gare.fixed_gain_value(plant, km, gamma))
            grad[i, j] = (jp - jm) / (2 * h)
    return grad


def test_policy_gradient_scalar_finite_difference():
    plant = scalar_plant()
    k = np.array([[0.2]])
    grad = gare.policy_gradient(plant, k, 2.0)
    fd = _fd_gradient(plant, k, 2.0)
    assert grad[0, 0] == pytest.approx(fd[0, 0], rel=1e-5)


def test_policy_gradient_finite_difference_random(rng):
    checked = 0
    for seed in range(30):
        local = np.random.default_rng(200 + seed)
        plant, k0, gamma = admissible_fixture(local, 3)
        k = k0 + local.normal(size=k0.shape) * 0.05
        if not lti.is_hurwitz(plant.A - plant.B1 @ k):
            continue
        if hinf.hinf_norm(plant, k).norm >= gamma:
            continue
        grad = gare.policy_gradient(plant, k, gamma)
        fd = _fd_gradient(plant, k, gamma)
        assert np.allclose(grad, fd, rtol=1e-4, atol=1e-8)
        checked += 1
        if checked >= 10:
            break
    assert checked >= 10


def test_reference_cruise_game_matches_direct_solution():
    from conftest import reference_cruise_plant

    plant = reference_cruise_plant()
    search_gain = hinf.find_admissible_gain(plant, 500.0, [-400.0, -200.0]).gain
    sol = gare.solve_game(plant, 500.0, search_gain, keep_history=True)
    direct = gare.solve_gare_spectral(plant, 500.0)
    assert np.linalg.norm(sol.P - direct) / np.linalg.norm(direct) < 1e-6
    # the gain update is within 5% of optimal by the second outer step
    k_star = np.linalg.solve(plant.R, plant.B1.T @ direct)
    last_inner = {}
    for it in sol.history:
        last_inner[it.p] = it.P
    k_after_two = np.linalg.solve(plant.R, plant.B1.T @ last_inner[2])
    assert np.linalg.norm(k_after_two - k_star) / np.linalg.norm(k_star) < 0.05
