import numpy as np
import pytest
from scipy import linalg, special

from lais.errors import CurvatureViolation, NotRare
from lais.ldt import (
    LdtSolution,
    build_h_ldt_matvec,
    build_subspace,
    load_artifact,
    save_artifact,
    second_order_prob,
    select_rank,
    solve_ldt,
)
from lais.problems import FunctionMap, QuadraticMap, linear_map, quadratic_oracle_pf


def quad_target(n):
    u = np.zeros((n, 2))
    u[:, 0] = 1 / np.sqrt(n)
    u[:2, 1] = [-1 / np.sqrt(2), 1 / np.sqrt(2)]
    return u


@pytest.mark.parametrize("n", [2, 10, 334, 1000])
@pytest.mark.parametrize("kappa", [0.0, 5.0, -0.1])
@pytest.mark.parametrize("z", [2.0, 4.0, 6.0])
def test_quadratic_optimizer_exact(n, kappa, z):
    m = QuadraticMap(n, kappa)
    sol = solve_ldt(m, z)
    exact = z / np.sqrt(n) * np.ones(n)
    assert np.linalg.norm(sol.theta_star - exact) <= 1e-6 * np.linalg.norm(exact)
    assert abs(m.evaluate(sol.theta_star) - z) <= 1e-8
    assert sol.I_star == pytest.approx(z * z / 2, rel=1e-12)
    assert np.allclose(sol.n_hat, 1 / np.sqrt(n), atol=1e-12)
    assert sol.n_f_used + sol.n_grad_used <= 50


def test_solution_invariants():
    sol = solve_ldt(QuadraticMap(334, 5.0), 4.0)
    assert sol.constraint_residual <= 1e-8 * 4
    assert sol.stationarity <= 1e-6 * np.linalg.norm(sol.theta_star)
    assert abs(np.linalg.norm(sol.n_hat) - 1) <= 1e-12
    assert sol.lam == pytest.approx(4.0, rel=1e-10)


def test_linear_map_projection():
    a = np.array([3.0, -1.0, 2.0, 0.5])
    sol = solve_ldt(linear_map(a), 2.5)
    assert np.allclose(sol.theta_star, 2.5 * a / (a @ a), atol=1e-12)
    assert sol.I_star == pytest.approx(2.5**2 / (2 * a @ a), rel=1e-12)


def test_not_rare():
    with pytest.raises(NotRare):
        solve_ldt(QuadraticMap(5, 5.0), -1.0)
    with pytest.raises(NotRare):
        solve_ldt(QuadraticMap(5, 5.0), 0.0)


def test_augmented_lagrangian_path():
    # a curved constraint the first-order start misses; needs the outer loop
    def f(t):
        return t[0] + 0.3 * t[1] ** 2 + 0.1 * np.sin(t[2])

    def g(t):
        return np.array([1.0, 0.6 * t[1], 0.1 * np.cos(t[2])])

    m = FunctionMap(3, f, g)
    sol = solve_ldt(m, 3.0, x0=np.array([0.5, 2.0, -1.0]))
    assert abs(f(sol.theta_star) - 3.0) <= 1e-8
    gr = g(sol.theta_star)
    assert np.linalg.norm(sol.theta_star - sol.lam * gr) <= 1e-6 * np.linalg.norm(sol.theta_star)
    # compare with a dense constrained solve
    from scipy.optimize import minimize
    ref = minimize(lambda t: 0.5 * t @ t, np.ones(3), jac=lambda t: t,
                   constraints={"type": "eq", "fun": lambda t: f(t) - 3.0, "jac": g},
                   method="SLSQP", options={"ftol": 1e-14})
    assert sol.I_star == pytest.approx(ref.fun, rel=1e-7)


# ------------------------------------------------------------ H_LDT


@pytest.fixture(scope="module")
def quad334():
    m = QuadraticMap(334, 5.0)
    return m, solve_ldt(m, 4.0)


def test_hldt_annihilates_normal(quad334):
    m, sol = quad334
    assert np.linalg.norm(build_h_ldt_matvec(m, sol)(sol.n_hat)) <= 1e-12


def test_hldt_action_and_symmetry(quad334):
    m, sol = quad334
    mv = build_h_ldt_matvec(m, sol)
    d = np.zeros(334)
    d[:2] = [-1 / np.sqrt(2), 1 / np.sqrt(2)]
    assert np.allclose(mv(d), -5.0 * d, atol=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = rng.standard_normal(334), rng.standard_normal(334)
        assert abs(u @ mv(v) - v @ mv(u)) <= 1e-6 * np.linalg.norm(u) * np.linalg.norm(v)


@pytest.mark.parametrize("eps", [1e-3, 0.5, 5.0, 19.9])
def test_quadratic_subspace(quad334, eps):
    m, sol = quad334
    sub = build_subspace(m, sol, eps)
    assert sub.r == 2
    assert np.array_equal(sub.basis[:, 0], sol.n_hat)
    assert np.max(np.abs(sub.basis.T @ sub.basis - np.eye(2))) <= 1e-10
    assert np.max(linalg.subspace_angles(sub.basis, quad_target(334))) <= 1e-6
    assert sub.h_eigs[0] == pytest.approx(-5.0, rel=1e-8)


def test_linear_subspace_rank_one():
    a = np.arange(1.0, 9.0)
    m = linear_map(a)
    sol = solve_ldt(m, 3.0)
    sub = build_subspace(m, sol, 0.01)
    assert sub.r == 1
    assert np.array_equal(sub.basis[:, 0], sol.n_hat)


def test_select_rank():
    s = np.array([0.9, 0.5, 0.08, 0.01])
    assert select_rank(s, 0.1, 20) == 3
    assert select_rank(s, 0.05, 20) == 4
    assert select_rank(s, 0.05, 2) == 2
    assert select_rank(s, 1.0, 20) == 1


def test_diffusion_subspace_ranks(diffusion, diffusion_ldt):
    sol = diffusion_ldt
    assert sol.constraint_residual <= 1e-8
    sub3 = build_subspace(diffusion, sol, 0.075)
    sub5 = build_subspace(diffusion, sol, 0.065)
    assert (sub3.r, sub5.r) == (3, 5)
    scaled = sol.lam * np.abs(sub3.all_eigs)
    # split condition around the first discarded value
    assert scaled[1] > 0.075 >= scaled[2]
    assert np.max(np.abs(sub5.basis.T @ sub5.basis - np.eye(5))) <= 1e-10


# ------------------------------------------------------------ p_SO


def test_pso_linear_closed_form():
    for z in (2.0, 4.0):
        sol = LdtSolution(np.array([z, 0.0]), z * z / 2, z, np.array([1.0, 0.0]), 0.0, z)
        expected = np.exp(-z * z / 2) / (z * np.sqrt(2 * np.pi))
        assert second_order_prob(sol, np.zeros(1)) == pytest.approx(expected, rel=1e-15)
    # z=4: the Mills-ratio bound, slightly above the exact tail 3.167e-5
    assert expected == pytest.approx(3.3458e-5, rel=1e-4)
    assert 1.0 < expected / special.ndtr(-4.0) < 1.1


def test_pso_quadratic(quad334):
    m, sol = quad334
    sub = build_subspace(m, sol, 0.1)
    expected = (2 * np.pi) ** -0.5 / 4 * 21**-0.5 * np.exp(-8)
    assert second_order_prob(sol, sub.all_eigs) == pytest.approx(expected, rel=1e-8)
    ratio = second_order_prob(sol, sub.all_eigs) / quadratic_oracle_pf(4.0, 5.0)
    assert 0.5 <= ratio <= 2


def test_pso_curvature_violation():
    sol = LdtSolution(np.array([2.0, 0.0]), 2.0, 2.0, np.array([1.0, 0.0]), 0.0, 2.0)
    with pytest.raises(CurvatureViolation):
        second_order_prob(sol, [0.6])


def test_pso_trend():
    errs = []
    for z in (2.0, 4.0, 6.0):
        m = QuadraticMap(50, 5.0)
        sol = solve_ldt(m, z)
        sub = build_subspace(m, sol, 0.1)
        errs.append(abs(second_order_prob(sol, sub.all_eigs) / quadratic_oracle_pf(z, 5.0) - 1))
    assert errs[0] >= errs[1] >= errs[2]


def test_artifact_roundtrip(tmp_path, quad334):
    m, sol = quad334
    sub = build_subspace(m, sol, 0.1)
    path = tmp_path / "ldt.txt"
    save_artifact(path, sol, sub)
    sol2, sub2 = load_artifact(path)
    assert np.array_equal(sol2.theta_star, sol.theta_star)
    assert np.array_equal(sub2.basis, sub.basis)
    assert (sol2.I_star, sol2.lam, sub2.epsilon, sub2.n_grad_used) == (sol.I_star, sol.lam, 0.1, sub.n_grad_used)
    save_artifact(path, sol)
    assert load_artifact(path)[1] is None
