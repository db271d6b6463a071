import numpy as np
import pytest

from conftest import crandn, random_hpd
from nfimaging.sdp import ConicProblem, SdpError, solve_conic


def _min_eig_problem(cmat):
    d = cmat.shape[0]
    return ConicProblem(np.zeros((0, d)), np.zeros(0), np.eye(d)[None], np.zeros((1, 0)),
                        np.array([1.0]), cmat, np.zeros(0))


@pytest.mark.parametrize("method", ["ipm", "admm"])
def test_unit_trace_minimum_is_smallest_eigenvalue(rng, method):
    cmat = random_hpd(rng, 5, 30.0) - 3.0 * np.eye(5)
    sol = solve_conic(_min_eig_problem(cmat), method=method)
    assert sol.primal_obj == pytest.approx(np.linalg.eigvalsh(cmat)[0], abs=1e-5)
    assert np.real(np.trace(sol.x_mat)) == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.eigvalsh(sol.x_mat)[0] > -1e-6


def test_rank_one_rows_match_dense_rows(rng):
    d = 4
    g = crandn(rng, 3, d)
    w = rng.uniform(0.5, 2.0, 3)
    X = random_hpd(rng, d)
    prob = ConicProblem(g, w, np.eye(d)[None], np.zeros((4, 1)), np.zeros(4),
                        np.zeros((d, d)), np.zeros(1))
    direct = [w[i] * np.real(np.vdot(g[i], X @ g[i])) for i in range(3)] + [np.trace(X).real]
    np.testing.assert_allclose(prob.apply(X), direct, rtol=1e-12)
    y = rng.standard_normal(4)
    # adjoint identity <A(X), y> = <X, A*(y)>
    lhs = prob.apply(X) @ y
    rhs = np.real(np.vdot(prob.adjoint(y), X))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_ipm_and_admm_agree_on_random_maxmin(rng):
    d, m = 4, 5
    g = crandn(rng, m, d)
    w = rng.uniform(0.5, 1.5, m)
    lin = np.zeros((m + 1, m + 2))
    lin[:m, 0] = -1.0
    lin[np.arange(m), 1 + np.arange(m)] = -1.0
    lin[m, m + 1] = 1.0
    cost = np.zeros(m + 2)
    cost[0] = -1.0
    prob = ConicProblem(g, w, np.eye(d)[None], lin, np.r_[np.zeros(m), 1.0],
                        np.zeros((d, d)), cost)
    a = solve_conic(prob, "ipm")
    b = solve_conic(prob, "admm", tol=1e-8)
    assert a.converged and b.converged
    assert a.primal_obj == pytest.approx(b.primal_obj, abs=1e-5)
    assert a.primal_obj == pytest.approx(a.dual_obj, abs=1e-7)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_infeasible_problem_raises():
    # tr X = -1 with X PSD has no solution
    prob = _min_eig_problem(np.eye(2))
    prob.rhs = np.array([-1.0])
    with pytest.raises(SdpError):
        solve_conic(prob, "ipm")


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_conic(_min_eig_problem(np.eye(2)), method="simplex")
