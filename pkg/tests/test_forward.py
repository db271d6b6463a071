import numpy as np
import pytest

from conftest import crandn, make_tables
from nfimaging.errors import CalibrationError, DimensionError, ParameterError
from nfimaging.forward import (
    ObservationSet,
    SensingSet,
    build_sensing,
    calibrate_noise_power,
    coefficient_vectors,
    sensing_matrix,
    synthesize_observations,
)
from nfimaging.illum import uniform_plan
from nfimaging.plan import IlluminationPlan
from nfimaging.scene import GroundTruthScene, ar1_correlation, generate_scene


def _scene(tables, seed=0, psi=0.9):
    q = tables.n_cells
    mask = np.zeros(q, bool)
    mask[[0, 3, 5]] = True
    return generate_scene(mask, np.where(mask, 1.0, 0.0), psi, seed, tables.n_subcarriers)


def test_sensing_matrix_zero_and_linearity(toy_tables, rng):
    mt = toy_tables.b_matrix.shape[1]
    assert not np.any(sensing_matrix(toy_tables, np.zeros(mt)))
    x = crandn(rng, mt)
    np.testing.assert_allclose(sensing_matrix(toy_tables, (2 - 1j) * x),
                               (2 - 1j) * sensing_matrix(toy_tables, x), rtol=1e-13)
    with pytest.raises(DimensionError):
        sensing_matrix(toy_tables, np.ones(mt + 1))


def test_sensing_matrix_single_cell_oracle(rng):
    tab = make_tables(m_tx=4, m_rx=3, cells=1, n_sub=1)
    x = crandn(rng, 4)
    phi = sensing_matrix(tab, x)
    b1 = tab.b_matrix[0].conj()
    expected = tab.eta[0] * np.vdot(b1, x) * tab.a_matrix[:, 0]
    np.testing.assert_allclose(phi[:, 0], expected, rtol=1e-13)
    assert np.linalg.matrix_rank(phi) == 1


def test_sensing_columns_match_definition(toy_tables, rng):
    x = crandn(rng, toy_tables.b_matrix.shape[1])
    phi = sensing_matrix(toy_tables, x)
    for q in range(toy_tables.n_cells):
        gain = toy_tables.eta[q] * (toy_tables.b_matrix[q] @ x)
        np.testing.assert_allclose(phi[:, q], gain * toy_tables.a_matrix[:, q], rtol=1e-12)


def test_coefficient_vectors(rng):
    tab = make_tables(m_tx=2, m_rx=2, cells=3, n_sub=3)
    sc = _scene(tab)
    u = coefficient_vectors(sc, tab)
    np.testing.assert_array_equal(u[:, 0], sc.coeffs[:, 0])
    np.testing.assert_allclose(np.abs(u), np.abs(sc.coeffs), rtol=1e-14)
    for i in range(tab.n_cells):
        assert abs(u[i, 1] - sc.coeffs[i, 1] * tab.delay_phases[i, 1]) < 1e-15


def test_calibration_examples(toy_tables):
    sc = _scene(toy_tables)
    ref = uniform_plan(toy_tables, 0.5)
    y0 = build_sensing(toy_tables, ref).apply(coefficient_vectors(sc, toy_tables))
    mean_power = np.sum(np.abs(y0) ** 2) / y0.size
    assert calibrate_noise_power(toy_tables, sc, ref, 0.0) == pytest.approx(mean_power, rel=1e-14)
    hand = np.linalg.norm(y0) ** 2 / (toy_tables.n_subcarriers * y0.shape[0] * 10 ** 1.7)
    assert calibrate_noise_power(toy_tables, sc, ref, 17.0) == pytest.approx(hand, rel=1e-12)
    r = calibrate_noise_power(toy_tables, sc, ref, 5.0) / calibrate_noise_power(toy_tables, sc, ref, 15.0)
    assert r == pytest.approx(10.0, rel=1e-12)
    empty = GroundTruthScene(np.zeros_like(sc.coeffs), np.zeros(toy_tables.n_cells, bool),
                             np.zeros(toy_tables.n_cells), sc.psi)
    with pytest.raises(CalibrationError):
        calibrate_noise_power(toy_tables, empty, ref, 10.0)
    with pytest.raises(ParameterError):
        calibrate_noise_power(toy_tables, sc, ref, np.inf)


def test_noiseless_and_deterministic(toy_tables):
    sc = _scene(toy_tables)
    sens = build_sensing(toy_tables, uniform_plan(toy_tables, 1.0))
    u = coefficient_vectors(sc, toy_tables)
    clean = synthesize_observations(sens, u, 0.0, seed=3)
    expected = np.stack([sens.phi[n] @ u[:, n] for n in range(2)], axis=1)
    np.testing.assert_allclose(clean.y, expected, rtol=1e-13)
    a = synthesize_observations(sens, u, 1e-3, seed=3)
    b = synthesize_observations(sens, u, 1e-3, seed=3)
    assert a.y.tobytes() == b.y.tobytes()
    with pytest.raises(ParameterError):
        synthesize_observations(sens, u, -1.0, seed=0)


def test_noise_variance_monte_carlo():
    phi = np.zeros((4, 250, 1), complex)
    sens = SensingSet(phi)
    n0 = 2.5e-3
    draws = [synthesize_observations(sens, np.zeros((1, 4)), n0, seed=s).y for s in range(100)]
    noise = np.concatenate([d.ravel() for d in draws])
    assert noise.size == 100_000
    assert abs(np.mean(np.abs(noise) ** 2) / n0 - 1) < 0.02
    assert abs(np.mean(noise.real**2) / (n0 / 2) - 1) < 0.02
    assert abs(np.mean(noise)) < 0.02 * np.sqrt(n0)


def test_noiseless_linearity_in_scene(toy_tables):
    sc = _scene(toy_tables)
    sens = build_sensing(toy_tables, uniform_plan(toy_tables, 1.0))
    u = coefficient_vectors(sc, toy_tables)
    y1 = synthesize_observations(sens, u, 0.0, seed=0).y
    y2 = synthesize_observations(sens, (0.3 + 2j) * u, 0.0, seed=0).y
    np.testing.assert_allclose(y2, (0.3 + 2j) * y1, rtol=1e-13)


def test_stacked_operator_matches_materialized_kronecker(rng):
    tab = make_tables(m_tx=3, m_rx=3, cells=2, n_sub=3)
    n = 3
    x = crandn(rng, n, 3)
    plan = IlluminationPlan(x, 1.0, "tcm")
    sens = build_sensing(tab, plan)
    u = crandn(rng, tab.n_cells, n)
    noise = crandn(rng, 3, n)
    y = sens.apply(u) + noise
    # vec(Y^T) = sum_n (Phi_n kron E_nn) vec(U^T) + vec(N^T)
    big = sum(np.kron(sens.phi[k], np.outer(np.eye(n)[k], np.eye(n)[k])) for k in range(n))
    lhs = y.ravel()  # row-major of Y == vec(Y^T)
    rhs = big @ u.ravel() + noise.ravel()
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs) < 1e-12


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_observation_round_trip(tmp_path, rng, suffix):
    obs = ObservationSet(crandn(rng, 5, 3), 1.25e-7, 30.0, 4)
    path = tmp_path / f"obs{suffix}"
    obs.save(path)
    back = ObservationSet.load(path)
    np.testing.assert_array_equal(back.y, obs.y)
    assert back.noise_power == obs.noise_power and back.snr_db == 30.0 and back.seed == 4


def test_plan_round_trip(tmp_path, rng):
    plan = IlluminationPlan(crandn(rng, 2, 5), 0.25, "ipm", ((1, 2, 3), (0,)))
    plan.save(tmp_path / "p.txt")
    back = IlluminationPlan.load(tmp_path / "p.txt")
    np.testing.assert_array_equal(back.vectors, plan.vectors)
    assert back.focus_cells == plan.focus_cells and back.mode == "ipm"
    assert back.per_subcarrier_power == 0.25


def test_build_sensing_checks_subcarriers(toy_tables):
    plan = IlluminationPlan(np.ones((3, 6)), 1.0, "uniform")
    with pytest.raises(DimensionError):
        build_sensing(toy_tables, plan)
    psi = ar1_correlation(3, 0.1)
    bad = GroundTruthScene(np.zeros((9, 3), complex), np.zeros(9, bool), np.zeros(9), psi)
    with pytest.raises(DimensionError):
        coefficient_vectors(bad, toy_tables)
