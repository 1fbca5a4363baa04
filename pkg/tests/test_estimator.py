import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import literal_step
from distsg.estimator import (
    AlgorithmParams,
    NetworkState,
    TrajectoryRecord,
    build_stacked_operators,
    diffuse_energy,
    init_network,
    matrix_form_step,
    network_step,
    run_network,
    standard_sg_network_step,
    standard_sg_step,
)
from distsg.exceptions import OracleCapacityError, ValidationError
from distsg.graph import Topology, build_metropolis, complete_graph, path_graph, random_connected_graph
from distsg.signals import GaussianStream, NoiseModel, NoiseSource, StateSpaceStream, example1_model


def test_init_defaults():
    s = init_network(1, 1)
    assert s.k == 0 and s.theta_hat.tolist() == [[0.0]] and s.r.tolist() == [1.0]
    s = init_network(28, 10)
    assert s.theta_hat.shape == (28, 10) and not s.theta_hat.any() and np.all(s.r == 1)


def test_init_custom_echoed():
    th = np.array([[1.0, -2.0], [0.5, 3.0], [7.0, 0.0]])
    s = init_network(3, 2, th)
    np.testing.assert_array_equal(s.theta_hat, th)
    np.testing.assert_array_equal(init_network(3, 2, [1.0, 2.0]).theta_hat, [[1, 2]] * 3)
    with pytest.raises(ValidationError):
        init_network(3, 2, np.zeros((2, 2)))


def test_params_validation():
    with pytest.raises(ValidationError, match=r"mu\*\(1\+4\*nu\)"):
        AlgorithmParams(0.5, 0.5, 1)
    with pytest.raises(ValidationError):
        AlgorithmParams(0.0, 0.1, 1)
    with pytest.raises(ValidationError):
        AlgorithmParams(0.1, 0.1, 0)
    p = AlgorithmParams(0.5, 0.25, 1)
    assert not p.strict
    assert AlgorithmParams(0.25, 0.7, 1).strict


def test_q_below_diameter_rejected():
    with pytest.raises(ValidationError, match="diameter"):
        AlgorithmParams(0.25, 0.7, 1).check_graph(path_graph(4))
    with pytest.raises(ValidationError, match="connected"):
        AlgorithmParams(0.25, 0.7, 1).check_graph(Topology(2))
    AlgorithmParams(0.25, 0.7, 3).check_graph(path_graph(4))


def test_diffuse_single_node_and_consensus_vectors():
    w1 = build_metropolis(Topology(1))
    np.testing.assert_array_equal(diffuse_energy(w1, [0.37], 5), [0.37])
    w = build_metropolis(path_graph(5))
    np.testing.assert_allclose(diffuse_energy(w, np.full(5, 0.42), 7), np.full(5, 0.42), rtol=1e-14)


def test_diffuse_complete3_one_round():
    w = build_metropolis(complete_graph(3))
    np.testing.assert_allclose(diffuse_energy(w, [1.0, 0.0, 0.0], 1), [1 / 3] * 3, atol=1e-15)


def test_diffuse_matches_matrix_power(small_network, rng):
    _, w = small_network
    x0 = rng.random(4)
    for Q in (1, 2, 5):
        np.testing.assert_allclose(diffuse_energy(w, x0, Q), np.linalg.matrix_power(w.a, Q) @ x0, rtol=1e-13)


def test_network_step_scalar_hand_value():
    w = build_metropolis(Topology(1))
    s = network_step(init_network(1, 1), w, AlgorithmParams(0.25, 0.1, 1), [[1.0]], [1.0])
    assert s.r[0] == 2.0
    assert s.theta_hat[0, 0] == pytest.approx(0.125, abs=1e-15)
    assert s.k == 1


def test_identical_estimates_reduce_to_local_sg(small_network, rng):
    _, w = small_network
    params = AlgorithmParams(0.2, 0.6, 3)
    state = init_network(4, 3, rng.standard_normal(3))
    phi = rng.standard_normal((4, 3))
    y = rng.standard_normal(4)
    coop = network_step(state, w, params, phi, y)
    local = standard_sg_network_step(state, params.mu, phi, y)
    np.testing.assert_allclose(coop.theta_hat, local.theta_hat, rtol=1e-14, atol=1e-15)


def test_zero_regressors_leave_estimates(small_network, rng):
    _, w = small_network
    state = init_network(4, 2, rng.standard_normal((4, 2)))
    out = network_step(state, w, AlgorithmParams(0.2, 0.6, 3), np.zeros((4, 2)), rng.standard_normal(4))
    np.testing.assert_array_equal(out.theta_hat, state.theta_hat)
    assert not out.x.any()


def test_network_step_matches_literal_transcription(rng):
    for _ in range(30):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        topo = random_connected_graph(n, rng, 0.3)
        w = build_metropolis(topo)
        params = AlgorithmParams(0.2, 0.9, max(1, n - 1))
        state = NetworkState(3, rng.standard_normal((n, m)), 1 + rng.random(n) * 5, np.zeros(n))
        phi = rng.standard_normal((n, m))
        y = rng.standard_normal(n)
        got = network_step(state, w, params, phi, y)
        th, r, x = literal_step(state.theta_hat, state.r, w.a, phi, y, params.mu, params.nu, params.Q)
        np.testing.assert_allclose(got.theta_hat, th, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(got.r, r, rtol=1e-15)
        np.testing.assert_allclose(got.x, x, rtol=1e-12, atol=1e-15)


def test_network_step_does_not_mutate(small_network, rng):
    _, w = small_network
    state = init_network(4, 2, rng.standard_normal((4, 2)))
    before = state.theta_hat.copy()
    network_step(state, w, AlgorithmParams(0.2, 0.6, 3), rng.standard_normal((4, 2)), rng.standard_normal(4))
    np.testing.assert_array_equal(state.theta_hat, before)


def test_network_step_rejects_non_finite(small_network):
    _, w = small_network
    phi = np.ones((4, 2))
    phi[0, 0] = np.nan
    with pytest.raises(ValidationError):
        network_step(init_network(4, 2), w, AlgorithmParams(0.2, 0.6, 3), phi, np.zeros(4))


def test_standard_sg_examples():
    th, r = standard_sg_step(np.array([0.3, -1.0]), 4.0, np.zeros(2), 5.0, 0.25)
    np.testing.assert_array_equal(th, [0.3, -1.0])
    assert r == 4.0
    th, r = standard_sg_step(np.array([0.0]), 1.0, np.array([1.0]), 1.0, 0.25)
    assert r == 2.0 and th[0] == pytest.approx(0.125, abs=1e-15)
    th, r = standard_sg_step(np.array([2.0]), 1.0, np.array([3.0]), 1.0, 0.0)
    assert th[0] == 2.0 and r == 10.0
    with pytest.raises(ValidationError):
        standard_sg_step(np.zeros(1), 0.5, np.ones(1), 1.0, 0.1)
    with pytest.raises(ValidationError):
        standard_sg_step(np.zeros(1), 1.0, np.ones(1), np.inf, 0.1)


@settings(max_examples=200, deadline=None)
@given(
    nu=st.floats(0.0, 0.99),
    mu_frac=st.floats(0.01, 1.0),
    m=st.integers(1, 4),
    seed=st.integers(0, 2**31),
)
def test_single_sensor_reduces_to_standard_sg(nu, mu_frac, m, seed):
    mu = min(mu_frac / (1 + 4 * nu), 0.999)
    rng = np.random.default_rng(seed)
    w = build_metropolis(Topology(1))
    params = AlgorithmParams(mu, nu, 1)
    state = init_network(1, m, rng.standard_normal(m))
    th, r = state.theta_hat[0].copy(), 1.0
    for _ in range(20):
        phi = rng.standard_normal(m) * 10 ** rng.uniform(-2, 2)
        y = float(rng.standard_normal())
        state = network_step(state, w, params, phi[None], [y])
        th, r = standard_sg_step(th, r, phi, y, mu)
        assert np.max(np.abs(state.theta_hat[0] - th)) <= 1e-14 * max(1.0, np.max(np.abs(th)))
        assert state.r[0] == pytest.approx(r, rel=1e-14)


def test_stacked_operator_special_cases(small_network, rng):
    _, w = small_network
    phi = rng.standard_normal((4, 2))
    r = 1 + np.einsum("ij,ij->i", phi, phi) + rng.random(4)
    ops = build_stacked_operators(w, AlgorithmParams(0.2, 0.0, 3), phi, r)
    np.testing.assert_array_equal(ops.G, ops.A)
    w1 = build_metropolis(Topology(1))
    p1 = np.array([[1.0, 2.0]])
    ops1 = build_stacked_operators(w1, AlgorithmParams(0.2, 0.5, 1), p1, np.array([6.0]))
    assert not ops1.lap.any()
    np.testing.assert_allclose(ops1.G, np.outer(p1[0], p1[0]) / 6.0, rtol=1e-15)


def test_stacked_operators_psd_and_bounded(rng):
    for _ in range(100):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        w = build_metropolis(random_connected_graph(n, rng, 0.3))
        phi = rng.standard_normal((n, m)) * 10 ** rng.uniform(-2, 2, (n, 1))
        r = 1 + np.einsum("ij,ij->i", phi, phi) * (1 + rng.random(n))
        ops = build_stacked_operators(w, AlgorithmParams(0.1, 0.8, n), phi, r)
        for M in (ops.A, ops.G):
            assert np.max(np.abs(M - M.T)) < 1e-12
            assert np.linalg.eigvalsh(M)[0] > -1e-10
        assert np.linalg.norm(np.kron(ops.X, np.eye(m)), 2) <= np.linalg.norm(ops.A, 2) + 1e-12


def test_oracle_cap():
    w = build_metropolis(complete_graph(21))
    with pytest.raises(OracleCapacityError):
        build_stacked_operators(w, AlgorithmParams(0.2, 0.5, 1), np.ones((21, 20)), np.full(21, 30.0))


def test_matrix_form_fixed_point_and_scalar():
    w1 = build_metropolis(Topology(1))
    params = AlgorithmParams(0.25, 0.1, 1)
    ops = build_stacked_operators(w1, params, np.array([[1.0]]), np.array([2.0]))
    assert matrix_form_step(np.zeros(1), ops, params, np.zeros(1)).tolist() == [0.0]
    err = matrix_form_step(np.array([1.0]), ops, params, np.zeros(1))
    assert err[0] == pytest.approx(0.875, abs=1e-15)  # theta_hat_1 = 1 - 0.875
    with pytest.raises(ValidationError):
        matrix_form_step(np.zeros(2), ops, params, np.zeros(1))


def test_matrix_form_tracks_per_node_path(rng):
    # short version of the acceptance sweep
    for _ in range(10):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        topo = random_connected_graph(n, rng, 0.3)
        w = build_metropolis(topo)
        params = AlgorithmParams(0.2, 0.7, max(1, n - 1))
        theta = rng.standard_normal(m)
        state = init_network(n, m)
        err = np.tile(theta, n)
        r = np.ones(n)
        for _ in range(100):
            phi = rng.standard_normal((n, m))
            eps = rng.standard_normal(n)
            state = network_step(state, w, params, phi, phi @ theta + eps)
            r = r + (phi**2).sum(axis=1)
            err = matrix_form_step(err, build_stacked_operators(w, params, phi, r), params, eps)
        per_node = (theta[None] - state.theta_hat).reshape(-1)
        assert np.linalg.norm(per_node - err) <= 1e-10 * np.linalg.norm(err)


def test_r_monotone_and_energy_fraction_bounded(rng):
    topo = random_connected_graph(5, rng, 0.3)
    w = build_metropolis(topo)
    traj = run_network(w, AlgorithmParams(0.2, 0.7, 4), StateSpaceStream(example1_model(5, 3), seed=3),
                       NoiseSource(NoiseModel(), 5, seed=3), np.arange(1.0, 4.0), 200)
    assert np.all(np.diff(traj.r, axis=0) >= 0) and np.all(traj.r >= 1)
    x0 = np.einsum("kij,kij->ki", traj.phi, traj.phi) / traj.r
    assert np.all(x0 <= 1) and np.all(traj.xq <= 1)


def test_trajectory_csv_roundtrip(tmp_path, rng):
    w = build_metropolis(path_graph(3))
    traj = run_network(w, AlgorithmParams(0.2, 0.7, 2), GaussianStream(3, 2, seed=1),
                       NoiseSource(NoiseModel(), 3, seed=1), [1.0, -1.0], 25,
                       theta_hat_0=rng.standard_normal((3, 2)), meta={"seed": 1})
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    header = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")][0]
    assert header == "k,i,phi_1,phi_2,y,eps,r,xQ,theta_hat_1,theta_hat_2"
    back = TrajectoryRecord.from_csv(path)
    for name in ("phi", "y", "eps", "r", "xq", "theta_hat", "theta_hat_0"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    assert back.meta["seed"] == "1"


def test_trajectory_csv_rejects_gaps(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("k,i,phi_1,y,eps,r,xQ,theta_hat_1\n1,1,0,0,0,1,0,0\n3,1,0,0,0,1,0,0\n")
    with pytest.raises(ValidationError):
        TrajectoryRecord.from_csv(p)
