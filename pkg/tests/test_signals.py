import numpy as np
import pytest

from distsg.exceptions import HorizonOverflowError, ValidationError
from distsg.signals import (
    ConstantStream,
    GaussianStream,
    NoiseModel,
    NoiseSource,
    ScriptedStateSpaceStream,
    StateSpaceRegressorModel,
    StateSpaceStream,
    direction_index,
    example1_model,
    sample_noise,
    state_space_growth_bound,
    step_regressors,
)


def test_direction_assignment_example1():
    models = example1_model(28, 10, 1.2, 0.3)
    dirs = [int(np.flatnonzero(mod.B)[0]) + 1 for mod in models]
    assert dirs[:10] == list(range(1, 11))
    assert dirs[10:20] == list(range(1, 11))
    assert dirs[20:] == list(range(1, 9))
    assert [direction_index(i, 10) for i in (10, 20, 28)] == [10, 10, 8]
    for mod, j in zip(models, dirs):
        np.testing.assert_array_equal(mod.A, 1.2 * np.eye(10))
        e = np.eye(10)[j - 1]
        np.testing.assert_array_equal(mod.C, np.outer(e, e))
        assert mod.xi_std == 0.3


def test_scalar_white_regressor():
    # growth 0 removes memory: phi_k = xi_k
    xi = np.array([[0.7], [-1.1], [2.5]])
    stream = ScriptedStateSpaceStream(example1_model(1, 1, growth=0.0, xi_std=1.0), xi)
    out = [stream.step(k)[0, 0] for k in (1, 2, 3)]
    np.testing.assert_array_equal(out, xi[:, 0])


def test_zero_excitation_stays_zero():
    stream = StateSpaceStream(example1_model(2, 2, 1.2, 0.0), seed=4)
    for k in range(1, 50):
        assert not np.any(stream.step(k))


def test_hand_recursion_two_steps():
    models = example1_model(1, 3, 1.2, 1.0)
    stream = ScriptedStateSpaceStream(models, np.array([[1.0], [0.0]]))
    np.testing.assert_array_equal(stream.step(1)[0], [1.0, 0, 0])
    np.testing.assert_allclose(stream.step(2)[0], [1.2, 0, 0], rtol=0, atol=1e-15)


def test_steps_must_be_contiguous():
    stream = ConstantStream(np.ones((2, 2)))
    step_regressors(stream, 1)
    with pytest.raises(ValidationError):
        step_regressors(stream, 3)
    with pytest.raises(ValidationError):
        step_regressors(stream, 1)


def test_overflow_is_explicit():
    mod = StateSpaceRegressorModel(np.array([[1e40]]), np.array([1.0]), np.array([[1.0]]), 1.0)
    stream = ScriptedStateSpaceStream([mod], np.ones((10, 1)))
    with pytest.raises(HorizonOverflowError) as info:
        for k in range(1, 11):
            stream.step(k)
    assert info.value.sensor == 1 and info.value.step == 5


def test_growth_bound_tracks_horizon():
    models = example1_model(28, 10, 1.2, 0.3)
    assert state_space_growth_bound(models, 600) < 150
    assert state_space_growth_bound(models, 2000) > 150
    assert state_space_growth_bound(example1_model(2, 2, 1.2, 0.0), 5000) == -np.inf


def test_state_space_shape_validation():
    with pytest.raises(ValidationError):
        StateSpaceRegressorModel(np.eye(2), np.ones(3), np.eye(2), 0.1)
    with pytest.raises(ValidationError):
        StateSpaceRegressorModel(np.eye(2), np.ones(2), np.eye(2), -1.0)


def test_determinism_and_seed_sensitivity():
    def draw(seed):
        reg = StateSpaceStream(example1_model(5, 3), seed=seed)
        noise = NoiseSource(NoiseModel("gaussian_iid", 1.2), 5, seed=seed)
        return np.array([reg.step(k) for k in range(1, 301)]), np.array([noise.sample(k) for k in range(1, 301)])

    a_phi, a_eps = draw(12)
    b_phi, b_eps = draw(12)
    assert a_phi.tobytes() == b_phi.tobytes() and a_eps.tobytes() == b_eps.tobytes()
    c_phi, _ = draw(13)
    assert not np.array_equal(a_phi, c_phi)


def test_noise_independent_of_regressor_stream():
    # the noise sequence does not depend on whether regressors were drawn
    n1 = NoiseSource(NoiseModel("gaussian_iid", 1.0), 3, seed=9)
    reg = GaussianStream(3, 2, seed=9)
    seq1 = []
    for k in range(1, 100):
        reg.step(k)
        seq1.append(n1.sample(k))
    n2 = NoiseSource(NoiseModel("gaussian_iid", 1.0), 3, seed=9)
    seq2 = [n2.sample(k) for k in range(1, 100)]
    np.testing.assert_array_equal(seq1, seq2)
    xi = StateSpaceStream(example1_model(3, 1, growth=0.0, xi_std=1.0), seed=9)
    xs = np.array([xi.step(k)[:, 0] for k in range(1, 100)])
    assert abs(np.corrcoef(xs.ravel(), np.array(seq2).ravel())[0, 1]) < 0.3


@pytest.mark.parametrize("model", [NoiseModel("zero", 1.0), NoiseModel("gaussian_iid", 0.0)])
def test_zero_noise(model):
    src = NoiseSource(model, 4, seed=1)
    for k in range(1, 20):
        assert not np.any(sample_noise(src, k))


def test_gaussian_noise_statistics():
    src = NoiseSource(NoiseModel("gaussian_iid", 1.2), 1, seed=2021)
    x = np.array([src.sample(k)[0] for k in range(1, 100_001)])
    assert abs(x.mean()) < 0.02
    assert abs(x.std() - 1.2) < 0.02


def test_noise_model_validation():
    with pytest.raises(ValidationError):
        NoiseModel("laplace", 1.0)
    with pytest.raises(ValidationError):
        NoiseModel("gaussian_iid", -1.0)
    with pytest.raises(ValidationError):
        NoiseModel("gaussian_iid", 1.0, epsilon_exponent=1.0)


def test_example1_single_direction_rank():
    n, m, K = 28, 10, 50
    stream = StateSpaceStream(example1_model(n, m), seed=5)
    phis = np.array([stream.step(k) for k in range(1, K + 1)])
    grams = np.einsum("kni,knj->nij", phis, phis)
    for i in range(n):
        assert np.linalg.matrix_rank(grams[i]) <= 1
    # sensors 1..10 cover every direction
    assert np.linalg.matrix_rank(grams[:m].sum(axis=0)) == m


def test_draw_accounting():
    reg = GaussianStream(4, 3, seed=0)
    noise = NoiseSource(NoiseModel(), 4, seed=0)
    for k in range(1, 11):
        reg.step(k)
        noise.sample(k)
    assert reg.draws == 40 and noise.draws == 40
