import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chi2

from trajaware.core import GaussianBelief, NoiseParams, SingularCovarianceError
from trajaware.kalman import (
    H,
    MotionModel,
    euclidean_norm,
    innovation_velocity,
    mahalanobis_norm,
    predict,
    step_dt,
    update,
)

ZERO_Q = NoiseParams(q=np.zeros((4, 4)))


def test_predict_examples():
    b = predict(GaussianBelief([0, 0, 5, 5], np.zeros((4, 4))), MotionModel.unmotivated(0.1), ZERO_Q)
    assert np.array_equal(b.mean, [0, 0, 0, 0])
    b = predict(GaussianBelief(np.zeros(4), np.zeros((4, 4))), MotionModel.motivated((1, 0), 0.5), ZERO_Q)
    assert np.allclose(b.mean, [0.5, 0, 1, 0], atol=1e-12)
    b = predict(GaussianBelief(np.zeros(4), np.eye(4)), MotionModel.unmotivated(0.1), NoiseParams(q=np.eye(4)))
    assert np.allclose(b.cov, np.diag([2.0, 2.0, 1.0, 1.0]), atol=1e-12)


def test_random_filter_behaves_like_unmotivated():
    prior = GaussianBelief([1, 2, 3, 4], np.eye(4))
    a = predict(prior, MotionModel.random_filter(0.2), NoiseParams())
    b = predict(prior, MotionModel.unmotivated(0.2), NoiseParams())
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov)


def test_update_examples():
    prior = GaussianBelief([1, 2, 0, 0], np.eye(4))
    post, innov, S = update(prior, (3.0, -1.0), NoiseParams(r=1e-12 * np.eye(2)))
    assert np.allclose(post.mean[:2], [3, -1], atol=1e-9)
    assert np.allclose(innov, [2, -3]) and np.allclose(S, np.eye(2) + 1e-12 * np.eye(2))
    # scalar oracle: prior var 1, measurement var 1 -> posterior 0.5 / 0.5
    post, _, _ = update(GaussianBelief(np.zeros(4), np.eye(4)), (1.0, 1.0), NoiseParams(r=np.eye(2)))
    assert post.mean[0] == pytest.approx(0.5, abs=1e-12)
    assert post.cov[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_update_singular_innovation_covariance():
    prior = GaussianBelief(np.zeros(4), np.zeros((4, 4)))
    with pytest.raises(SingularCovarianceError):
        update(prior, (0.0, 0.0), NoiseParams(r=np.zeros((2, 2))))


def test_innovation_velocity_examples():
    b = GaussianBelief([1.0, 0.0, 0, 0], np.eye(4))
    assert np.array_equal(innovation_velocity((1.0, 0.0), b, 0.3), [0, 0])
    assert np.allclose(innovation_velocity((2.0, 0.0), b, 0.5), [2, 0], atol=1e-12)
    b0 = GaussianBelief(np.zeros(4), np.eye(4))
    assert np.allclose(innovation_velocity((0.0, 1.0), b0, 0.1), [0, 10], atol=1e-9)
    with pytest.raises(ValueError):
        innovation_velocity((0.0, 1.0), b0, 0.0)


def test_norm_examples():
    assert mahalanobis_norm((0, 0), np.eye(2)) == 0.0
    assert mahalanobis_norm((1, 0), np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    assert mahalanobis_norm((2, 0), np.diag([4.0, 1.0])) == pytest.approx(1.0, abs=1e-12)
    assert euclidean_norm((3, 4)) == 5.0
    with pytest.raises(SingularCovarianceError):
        mahalanobis_norm((1, 0), np.zeros((2, 2)))


def test_step_dt_fallback():
    assert step_dt(0.0, 0.11, 0.11) == 0.11
    assert step_dt(0.0, 0.12, 0.11) == 0.12
    assert step_dt(0.0, 0.5, 0.11) == 0.11


def _psd(n):
    return arrays(np.float64, (n, n), elements=st.floats(-2, 2)).map(lambda a: a @ a.T)


@settings(max_examples=200, deadline=None)
@given(_psd(4), _psd(2), arrays(np.float64, 2, elements=st.floats(-5, 5)))
def test_update_never_increases_trace(P, R, z):
    R = R + 1e-6 * np.eye(2)
    prior = GaussianBelief(np.zeros(4), P)
    post, _, _ = update(prior, z, NoiseParams(r=R))
    assert np.trace(post.cov) <= np.trace(prior.cov) + 1e-9


def test_noiseless_reproduction():
    noise = NoiseParams(q=np.zeros((4, 4)), r=1e-12 * np.eye(2))
    truth = np.array([3.0, -1.0, 0.0, 0.0])
    belief = GaussianBelief(truth, np.eye(4))
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = rng.uniform(-2, 2, 2)
        dt = rng.uniform(0.05, 0.2)
        truth = np.concatenate([truth[:2] + u * dt, u])
        belief = predict(belief, MotionModel.motivated(u, dt), noise)
        belief, innov, _ = update(belief, H @ truth, noise)
        assert np.allclose(belief.mean, truth, atol=1e-9, rtol=0)


def simulate_consistency(n_steps=10_000, seed=0):
    """Simulate the linear model exactly and filter it; returns NIS and innovations."""
    rng = np.random.default_rng(seed)
    noise = NoiseParams(q=np.diag([4e-4, 4e-4, 1e-2, 1e-2]), r=0.05**2 * np.eye(2))
    dt, u = 0.11, np.array([1.0, 0.5])
    model = MotionModel.motivated(u, dt)
    x = np.zeros(4)
    belief = GaussianBelief(x, np.diag([1e-2, 1e-2, 0, 0]))
    x = x + rng.multivariate_normal(np.zeros(4), belief.cov)
    nis, innovs = np.empty(n_steps), np.empty((n_steps, 2))
    for k in range(n_steps):
        x = np.concatenate([x[:2] + u * dt, u]) + rng.multivariate_normal(np.zeros(4), noise.q)
        z = H @ x + rng.multivariate_normal(np.zeros(2), noise.r)
        belief = predict(belief, model, noise)
        belief, innov, S = update(belief, z, noise)
        nis[k] = innov @ np.linalg.solve(S, innov)
        innovs[k] = innov
    return nis, innovs


def test_filter_consistency():
    nis, innovs = simulate_consistency()
    lo, hi = chi2.ppf([0.025, 0.975], 2)
    inside = np.mean((nis >= lo) & (nis <= hi))
    assert inside >= 0.90
    n = len(innovs)
    assert np.all(np.abs(innovs.mean(axis=0)) <= 3 * innovs.std(axis=0) / np.sqrt(n))
