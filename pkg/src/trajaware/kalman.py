"""Continuous-level dynamics: unmotivated / motivated / random filters.

Dynamics ``X' = A X + B U + w`` with ``A = [[I, 0], [0, 0]]`` and
``B = [I*dt, I]^T``: position advances by ``U*dt`` and velocity is replaced
by the control ``U``. Observations are positions, ``H = [I 0]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import GaussianBelief, NoiseParams, Observation, SingularCovarianceError, check_psd

H = np.hstack([np.eye(2), np.zeros((2, 2))])

UNMOTIVATED = "unmotivated"
MOTIVATED = "motivated"
RANDOM = "random"


@dataclass(frozen=True, eq=False)
class MotionModel:
    kind: str
    control_u: np.ndarray
    dt: float

    def __post_init__(self):
        if self.kind not in (UNMOTIVATED, MOTIVATED, RANDOM):
            raise ValueError(f"unknown motion model kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        u = np.zeros(2) if self.kind != MOTIVATED else np.array(self.control_u, dtype=float).reshape(2)
        object.__setattr__(self, "control_u", u)

    @classmethod
    def unmotivated(cls, dt):
        return cls(UNMOTIVATED, np.zeros(2), dt)

    @classmethod
    def motivated(cls, control_u, dt):
        return cls(MOTIVATED, control_u, dt)

    @classmethod
    def random_filter(cls, dt):
        return cls(RANDOM, np.zeros(2), dt)


def _raise_singular(det):
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        raise SingularCovarianceError(f"innovation covariance is singular (det={det[bad[0]]!r})")


def predict_batch(means, covs, controls, dt, noise: NoiseParams):
    return K.kf_predict(means, covs, controls, float(dt), noise.q)


def update_batch(means, covs, z, noise: NoiseParams):
    """Batched update; returns ``(means, covs, innov, s, det, maha2)``."""
    out = K.kf_update(means, covs, z, noise.r)
    _raise_singular(out[4])
    return out


def predict(belief: GaussianBelief, model: MotionModel, noise: NoiseParams) -> GaussianBelief:
    check_psd(belief.cov, "belief.cov")
    m, c = predict_batch(belief.mean[None], belief.cov[None], model.control_u[None], model.dt, noise)
    return GaussianBelief(m[0], c[0])


def update(belief: GaussianBelief, z, noise: NoiseParams):
    """Kalman update with a position measurement.

    Returns the posterior belief, the innovation ``z - H mean`` and the
    innovation covariance ``H P H^T + R``.
    """
    if isinstance(z, Observation):
        z = z.z
    m, c, innov, s, _, _ = update_batch(belief.mean[None], belief.cov[None], np.asarray(z, dtype=float), noise)
    S = np.array([[s[0, 0], s[0, 1]], [s[0, 1], s[0, 2]]])
    return GaussianBelief(m[0], c[0]), innov[0], S


def innovation_velocity(z, predicted: GaussianBelief, dt: float) -> np.ndarray:
    """Positional innovation divided by the sampling step (m/s)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(z, Observation):
        z = z.z
    mean = predicted.mean if isinstance(predicted, GaussianBelief) else np.asarray(predicted, dtype=float)
    return (np.asarray(z, dtype=float) - mean[:2]) / dt


def mahalanobis_norm(innovation, innovation_cov) -> float:
    e0, e1 = float(innovation[0]), float(innovation[1])
    S = np.asarray(innovation_cov, dtype=float)
    s00, s01, s11 = float(S[0, 0]), float(S[0, 1]), float(S[1, 1])
    det = s00 * s11 - s01 * s01
    if not det > 0 or not s00 > 0:
        raise SingularCovarianceError("innovation covariance is not positive definite")
    # same operation order as the batched kernel, so results match bitwise
    i00 = s11 / det
    i01 = -s01 / det
    i11 = s00 / det
    return math.sqrt(e0 * (i00 * e0 + i01 * e1) + e1 * (i01 * e0 + i11 * e1))


def euclidean_norm(innovation, innovation_cov=None) -> float:
    return math.hypot(float(innovation[0]), float(innovation[1]))


SIGNAL_NORMS = {"mahalanobis": mahalanobis_norm, "euclidean": euclidean_norm}


def step_dt(t_prev: float, t: float, dt_default: float) -> float:
    """Sampling step from timestamps; irregular spacing (beyond +-20%) falls back to the default."""
    dt = t - t_prev
    if not abs(dt - dt_default) <= 0.2 * dt_default:
        return dt_default
    return dt
