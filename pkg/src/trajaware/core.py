"""Shared domain types and the two closed-form scalar computations.

State vectors are always ordered ``[x, y, vx, vy]`` (meters, meters/second).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

DUMMY = -1
"""Sentinel super-state id for observations outside every learned region."""

LABELS = ("linear", "curve", "abnormal")


class TrajawareError(Exception):
    """Base class for errors raised by this package."""


class SingularCovarianceError(TrajawareError, np.linalg.LinAlgError):
    """An innovation covariance could not be inverted."""


class InvalidCovarianceError(TrajawareError, ValueError):
    """A covariance matrix is not symmetric positive semidefinite."""


class AgentState(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float


class Observation(NamedTuple):
    t: float
    x: float
    y: float

    @property
    def z(self) -> np.ndarray:
        return np.array([self.x, self.y])


def check_psd(cov: np.ndarray, name: str = "cov", tol: float = 1e-9) -> None:
    """Raise ``InvalidCovarianceError`` unless ``cov`` is symmetric PSD to ``tol``."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidCovarianceError(f"{name} must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidCovarianceError(f"{name} has non-finite entries")
    if np.max(np.abs(cov - cov.T), initial=0.0) > tol:
        raise InvalidCovarianceError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -tol:
        raise InvalidCovarianceError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(4)
        cov = np.array(self.cov, dtype=float).reshape(4, 4)
        if not np.all(np.isfinite(mean)):
            raise ValueError("belief mean must be finite")
        check_psd(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True, eq=False)
class NoiseParams:
    """Process noise ``q`` (4x4), measurement noise ``r`` (2x2), default step ``dt_default``."""

    q: np.ndarray = field(default_factory=lambda: np.diag([1e-4, 1e-4, 1e-2, 1e-2]))
    r: np.ndarray = field(default_factory=lambda: 0.05**2 * np.eye(2))
    dt_default: float = 0.11

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(4, 4)
        r = np.array(self.r, dtype=float).reshape(2, 2)
        check_psd(q, "q")
        check_psd(r, "r")
        if not self.dt_default > 0:
            raise ValueError("dt_default must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "dt_default", float(self.dt_default))


@dataclass(frozen=True, eq=False)
class SuperState:
    id: int
    centroid: np.ndarray
    control_u: np.ndarray
    member_count: int
    spread: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.array(self.centroid, dtype=float).reshape(4))
        object.__setattr__(self, "control_u", np.array(self.control_u, dtype=float).reshape(2))
        object.__setattr__(self, "spread", np.array(self.spread, dtype=float).reshape(4, 4))
        if self.member_count < 1:
            raise ValueError("super-state must have at least one member")


@dataclass(frozen=True, eq=False)
class TransitionTensor:
    """Dwell-time dependent transition matrices.

    ``bins`` holds the upper (exclusive) dwell boundary of each bin, the last
    one being ``inf``; a particle that has spent ``d >= 1`` steps in its
    super-state uses the first bin with ``d < bins[b]``.
    """

    bins: tuple
    matrices: np.ndarray

    def __post_init__(self):
        bins = tuple(float(b) for b in self.bins)
        mats = np.array(self.matrices, dtype=float)
        if not bins or any(b <= a for a, b in zip(bins, bins[1:])):
            raise ValueError("bins must be non-empty and strictly increasing")
        if not math.isinf(bins[-1]):
            raise ValueError("last dwell bin must be open-ended (inf)")
        if mats.ndim != 3 or mats.shape[0] != len(bins) or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"matrices shape {mats.shape} does not match {len(bins)} bins")
        if np.any(mats < 0) or np.max(np.abs(mats.sum(axis=2) - 1.0), initial=0.0) > 1e-9:
            raise ValueError("transition rows must be non-negative and sum to 1")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_states(self) -> int:
        return self.matrices.shape[1]

    def bin_index(self, dwell):
        return np.searchsorted(np.asarray(self.bins), dwell, side="right")

    def row(self, state: int, dwell: int) -> np.ndarray:
        return self.matrices[self.bin_index(dwell), state]


@dataclass(frozen=True, eq=False)
class SlModel:
    """One learned equilibrium condition.

    For model 0 (the unmotivated filter) ``psi`` holds the bootstrap trigger
    threshold in innovation-velocity units (m/s); for learned models it is the
    certainty boundary in weighted state-distance units.
    """

    id: int
    super_states: tuple
    psi: float
    trans: TransitionTensor
    alpha: float = 0.75
    beta: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "super_states", tuple(self.super_states))
        if not self.super_states:
            raise ValueError("model needs at least one super-state")
        if [s.id for s in self.super_states] != list(range(len(self.super_states))):
            raise ValueError("super-state ids must be dense 0..L-1")
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        _check_weights(self.alpha, self.beta)
        if self.trans.n_states != len(self.super_states):
            raise ValueError("transition tensor size does not match vocabulary")

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([s.centroid for s in self.super_states])

    @cached_property
    def controls(self) -> np.ndarray:
        return np.array([s.control_u for s in self.super_states])

    @property
    def n_states(self) -> int:
        return len(self.super_states)


class AbnormalitySample(NamedTuple):
    t: float
    signal: float
    model_id: int
    super_state_id: int
    is_dummy: bool
    reset: bool = False


class LabeledWindow(NamedTuple):
    start: float
    end: float
    label: str


def _check_weights(alpha: float, beta: float) -> None:
    if not (abs(alpha + beta - 1.0) <= 1e-12 and alpha > beta >= 0.0):
        raise ValueError(f"weights must satisfy alpha+beta=1, alpha>beta>=0 (got {alpha}, {beta})")


def weighted_distance(a, b, alpha: float = 0.75, beta: float = 0.25) -> float:
    """Distance between two states that favours velocity agreement.

    ``sqrt(beta*dx^2 + beta*dy^2 + alpha*dvx^2 + alpha*dvy^2)``
    """
    _check_weights(alpha, beta)
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return math.sqrt(beta * d[0] * d[0] + beta * d[1] * d[1] + alpha * d[2] * d[2] + alpha * d[3] * d[3])


def certainty_threshold(distances: Sequence[float]) -> float:
    """Mean plus three population standard deviations of ``distances``."""
    d = np.asarray(distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("certainty_threshold needs at least one distance")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and non-negative")
    return float(d.mean() + 3.0 * math.sqrt(d.var()))
