"""Self-organizing map over 4-D states under the velocity-weighted distance,
and conversion of trained neurons into a super-state vocabulary."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import SuperState, _check_weights, certainty_threshold

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SomConfig:
    rows: int = 11
    cols: int = 11
    epochs: int = 100
    lr0: float = 0.5
    sigma0: float | None = None
    alpha: float = 0.75
    beta: float = 0.25
    seed: int = 0
    sigma_end: float = 0.1

    def __post_init__(self):
        if self.rows * self.cols < 2 or self.rows < 1 or self.cols < 1:
            raise ValueError("SOM grid needs at least two neurons")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr0 <= 1:
            raise ValueError("lr0 must be in (0, 1]")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.sigma_end > 0:
            raise ValueError("sigma_end must be positive")
        _check_weights(self.alpha, self.beta)

    @property
    def initial_sigma(self) -> float:
        return self.sigma0 if self.sigma0 is not None else max(self.rows, self.cols) / 2.0

    def schedule(self, epoch: int) -> tuple[float, float]:
        """Learning rate and neighbourhood radius for ``epoch`` (exponential decay).

        Both decay with the time constant that takes the radius from
        ``initial_sigma`` to ``sigma_end`` over the run.
        """
        s0 = self.initial_sigma
        ratio = s0 / self.sigma_end
        decay = math.log(ratio) / self.epochs if ratio > 1 else 0.0
        f = math.exp(-decay * epoch)
        return self.lr0 * f, s0 * f


@dataclass(frozen=True, eq=False)
class SomMap:
    neurons: np.ndarray
    config: SomConfig
    qe_history: tuple = field(default=())

    @property
    def grid(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.config.rows * self.config.cols), self.config.cols)
        return np.stack([r, c], axis=1).astype(float)


def _grid_sqdist(rows, cols):
    r, c = np.divmod(np.arange(rows * cols), cols)
    g = np.stack([r, c], axis=1).astype(float)
    return ((g[:, None, :] - g[None, :, :]) ** 2).sum(axis=2)


def _init_neurons(samples, n_neurons, rng):
    # start every neuron at the sample mean with a small seeded jitter on the
    # sample scale; the wide early neighbourhood unfolds them from there
    mean = samples.mean(axis=0)
    scale = samples.std(axis=0)
    scale[scale == 0] = 1e-3
    return mean + 1e-2 * scale * rng.standard_normal((n_neurons, 4))


def quantization_error(neurons, samples, alpha=0.75, beta=0.25) -> float:
    """Mean weighted distance from each sample to its best-matching neuron."""
    _, d2 = K.nearest(samples, neurons, beta, alpha)
    return float(np.sqrt(d2).mean())


def som_train(samples, config: SomConfig = SomConfig()) -> SomMap:
    """Sequential SOM training, deterministic for a given seed.

    Each epoch presents the samples in a freshly shuffled order; every
    presentation pulls all neurons toward the sample by
    ``lr * exp(-g^2 / (2 sigma^2))`` where ``g`` is grid distance to the BMU.
    """
    x = np.ascontiguousarray(np.asarray(samples, dtype=float).reshape(-1, 4))
    if x.shape[0] == 0:
        raise ValueError("som_train needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    rng = np.random.default_rng(config.seed)
    m = config.rows * config.cols
    neurons = np.ascontiguousarray(_init_neurons(x, m, rng))
    g2 = _grid_sqdist(config.rows, config.cols)
    qe = []
    best = math.inf
    for epoch in range(config.epochs):
        lr, sigma = config.schedule(epoch)
        coef = np.ascontiguousarray(lr * np.exp(-g2 / (2.0 * sigma * sigma)))
        order = rng.permutation(x.shape[0]).astype(np.int64)
        trial = neurons.copy()
        K.som_epoch(trial, x, order, coef, config.beta, config.alpha)
        err = quantization_error(trial, x, config.alpha, config.beta)
        # an epoch that worsens the fit is rolled back; the schedule moves on
        if err <= best:
            neurons, best = trial, err
        qe.append(best)
    return SomMap(neurons=neurons, config=config, qe_history=tuple(qe))


def som_assign(x, som: SomMap) -> tuple[int, float]:
    """Best-matching neuron for one state (ties go to the lowest index)."""
    idx, d2 = K.nearest(np.asarray(x, dtype=float).reshape(1, 4), som.neurons, som.config.beta, som.config.alpha)
    return int(idx[0]), math.sqrt(d2[0])


def assign_all(samples, centroids, alpha=0.75, beta=0.25):
    idx, d2 = K.nearest(np.asarray(samples, dtype=float).reshape(-1, 4), centroids, beta, alpha)
    return idx, np.sqrt(d2)


def extract_superstates(som: SomMap, samples) -> list[SuperState]:
    """Partition ``samples`` by BMU and turn each non-empty neuron into a super-state."""
    x = np.asarray(samples, dtype=float).reshape(-1, 4)
    if x.shape[0] == 0:
        raise ValueError("no samples to extract super-states from")
    bmu, _ = assign_all(x, som.neurons, som.config.alpha, som.config.beta)
    states = []
    for neuron in np.unique(bmu):
        members = x[bmu == neuron]
        centroid = members.mean(axis=0)
        spread = np.cov(members, rowvar=False, bias=True) if len(members) > 1 else np.zeros((4, 4))
        states.append(SuperState(
            id=len(states),
            centroid=centroid,
            control_u=centroid[2:],
            member_count=int(len(members)),
            spread=spread,
        ))
    return states


def nearest_neighbour_distances(centroids, alpha=0.75, beta=0.25) -> np.ndarray:
    c = np.asarray(centroids, dtype=float).reshape(-1, 4)
    d = c[:, None, :] - c[None, :, :]
    w = np.array([beta, beta, alpha, alpha])
    dist = np.sqrt((d * d * w).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    return dist.min(axis=1)


def vocabulary_threshold(states, alpha=0.75, beta=0.25) -> float:
    """Certainty boundary of a vocabulary from nearest-neighbour centroid distances.

    A single super-state has no neighbours; it falls back to three times the
    root trace of its member spread.
    """
    states = list(states)
    if not states:
        raise ValueError("empty vocabulary")
    if len(states) == 1:
        return 3.0 * math.sqrt(max(float(np.trace(states[0].spread)), 0.0))
    nn = nearest_neighbour_distances([s.centroid for s in states], alpha, beta)
    psi = certainty_threshold(nn)
    if psi == 0:
        log.warning("degenerate vocabulary: all centroids coincide, psi = 0")
    return psi
