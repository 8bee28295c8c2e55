"""Online Markov Jump Particle Filter over (model, super-state) pairs.

Each particle carries a discrete hypothesis (model, super-state, dwell) and
a Kalman belief. Prediction samples the next super-state from the
dwell-dependent transition row and moves the belief with that
super-state's control velocity; the update weighs particles by the
Gaussian innovation likelihood. The abnormality signal is the median over
particles of the innovation norm.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .core import DUMMY, AbnormalitySample, Observation
from .kalman import step_dt
from .learner import ModelBank

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

SIGNAL_NORMS = ("weighted", "mahalanobis", "euclidean")


@dataclass(frozen=True)
class MjpfConfig:
    n_particles: int = 50
    seed: int = 0
    resample_threshold: float = 0.5
    dummy_enter_factor: float = 1.0
    dummy_exit_factor: float = 0.8
    signal_norm: str = "weighted"

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0 < self.resample_threshold <= 1:
            raise ValueError("resample_threshold must be in (0, 1]")
        if not (self.dummy_enter_factor > 0 and self.dummy_exit_factor > 0):
            raise ValueError("dummy factors must be positive")
        if self.signal_norm not in SIGNAL_NORMS:
            raise ValueError(f"unknown signal norm {self.signal_norm!r}")


@dataclass(eq=False)
class ParticleSet:
    """Structure-of-arrays particle population; ``logw`` is normalised."""

    model: np.ndarray
    state: np.ndarray
    dwell: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    logw: np.ndarray
    rng: np.random.Generator
    dt: float = math.nan

    def __len__(self):
        return len(self.model)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.logw)

    def ess(self) -> float:
        w = self.weights
        return float(1.0 / np.dot(w, w))

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.model.copy(), self.state.copy(), self.dwell.copy(), self.means.copy(),
                           self.covs.copy(), self.logw.copy(), self.rng, self.dt)


def _candidate_models(bank: ModelBank):
    if bank.learned:
        return bank.learned
    log.warning("model bank has no learned model; tracking with the unmotivated model only")
    return bank.models[:1]


def _systematic_draw(p, n, u0):
    cum = np.cumsum(p)
    idx = np.searchsorted(cum, (np.arange(n) + u0) / n * cum[-1], side="right")
    return np.minimum(idx, len(p) - 1)


def init(bank: ModelBank, z0, cfg: MjpfConfig = MjpfConfig()) -> ParticleSet:
    """Spread particles over super-states in proportion to their member counts.

    Allocation is systematic, so each super-state receives ``N * share``
    particles rounded up or down.
    """
    if isinstance(z0, Observation):
        z0 = z0.z
    z0 = np.asarray(z0, dtype=float).reshape(2)
    rng = np.random.default_rng(cfg.seed)
    pairs = [(m, s) for m in _candidate_models(bank) for s in m.super_states]
    counts = np.array([s.member_count for _, s in pairs], dtype=float)
    n = cfg.n_particles
    pick = _systematic_draw(counts, n, float(rng.random()))
    model = np.array([pairs[p][0].id for p in pick], dtype=np.int64)
    state = np.array([pairs[p][1].id for p in pick], dtype=np.int64)
    means = np.empty((n, 4))
    means[:, :2] = z0
    means[:, 2:] = [pairs[p][1].control_u for p in pick]
    covs = np.array([pairs[p][1].spread for p in pick]).reshape(n, 4, 4)
    return ParticleSet(model, state, np.ones(n, dtype=np.int64), means, covs, np.full(n, -math.log(n)), rng)


def _controls(ps: ParticleSet, bank: ModelBank) -> np.ndarray:
    u = np.zeros((len(ps), 2))
    for m in np.unique(ps.model):
        sel = (ps.model == m) & (ps.state != DUMMY)
        if sel.any():
            u[sel] = bank.models[m].controls[ps.state[sel]]
    return u


def predict_step(ps: ParticleSet, bank: ModelBank, dt: float) -> ParticleSet:
    """Jump the discrete states, then Kalman-predict with the new controls."""
    ps = ps.copy()
    u = ps.rng.random(len(ps))
    for m in np.unique(ps.model):
        sel = np.flatnonzero((ps.model == m) & (ps.state != DUMMY))
        if sel.size == 0:
            continue
        trans = bank.models[m].trans
        rows = trans.matrices[trans.bin_index(ps.dwell[sel]), ps.state[sel]]
        cum = np.cumsum(rows, axis=1)
        nxt = np.minimum((cum <= u[sel, None] * cum[:, -1:]).sum(axis=1), rows.shape[1] - 1)
        stay = nxt == ps.state[sel]
        ps.dwell[sel] = np.where(stay, ps.dwell[sel] + 1, 1)
        ps.state[sel] = nxt
    dummy = ps.state == DUMMY
    ps.dwell[dummy] += 1
    ps.means, ps.covs = K.kf_predict(ps.means, ps.covs, _controls(ps, bank), float(dt), bank.noise.q)
    ps.dt = float(dt)
    return ps


def _dummy_switch(ps: ParticleSet, bank: ModelBank, cfg: MjpfConfig):
    for m in np.unique(ps.model):
        if m == 0:
            continue
        model = bank.models[m]
        active = np.flatnonzero((ps.model == m) & (ps.state != DUMMY))
        if active.size:
            _, d2 = K.nearest(ps.means[active], model.centroids, model.beta, model.alpha)
            out = active[np.sqrt(d2) > cfg.dummy_enter_factor * model.psi]
            ps.state[out] = DUMMY
            ps.dwell[out] = 1
        idle = np.flatnonzero((ps.model == m) & (ps.state == DUMMY))
        if idle.size:
            # velocity of a dummy particle carries no information, so re-attach by position
            idx, d2 = K.nearest(ps.means[idle], model.centroids, model.beta, 0.0)
            back = np.sqrt(d2) <= cfg.dummy_exit_factor * model.psi
            ps.state[idle[back]] = idx[back]
            ps.dwell[idle[back]] = 1


def _majority(ps: ParticleSet):
    w = ps.weights
    keys = {}
    for i in range(len(ps)):
        k = (int(ps.model[i]), int(ps.state[i]))
        keys[k] = keys.get(k, 0.0) + w[i]
    best = max(sorted(keys), key=lambda k: keys[k])
    return best


def _signal(innov, maha2, ps: ParticleSet, bank: ModelBank, cfg: MjpfConfig) -> np.ndarray:
    """Per-particle innovation norm.

    ``weighted`` measures the innovation in the state metric the super-state
    boundaries use: the positional innovation and its velocity form
    (innovation / dt) weighted by ``beta`` and ``alpha``.
    """
    if cfg.signal_norm == "mahalanobis":
        return np.sqrt(maha2)
    e2 = innov[:, 0] * innov[:, 0] + innov[:, 1] * innov[:, 1]
    if cfg.signal_norm == "euclidean":
        return np.sqrt(e2)
    dt = ps.dt if ps.dt > 0 else bank.noise.dt_default
    alpha = np.array([m.alpha for m in bank.models])[ps.model]
    beta = np.array([m.beta for m in bank.models])[ps.model]
    return np.sqrt(beta * e2 + alpha * e2 / (dt * dt))


def update_step(ps: ParticleSet, z, bank: ModelBank, cfg: MjpfConfig = MjpfConfig(), t: float = 0.0):
    """Weigh particles by the observation; returns ``(particles, sample)``."""
    if isinstance(z, Observation):
        t, z = z.t, z.z
    z = np.asarray(z, dtype=float).reshape(2)
    ps = ps.copy()
    means, covs, innov, _, det, maha2 = K.kf_update(ps.means, ps.covs, z, bank.noise.r)
    per = _signal(innov, maha2, ps, bank, cfg)
    signal = float(np.median(per))
    with np.errstate(divide="ignore", invalid="ignore"):
        loglik = -0.5 * maha2 - 0.5 * np.log(det) - _LOG_2PI
    logw = ps.logw + np.where(np.isfinite(loglik), loglik, -np.inf)
    total = logsumexp(logw)
    reset = not np.isfinite(total)
    if reset:
        logw = np.full(len(ps), -math.log(len(ps)))
    else:
        logw = logw - total
    ps.means, ps.covs, ps.logw = means, covs, logw
    _dummy_switch(ps, bank, cfg)
    model_id, state_id = _majority(ps)
    sample = AbnormalitySample(float(t), signal, model_id, state_id, state_id == DUMMY, reset)
    if ps.ess() < cfg.resample_threshold * len(ps):
        idx = K.systematic_resample(ps.weights, float(ps.rng.random()))
        ps = ParticleSet(ps.model[idx], ps.state[idx], ps.dwell[idx], ps.means[idx], ps.covs[idx],
                         np.full(len(ps), -math.log(len(ps))), ps.rng, ps.dt)
    return ps, sample


def run(bank: ModelBank, series, cfg: MjpfConfig = MjpfConfig()) -> list[AbnormalitySample]:
    """One :class:`AbnormalitySample` per observation after the first."""
    series = [o if isinstance(o, Observation) else Observation(*o) for o in series]
    if not series:
        raise ValueError("empty series")
    ps = init(bank, series[0], cfg)
    out = []
    dt_default = bank.noise.dt_default
    for prev, obs in zip(series, series[1:]):
        ps = predict_step(ps, bank, step_dt(prev.t, obs.t, dt_default))
        ps, sample = update_step(ps, obs, bank, cfg)
        out.append(sample)
    return out
