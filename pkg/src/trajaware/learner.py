"""Offline incremental learning of the model bank.

Each iteration runs every model of the bank over the training series,
marks steps no model explains, and learns one new switching model from the
pooled abnormal states (SOM -> super-states -> dwell-time transitions).

Models are compared on reference states obtained by smoothing the
observations offline (Savitzky-Golay fit of position and its derivative):
each model predicts one step ahead from the previous reference state with
the super-state that state falls into, and the error is the norm of the
innovation velocity. Steps whose winning error exceeds the bootstrap
threshold ``psi0`` (m/s) are abnormal.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.signal import savgol_filter

from . import _kernels as K
from .core import (
    DUMMY,
    GaussianBelief,
    NoiseParams,
    Observation,
    SlModel,
    SuperState,
    TransitionTensor,
    certainty_threshold,
)
from .som import SomConfig, assign_all, extract_superstates, som_train, vocabulary_threshold

log = logging.getLogger(__name__)

DEFAULT_BINS = (10.0, 20.0, 30.0, 40.0, math.inf)


class TooFewStates(ValueError):
    pass


# ---------------------------------------------------------------- transitions

def _as_sequences(assignments):
    if len(assignments) and np.ndim(assignments[0]) == 0:
        return [np.asarray(assignments, dtype=np.int64)]
    return [np.asarray(a, dtype=np.int64) for a in assignments]


def transition_counts(assignments, n_states, bins=DEFAULT_BINS) -> np.ndarray:
    """Dwell-binned transition counts ``(n_bins, L, L)``.

    ``assignments`` is one sequence of super-state indices or a list of
    them; no transition is counted across sequence boundaries. DUMMY
    entries break the chain like a boundary.
    """
    bins = tuple(float(b) for b in bins)
    counts = np.zeros((len(bins), n_states, n_states))
    edges = np.asarray(bins)
    for seq in _as_sequences(assignments):
        if seq.size and (seq.max() >= n_states or seq.min() < DUMMY):
            raise IndexError(f"super-state index out of range for L={n_states}")
        dwell = 0
        for k in range(1, seq.size):
            prev, cur = seq[k - 1], seq[k]
            if prev == DUMMY:
                dwell = 0
                continue
            dwell = dwell + 1 if k > 1 and seq[k - 2] == prev else 1
            if cur == DUMMY:
                continue
            b = int(np.searchsorted(edges, dwell, side="right"))
            counts[b, prev, cur] += 1
    return counts


def normalize_counts(counts, smoothing=0.0, fallback="pooled") -> np.ndarray:
    """Additive smoothing ``(count + lam) / (row_total + lam L)``.

    Rows without observations become uniform, or with ``fallback="pooled"``
    take the row pooled over all dwell bins (uniform if that is empty too).
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    if fallback not in ("uniform", "pooled"):
        raise ValueError(f"unknown fallback {fallback!r}")
    counts = np.asarray(counts, dtype=float)
    L = counts.shape[-1]
    pooled = counts.sum(axis=0)
    out = np.empty_like(counts)
    for b in range(counts.shape[0]):
        for i in range(L):
            row = counts[b, i]
            total = row.sum()
            if total == 0 and fallback == "pooled" and pooled[i].sum() > 0:
                row = pooled[i]
                total = row.sum()
            if total == 0:
                out[b, i] = 1.0 / L
            else:
                out[b, i] = (row + smoothing) / (total + smoothing * L)
    return out


def estimate_transitions(assignments, n_states, bins=DEFAULT_BINS, smoothing=0.0,
                         fallback="pooled") -> TransitionTensor:
    counts = transition_counts(assignments, n_states, bins)
    return TransitionTensor(bins=tuple(float(b) for b in bins),
                            matrices=normalize_counts(counts, smoothing, fallback))


# ---------------------------------------------------------------- model bank

@dataclass(frozen=True)
class LearnConfig:
    som: SomConfig = SomConfig()
    bins: tuple = DEFAULT_BINS
    smoothing: float = 0.0
    fallback: str = "pooled"
    gap_min: int = 5
    min_segment: int = 10
    max_iterations: int = 8
    psi0: float | None = None
    calib_window: int = 200
    calib_seed: int = 0
    smooth_window: int = 11
    pooled: bool = True
    auto_grid: bool = True
    noise: NoiseParams = field(default_factory=NoiseParams)


@dataclass(frozen=True)
class FitReport:
    iterations: int
    converged: bool
    abnormal_fraction: tuple
    unexplained_fraction: float


@dataclass(frozen=True, eq=False)
class ModelBank:
    """Model 0 (unmotivated, ``U = 0``) followed by learned models.

    ``psi0`` is the trigger threshold on innovation-velocity errors (m/s).
    """

    models: tuple
    noise: NoiseParams
    psi0: float
    report: FitReport | None = None

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise ValueError("bank needs model 0")
        m0 = self.models[0]
        if m0.n_states != 1 or np.any(m0.super_states[0].control_u != 0):
            raise ValueError("model 0 must have exactly one super-state with zero control")
        for i, m in enumerate(self.models):
            if m.id != i:
                raise ValueError("model ids must be dense and ordered")
        if not self.psi0 > 0:
            raise ValueError("psi0 must be positive")

    @property
    def learned(self):
        return self.models[1:]


def unmotivated_model(psi0: float, bins=DEFAULT_BINS) -> SlModel:
    s = SuperState(id=0, centroid=np.zeros(4), control_u=np.zeros(2), member_count=1, spread=np.zeros((4, 4)))
    trans = TransitionTensor(bins=tuple(float(b) for b in bins), matrices=np.ones((len(bins), 1, 1)))
    return SlModel(id=0, super_states=(s,), psi=psi0, trans=trans)


def initial_bank(noise: NoiseParams = None, psi0: float | None = None, config: LearnConfig = None) -> ModelBank:
    config = config or LearnConfig()
    noise = noise or config.noise
    if psi0 is None:
        psi0 = config.psi0 if config.psi0 is not None else calibrate_psi0(noise, config)
    return ModelBank(models=(unmotivated_model(psi0, config.bins),), noise=noise, psi0=psi0)


# ---------------------------------------------------------------- filter bank

class FilterBankStep(NamedTuple):
    t: float
    per_model_error: np.ndarray
    best_model: int
    best_super_state: int
    state_estimate: GaussianBelief
    reference: np.ndarray


def _series_arrays(series):
    if len(series) < 2:
        raise ValueError("series needs at least two observations")
    arr = np.array([(o.t, o.x, o.y) if isinstance(o, Observation) else tuple(o) for o in series], dtype=float)
    if not np.all(np.diff(arr[:, 0]) > 0):
        raise ValueError("timestamps must be strictly increasing")
    return arr[:, 0], arr[:, 1:3]


def _step_dts(t, dt_default):
    d = np.diff(t)
    bad = ~(np.abs(d - dt_default) <= 0.2 * dt_default)
    return np.where(bad, dt_default, d)


def reference_states(t, z, dt_default, window=11) -> np.ndarray:
    """Smoothed positions and velocities ``(n, 4)`` from noisy positions."""
    n = len(z)
    w = min(window, n if n % 2 else n - 1)
    if w < 3:
        vel = np.zeros_like(z)
        if n > 1:
            vel[:] = (z[-1] - z[0]) / (t[-1] - t[0])
        return np.hstack([z, vel])
    step = float(np.median(np.diff(t)))
    if not abs(step - dt_default) <= 0.2 * dt_default:
        step = dt_default
    order = min(2, w - 1)
    pos = savgol_filter(z, w, order, axis=0, mode="interp")
    vel = savgol_filter(z, w, order, deriv=1, delta=step, axis=0, mode="interp")
    return np.hstack([pos, vel])


def _model_controls(model: SlModel, prev_states):
    """Control velocity and super-state per previous state (DUMMY outside psi)."""
    if model.id == 0:
        return np.zeros((len(prev_states), 2)), np.zeros(len(prev_states), dtype=np.int64)
    idx, d2 = K.nearest(prev_states, model.centroids, model.beta, model.alpha)
    idx = idx.copy()
    outside = np.sqrt(d2) > model.psi
    u = model.controls[idx]
    u[outside] = 0.0
    idx[outside] = DUMMY
    return u, idx


@dataclass(frozen=True, eq=False)
class BankRun:
    """Array form of a filter-bank pass over one series (steps 1..n-1)."""

    t: np.ndarray
    errors: np.ndarray  # (n-1, M)
    super_states: np.ndarray  # (n-1, M)
    best_model: np.ndarray
    best_super_state: np.ndarray
    reference: np.ndarray  # (n, 4)
    post_mean: np.ndarray
    post_cov: np.ndarray

    @property
    def best_error(self):
        return self.errors[np.arange(len(self.best_model)), self.best_model]

    def steps(self) -> list[FilterBankStep]:
        return [
            FilterBankStep(float(self.t[k]), self.errors[k], int(self.best_model[k]), int(self.best_super_state[k]),
                           GaussianBelief(self.post_mean[k], self.post_cov[k]), self.reference[k + 1])
            for k in range(len(self.best_model))
        ]


def bank_pass(bank: ModelBank, series, smooth_window=11) -> BankRun:
    t, z = _series_arrays(series)
    noise = bank.noise
    dts = _step_dts(t, noise.dt_default)
    ref = reference_states(t, z, noise.dt_default, smooth_window)
    prev = np.ascontiguousarray(ref[:-1])
    n, M = len(prev), len(bank.models)
    errors = np.empty((n, M))
    sstates = np.empty((n, M), dtype=np.int64)
    controls = np.empty((M, n, 2))
    for j, model in enumerate(bank.models):
        u, idx = _model_controls(model, prev)
        pred = prev[:, :2] + u * dts[:, None]
        errors[:, j] = np.hypot(*((z[1:] - pred) / dts[:, None]).T)
        sstates[:, j] = idx
        controls[j] = u
    # argmin keeps the first minimum, so ties go to the lowest model id
    best = np.argmin(errors, axis=1)
    rows = np.arange(n)
    best_u = controls[best, rows]
    p_ref = noise.q + np.pad(noise.r, ((0, 2), (0, 2)))
    covs = np.broadcast_to(p_ref, (n, 4, 4))
    pm, pc = _predict_rows(prev, covs, best_u, dts, noise.q)
    post_m = np.empty_like(pm)
    post_c = np.empty_like(pc)
    for k in range(n):
        m, c, *_ = K.kf_update(pm[k:k + 1], pc[k:k + 1], z[k + 1], noise.r)
        post_m[k], post_c[k] = m[0], c[0]
    return BankRun(t=t[1:], errors=errors, super_states=sstates, best_model=best,
                   best_super_state=sstates[rows, best], reference=ref, post_mean=post_m, post_cov=post_c)


def _predict_rows(means, covs, controls, dts, q):
    # per-row dt, so predict row by row through the shared kernel
    out_m = np.empty((len(means), 4))
    out_c = np.empty((len(means), 4, 4))
    for dt in np.unique(dts):
        sel = dts == dt
        m, c = K.kf_predict(means[sel], covs[sel], controls[sel], float(dt), q)
        out_m[sel], out_c[sel] = m, c
    return out_m, out_c


def run_filter_bank(bank: ModelBank, series, smooth_window=11) -> list[FilterBankStep]:
    """One :class:`FilterBankStep` per observation after the first."""
    return bank_pass(bank, series, smooth_window).steps()


# ---------------------------------------------------------------- segments

class Segment(NamedTuple):
    start: int
    end: int  # inclusive
    states: np.ndarray


def abnormal_runs(flags, gap_min=5) -> list[tuple[int, int]]:
    """Inclusive index ranges of True runs, merging runs separated by fewer than ``gap_min`` steps."""
    idx = np.flatnonzero(np.asarray(flags, dtype=bool))
    if idx.size == 0:
        return []
    runs = []
    start = prev = int(idx[0])
    for i in idx[1:]:
        i = int(i)
        if i - prev - 1 < gap_min:
            prev = i
            continue
        runs.append((start, prev))
        start = prev = i
    runs.append((start, prev))
    return runs


def detect_abnormal_segments(steps, bank: ModelBank, gap_min=5) -> list[Segment]:
    """Abnormal stretches of a filter-bank pass with their reference states."""
    if isinstance(steps, BankRun):
        err, ref = steps.best_error, steps.reference[1:]
    else:
        steps = list(steps)
        if not steps:
            return []
        err = np.array([s.per_model_error[s.best_model] for s in steps])
        ref = np.array([s.reference for s in steps])
    runs = abnormal_runs(err > bank.psi0, gap_min)
    return [Segment(a, b, ref[a:b + 1]) for a, b in runs]


# ---------------------------------------------------------------- learning

def calibrate_psi0(noise: NoiseParams, config: LearnConfig = None) -> float:
    """Bootstrap threshold from model 0 errors on a synthetic still segment.

    The segment is ``calib_window + 1`` noisy observations of a motionless
    agent under the measurement noise ``R``.
    """
    config = config or LearnConfig()
    rng = np.random.default_rng(config.calib_seed)
    n = config.calib_window + 1
    z = rng.multivariate_normal(np.zeros(2), noise.r, size=n)
    t = np.arange(n) * noise.dt_default
    ref = reference_states(t, z, noise.dt_default, config.smooth_window)
    err = np.hypot(*((z[1:] - ref[:-1, :2]) / noise.dt_default).T)
    return certainty_threshold(err[: config.calib_window])


def _grid_for(n_samples, som: SomConfig) -> SomConfig:
    # keep roughly five samples per neuron on small training sets
    side = int(math.floor(math.sqrt(n_samples / 5.0)))
    if side * side >= som.rows * som.cols:
        return som
    rows = max(1, min(side, som.rows))
    cols = max(2, min(side, som.cols))
    return replace(som, rows=rows, cols=cols, sigma0=None if som.sigma0 is None else min(som.sigma0, max(rows, cols) / 2.0))


def learn_model(abnormal_states, som_cfg: SomConfig = SomConfig(), bins=DEFAULT_BINS, smoothing=0.0,
                model_id=1, fallback="pooled", auto_grid=True, min_states=10) -> SlModel:
    """Learn one switching model from abnormal states.

    ``abnormal_states`` is an ``(n, 4)`` array or a list of such arrays
    (one per segment; transitions are not counted across segments).
    """
    if len(abnormal_states) and np.ndim(abnormal_states[0]) == 2:
        seqs = [np.asarray(s, dtype=float).reshape(-1, 4) for s in abnormal_states]
    else:
        seqs = [np.asarray(abnormal_states, dtype=float).reshape(-1, 4)]
    x = np.concatenate(seqs) if seqs else np.empty((0, 4))
    if len(x) < min_states:
        raise TooFewStates(f"need at least {min_states} states, got {len(x)}")
    cfg = _grid_for(len(x), som_cfg) if auto_grid else som_cfg
    som = som_train(x, cfg)
    states = extract_superstates(som, x)
    centroids = np.array([s.centroid for s in states])
    psi = vocabulary_threshold(states, cfg.alpha, cfg.beta)
    if not psi > 0:
        # degenerate vocabulary (coincident centroids): fall back to the member scale
        spread = max(float(np.trace(s.spread)) for s in states)
        psi = 3.0 * math.sqrt(spread) if spread > 0 else 1e-6
        log.warning("vocabulary threshold was zero; using %.3g", psi)
    assign = [assign_all(s, centroids, cfg.alpha, cfg.beta)[0] for s in seqs]
    trans = estimate_transitions(assign, len(states), bins, smoothing, fallback)
    return SlModel(id=model_id, super_states=tuple(states), psi=psi, trans=trans, alpha=cfg.alpha, beta=cfg.beta)


def _as_series_list(series):
    if len(series) and isinstance(series[0], (list, tuple)) and not isinstance(series[0], Observation):
        return [list(s) for s in series]
    return [list(series)]


def abnormal_fraction(bank: ModelBank, series, smooth_window=11, gap_min=5) -> float:
    """Fraction of steps inside detected abnormal segments."""
    flagged = total = 0
    for s in _as_series_list(series):
        run = bank_pass(bank, s, smooth_window)
        for seg in detect_abnormal_segments(run, bank, gap_min):
            flagged += seg.end - seg.start + 1
        total += len(run.best_model)
    return flagged / total if total else 0.0


def fit_normality(series, config: LearnConfig = LearnConfig(), bank: ModelBank | None = None) -> ModelBank:
    """Grow the model bank until the training series is explained.

    ``series`` is one observation list or a list of them. Passing an
    existing ``bank`` continues learning from it (incremental use).
    """
    seqs = _as_series_list(series)
    bank = bank if bank is not None else initial_bank(config=config)
    fractions = []
    converged = False
    learned = 0
    while True:
        segments = []
        flagged = total = 0
        for s in seqs:
            run = bank_pass(bank, s, config.smooth_window)
            segs = detect_abnormal_segments(run, bank, config.gap_min)
            flagged += sum(g.end - g.start + 1 for g in segs)
            total += len(run.best_model)
            segments.extend(segs)
        fractions.append(flagged / total)
        learnable = [g.states for g in segments if len(g.states) >= config.min_segment]
        if not learnable:
            converged = True
            break
        if learned >= config.max_iterations:
            log.warning("fit_normality did not converge after %d iterations", learned)
            break
        groups = [learnable] if config.pooled else [[g] for g in learnable]
        models = list(bank.models)
        for g in groups:
            models.append(learn_model(g, config.som, config.bins, config.smoothing, model_id=len(models),
                                      fallback=config.fallback, auto_grid=config.auto_grid,
                                      min_states=config.min_segment))
        bank = replace(bank, models=tuple(models), report=None)
        learned += 1
    report = FitReport(iterations=learned, converged=converged, abnormal_fraction=tuple(fractions),
                       unexplained_fraction=fractions[-1])
    return replace(bank, report=report)
