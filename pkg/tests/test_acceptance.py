"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a single PASS/FAIL line (shown in the pytest terminal
summary) before asserting.
"""
import json
import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chi2

from oracles import brute_force_transitions
from test_kalman import simulate_consistency
from test_mjpf import _bank, _model, _plain_kf_signal
from trajaware import _kernels as K
from trajaware.cli import main
from trajaware.core import GaussianBelief, NoiseParams, Observation, certainty_threshold, weighted_distance
from trajaware.kalman import MotionModel, innovation_velocity, predict
from trajaware.learner import LearnConfig, abnormal_fraction, estimate_transitions, fit_normality
from trajaware.metrics import default_threshold, event_detection, roc_auc, samples_to_binary
from trajaware.mjpf import MjpfConfig, init, predict_step, run, update_step
from trajaware.simulator import default_specs, generate

SEEDS = (1, 2, 3, 4, 5)
PARTICLES = (5, 25, 50)


def test_criterion_1_closed_form_values(verdict):
    start = time.perf_counter()
    checks = []
    checks.append(abs(certainty_threshold([1, 2, 3]) - 4.449489742783178))
    checks.append(abs(certainty_threshold([2, 2, 2]) - 2.0))
    checks.append(abs(certainty_threshold([5]) - 5.0))
    checks.append(abs(weighted_distance((2, 0, 2, 0), (0, 0, 0, 0)) - 2.0))
    checks.append(abs(weighted_distance((0, 0, 1, 0), (0, 0, 0, 0)) - 0.8660254037844386))
    checks.append(weighted_distance((1, 2, 3, 4), (1, 2, 3, 4)))
    b = GaussianBelief([1.0, 0, 0, 0], np.eye(4))
    checks.append(np.max(np.abs(innovation_velocity((2.0, 0.0), b, 0.5) - [2, 0])))
    checks.append(np.max(np.abs(innovation_velocity((0.0, 1.0), GaussianBelief(np.zeros(4), np.eye(4)), 0.1) - [0, 10])))
    checks.append(np.max(np.abs(innovation_velocity((1.0, 0.0), b, 0.1))))
    zq = NoiseParams(q=np.zeros((4, 4)))
    p = predict(GaussianBelief([0, 0, 5, 5], np.zeros((4, 4))), MotionModel.unmotivated(0.1), zq)
    checks.append(np.max(np.abs(p.mean)))
    p = predict(GaussianBelief(np.zeros(4), np.zeros((4, 4))), MotionModel.motivated((1, 0), 0.5), zq)
    checks.append(np.max(np.abs(p.mean - [0.5, 0, 1, 0])))
    p = predict(GaussianBelief(np.zeros(4), np.eye(4)), MotionModel.unmotivated(0.1), NoiseParams(q=np.eye(4)))
    checks.append(np.max(np.abs(p.cov - np.diag([2.0, 2, 1, 1]))))
    elapsed = time.perf_counter() - start
    worst = max(checks)
    ok = worst <= 1e-9 and elapsed < 1.0
    verdict(1, ok, f"max deviation {worst:.2e} (tol 1e-9), {elapsed * 1e3:.1f} ms (limit 1 s)")
    assert ok


def test_criterion_2_filter_consistency(verdict):
    nis, innovs = simulate_consistency(10_000, seed=0)
    lo, hi = chi2.ppf([0.025, 0.975], 2)
    inside = float(np.mean((nis >= lo) & (nis <= hi)))
    n = len(innovs)
    bound = 3 * innovs.std(axis=0) / math.sqrt(n)
    mean = np.abs(innovs.mean(axis=0))
    ok = inside >= 0.90 and bool(np.all(mean <= bound))
    verdict(2, ok, f"NIS in 95% band on {inside:.3f} of steps (need 0.90); "
                   f"|mean innovation| {mean.max():.2e} vs 3 sigma/sqrt(N) {bound.min():.2e}")
    assert ok


def test_criterion_3_transition_oracle(verdict):
    rng = np.random.default_rng(31337)
    bins = (10.0, 20.0, 30.0, 40.0, math.inf)
    mismatches = 0
    total = 0
    for _ in range(100):
        L = int(rng.integers(1, 6))
        n = int(rng.integers(1, 51))
        seq = [int(rng.integers(L))]
        for _ in range(n - 1):
            seq.append(seq[-1] if rng.random() < 0.85 else int(rng.integers(L)))
        for lam in (0, 1):
            for fallback in ("uniform", "pooled"):
                got = estimate_transitions(seq, L, bins, smoothing=lam, fallback=fallback).matrices
                want = np.array(brute_force_transitions([seq], L, bins, Fraction(lam), fallback), dtype=float)
                total += 1
                mismatches += not np.array_equal(got, want)
    ok = mismatches == 0
    verdict(3, ok, f"{total - mismatches}/{total} tensors exactly equal to the brute-force counter")
    assert ok


def test_criterion_4_incremental_convergence(verdict):
    spec = default_specs(0)["perimeter"]
    series = [generate(replace(spec, noise_std=0.0))[0], generate(spec)[0]]
    bank = fit_normality(series, LearnConfig())
    frac = abnormal_fraction(bank, series)
    iters = bank.report.iterations
    ok = bank.report.converged and iters <= 3 and frac <= 0.01
    verdict(4, ok, f"{iters} learning iteration(s) (limit 3), re-detection flags {frac:.4f} of steps (limit 0.01)")
    assert ok


@pytest.fixture(scope="module")
def scenario_runs():
    """Per seed: perimeter training (seed 1000+s), test scenarios with seed s, MJPF seed s."""
    out = {}
    for s in SEEDS:
        bank = fit_normality(generate(default_specs(1000 + s)["perimeter"])[0], LearnConfig())
        thr = default_threshold(bank)
        for kind in ("uturn", "estop"):
            obs, windows = generate(default_specs(s)[kind])
            for n in PARTICLES:
                samples = run(bank, obs, MjpfConfig(n_particles=n, seed=s))
                scores, labels = samples_to_binary(samples, windows)
                ev = event_detection(samples, windows, thr)
                out[(s, kind, n)] = (roc_auc(scores, labels), ev.recall, ev.false_events)
    return out


def test_criterion_5_scenario_detection(verdict, scenario_runs):
    rows = {k: v for k, v in scenario_runs.items() if k[2] == 50}
    auc = min(v[0] for v in rows.values())
    recall = min(v[1] for v in rows.values())
    fe = max(v[2] for v in rows.values())
    bad = sorted(f"{k[1]}/seed{k[0]}" for k, v in rows.items() if not (v[0] >= 0.90 and v[1] == 1.0 and v[2] <= 2))
    ok = not bad
    verdict(5, ok, f"50 particles, seeds 1-5: min AUC {auc:.4f} (need 0.90), min recall {recall:.2f}, "
                   f"max false events {fe} (limit 2)" + (f"; failing runs {', '.join(bad)}" if bad else ""))
    assert ok


def test_criterion_6_particle_trend(verdict, scenario_runs):
    means = {}
    for kind in ("uturn", "estop"):
        means[kind] = [float(np.mean([scenario_runs[(s, kind, n)][0] for s in SEEDS])) for n in PARTICLES]
    ok = all(b >= a - 0.02 for m in means.values() for a, b in zip(m, m[1:]))
    detail = "; ".join(f"{k} mean AUC " + " -> ".join(f"{x:.4f}" for x in m) for k, m in means.items())
    verdict(6, ok, f"{detail} (5/25/50 particles, tolerance 0.02)")
    assert ok


def test_criterion_7_single_particle_degeneracy(verdict):
    bank = _bank(_model(1, [[1.0, 0.5]], spread=0.02))
    rng = np.random.default_rng(77)
    t = np.arange(300) * 0.11
    pos = np.stack([t, 0.5 * t], axis=1) + 0.05 * rng.standard_normal((300, 2))
    series = [Observation(float(a), float(x), float(y)) for a, (x, y) in zip(t, pos)]
    got = [s.signal for s in run(bank, series, MjpfConfig(n_particles=1, seed=77, signal_norm="mahalanobis"))]
    want = _plain_kf_signal(bank, series)
    same = sum(a == b for a, b in zip(got, want))
    ok = got == want
    verdict(7, ok, f"{same}/{len(want)} steps bitwise equal to the plain Kalman filter Mahalanobis signal")
    assert ok


def test_criterion_8_performance(verdict, perimeter_bank, tmp_path):
    obs, _ = generate(default_specs(2)["uturn"])
    cfg = MjpfConfig(n_particles=50, seed=2)
    ps = init(perimeter_bank, obs[0], cfg)
    times = []
    for prev, o in zip(obs[:600], obs[1:601]):
        t0 = time.perf_counter()
        ps = predict_step(ps, perimeter_bank, o.t - prev.t)
        ps, _ = update_step(ps, o, perimeter_bank, cfg)
        times.append(time.perf_counter() - t0)
    step_ms = 1e3 * float(np.median(times))
    t0 = time.perf_counter()
    codes = [
        main(["simulate", "--scenario", "perimeter", "--seed", "1001", "--out", str(tmp_path / "train")]),
        main(["simulate", "--scenario", "uturn", "--seed", "2", "--out", str(tmp_path / "test")]),
        main(["learn", str(tmp_path / "train" / "trajectory.csv"), "--out", str(tmp_path / "bank.json")]),
        main(["detect", str(tmp_path / "bank.json"), str(tmp_path / "test" / "trajectory.csv"),
              "--out", str(tmp_path / "signal.csv")]),
        main(["eval", str(tmp_path / "signal.csv"), str(tmp_path / "test" / "labels.csv")]),
    ]
    pipeline_s = time.perf_counter() - t0
    ok = step_ms < 10.0 and pipeline_s < 60.0 and codes == [0] * 5
    verdict(8, ok, f"median MJPF step {step_ms:.3f} ms at 50 particles (limit 10 ms, {K.backend} kernels); "
                   f"U-turn pipeline {pipeline_s:.1f} s (limit 60 s)")
    assert ok


def _run_all(d):
    main(["simulate", "--scenario", "perimeter", "--seed", "1003", "--out", str(d / "train")])
    main(["simulate", "--scenario", "estop", "--seed", "3", "--out", str(d / "test")])
    main(["learn", str(d / "train" / "trajectory.csv"), "--out", str(d / "bank.json")])
    main(["detect", str(d / "bank.json"), str(d / "test" / "trajectory.csv"), "--out", str(d / "signal.csv"),
          "--svg", str(d / "signal.svg")])
    main(["eval", str(d / "signal.csv"), str(d / "test" / "labels.csv"), "--out", str(d / "report.json")])
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _run_all(tmp_path / "a")
    b = _run_all(tmp_path / "b")
    differ = sorted(k for k in a if a[k] != b.get(k))
    ok = len(a) >= 9 and a.keys() == b.keys() and not differ
    verdict(9, ok, f"{len(a) - len(differ)}/{len(a)} output files byte-identical across repeated runs"
                   + (f"; differing: {', '.join(differ)}" if differ else ""))
    assert ok


def test_criterion_10_resampling_unbiased(verdict):
    rng = np.random.default_rng(2718)
    trials = 10_000
    worst = 0.0
    ok = True
    for n in (3, 10, 50):
        w = rng.random(n) ** 3
        w /= w.sum()
        counts = np.zeros(n)
        for u in rng.random(trials):
            counts += np.bincount(K.systematic_resample(w, u), minlength=n)
        expect = n * w
        frac = expect - np.floor(expect)
        sigma = np.sqrt(frac * (1 - frac) / trials)
        dev = np.abs(counts / trials - expect)
        ok &= bool(np.all(dev <= 3 * sigma + 1e-9))
        worst = max(worst, float(np.max(dev / np.maximum(3 * sigma, 1e-12))))
    verdict(10, ok, f"worst offspring-count deviation {worst:.2f} of the 3-sigma bound over {trials} trials")
    assert ok
