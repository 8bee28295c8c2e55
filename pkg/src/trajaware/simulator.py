"""Synthetic perimeter-monitoring trajectories with ground-truth labels.

The vehicle drives counter-clockwise around a rounded rectangle
``[0, rect_w] x [0, rect_h]`` starting at the beginning of the bottom
straight. Events happen on the bottom straight of lap ``event_lap``:

* ``uturn``: a half-circle reversal to the left, a straight back along the
  offset lane, and a second half-circle that rejoins the route behind the
  event point; the whole manoeuvre is labelled abnormal.
* ``estop``: brake to a stop, hold, accelerate back; the hold is abnormal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import LabeledWindow, Observation

PERIMETER = "perimeter"
UTURN = "uturn"
ESTOP = "estop"
KINDS = (PERIMETER, UTURN, ESTOP)


class InfeasibleScenario(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = PERIMETER
    laps: int = 3
    speed: float = 2.0
    rect_w: float = 40.0
    rect_h: float = 20.0
    corner_radius: float = 2.0
    dt: float = 0.11
    noise_std: float = 0.05
    event_lap: int = 2
    event_fraction: float = 0.5
    stop_duration: float = 5.0
    decel: float = 4.0
    accel: float = 2.0
    uturn_radius: float = 2.5
    detour_length: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InfeasibleScenario(f"unknown scenario kind {self.kind!r}")
        if not self.speed > 0:
            raise InfeasibleScenario("speed must be positive")
        if not self.dt > 0:
            raise InfeasibleScenario("dt must be positive")
        if self.laps < 1:
            raise InfeasibleScenario("need at least one lap")
        if not self.corner_radius > 0:
            raise InfeasibleScenario("corner_radius must be positive")
        if not (self.rect_w > 2 * self.corner_radius and self.rect_h > 2 * self.corner_radius):
            raise InfeasibleScenario("rectangle must be larger than twice the corner radius")
        if self.noise_std < 0:
            raise InfeasibleScenario("noise_std must be non-negative")
        if self.kind == PERIMETER:
            return
        if not 1 <= self.event_lap <= self.laps:
            raise InfeasibleScenario("event_lap must lie within the run")
        if not 0 < self.event_fraction < 1:
            raise InfeasibleScenario("event_fraction must be in (0, 1)")
        straight = self.rect_w - 2 * self.corner_radius
        if self.kind == UTURN:
            if not (self.uturn_radius > 0 and self.detour_length > 0):
                raise InfeasibleScenario("uturn_radius and detour_length must be positive")
            if self.detour_length > self.event_fraction * straight:
                raise InfeasibleScenario("detour runs past the start of the bottom straight")
            if 2 * self.uturn_radius >= self.rect_h - 2 * self.corner_radius:
                raise InfeasibleScenario("U-turn lane does not fit inside the rectangle")
        if self.kind == ESTOP:
            if not (self.decel > 0 and self.accel > 0 and self.stop_duration > 0):
                raise InfeasibleScenario("decel, accel and stop_duration must be positive")
            if self.speed**2 / (2 * self.decel) > self.event_fraction * straight:
                raise InfeasibleScenario("braking distance exceeds the straight")

    @property
    def lap_length(self) -> float:
        r = self.corner_radius
        return 2 * (self.rect_w - 2 * r) + 2 * (self.rect_h - 2 * r) + 2 * math.pi * r

    @property
    def event_s(self) -> float:
        """Perimeter progress (m) at which the event starts."""
        return (self.event_lap - 1) * self.lap_length + self.event_fraction * (self.rect_w - 2 * self.corner_radius)


def path_point(spec: ScenarioSpec, s):
    """Position, heading and curve flag on the rounded rectangle at progress ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float)) % spec.lap_length
    W, Hh, r = spec.rect_w, spec.rect_h, spec.corner_radius
    lw, lh, la = W - 2 * r, Hh - 2 * r, 0.5 * math.pi * r
    # (length, kind, start point / arc centre, start heading)
    segs = [
        (lw, "line", (r, 0.0), 0.0),
        (la, "arc", (W - r, r), 0.0),
        (lh, "line", (W, r), 0.5 * math.pi),
        (la, "arc", (W - r, Hh - r), 0.5 * math.pi),
        (lw, "line", (W - r, Hh), math.pi),
        (la, "arc", (r, Hh - r), math.pi),
        (lh, "line", (0.0, Hh - r), 1.5 * math.pi),
        (la, "arc", (r, r), 1.5 * math.pi),
    ]
    pos = np.empty((s.size, 2))
    heading = np.empty(s.size)
    curve = np.zeros(s.size, dtype=bool)
    start = 0.0
    for i, (length, kind, p0, h0) in enumerate(segs):
        last = i == len(segs) - 1
        sel = (s >= start) & ((s < start + length) | last)
        u = s[sel] - start
        if kind == "line":
            pos[sel, 0] = p0[0] + u * math.cos(h0)
            pos[sel, 1] = p0[1] + u * math.sin(h0)
            heading[sel] = h0
        else:
            phi = h0 - 0.5 * math.pi + u / r
            pos[sel, 0] = p0[0] + r * np.cos(phi)
            pos[sel, 1] = p0[1] + r * np.sin(phi)
            heading[sel] = h0 + u / r
            curve[sel] = True
        start += length
    return pos, heading, curve


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Noise-free ground truth sampled every ``dt``."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    labels: np.ndarray

    @property
    def heading(self) -> np.ndarray:
        return np.arctan2(self.vel[:, 1], self.vel[:, 0])


def _perimeter_samples(spec, s):
    pos, heading, curve = path_point(spec, s)
    labels = np.where(curve, "curve", "linear").astype(object)
    return pos, heading, labels


def _uturn_track(spec, d):
    """Ground truth at travelled distance ``d`` for the U-turn scenario."""
    ru, D = spec.uturn_radius, spec.detour_length
    s0 = spec.event_s
    arc = math.pi * ru
    man = 2 * arc + D
    pos = np.empty((d.size, 2))
    heading = np.empty(d.size)
    labels = np.empty(d.size, dtype=object)

    before = d < s0
    p, h, lab = _perimeter_samples(spec, d[before])
    pos[before], heading[before], labels[before] = p, h, lab

    # after the manoeuvre the route resumes D metres behind the event point
    after = d >= s0 + man
    p, h, lab = _perimeter_samples(spec, d[after] - man - D)
    pos[after], heading[after], labels[after] = p, h, lab

    px, py = path_point(spec, s0)[0][0]
    u = d - s0
    a1 = (~before) & (~after) & (u < arc)
    phi = -0.5 * math.pi + u[a1] / ru
    pos[a1, 0] = px + ru * np.cos(phi)
    pos[a1, 1] = py + ru + ru * np.sin(phi)
    heading[a1] = u[a1] / ru
    st = (~before) & (~after) & (u >= arc) & (u < arc + D)
    pos[st, 0] = px - (u[st] - arc)
    pos[st, 1] = py + 2 * ru
    heading[st] = math.pi
    a2 = (~before) & (~after) & (u >= arc + D)
    phi = 0.5 * math.pi + (u[a2] - arc - D) / ru
    pos[a2, 0] = px - D + ru * np.cos(phi)
    pos[a2, 1] = py + ru + ru * np.sin(phi)
    heading[a2] = math.pi + (u[a2] - arc - D) / ru
    labels[~before & ~after] = "abnormal"
    return pos, heading, labels


def _estop_profile(spec, t):
    """Perimeter progress and speed over time for the emergency stop."""
    v, ad, aa = spec.speed, spec.decel, spec.accel
    t_brake = (spec.event_s - v * v / (2 * ad)) / v
    t_stop = t_brake + v / ad
    t_go = t_stop + spec.stop_duration
    t_cruise = t_go + v / aa
    s_stop = spec.event_s
    s = np.empty_like(t)
    speed = np.empty_like(t)
    hold = np.zeros(t.size, dtype=bool)

    m = t < t_brake
    s[m], speed[m] = v * t[m], v
    m = (t >= t_brake) & (t < t_stop)
    tau = t[m] - t_brake
    s[m], speed[m] = v * t_brake + v * tau - 0.5 * ad * tau * tau, v - ad * tau
    m = (t >= t_stop) & (t < t_go)
    s[m], speed[m], hold[m] = s_stop, 0.0, True
    m = (t >= t_go) & (t < t_cruise)
    tau = t[m] - t_go
    s[m], speed[m] = s_stop + 0.5 * aa * tau * tau, aa * tau
    m = t >= t_cruise
    s[m], speed[m] = s_stop + v * v / (2 * aa) + v * (t[m] - t_cruise), v
    return s, speed, hold


def trajectory(spec: ScenarioSpec) -> Trajectory:
    spec.validate()
    v, dt = spec.speed, spec.dt
    total = spec.laps * spec.lap_length
    if spec.kind == PERIMETER:
        n = int(math.floor(total / (v * dt) + 1e-9)) + 1
        t = np.arange(n) * dt
        pos, heading, labels = _perimeter_samples(spec, v * t)
        speed = np.full(n, v)
    elif spec.kind == UTURN:
        travelled = total + 2 * math.pi * spec.uturn_radius + spec.detour_length
        n = int(math.floor(travelled / (v * dt) + 1e-9)) + 1
        t = np.arange(n) * dt
        pos, heading, labels = _uturn_track(spec, v * t)
        speed = np.full(n, v)
    else:
        # time lost to the stop: the hold plus half of each speed ramp
        lost = spec.stop_duration + v / (2 * spec.decel) + v / (2 * spec.accel)
        n = int(math.floor((total / v + lost) / dt + 1e-9)) + 1
        t = np.arange(n) * dt
        s, speed, hold = _estop_profile(spec, t)
        pos, heading, labels = _perimeter_samples(spec, s)
        labels[hold] = "abnormal"
    vel = np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=1)
    return Trajectory(t=t, pos=pos, vel=vel, labels=labels)


def label_windows(t, labels, dt) -> list[LabeledWindow]:
    """Collapse per-sample labels into closed-open windows covering the timeline."""
    windows = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            end = t[i] if i < len(labels) else t[-1] + dt
            windows.append(LabeledWindow(float(t[start]), float(end), str(labels[start])))
            start = i
    return windows


def generate(spec: ScenarioSpec):
    """Noisy observations and ground-truth label windows for ``spec``."""
    tr = trajectory(spec)
    rng = np.random.default_rng(spec.seed)
    z = tr.pos + spec.noise_std * rng.standard_normal(tr.pos.shape) if spec.noise_std > 0 else tr.pos.copy()
    obs = [Observation(float(ti), float(x), float(y)) for ti, (x, y) in zip(tr.t, z)]
    return obs, label_windows(tr.t, tr.labels, spec.dt)


def default_specs(seed: int = 0) -> dict[str, ScenarioSpec]:
    base = ScenarioSpec(kind=PERIMETER, laps=3, speed=2.0, rect_w=40.0, rect_h=20.0,
                        dt=0.11, noise_std=0.05, event_lap=2, seed=seed)
    return {
        PERIMETER: base,
        UTURN: replace(base, kind=UTURN),
        ESTOP: replace(base, kind=ESTOP),
    }
