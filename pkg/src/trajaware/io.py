"""File formats: trajectory / label / signal CSVs and the model-bank JSON.

Floats are written with ``repr`` so every file round-trips losslessly and
identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import DUMMY, LABELS, AbnormalitySample, LabeledWindow, NoiseParams, Observation, SlModel, SuperState, \
    TransitionTensor, TrajawareError
from .learner import FitReport, ModelBank

BANK_FORMAT = "trajaware-model-bank"
BANK_VERSION = 1

TRAJECTORY_HEADER = ("t", "x", "y")
LABELS_HEADER = ("start", "end", "label")
SIGNAL_HEADER = ("t", "signal", "model_id", "super_state_id", "is_dummy")


class DataError(TrajawareError):
    """Malformed input file; the message names the file and location."""


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise DataError(f"{path}: empty file")
        if tuple(c.strip() for c in first) != header:
            raise DataError(f"{path}:1: expected header {','.join(header)!r}, got {','.join(first)!r}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _float(path, line, value, name):
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"{path}:{line}: {name} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise DataError(f"{path}:{line}: {name} must be finite")
    return x


def _int(path, line, value, name):
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{path}:{line}: {name} is not an integer: {value!r}") from None


# ---------------------------------------------------------------- trajectories

def write_trajectory(path, observations):
    _write_rows(path, TRAJECTORY_HEADER, ((_fmt(o.t), _fmt(o.x), _fmt(o.y)) for o in observations))


def read_trajectory(path) -> list[Observation]:
    out = []
    for line, (t, x, y) in _read_rows(path, TRAJECTORY_HEADER):
        obs = Observation(_float(path, line, t, "t"), _float(path, line, x, "x"), _float(path, line, y, "y"))
        if out and not obs.t > out[-1].t:
            raise DataError(f"{path}:{line}: timestamps must be strictly increasing")
        out.append(obs)
    return out


def write_labels(path, windows):
    _write_rows(path, LABELS_HEADER, ((_fmt(w.start), _fmt(w.end), w.label) for w in windows))


def read_labels(path) -> list[LabeledWindow]:
    out = []
    for line, (start, end, label) in _read_rows(path, LABELS_HEADER):
        w = LabeledWindow(_float(path, line, start, "start"), _float(path, line, end, "end"), label.strip())
        if w.label not in LABELS:
            raise DataError(f"{path}:{line}: unknown label {w.label!r}")
        if not w.start < w.end:
            raise DataError(f"{path}:{line}: start must be before end")
        if out and w.start < out[-1].end:
            raise DataError(f"{path}:{line}: windows overlap")
        out.append(w)
    return out


def write_signal(path, samples):
    _write_rows(path, SIGNAL_HEADER, (
        (_fmt(s.t), _fmt(s.signal), str(int(s.model_id)), str(int(s.super_state_id)), str(int(bool(s.is_dummy))))
        for s in samples))


def read_signal(path) -> list[AbnormalitySample]:
    out = []
    for line, (t, sig, m, ss, dummy) in _read_rows(path, SIGNAL_HEADER):
        value = _float(path, line, sig, "signal")
        if value < 0:
            raise DataError(f"{path}:{line}: signal must be non-negative")
        flag = _int(path, line, dummy, "is_dummy")
        state = _int(path, line, ss, "super_state_id")
        if flag not in (0, 1) or bool(flag) != (state == DUMMY):
            raise DataError(f"{path}:{line}: is_dummy must be 1 exactly when super_state_id is {DUMMY}")
        out.append(AbnormalitySample(_float(path, line, t, "t"), value, _int(path, line, m, "model_id"), state,
                                     bool(flag)))
    return out


# ---------------------------------------------------------------- model bank

def _matrix(a):
    return np.asarray(a, dtype=float).tolist()


def bank_to_dict(bank: ModelBank, config: dict | None = None) -> dict:
    models = []
    for m in bank.models:
        models.append({
            "id": m.id,
            "psi": m.psi,
            "alpha": m.alpha,
            "beta": m.beta,
            "super_states": [{
                "id": s.id,
                "centroid": _matrix(s.centroid),
                "control_u": _matrix(s.control_u),
                "member_count": s.member_count,
                "spread": _matrix(s.spread),
            } for s in m.super_states],
            "transitions": {
                "bins": [None if math.isinf(b) else b for b in m.trans.bins],
                "matrices": _matrix(m.trans.matrices),
            },
        })
    report = None
    if bank.report is not None:
        r = bank.report
        report = {"iterations": r.iterations, "converged": r.converged,
                  "abnormal_fraction": list(r.abnormal_fraction), "unexplained_fraction": r.unexplained_fraction}
    return {
        "format": BANK_FORMAT,
        "version": BANK_VERSION,
        "noise": {"q": _matrix(bank.noise.q), "r": _matrix(bank.noise.r), "dt_default": bank.noise.dt_default},
        "psi0": bank.psi0,
        "models": models,
        "report": report,
        "config": config or {},
    }


def save_bank(path, bank: ModelBank, config: dict | None = None):
    text = json.dumps(bank_to_dict(bank, config), indent=1, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


class _Reader:
    """Field access that reports the JSON path of whatever is wrong."""

    def __init__(self, source):
        self.source = source

    def fail(self, where, msg):
        raise DataError(f"{self.source}: {where}: {msg}")

    def get(self, obj, key, where):
        if not isinstance(obj, dict):
            self.fail(where, "expected an object")
        if key not in obj:
            self.fail(f"{where}.{key}" if where else key, "missing")
        return obj[key]

    def number(self, obj, key, where):
        v = self.get(obj, key, where)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where}.{key}", f"expected a number, got {type(v).__name__}")
        return float(v)

    def integer(self, obj, key, where):
        v = self.get(obj, key, where)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{where}.{key}", "expected an integer")
        return v

    def array(self, obj, key, where, shape):
        v = self.get(obj, key, where)
        try:
            a = np.array(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(f"{where}.{key}", "expected a numeric array")
        if shape is not None and a.shape != shape:
            self.fail(f"{where}.{key}", f"expected shape {shape}, got {a.shape}")
        return a


def bank_from_dict(doc, source="<bank>") -> ModelBank:
    rd = _Reader(source)
    if rd.get(doc, "format", "") != BANK_FORMAT:
        rd.fail("format", f"expected {BANK_FORMAT!r}")
    version = rd.get(doc, "version", "")
    if version != BANK_VERSION:
        rd.fail("version", f"unsupported version {version!r} (expected {BANK_VERSION})")
    nd = rd.get(doc, "noise", "")
    try:
        noise = NoiseParams(q=rd.array(nd, "q", "noise", (4, 4)), r=rd.array(nd, "r", "noise", (2, 2)),
                            dt_default=rd.number(nd, "dt_default", "noise"))
    except (ValueError, TrajawareError) as exc:
        if isinstance(exc, DataError):
            raise
        rd.fail("noise", str(exc))
    models = []
    mlist = rd.get(doc, "models", "")
    if not isinstance(mlist, list) or not mlist:
        rd.fail("models", "expected a non-empty list")
    for i, md in enumerate(mlist):
        where = f"models[{i}]"
        states = []
        slist = rd.get(md, "super_states", where)
        if not isinstance(slist, list) or not slist:
            rd.fail(f"{where}.super_states", "expected a non-empty list")
        for j, sd in enumerate(slist):
            sw = f"{where}.super_states[{j}]"
            try:
                states.append(SuperState(
                    id=rd.integer(sd, "id", sw),
                    centroid=rd.array(sd, "centroid", sw, (4,)),
                    control_u=rd.array(sd, "control_u", sw, (2,)),
                    member_count=rd.integer(sd, "member_count", sw),
                    spread=rd.array(sd, "spread", sw, (4, 4)),
                ))
            except DataError:
                raise
            except (ValueError, TrajawareError) as exc:
                rd.fail(sw, str(exc))
        td = rd.get(md, "transitions", where)
        tw = f"{where}.transitions"
        bins = rd.get(td, "bins", tw)
        if not isinstance(bins, list) or not all(b is None or isinstance(b, (int, float)) for b in bins):
            rd.fail(f"{tw}.bins", "expected a list of numbers (null for infinity)")
        bins = tuple(math.inf if b is None else float(b) for b in bins)
        mats = rd.array(td, "matrices", tw, (len(bins), len(states), len(states)))
        try:
            trans = TransitionTensor(bins=bins, matrices=mats)
            models.append(SlModel(id=rd.integer(md, "id", where), super_states=tuple(states),
                                  psi=rd.number(md, "psi", where), trans=trans,
                                  alpha=rd.number(md, "alpha", where), beta=rd.number(md, "beta", where)))
        except DataError:
            raise
        except (ValueError, TrajawareError) as exc:
            rd.fail(where, str(exc))
    report = None
    rep = doc.get("report")
    if rep is not None:
        report = FitReport(iterations=rd.integer(rep, "iterations", "report"),
                           converged=bool(rd.get(rep, "converged", "report")),
                           abnormal_fraction=tuple(float(x) for x in rd.get(rep, "abnormal_fraction", "report")),
                           unexplained_fraction=rd.number(rep, "unexplained_fraction", "report"))
    try:
        return ModelBank(models=tuple(models), noise=noise, psi0=rd.number(doc, "psi0", ""), report=report)
    except DataError:
        raise
    except (ValueError, TrajawareError) as exc:
        rd.fail("models", str(exc))


def load_bank(path) -> ModelBank:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return bank_from_dict(doc, str(path))


# ---------------------------------------------------------------- plotting

def signal_svg(samples, threshold=None, width=800, height=240) -> str:
    """Signal-over-time polyline with an optional threshold line."""
    t = np.array([s.t for s in samples], dtype=float)
    y = np.array([s.signal for s in samples], dtype=float)
    pad = 30
    if t.size == 0:
        t, y = np.zeros(1), np.zeros(1)
    t0, t1 = float(t.min()), float(t.max()) if t.max() > t.min() else float(t.min()) + 1.0
    top = max(float(y.max()), threshold or 0.0) or 1.0
    sx = (width - 2 * pad) / (t1 - t0)
    sy = (height - 2 * pad) / top

    def px(tt, yy):
        return f"{pad + (tt - t0) * sx:.2f},{height - pad - yy * sy:.2f}"

    pts = " ".join(px(a, b) for a, b in zip(t, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>',
    ]
    if threshold is not None:
        yy = height - pad - threshold * sy
        parts.append(f'<line x1="{pad}" y1="{yy:.2f}" x2="{width - pad}" y2="{yy:.2f}" stroke="red" '
                     f'stroke-dasharray="4 3"/>')
    parts.append(f'<text x="{pad}" y="{pad - 10}" font-size="12">abnormality signal, t = {t0:.1f} to {t1:.1f} s</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
