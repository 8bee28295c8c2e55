"""Command-line interface: ``trajaware simulate|learn|detect|eval``.

Exit codes: 0 success (warnings included), 1 usage error, 2 data error.

Every subcommand also accepts ``--config FILE``: a flat ``key = value``
file (``#`` comments) whose keys are the long flag names with dashes or
underscores; command-line flags override it.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .core import TrajawareError
from .learner import LearnConfig, fit_normality
from .metrics import SingleClassError, default_threshold, event_detection, roc_auc, samples_to_binary
from .mjpf import SIGNAL_NORMS, MjpfConfig, run
from .simulator import KINDS, InfeasibleScenario, ScenarioSpec, generate
from .som import SomConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file into a dict of strings."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, path):
    cfg = read_config(path)
    actions = {a.dest: a for a in parser._actions}
    for key, value in cfg.items():
        if key not in actions or key in ("help", "config") or not actions[key].option_strings:
            raise UsageError(f"{path}: unknown key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            parser.set_defaults(**{key: value.lower() in ("1", "true", "yes", "on")})
            continue
        conv = act.type or str
        try:
            parser.set_defaults(**{key: conv(value)})
        except (TypeError, ValueError):
            raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
        if act.choices is not None and conv(value) not in act.choices:
            raise UsageError(f"{path}: {key} must be one of {', '.join(map(str, act.choices))}")


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    spec = ScenarioSpec(kind=args.scenario, laps=args.laps, speed=args.speed, rect_w=args.rect_w,
                        rect_h=args.rect_h, corner_radius=args.corner_radius, dt=args.dt,
                        noise_std=args.noise_std, event_lap=args.event_lap, stop_duration=args.stop_duration,
                        seed=args.seed)
    try:
        obs, windows = generate(spec)
    except InfeasibleScenario as exc:
        raise UsageError(f"infeasible scenario: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory(out / "trajectory.csv", obs)
    io.write_labels(out / "labels.csv", windows)
    print(f"wrote {len(obs)} observations and {len(windows)} label windows to {out}")
    return EXIT_OK


def _learn_config(args) -> LearnConfig:
    som = SomConfig(rows=args.som_rows, cols=args.som_cols, epochs=args.epochs, seed=args.seed,
                    alpha=args.alpha, beta=1.0 - args.alpha)
    return LearnConfig(som=som, smoothing=args.smoothing, max_iterations=args.max_iterations, psi0=args.psi0,
                       gap_min=args.gap_min, min_segment=args.min_segment)


def cmd_learn(args) -> int:
    series = [io.read_trajectory(p) for p in args.train_csv]
    try:
        cfg = _learn_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for p, s in zip(args.train_csv, series):
        if len(s) < 2:
            raise io.DataError(f"{p}: need at least two observations")
    bank = fit_normality(series if len(series) > 1 else series[0], cfg)
    echo = {
        "train_csv": [Path(p).name for p in args.train_csv],
        "som_rows": args.som_rows, "som_cols": args.som_cols, "epochs": args.epochs, "seed": args.seed,
        "alpha": args.alpha, "smoothing": args.smoothing, "max_iterations": args.max_iterations,
        "psi0": args.psi0, "gap_min": args.gap_min, "min_segment": args.min_segment,
    }
    io.save_bank(args.out, bank, echo)
    rep = bank.report
    if not rep.converged:
        print(f"warning: not converged after {rep.iterations} iterations; "
              f"unexplained fraction {rep.unexplained_fraction:.4f}", file=sys.stderr)
    print(f"learned {len(bank.learned)} model(s) in {rep.iterations} iteration(s); wrote {args.out}")
    return EXIT_OK


def _meta_path(signal_path) -> Path:
    p = Path(signal_path)
    return p.with_name(p.stem + ".meta.json")


def cmd_detect(args) -> int:
    bank = io.load_bank(args.bank)
    series = io.read_trajectory(args.test_csv)
    if len(series) < 2:
        raise io.DataError(f"{args.test_csv}: need at least two observations")
    dt = np.diff([o.t for o in series])
    if abs(float(np.median(dt)) - bank.noise.dt_default) > 0.2 * bank.noise.dt_default:
        raise io.DataError(f"{args.test_csv}: sampling step {float(np.median(dt))!r} s does not match the bank's "
                           f"{bank.noise.dt_default!r} s")
    try:
        cfg = MjpfConfig(n_particles=args.particles, seed=args.seed, signal_norm=args.signal_norm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    threshold = args.threshold
    if threshold is None:
        threshold = default_threshold(bank) if bank.learned else bank.psi0
    start = time.perf_counter()
    samples = run(bank, series, cfg)
    elapsed = time.perf_counter() - start
    io.write_signal(args.out, samples)
    meta = {"particles": cfg.n_particles, "seed": cfg.seed, "signal_norm": cfg.signal_norm,
            "threshold": threshold, "steps": len(samples)}
    if args.record_timing:
        meta["seconds_per_step"] = elapsed / max(len(samples), 1)
    _meta_path(args.out).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if args.svg:
        Path(args.svg).write_text(io.signal_svg(samples, threshold), encoding="utf-8")
    print(f"wrote {len(samples)} signal rows to {args.out}")
    return EXIT_OK


def _nan_to_none(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def cmd_eval(args) -> int:
    samples = io.read_signal(args.signal_csv)
    windows = io.read_labels(args.labels_csv)
    meta = {}
    mp = _meta_path(args.signal_csv)
    if mp.exists():
        try:
            meta = json.loads(mp.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise io.DataError(f"{mp}: invalid JSON: {exc.msg}") from None
    threshold = args.threshold if args.threshold is not None else meta.get("threshold")
    if threshold is None:
        raise UsageError("no threshold: pass --threshold or keep the detect metadata next to the signal file")
    try:
        scores, labels = samples_to_binary(samples, windows)
    except ValueError as exc:
        raise io.DataError(f"{args.signal_csv}: {exc}") from None
    try:
        auc = roc_auc(scores, labels)
    except SingleClassError:
        auc = math.nan
    ev = event_detection(samples, windows, threshold)
    report = {
        "auc": _nan_to_none(auc),
        "recall": _nan_to_none(ev.recall),
        "precision": _nan_to_none(ev.precision),
        "mean_latency_s": _nan_to_none(ev.mean_latency),
        "false_events": ev.false_events,
        "events": ev.n_events,
        "threshold": threshold,
        "particles": meta.get("particles"),
        "seconds_per_step": meta.get("seconds_per_step"),
        "samples": len(samples),
    }
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")

    def show(x, fmt="{:.4f}"):
        return "undefined" if x is None else fmt.format(x)

    print(f"AUC             {show(report['auc'])}")
    print(f"recall          {show(report['recall'])}")
    print(f"precision       {show(report['precision'])}")
    print(f"mean latency    {show(report['mean_latency_s'], '{:.3f} s')}")
    print(f"false events    {report['false_events']}")
    print(f"particles       {show(report['particles'], '{}')}")
    print(f"time per step   {show(report['seconds_per_step'], '{:.6f} s')}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajaware", description="Learn normal trajectory dynamics and score abnormal behaviour.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = ScenarioSpec()
    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    s.add_argument("--scenario", choices=KINDS, default="perimeter")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--laps", type=int, default=d.laps)
    s.add_argument("--speed", type=float, default=d.speed)
    s.add_argument("--rect-w", type=float, default=d.rect_w)
    s.add_argument("--rect-h", type=float, default=d.rect_h)
    s.add_argument("--corner-radius", type=float, default=d.corner_radius)
    s.add_argument("--dt", type=float, default=d.dt)
    s.add_argument("--noise-std", type=float, default=d.noise_std)
    s.add_argument("--event-lap", type=int, default=d.event_lap)
    s.add_argument("--stop-duration", type=float, default=d.stop_duration)
    s.set_defaults(func=cmd_simulate)

    lc = LearnConfig()
    l_ = sub.add_parser("learn", help="fit a model bank to training trajectories")
    l_.add_argument("train_csv", nargs="+")
    l_.add_argument("--out", required=True)
    l_.add_argument("--som-rows", type=int, default=lc.som.rows)
    l_.add_argument("--som-cols", type=int, default=lc.som.cols)
    l_.add_argument("--epochs", type=int, default=lc.som.epochs)
    l_.add_argument("--seed", type=int, default=lc.som.seed)
    l_.add_argument("--alpha", type=float, default=lc.som.alpha)
    l_.add_argument("--smoothing", type=float, default=lc.smoothing)
    l_.add_argument("--max-iterations", type=int, default=lc.max_iterations)
    l_.add_argument("--psi0", type=float, default=None)
    l_.add_argument("--gap-min", type=int, default=lc.gap_min)
    l_.add_argument("--min-segment", type=int, default=lc.min_segment)
    l_.set_defaults(func=cmd_learn)

    mc = MjpfConfig()
    t = sub.add_parser("detect", help="run the particle filter and write the abnormality signal")
    t.add_argument("bank")
    t.add_argument("test_csv")
    t.add_argument("--out", required=True)
    t.add_argument("--particles", type=int, default=mc.n_particles)
    t.add_argument("--seed", type=int, default=mc.seed)
    t.add_argument("--threshold", type=float, default=None,
                   help="detection threshold (default: largest learned psi)")
    t.add_argument("--signal-norm", choices=SIGNAL_NORMS, default=mc.signal_norm)
    t.add_argument("--svg", default=None, help="also write a signal plot")
    t.add_argument("--record-timing", action="store_true",
                   help="store wall time per step in the metadata (makes output non-reproducible)")
    t.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score a signal against ground-truth labels")
    e.add_argument("signal_csv")
    e.add_argument("labels_csv")
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--out", default=None, help="JSON report path")
    e.set_defaults(func=cmd_eval)

    for sp in (s, l_, t, e):
        sp.add_argument("--config", default=None, help="flat key = value defaults file")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if getattr(pre, "config", None):
            sub = parser._subparsers._group_actions[0].choices[pre.command]
            _apply_config(sub, pre.config)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        # argparse exits on bad flags and --help; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"trajaware: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrajawareError, ValueError) as exc:
        print(f"trajaware: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
