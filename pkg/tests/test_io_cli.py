import json
import math

import numpy as np
import pytest

from trajaware import io
from trajaware.cli import main
from trajaware.core import AbnormalitySample, LabeledWindow, Observation
from trajaware.learner import initial_bank


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipeline")
    assert main(["simulate", "--scenario", "perimeter", "--seed", "1001", "--out", str(d / "train")]) == 0
    assert main(["simulate", "--scenario", "uturn", "--seed", "4", "--out", str(d / "test")]) == 0
    assert main(["learn", str(d / "train" / "trajectory.csv"), "--out", str(d / "bank.json")]) == 0
    assert main(["detect", str(d / "bank.json"), str(d / "test" / "trajectory.csv"), "--out", str(d / "signal.csv"),
                 "--svg", str(d / "signal.svg")]) == 0
    return d


def test_trajectory_round_trip(tmp_path):
    obs = [Observation(0.0, 1.0 / 3.0, -2.5e-17), Observation(0.11, 1e10, math.pi)]
    io.write_trajectory(tmp_path / "t.csv", obs)
    assert io.read_trajectory(tmp_path / "t.csv") == obs


def test_labels_and_signal_round_trip(tmp_path):
    w = [LabeledWindow(0.0, 1.1, "linear"), LabeledWindow(1.1, 2.2, "abnormal")]
    io.write_labels(tmp_path / "l.csv", w)
    assert io.read_labels(tmp_path / "l.csv") == w
    s = [AbnormalitySample(0.11, 0.5, 1, 3, False), AbnormalitySample(0.22, 7.25, 1, -1, True)]
    io.write_signal(tmp_path / "s.csv", s)
    assert io.read_signal(tmp_path / "s.csv") == s


def test_bank_round_trip(tmp_path, perimeter_bank):
    io.save_bank(tmp_path / "b.json", perimeter_bank, {"seed": 0})
    back = io.load_bank(tmp_path / "b.json")
    assert io.bank_to_dict(back, {"seed": 0}) == io.bank_to_dict(perimeter_bank, {"seed": 0})
    for a, b in zip(back.models, perimeter_bank.models):
        assert np.array_equal(a.trans.matrices, b.trans.matrices)
        assert np.array_equal(a.centroids, b.centroids) and a.psi == b.psi


@pytest.mark.parametrize("text, where", [
    ('{"format": "other"}', "format"),
    ("{not json", "line 1"),
])
def test_bank_load_errors(tmp_path, text, where):
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(io.DataError, match=where):
        io.load_bank(p)


def test_corrupted_bank_names_the_json_path(tmp_path):
    doc = io.bank_to_dict(initial_bank(psi0=1.0))
    doc["models"][0]["super_states"][0]["centroid"] = [0, 0, 0]
    p = tmp_path / "b.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(io.DataError, match=r"models\[0\]\.super_states\[0\]\.centroid"):
        io.load_bank(p)
    del doc["models"][0]["psi"]
    doc["models"][0]["super_states"][0]["centroid"] = [0, 0, 0, 0]
    p.write_text(json.dumps(doc))
    with pytest.raises(io.DataError, match=r"models\[0\]\.psi: missing"):
        io.load_bank(p)


@pytest.mark.parametrize("body, msg", [
    ("0,0,0\n0.1,x,0\n", ":3: x is not a number"),
    ("0,0,0\n0,1,1\n", ":3: timestamps must be strictly increasing"),
    ("0,0\n", ":2: expected 3 fields"),
])
def test_csv_errors_carry_line_numbers(tmp_path, body, msg):
    p = tmp_path / "t.csv"
    p.write_text("t,x,y\n" + body)
    with pytest.raises(io.DataError, match=msg):
        io.read_trajectory(p)


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--scenario", "perimeter", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    for f in ("trajectory.csv", "labels.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_uturn_labels_have_one_abnormal_window(pipeline):
    windows = io.read_labels(pipeline / "test" / "labels.csv")
    assert sum(w.label == "abnormal" for w in windows) == 1


def test_learned_bank_has_models(pipeline):
    bank = io.load_bank(pipeline / "bank.json")
    assert len(bank.models) >= 2
    doc = json.loads((pipeline / "bank.json").read_text())
    assert doc["config"]["seed"] == 0 and doc["report"]["converged"]


def test_detect_output_shape_and_determinism(pipeline):
    rows = io.read_signal(pipeline / "signal.csv")
    assert len(rows) == len(io.read_trajectory(pipeline / "test" / "trajectory.csv")) - 1
    assert main(["detect", str(pipeline / "bank.json"), str(pipeline / "test" / "trajectory.csv"),
                 "--out", str(pipeline / "again.csv")]) == 0
    assert (pipeline / "again.csv").read_bytes() == (pipeline / "signal.csv").read_bytes()
    assert (pipeline / "again.meta.json").read_bytes() == (pipeline / "signal.meta.json").read_bytes()
    assert (pipeline / "signal.svg").read_text().startswith("<svg")


def test_eval_report(pipeline, capsys):
    out = pipeline / "report.json"
    assert main(["eval", str(pipeline / "signal.csv"), str(pipeline / "test" / "labels.csv"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["auc"] >= 0.90 and rep["recall"] == 1.0
    assert rep["particles"] == 50
    assert "AUC" in capsys.readouterr().out


def test_eval_perfect_and_single_class(tmp_path, capsys):
    t = np.round(np.arange(0, 10, 0.1), 10)
    inside = (t >= 4) & (t < 6)
    io.write_signal(tmp_path / "s.csv", [AbnormalitySample(a, 5.0 if b else 0.0, 1, 0, False) for a, b in zip(t, inside)])
    io.write_labels(tmp_path / "l.csv", [LabeledWindow(0, 4, "linear"), LabeledWindow(4, 6, "abnormal"),
                                         LabeledWindow(6, 10, "linear")])
    io.write_labels(tmp_path / "n.csv", [LabeledWindow(0, 10, "linear")])
    assert main(["eval", str(tmp_path / "s.csv"), str(tmp_path / "l.csv"), "--threshold", "1",
                 "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["auc"] == 1.0
    assert main(["eval", str(tmp_path / "s.csv"), str(tmp_path / "n.csv"), "--threshold", "1",
                 "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["auc"] is None
    assert "undefined" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--bogus"]) == 1
    assert main(["simulate", "--out", str(tmp_path), "--corner-radius", "50"]) == 1
    assert "infeasible" in capsys.readouterr().err
    (tmp_path / "t.csv").write_text("t,x,y\n0,0,oops\n")
    assert main(["learn", str(tmp_path / "t.csv"), "--out", str(tmp_path / "b.json")]) == 2
    assert "t.csv:2" in capsys.readouterr().err
    (tmp_path / "b.json").write_text("{}")
    assert main(["detect", str(tmp_path / "b.json"), str(tmp_path / "t.csv"), "--out", str(tmp_path / "s.csv")]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "sim.conf"
    cfg.write_text("# defaults\nscenario = estop\nlaps = 2\nseed = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--scenario", "estop", "--laps", "2", "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    # flags on the command line override the file
    assert main(["simulate", "--config", str(cfg), "--laps", "3", "--out", str(tmp_path / "c")]) == 0
    assert len(io.read_trajectory(tmp_path / "c" / "trajectory.csv")) > len(io.read_trajectory(tmp_path / "a" / "trajectory.csv"))
    cfg.write_text("colour = red\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1
