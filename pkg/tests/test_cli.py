"""Command-line interface."""

from pathlib import Path

import pytest

from padlander.cli import load_settings, main
from padlander.evaluation import EvalReport
from padlander.policy import load_file
from padlander.sim.config import ConfigError

CHECKPOINT = str(Path(__file__).resolve().parent.parent / "checkpoints" / "seed0" / "policy.pdl")


def test_footprint(capsys):
    assert main(["footprint", "--altitude", "5"]) == 0
    out = capsys.readouterr().out
    assert "9.00 x 9.00 m" in out
    assert "72.03 m/s" in out


def test_quantize(tmp_path, capsys):
    dst = tmp_path / "q.pdl"
    assert main(["quantize", "--policy", CHECKPOINT, "--output", str(dst)]) == 0
    q = load_file(dst)
    assert len(q.to_bytes()) == dst.stat().st_size
    assert "smaller" in capsys.readouterr().out


def test_evaluate_writes_report(tmp_path):
    assert main(["evaluate", "--policy", CHECKPOINT, "--episodes", "3", "--seed", "2", "--out", str(tmp_path)]) == 0
    report = EvalReport.from_csv((tmp_path / "report.csv").read_text())
    assert len(report.records) == 3
    assert "Accuracy" in (tmp_path / "summary.txt").read_text()


def test_replay_then_stream_is_reproducible(tmp_path, capsys):
    assert main(["replay", "--policy", CHECKPOINT, "--episodes", "1", "--out", str(tmp_path)]) == 0
    events = tmp_path / "events_000.txt"
    n = sum(1 for line in events.read_text().splitlines() if line and not line.startswith("#"))
    outs = []
    for name in ("a.txt", "b.txt"):
        assert main(["stream", "--policy", CHECKPOINT, "--input", str(events), "--output", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == n
    assert (tmp_path / "trajectory.jsonl").read_text().count("\n") == n


def test_train_with_config(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[train]\nrollout_length = 32\nn_envs = 2\nminibatch_size = 32\nepochs = 1\n"
                   "checkpoint_every = 1\n\n[sim.episode]\nmax_duration = 20.0\n")
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "train", "--seed", "4", "--steps", "128", "--out", str(out)]) == 0
    assert (out / "policy.pdl").exists() and (out / "checkpoint_0002.pdl").exists()
    assert len((out / "training_curve.csv").read_text().splitlines()) == 3


def test_settings_defaults():
    s = load_settings(None)
    assert s.train.rollout_length == 2048 and s.eval.runs == 40


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[train]\nlearning_rat = 1.0\n", "[sim.arena]\nfoo = 2\n"])
def test_config_errors(tmp_path, text):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        load_settings(str(cfg))


def test_main_reports_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[bogus]\n")
    assert main(["--config", str(cfg), "footprint"]) == 2
    assert "unknown tables" in capsys.readouterr().err


def test_missing_policy_file(tmp_path, capsys):
    assert main(["quantize", "--policy", str(tmp_path / "none.pdl"), "--output", str(tmp_path / "q")]) == 2
