import json

import pytest

from coopconv.cli import main


def test_lemma1_subcommand_exit_zero(capsys):
    assert main(["lemma1", "--env", "bandit", "--m", "4"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["all_ok"]
    assert report["contexts"][0]["marginal"][0] == 0.5


def test_config_error_exit_two(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"env": "bandit", "lambda": 3.0}))
    assert main(["train-ego", "--config", str(cfg)]) == 2
    assert "config error" in capsys.readouterr().err


def test_plot_data_missing_dir_exit_three(tmp_path, capsys):
    assert main(["plot-data", "--run-dir", str(tmp_path / "nope")]) == 3


def test_plot_data_empty_dir_exit_three(tmp_path, capsys):
    empty = tmp_path / "runs"
    empty.mkdir()
    assert main(["plot-data", "--run-dir", str(empty)]) == 3
    assert "no finished runs" in capsys.readouterr().err


def test_train_ego_and_plot_data_roundtrip(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COOPCONV_RUNS", str(tmp_path / "runs"))
    rc = main(["train-ego", "--env", "bandit", "--method", "ours",
               "--lambda", "0.5", "--seed", "0", "--m", "2",
               "--timesteps", "1024", "--hand-designed-only"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["checkpoint"].endswith("policy.ckpt")

    rc = main(["plot-data", "--run-dir", str(tmp_path / "runs")])
    assert rc == 0
    fig_dir = capsys.readouterr().out.strip()
    merged = open(f"{fig_dir}/all_metrics.csv").read()
    assert merged.startswith("run_id,method,env,lambda,seed,phase")
    first = merged

    rc = main(["plot-data", "--run-dir", str(tmp_path / "runs")])
    assert rc == 0
    capsys.readouterr()
    assert open(f"{fig_dir}/all_metrics.csv").read() == first   # deterministic


def test_train_ego_is_resumable(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COOPCONV_RUNS", str(tmp_path / "runs"))
    args = ["train-ego", "--env", "bandit", "--method", "baseline-modular",
            "--seed", "1", "--m", "2", "--timesteps", "512",
            "--hand-designed-only"]
    assert main(args) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(args) == 0                       # second call loads the cache
    second = json.loads(capsys.readouterr().out)
    assert first == second


def test_oracle_marginal_subcommand(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COOPCONV_RUNS", str(tmp_path / "runs"))
    main(["train-ego", "--env", "bandit", "--method", "ours", "--seed", "0",
          "--m", "4", "--timesteps", "1024", "--hand-designed-only"])
    ckpt_path = json.loads(capsys.readouterr().out)["checkpoint"]
    assert main(["oracle-marginal", "--checkpoint", ckpt_path, "--m", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0.0 <= out["mean_D"] <= 2.0
