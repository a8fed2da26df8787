import csv
import json

import numpy as np
import pytest

from commgate import cli
from commgate.config import PRESETS, ConfigError, ExperimentConfig, preset
from commgate.experiment import (RunAborted, _seeds, audit, build_net, emit_plotdata, eval_checkpoint, run,
                                 run_evaluation, sweep)
from commgate.trainer import NonFiniteLoss, Trainer


def tiny(name, out, **kw):
    base = dict(steps=640, eval_every=1, eval_episodes=4, final_eval_episodes=8, checkpoint_every=1, out=str(out))
    base.update(kw)
    return preset(name).replace(**base)


def untrained_eval(name, episodes=10, **kw):
    cfg = preset(name).replace(**kw)
    return run_evaluation(build_net(cfg), cfg, episodes, seed=123).summary


# ---------------------------------------------------------------- presets and config

def test_named_presets():
    gs = preset("secret_ecnet_gs")
    assert gs.gate == "gs" and gs.penalty == 0.01 and gs.multitask
    assert preset("dyn_nav_random_0.3").gate_mode.p == 0.3
    pairs = preset("secret_pairs_ecnet_gs")
    assert pairs.force_open and pairs.temperature == 0.5 and pairs.penalty == 0.01 and pairs.is_pairwise
    with pytest.raises(ConfigError, match="valid names: .*secret_ecnet_gs"):
        preset("secret_magic")


def test_dyn_nav_presets_share_one_value_weight():
    for name, cfg in PRESETS.items():
        assert cfg.value_coef == (0.05 if cfg.env == "dyn_nav" else 0.5), name


def test_preset_penalty_catalog():
    lam = {n: c.penalty for n, c in PRESETS.items()}
    assert lam["secret_ecnet_reinforce"] == 0.1 and lam["secret_pairs_ecnet_reinforce"] == 0.1
    assert {lam["predprey_ecnet_reinforce_0.005"], lam["predprey_ecnet_reinforce_0.1"]} == {0.005, 0.1}
    assert {lam["predprey_ecnet_gs_0.001"], lam["predprey_ecnet_gs_0.01"]} == {0.001, 0.01}
    assert {lam["dyn_nav_ecnet_reinforce_0.2"], lam["dyn_nav_ecnet_reinforce_0.4"]} == {0.2, 0.4}
    assert lam["dyn_nav_ecnet_gs"] == 0.1
    for env in ("secret", "predprey", "secret_pairs", "dyn_nav"):
        for p in ("0.15", "0.3", "0.5"):
            assert f"{env}_random_{p}" in PRESETS
        assert f"{env}_independent" in PRESETS
    assert PRESETS["secret_ic3net_commnet"].penalty == 0.0 and PRESETS["secret_ic3net_commnet"].gate == "reinforce"


def test_preset_returns_a_copy():
    a = preset("secret_ecnet_gs")
    a.env_params["n_agents"] = 3
    assert preset("secret_ecnet_gs").env_params == {}


def test_ini_round_trip():
    cfg = preset("predprey_small_ecnet_low").replace(seed=4, gamma=0.95)
    again = ExperimentConfig.from_ini(cfg.to_ini())
    assert again == cfg
    assert again.env_params == {"n_agents": 5, "grid": 10, "max_steps": 40}


def test_ini_with_preset_key():
    cfg = ExperimentConfig.from_ini("[experiment]\npreset = secret_ecnet_gs\npenalty = 0.05\n")
    assert cfg.gate == "gs" and cfg.penalty == 0.05


@pytest.mark.parametrize("changes,field", [
    ({"arch": "lstm"}, "arch"), ({"env": "maze"}, "env"), ({"gate": "sometimes"}, "gate"),
    ({"penalty": -1.0}, "penalty"), ({"workers": 3}, "workers"), ({"gamma": 2.0}, "gamma"),
    ({"env_params": {"grid": 5}}, "env_params"), ({"pairwise": True}, "pairwise"),
])
def test_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(**changes)
    assert info.value.field == field


def test_unknown_ini_key():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        ExperimentConfig.from_ini("[experiment]\nlearning_rate = 0.1\n")


def test_default_discounts():
    assert preset("secret_ecnet_gs").effective_gamma == 0.5
    assert preset("predprey_ecnet_low").effective_gamma == 0.99
    assert preset("dyn_nav_ecnet_gs").replace(gamma=0.9).train_config().gamma == 0.9


def test_seed_streams_are_disjoint():
    a, b = _seeds(0), _seeds(1)
    assert len(set(a.values()) | set(b.values())) == 6


# ---------------------------------------------------------------- evaluation protocol

def test_always_on_comms_counts():
    s = untrained_eval("secret_baseline_commnet")
    assert s["sender_comms"]["mean"] == 76.0 and s["receiver_comms"]["mean"] == 76.0
    assert s["receiver_comms"]["std"] == 0.0
    p = untrained_eval("predprey_baseline_commnet", episodes=4)
    assert p["comms"]["mean"] == 711.0 and p["length"]["mean"] == 80.0


def test_always_off_is_silent_and_at_chance():
    s = untrained_eval("secret_independent", episodes=2000)
    assert s["comms"]["mean"] == 0.0 and s["msg_prob"]["mean"] == 0.0
    assert abs(s["receiver_return"]["mean"] - 1.0) <= 0.3


def test_role_metrics_partition_agents():
    s = untrained_eval("secret_random_0.5", episodes=20)
    total = (s["sender_return"]["mean"] + 4 * s["receiver_return"]["mean"]) / 5
    assert total == pytest.approx(s["return"]["mean"], abs=1e-12)


# ---------------------------------------------------------------- runs on disk

def test_run_writes_artifacts_and_is_reproducible(tmp_path):
    a = run(tiny("secret_baseline_commnet", tmp_path / "a"))
    b = run(tiny("secret_baseline_commnet", tmp_path / "b"))
    assert a.updates == 2 and a.env_steps == 640
    text = (tmp_path / "a" / "metrics.csv").read_text()
    assert text == (tmp_path / "b" / "metrics.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    assert [r["update"] for r in rows] == ["1", "2"] and "wall_clock" not in rows[0]
    assert float(rows[0]["receiver_comms"]) == 76.0
    timing = list(csv.DictReader((tmp_path / "a" / "timing.csv").read_text().splitlines()))
    assert len(timing) == 2 and float(timing[1]["wall_clock"]) >= 0
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["eval_episodes"] == 8 and summary["metrics"]["receiver_comms"]["mean"] == 76.0
    assert (tmp_path / "a" / "checkpoints" / "final.ckpt").exists()
    assert (tmp_path / "a" / "checkpoints" / "update_0000002.ckpt").exists()
    assert (tmp_path / "a" / "plotdata" / "return.csv").exists()
    assert ExperimentConfig.load(tmp_path / "a" / "config.ini") == tiny("secret_baseline_commnet", tmp_path / "a")


def test_audit_and_eval_reproduce_summary(tmp_path):
    out = tmp_path / "r"
    result = run(tiny("secret_ecnet_gs", out))
    assert audit(out) == []
    again = eval_checkpoint(out)
    assert again["metrics"] == result.summary["metrics"]
    summary = json.loads((out / "summary.json").read_text())
    summary["metrics"]["return"]["mean"] += 0.5
    (out / "summary.json").write_text(json.dumps(summary))
    assert any(p.startswith("return.mean") for p in audit(out))


def test_nan_loss_aborts_with_diagnostic_checkpoint(tmp_path, monkeypatch):
    def boom(self):
        raise NonFiniteLoss("non-finite loss at update 0: nan")
    monkeypatch.setattr(Trainer, "update", boom)
    with pytest.raises(RunAborted, match="diagnostic"):
        run(tiny("secret_ecnet_gs", tmp_path))
    assert (tmp_path / "checkpoints" / "diagnostic.ckpt").exists()
    assert cli.main(["run", "--preset", "secret_ecnet_gs", "--steps", "320", "--out", str(tmp_path), "--quiet"]) == 3


# ---------------------------------------------------------------- plotdata

def write_metrics(path, rows, header=("update", "env_steps", "return")):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_plotdata_single_run(tmp_path):
    write_metrics(tmp_path / "run" / "metrics.csv", [[1, 100, 0.5], [2, 200, 0.7], [3, 300, 0.9]])
    paths = emit_plotdata(tmp_path / "run" / "metrics.csv", tmp_path / "plots")
    assert {p.name for p in paths} == {"update.csv", "return.csv"}
    rows = list(csv.reader((tmp_path / "plots" / "return.csv").read_text().splitlines()))
    assert rows[0] == ["run", "env_steps", "return"] and len(rows) == 4
    assert [r[1] for r in rows[1:]] == ["100", "200", "300"]


def test_plotdata_errors(tmp_path):
    write_metrics(tmp_path / "empty.csv", [])
    with pytest.raises(ValueError, match="no metric rows"):
        emit_plotdata(tmp_path / "empty.csv", tmp_path / "p")
    write_metrics(tmp_path / "bad.csv", [[1, 0.5]], header=("update", "return"))
    with pytest.raises(ValueError, match="missing columns: env_steps"):
        emit_plotdata(tmp_path / "bad.csv", tmp_path / "p")
    (tmp_path / "nothing_here").mkdir()
    with pytest.raises(ValueError, match="no metrics.csv"):
        emit_plotdata(tmp_path / "nothing_here", tmp_path / "p")


def test_plotdata_multi_run(tmp_path):
    write_metrics(tmp_path / "runs" / "seed_0" / "metrics.csv", [[1, 100, 0.5], [2, 200, 0.7]])
    write_metrics(tmp_path / "runs" / "seed_1" / "metrics.csv", [[1, 100, 0.4], [2, 200, 0.8]])
    emit_plotdata(tmp_path / "runs", tmp_path / "plots")
    rows = list(csv.reader((tmp_path / "plots" / "return.csv").read_text().splitlines()))[1:]
    assert rows == [["seed_0", "100", "0.5"], ["seed_1", "100", "0.4"],
                    ["seed_0", "200", "0.7"], ["seed_1", "200", "0.8"]]


# ---------------------------------------------------------------- CLI

def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["presets"]) == 0
    assert "secret_ecnet_gs" in capsys.readouterr().out
    assert cli.main(["run", "--arch", "lstm", "--out", str(tmp_path)]) == 2
    assert "arch" in capsys.readouterr().err
    assert cli.main(["run", "--preset", "nope"]) == 2
    assert cli.main(["run", "--set", "bogus=1"]) == 2
    assert cli.main(["eval", str(tmp_path / "missing")]) == 1
    write_metrics(tmp_path / "e.csv", [])
    assert cli.main(["plotdata", str(tmp_path / "e.csv"), "--out", str(tmp_path / "p")]) == 1


def test_cli_run_overrides_and_audit(tmp_path, capsys):
    out = tmp_path / "r"
    code = cli.main(["run", "--preset", "secret_ecnet_gs", "--steps", "320", "--seed", "3", "--penalty", "0.02",
                     "--multitask", "off", "--set", "eval_episodes=4", "--set", "final_eval_episodes=4",
                     "--set", "env.n_agents=3", "--out", str(out), "--quiet"])
    assert code == 0
    cfg = ExperimentConfig.load(out / "config.ini")
    assert (cfg.seed, cfg.penalty, cfg.multitask, cfg.env_params) == (3, 0.02, False, {"n_agents": 3})
    assert json.loads(capsys.readouterr().out)["comms"]["std"] >= 0
    assert cli.main(["audit", str(out)]) == 0
    assert cli.main(["eval", str(out), "--episodes", "6"]) == 0
    assert json.loads((out / "eval_summary.json").read_text())["eval_episodes"] == 6


def test_sweep_pools_seeds(tmp_path):
    cfg = tiny("secret_baseline_commnet", tmp_path / "sw", steps=320, final_eval_episodes=4)
    pooled = sweep(cfg, [0, 1], jobs=2)
    assert pooled["seeds"] == [0, 1]
    assert len(pooled["metrics"]["return"]["per_seed"]) == 2
    assert pooled["metrics"]["receiver_comms"]["mean"] == 76.0
    assert (tmp_path / "sw" / "seed_1" / "summary.json").exists()
    rows = (tmp_path / "sw" / "plotdata" / "return.csv").read_text().splitlines()
    assert {r.split(",")[0] for r in rows[1:]} == {"seed_0", "seed_1"}


def test_evaluation_is_seeded():
    cfg = preset("secret_random_0.3")
    net = build_net(cfg)
    a = run_evaluation(net, cfg, 6, seed=5).summary
    b = run_evaluation(net, cfg, 6, seed=5).summary
    assert a == b
    assert np.isfinite(a["msg_prob"]["mean"])
