import json

import pytest

from sail import runs
from sail.cli import main
from sail.metrics import read_csv

TINY = {
    "idm_steps": 10, "idm_batch": 16, "bc_steps": 10, "bc_batch": 16, "adversarial_steps": 1, "rollout_episodes": 1,
    "random_episodes": 2, "window": 8, "replay_k": 1, "accuracy_windows": 2, "eval_episodes": 2, "epochs": 2,
}


@pytest.fixture(scope="module")
def teacher(tmp_path_factory):
    path = tmp_path_factory.mktemp("teacher") / "mc.jsonl"
    assert main(["gen-experts", "--env", "MountainCar-v0", "--episodes", "3", "--out", str(path), "--seed", "1"]) == 0
    return path


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def train_args(config, teacher, out, *extra):
    return ["train", "--config", str(config), "--env", "MountainCar-v0", "--teacher", str(teacher), "--out", str(out),
            *extra]


def test_gen_experts_is_reproducible(teacher, tmp_path):
    again = tmp_path / "again.jsonl"
    assert main(["gen-experts", "--env", "MountainCar-v0", "--episodes", "3", "--out", str(again), "--seed", "1"]) == 0
    assert again.read_bytes() == teacher.read_bytes()
    assert len(teacher.read_text().splitlines()) == 3


def test_gen_experts_impossible_bar_is_a_runtime_error(tmp_path):
    code = main(["gen-experts", "--env", "MountainCar-v0", "--episodes", "1", "--min-return", "-5", "--out",
                 str(tmp_path / "x.jsonl")])
    assert code == 4


def test_train_writes_the_run_layout(config, teacher, tmp_path):
    out = tmp_path / "run"
    assert main(train_args(config, teacher, out, "--epochs", "1")) == 0
    assert len(read_csv(out / "metrics.csv")) == 1
    assert (out / "bundle" / "policy.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["format"] == runs.MANIFEST_FORMAT
    assert manifest["inputs"][str(teacher)] == runs.blob_sha1(teacher.read_bytes())
    assert (read_csv(out / "eval.csv")[0]["algorithm"]) == "SAIL"


def test_flags_override_the_config_file(config, teacher, tmp_path):
    out = tmp_path / "run"
    assert main(train_args(config, teacher, out)) == 0
    assert len(read_csv(out / "metrics.csv")) == TINY["epochs"]
    assert main(train_args(config, teacher, tmp_path / "one", "--epochs", "1")) == 0
    assert len(read_csv(tmp_path / "one" / "metrics.csv")) == 1


def test_train_is_deterministic_and_replayable(config, teacher, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(train_args(config, teacher, a)) == 0
    assert main(train_args(config, teacher, b)) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert main(["train", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert (a / "metrics.csv").read_bytes() == (c / "metrics.csv").read_bytes()


def test_multiple_seeds_get_their_own_directories(config, teacher, tmp_path):
    out = tmp_path / "seeds"
    assert main(train_args(config, teacher, out, "--epochs", "1", "--seeds", "0,1")) == 0
    assert (out / "seed-0" / "metrics.csv").exists() and (out / "seed-1" / "metrics.csv").exists()
    assert [r["seed"] for r in read_csv(out / "summary.csv")] == ["0", "1"]


def test_unknown_config_key_exits_2(teacher, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learnign_rate": 0.1}))
    assert main(train_args(bad, teacher, tmp_path / "out")) == 2
    assert "learnign_rate" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_missing_settings_exit_2(config, tmp_path):
    assert main(["train", "--config", str(config), "--env", "MountainCar-v0"]) == 2


def test_missing_teacher_exits_3_without_output(config, tmp_path):
    out = tmp_path / "out"
    assert main(train_args(config, tmp_path / "absent.jsonl", out)) == 3
    assert not out.exists()


def test_malformed_config_exits_3(teacher, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(train_args(bad, teacher, tmp_path / "out")) == 3


def test_runtime_failure_leaves_nothing_behind(config, teacher, tmp_path, monkeypatch):
    def explode(*args, **kwargs):
        raise FloatingPointError("overflow in test")

    monkeypatch.setattr(runs, "train", explode)
    out = tmp_path / "out"
    assert main(train_args(config, teacher, out)) == 4
    assert list(tmp_path.iterdir()) == [config]


def test_invalid_log_level_exits_2(config, teacher, tmp_path, monkeypatch):
    monkeypatch.setenv("SAIL_LOG", "LOUD")
    assert main(train_args(config, teacher, tmp_path / "out")) == 2


def test_evaluate_random_defaults_to_100_episodes(tmp_path, capsys):
    out = tmp_path / "eval.csv"
    assert main(["evaluate", "random", "--env", "MountainCar-v0", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert float(row["aer_mean"]) == -200.0 and float(row["aer_std"]) == 0.0
    assert "Random MountainCar-v0: AER -200.00" in capsys.readouterr().out


def test_evaluate_a_trained_bundle(config, teacher, tmp_path):
    run = tmp_path / "run"
    assert main(train_args(config, teacher, run, "--epochs", "1")) == 0
    out = tmp_path / "eval.csv"
    assert main(["evaluate", str(run / "bundle"), "--episodes", "2", "--teacher", str(teacher), "--out", str(out)]) == 0
    assert read_csv(out)[0]["env"] == "MountainCar-v0"
    assert main(["evaluate", str(run / "bundle"), "--env", "CartPole-v1", "--episodes", "1"]) == 3


def test_evaluate_corrupt_bundle_exits_3(config, teacher, tmp_path):
    run = tmp_path / "run"
    assert main(train_args(config, teacher, run, "--epochs", "1")) == 0
    (run / "bundle" / "policy.json").write_text("{truncated")
    assert main(["evaluate", str(run / "bundle"), "--episodes", "1"]) == 3
    assert main(["evaluate", str(tmp_path / "nowhere"), "--episodes", "1"]) == 3


def test_evaluate_random_needs_env():
    assert main(["evaluate", "random"]) == 2


def test_sweep_needs_enough_trajectories(config, teacher, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config), "--env", "MountainCar-v0", "--teacher", str(teacher), "--out",
                 str(out)]) == 3
    assert not out.exists()


def test_sweep_writes_one_row_per_count(config, teacher, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config), "--env", "MountainCar-v0", "--teacher", str(teacher), "--out",
                 str(out), "--counts", "1,3", "--epochs", "1"]) == 0
    rows = read_csv(out / "table2.csv")
    assert [r["n_trajectories"] for r in rows] == ["1", "3"]
    assert (out / "n-1" / "bundle").is_dir()


def test_compare_writes_tables(teacher, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**TINY, "epochs": 1, "bc_steps": 10}))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--env", "MountainCar-v0", "--teacher", str(teacher), "--out",
                 str(out), "--ablation"]) == 0
    algorithms = [r["algorithm"] for r in read_csv(out / "table1.csv")]
    assert algorithms[:4] == ["Random", "BC", "SAIL", "SAIL-ablation"]
    assert any(a.endswith("(paper-reported)") for a in algorithms)
    assert len(read_csv(out / "table3.csv")) == 1


def test_bad_flag_value_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["train", "--seeds", "a,b"])
    assert err.value.code == 2
