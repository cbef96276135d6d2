import subprocess
import sys

import numpy as np
import pytest

from darn.cli import run
from darn.config import ConfigError, parse_config
from darn.data import load_image, save_image


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# -- config ---------------------------------------------------------------------------

def test_empty_config_gives_defaults(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# nothing here\n\n")
    cfg = parse_config(f, env={})
    assert cfg["train.lambda"] == 1e-4 and cfg["train.warmup"] == 400 and cfg["train.disc_per_gen"] == 3
    tc = cfg.train_config()
    assert tc.lam == 1e-4 and tc.warmup_iters == 400


def test_priority_flag_file_env_default(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("seed = 5\ntrain.lambda = 0.01  # inline comment\n")
    assert parse_config(None, env={"DARN_SEED": "9"})["seed"] == 9
    assert parse_config(f, env={"DARN_SEED": "9"})["seed"] == 5
    cfg = parse_config(f, {"seed": "1", "train.lambda": "0"}, env={"DARN_SEED": "9"})
    assert cfg["seed"] == 1 and cfg["train.lambda"] == 0.0
    assert cfg.train_config().lam == 0.0
    assert parse_config(None, env={})["seed"] == 0


def test_unknown_key_cites_line(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("seed = 1\n\ntrain.lamda = 0.1\n")
    with pytest.raises(ConfigError, match=r":3: unknown key 'train.lamda'"):
        parse_config(f, env={})


def test_type_and_constraint_errors(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("train.iterations = many\n")
    with pytest.raises(ConfigError, match=r":1: train.iterations: expected int"):
        parse_config(f, env={})
    f.write_text("train.lambda = -1\n")
    with pytest.raises(ConfigError, match="train.lambda"):
        parse_config(f, env={})
    f.write_text("just words\n")
    with pytest.raises(ConfigError, match=":1:"):
        parse_config(f, env={})


def test_dump_roundtrip(tmp_path):
    cfg = parse_config(None, {"train.lambda": "0.003", "model.target": "albedo"}, env={})
    f = tmp_path / "dump.txt"
    cfg.write(f)
    again = parse_config(f, env={})
    assert again.values == cfg.values


# -- commands -------------------------------------------------------------------------

def test_config_dump_command(capsys):
    assert run(["config", "dump", "--lambda", "0"]) == 0
    out = capsys.readouterr().out
    assert "train.lambda = 0.0" in out


def test_usage_errors_exit_1(capsys):
    assert run([]) == 1
    assert run(["nonsense"]) == 1
    assert run(["config", "dump", "--set", "bogus=1"]) == 1


def test_synth_is_deterministic(tmp_path):
    args = ["synth", "--seed", "7", "--count", "20", "--size", "16"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a == b
    assert "manifest.txt" in a and "split_train.txt" in a and "run_config.txt" in a


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, model = root / "data", root / "model"
    assert run(["synth", "--out", str(data), "--seed", "3", "--count", "20", "--size", "20"]) == 0
    assert run(["train", "--data", str(data), "--out", str(model), "--iterations", "6", "--warmup", "2",
                "--width", "4", "--blocks", "1", "--crop-size", "12", "--batch-size", "2"]) == 0
    return root


def test_train_outputs(trained):
    model = trained / "model"
    assert (model / "model.darn").exists() and (model / "train_log.csv").exists()
    assert "train.iterations = 6" in (model / "run_config.txt").read_text()


def test_eval_and_two_fold(trained, tmp_path):
    data, ck = trained / "data", trained / "model" / "model.darn"
    assert run(["eval", "--checkpoint", str(ck), "--data", str(data), "--out", str(tmp_path / "m.csv")]) == 0
    assert (tmp_path / "m.csv").read_text().splitlines()[-1].startswith("mean,")
    assert run(["eval", "--checkpoint", str(ck), "--checkpoint2", str(ck), "--data", str(data),
                "--out", str(tmp_path / "m2.csv")]) == 0


def test_decompose_recomposes(trained, tmp_path):
    img = np.random.default_rng(0).uniform(0.05, 0.9, (12, 14, 3))
    save_image(tmp_path / "in.png", img)
    assert run(["decompose", "--checkpoint", str(trained / "model" / "model.darn"), str(tmp_path / "in.png"),
                "--out-dir", str(tmp_path / "out")]) == 0
    a = load_image(tmp_path / "out" / "in_albedo.png")
    s = load_image(tmp_path / "out" / "in_shading.png")
    src = load_image(tmp_path / "in.png")
    # each factor is within half a 16-bit step, so the product error is bounded accordingly
    assert np.max(np.abs(a * s - src)) <= 1.5 / 65535


def test_metrics_gt_vs_gt_is_zero(trained, tmp_path, capsys):
    data = trained / "data"
    assert run(["metrics", "--pred", str(data), "--gt", str(data), "--out", str(tmp_path / "z.csv")]) == 0
    mean = (tmp_path / "z.csv").read_text().splitlines()[-1].split(",")
    assert all(float(v) == 0 for v in mean[1:])
    assert "[raw]" in capsys.readouterr().out


def test_baselines_command(trained, tmp_path):
    assert run(["baselines", "--data", str(trained / "data"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "baseline_shading.csv").exists() and (tmp_path / "baseline_albedo.csv").exists()


def test_data_errors_exit_2(tmp_path):
    assert run(["baselines", "--data", str(tmp_path / "missing"), "--split", "all", "--out-dir", str(tmp_path)]) == 2
    (tmp_path / "bad.darn").write_bytes(b"garbage")
    (tmp_path / "x.png").write_bytes(b"")
    assert run(["decompose", "--checkpoint", str(tmp_path / "bad.darn"), str(tmp_path / "x.png")]) == 2


def test_numeric_abort_exit_3(trained, tmp_path):
    assert run(["train", "--data", str(trained / "data"), "--out", str(tmp_path / "m"), "--iterations", "2",
                "--warmup", "2", "--width", "4", "--blocks", "1", "--crop-size", "12",
                "--lr-start", "1e300", "--lr-end", "1e300"]) == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "darn", "config", "dump"], capture_output=True, text=True)
    assert out.returncode == 0 and "train.lambda" in out.stdout
