import numpy as np

from kdlab import cli, model

CONFIG = """
recipe = "temperature_sweep"
seed = 2
out_dir = "PLACEHOLDER"

[dataset]
family = "two_rings"
n_train = 32
n_test = 32
num_classes = 2
p = 2
noise = 0.05

[teacher]
widths = [2, 16, 1]
activation = "tanh"

[student]
widths = [2, 4, 1]
activation = "tanh"

[train]
epochs = 2
batch_size = 16
lr = 0.1

[params]
eval_size = 16
"""


def write_config(tmp_path, text=CONFIG):
    out = tmp_path / "out"
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text.replace("PLACEHOLDER", str(out)))
    return str(cfg), out


def test_run_success(tmp_path, capsys):
    cfg, out = write_config(tmp_path)
    assert cli.main(["run", cfg]) == 0
    assert (out / "temperature.csv").exists()
    assert "wrote" in capsys.readouterr().out


def test_out_dir_and_seed_overrides(tmp_path):
    cfg, out = write_config(tmp_path)
    other = tmp_path / "other"
    assert cli.main(["run", cfg, "--out-dir", str(other)]) == 0
    assert (other / "temperature.csv").exists()
    assert cli.main(["run", cfg, "--seed", "9"]) == 0
    base = (other / "temperature.csv").read_bytes()
    reseeded = (out / "temperature.csv").read_bytes()
    assert base != reseeded


def test_threads_flag_is_numerically_inert(tmp_path):
    cfg, out = write_config(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert cli.main(["run", cfg, "--out-dir", str(a), "--threads", "1"]) == 0
    assert cli.main(["run", cfg, "--out-dir", str(b), "--threads", "4"]) == 0
    assert (a / "temperature.csv").read_bytes() == (b / "temperature.csv").read_bytes()


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('recipe = "nonsense"\n')
    assert cli.main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    malformed = tmp_path / "malformed.toml"
    malformed.write_text("recipe = [")
    assert cli.main(["run", str(malformed)]) == 2


def test_missing_file_exit_1(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "absent.toml")]) == 1
    assert "error" in capsys.readouterr().err


def test_subcommands_force_recipe(tmp_path):
    cfg, out = write_config(tmp_path)
    assert cli.main(["complexity", cfg]) == 0
    assert (out / "complexity.csv").exists()
    assert cli.main(["ntk-sim", cfg]) == 0
    assert (out / "similarity.csv").exists()
    bound_cfg = CONFIG.replace('recipe = "temperature_sweep"', 'recipe = "bound_check"')
    bound_cfg += "trials = 2\n"
    cfgb, outb = write_config(tmp_path, bound_cfg)
    assert cli.main(["bound", cfgb]) == 0
    assert (outb / "bound.csv").exists()


def test_train_teacher_writes_checkpoints(tmp_path, capsys):
    cfg, out = write_config(tmp_path)
    assert cli.main(["train-teacher", cfg]) == 0
    ckpts = sorted(out.glob("teacher_*.ckpt"))
    assert len(ckpts) == 2
    loaded = model.load(str(ckpts[0]))
    assert loaded.spec.layer_widths == (2, 16, 1)
    assert np.isfinite(loaded.params).all()
    assert (out / "teacher_metrics.csv").read_text().startswith(
        "epoch,step,loss,train_acc,test_acc,teacher_time\n")
