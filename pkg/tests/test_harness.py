import numpy as np
import pytest

from kdlab import harness
from kdlab.errors import ParseError, ValidationError

BASE = """
recipe = "complexity_curve"
seed = 1

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
tau = 4.0
eval_size = 16
"""


def with_recipe(recipe, extra=""):
    text = BASE.replace('recipe = "complexity_curve"', f'recipe = "{recipe}"')
    return text + extra


def test_parse_minimal_config():
    cfg = harness.parse_config(BASE)
    assert cfg.recipe == "complexity_curve"
    assert cfg.seed == 1
    assert cfg.dataset.family == "two_rings"
    assert cfg.student.layer_widths == (2, 4, 1)
    assert cfg.train.epochs == 2
    assert cfg.teacher_train.epochs == 2  # defaults to [train]
    assert cfg.params["tau"] == 4.0
    assert len(cfg.digest) == 16


def test_parse_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="epochss"):
        harness.parse_config(BASE.replace("epochs = 2", "epochss = 2"))
    with pytest.raises(ValidationError, match="mystery"):
        harness.parse_config(BASE + "\nmystery = 1\n")
    with pytest.raises(ValidationError, match="zeta"):
        harness.parse_config(BASE.replace("tau = 4.0", "zeta = 4.0"))


def test_parse_rejects_bad_toml():
    with pytest.raises(ParseError):
        harness.parse_config("recipe = [unterminated")


def test_parse_requires_sections():
    with pytest.raises(ValidationError, match="recipe"):
        harness.parse_config("[dataset]\nfamily = 'x'\n")
    with pytest.raises(ValidationError, match="unknown recipe"):
        harness.parse_config(BASE.replace("complexity_curve", "nonsense"))
    no_student = """
recipe = "complexity_curve"
[dataset]
family = "two_rings"
n_train = 16
n_test = 16
num_classes = 2
p = 2
[teacher]
widths = [2, 4, 1]
[train]
epochs = 1
lr = 0.1
"""
    with pytest.raises(ValidationError, match="student"):
        harness.parse_config(no_student)


def test_serialize_round_trip():
    cfg = harness.parse_config(BASE)
    again = harness.parse_config(harness.serialize_config(cfg))
    assert again.raw == cfg.raw
    assert again.digest == cfg.digest


def test_digest_changes_with_config():
    a = harness.parse_config(BASE)
    b = harness.parse_config(BASE.replace("seed = 1", "seed = 2"))
    assert a.digest != b.digest


def test_emit_csv_header_only(tmp_path):
    path = str(tmp_path / "empty.csv")
    harness.emit_csv(path, ["a", "b"], [])
    assert open(path).read() == "a,b\n"


def test_emit_csv_floats_and_inf(tmp_path):
    path = str(tmp_path / "vals.csv")
    harness.emit_csv(path, ["x", "y"], [[0.1, float("inf")], [1, -0.0]])
    text = open(path).read()
    assert text == "x,y\n0.1,inf\n1,-0.0\n"
    assert float(text.splitlines()[1].split(",")[1]) == np.inf


def test_emit_csv_reemission_byte_identical(tmp_path):
    path = str(tmp_path / "r.csv")
    rows = [[1, 0.5], [2, 1.0 / 3.0]]
    harness.emit_csv(path, ["a", "b"], rows)
    first = open(path, "rb").read()
    harness.emit_csv(path, ["a", "b"], rows)
    assert open(path, "rb").read() == first


def test_complexity_curve_schema(tmp_path):
    cfg = harness.parse_config(BASE)
    cfg = _with_out(cfg, tmp_path)
    rep = harness.run_recipe(cfg)
    header, rows = rep.tables["complexity.csv"]
    assert header == ["epoch", "target_kind", "raw", "adjusted", "adjusted_star",
                      "normalized", "trace_k", "jitter"]
    kinds = {r[1] for r in rows}
    assert kinds == {"random", "dataset", "offline_teacher", "online_teacher"}
    epochs = sorted({r[0] for r in rows})
    assert epochs == [1, 2]
    assert len(rows) == 8
    mh, mrows = rep.tables["student_metrics.csv"]
    assert mh == ["epoch", "step", "loss", "train_acc", "test_acc", "teacher_time"]
    assert len(mrows) == 2


def _with_out(cfg, tmp_path):
    import dataclasses
    return dataclasses.replace(cfg, out_dir=str(tmp_path))


def test_online_vs_offline_schema(tmp_path):
    cfg = harness.parse_config(with_recipe("online_vs_offline", "num_seeds = 2\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["accuracy.csv"]
    assert header == ["seed", "no_kd", "offline", "online", "teacher"]
    assert [r[0] for r in rows] == [0, 1]


def test_temperature_sweep_schema_and_monotone_norm(tmp_path):
    cfg = harness.parse_config(with_recipe("temperature_sweep",
                                           "taus = [1.0, 2.0, 4.0, 8.0]\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["temperature.csv"]
    assert header[:2] == ["tau", "target_norm"]
    norms = [r[1] for r in rows]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_ntk_similarity_schema(tmp_path):
    cfg = harness.parse_config(with_recipe("ntk_similarity", "num_probes = 4\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["similarity.csv"]
    assert header == ["run_id", "ntk_sim_mean", "ntk_sim_se", "fidelity", "test_acc"]
    assert [r[0] for r in rows] == ["no_kd", "offline", "online"]
    for r in rows:
        assert -1.0 <= r[1] <= 1.0
        assert 0.0 <= r[3] <= 1.0


def test_bound_check_schema(tmp_path):
    cfg = harness.parse_config(with_recipe("bound_check", "trials = 3\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["bound.csv"]
    assert header == ["trial", "gamma", "bound_total", "empirical_term",
                      "complexity_term", "confidence_term", "test_error", "valid"]
    assert len(rows) == 3
    for r in rows:
        assert r[1] in harness.GAMMA_GRID
        assert r[7] in (0, 1)


def test_checkpoint_frequency_schema(tmp_path):
    cfg = harness.parse_config(with_recipe("checkpoint_frequency",
                                           "periods = [1, 2]\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["frequency.csv"]
    assert header == ["period", "seed", "test_acc"]
    assert [r[0] for r in rows] == [1, 2]


def test_alpha_sweep_schema(tmp_path):
    cfg = harness.parse_config(with_recipe("alpha_sweep",
                                           "alphas = [0.0, 1.0]\n"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    header, rows = rep.tables["alpha.csv"]
    assert header == ["alpha", "seed", "test_acc"]
    assert [r[0] for r in rows] == [0.0, 1.0]


def test_run_recipe_deterministic_across_threads(tmp_path):
    cfg = harness.parse_config(with_recipe("online_vs_offline", "num_seeds = 3\n"))
    a = harness.run_recipe(_with_out(cfg, tmp_path / "a"), threads=1)
    b = harness.run_recipe(_with_out(cfg, tmp_path / "b"), threads=3)
    ba = open(a.outputs["accuracy.csv"], "rb").read()
    bb = open(b.outputs["accuracy.csv"], "rb").read()
    assert ba == bb


def test_report_has_version_and_digest(tmp_path):
    from kdlab.version import VERSION
    cfg = harness.parse_config(with_recipe("temperature_sweep"))
    rep = harness.run_recipe(_with_out(cfg, tmp_path))
    assert rep.version == VERSION
    assert rep.config_digest == cfg.digest
