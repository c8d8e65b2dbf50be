"""Experiment recipes, strict TOML configs, and CSV reports.

Every recipe is a pure function of its config: the same file yields
byte-identical CSV outputs. Qualitative findings are either asserted as
orderings on pinned seeded configs (in the test suite) or emitted as
curves for inspection; no magnitude claims are made at desk scale.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import bounds, distill, kernel_machine, model, ntk
from .data import LabeledDataset, encode_targets, make_synthetic, random_targets
from .distill import LossKind, TeacherTrajectory, TrainConfig
from .errors import IoError, ParseError, ValidationError
from .losses import soft_teacher_values
from .version import VERSION

RECIPES = (
    "complexity_curve",
    "online_vs_offline",
    "temperature_sweep",
    "ntk_similarity",
    "bound_check",
    "checkpoint_frequency",
    "alpha_sweep",
)

GAMMA_GRID = tuple(2.0 ** k for k in range(-6, 4))

_TOP_KEYS = {"recipe", "seed", "out_dir", "dataset", "teacher", "student",
             "train", "teacher_train", "params"}
_DATASET_KEYS = {"family", "n_train", "n_test", "num_classes", "p", "noise"}
_MODEL_KEYS = {"widths", "activation", "init"}
_TRAIN_KEYS = {"epochs", "batch_size", "lr", "momentum", "nesterov",
               "schedule", "warmup_epochs"}
_PARAM_KEYS = {
    "tau", "taus", "eval_size", "kd_loss", "num_seeds", "periods", "alphas",
    "num_probes", "probe_batch", "trials", "student_epochs",
}


@dataclass(frozen=True)
class DatasetSpec:
    family: str
    n_train: int
    n_test: int
    num_classes: int
    p: int
    noise: float

    def make(self, seed: int, split: str) -> LabeledDataset:
        n = self.n_train if split == "train" else self.n_test
        # Disjoint split seeds derived from one generation seed.
        sseed = seed * 2 + (0 if split == "train" else 1)
        return make_synthetic(self.family, n, self.num_classes, self.p,
                              self.noise, sseed, split_tag=split)


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: str
    seed: int
    out_dir: str
    dataset: DatasetSpec
    teacher: model.MlpSpec | None
    student: model.MlpSpec | None
    train: TrainConfig | None
    teacher_train: TrainConfig | None
    params: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass(frozen=True)
class RunReport:
    recipe: str
    config_digest: str
    outputs: dict  # csv name -> path
    tables: dict   # csv name -> (header, rows)
    version: str = VERSION


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def _check_keys(section: dict, allowed: set, where: str):
    for key in section:
        if key not in allowed:
            raise ValidationError(f"unknown key {key!r} in {where}")


def _model_spec(section: dict, where: str, seed: int) -> model.MlpSpec:
    _check_keys(section, _MODEL_KEYS, where)
    _require("widths" in section, f"{where}.widths is required")
    return model.MlpSpec(
        layer_widths=tuple(section["widths"]),
        activation=section.get("activation", "relu"),
        init=section.get("init", "he_normal"),
        seed=seed,
    )


def _train_config(section: dict, where: str, seed: int, n_train: int) -> TrainConfig:
    _check_keys(section, _TRAIN_KEYS, where)
    _require("epochs" in section and "lr" in section,
             f"{where} requires epochs and lr")
    batch = section.get("batch_size", min(128, max(1, n_train // 4)))
    return TrainConfig(
        epochs=int(section["epochs"]),
        batch_size=int(batch),
        lr=float(section["lr"]),
        momentum=float(section.get("momentum", 0.9)),
        nesterov=bool(section.get("nesterov", True)),
        schedule=tuple((int(e), float(f)) for e, f in section.get("schedule", [])),
        warmup_epochs=int(section.get("warmup_epochs", 0)),
        seed=seed,
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and strictly validate a TOML experiment config.

    Unknown keys anywhere are errors (anti-typo policy).
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from exc
    _check_keys(raw, _TOP_KEYS, "top level")
    _require("recipe" in raw, "recipe is required")
    recipe = raw["recipe"]
    _require(recipe in RECIPES, f"unknown recipe {recipe!r}")
    _require("dataset" in raw, "[dataset] section is required")
    ds_sec = raw["dataset"]
    _check_keys(ds_sec, _DATASET_KEYS, "[dataset]")
    for key in ("family", "n_train", "n_test", "num_classes", "p"):
        _require(key in ds_sec, f"[dataset].{key} is required")
    dataset = DatasetSpec(
        family=ds_sec["family"],
        n_train=int(ds_sec["n_train"]),
        n_test=int(ds_sec["n_test"]),
        num_classes=int(ds_sec["num_classes"]),
        p=int(ds_sec["p"]),
        noise=float(ds_sec.get("noise", 0.0)),
    )
    seed = int(raw.get("seed", 0))
    params = dict(raw.get("params", {}))
    _check_keys(params, _PARAM_KEYS, "[params]")
    teacher = (_model_spec(raw["teacher"], "[teacher]", seed=seed * 7919 + 1)
               if "teacher" in raw else None)
    student = (_model_spec(raw["student"], "[student]", seed=seed * 7919 + 2)
               if "student" in raw else None)
    train_cfg = (_train_config(raw["train"], "[train]", seed=seed * 7919 + 3,
                               n_train=dataset.n_train)
                 if "train" in raw else None)
    teacher_train = (_train_config(raw["teacher_train"], "[teacher_train]",
                                   seed=seed * 7919 + 4, n_train=dataset.n_train)
                     if "teacher_train" in raw else train_cfg)
    needs_student = recipe != "bound_check"
    _require(student is not None or not needs_student,
             f"recipe {recipe!r} requires a [student] section")
    needs_teacher = recipe not in ("bound_check",)
    _require(teacher is not None or not needs_teacher,
             f"recipe {recipe!r} requires a [teacher] section")
    _require(train_cfg is not None or recipe == "bound_check",
             f"recipe {recipe!r} requires a [train] section")
    if recipe == "bound_check":
        _require(student is not None, "bound_check requires a [student] section")
    return ExperimentConfig(
        recipe=recipe,
        seed=seed,
        out_dir=raw.get("out_dir", "kdlab_out"),
        dataset=dataset,
        teacher=teacher,
        student=student,
        train=train_cfg,
        teacher_train=teacher_train,
        params=params,
        raw=raw,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Round-trippable TOML text for a parsed config."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = []
    for key, val in cfg.raw.items():
        if not isinstance(val, dict):
            lines.append(f"{key} = {fmt(val)}")
    for key, val in cfg.raw.items():
        if isinstance(val, dict):
            lines.append(f"[{key}]")
            for k2, v2 in val.items():
                lines.append(f"{k2} = {fmt(v2)}")
    return "\n".join(lines) + "\n"


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        if np.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def emit_csv(path: str, header: list, rows: list) -> None:
    """RFC-4180 CSV with LF endings and shortest round-trip floats,
    written atomically."""
    text = ",".join(header) + "\n"
    for row in rows:
        text += ",".join(_fmt_cell(v) for v in row) + "\n"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _teacher_loss(spec: model.MlpSpec) -> LossKind:
    return LossKind("mse") if spec.output_dim == 1 else LossKind("ce")


def _kd_loss(cfg: ExperimentConfig, tau: float) -> LossKind:
    tag = cfg.params.get("kd_loss")
    if tag is None:
        tag = "kd_mse" if cfg.student.output_dim == 1 else "kd_ce"
    return LossKind(tag, tau=tau)


def _reseed(spec: model.MlpSpec, seed: int) -> model.MlpSpec:
    return model.MlpSpec(spec.layer_widths, spec.activation, spec.init, seed)


def _reseed_train(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum,
                       cfg.nesterov, cfg.schedule, cfg.warmup_epochs, seed)


def train_teacher(cfg: ExperimentConfig, seed_offset: int = 0):
    """Train the teacher and return (trajectory, result, train_ds, test_ds)."""
    train_ds = cfg.dataset.make(cfg.seed + seed_offset, "train")
    test_ds = cfg.dataset.make(cfg.seed + seed_offset, "test")
    tspec = _reseed(cfg.teacher, cfg.teacher.seed + seed_offset)
    tcfg = _reseed_train(cfg.teacher_train, cfg.teacher_train.seed + seed_offset)
    start = model.init(tspec)
    result = distill.train(start, train_ds, _teacher_loss(tspec),
                           cfg=tcfg, test_ds=test_ds)
    traj = TeacherTrajectory(
        checkpoints=result.epoch_checkpoints,
        times=tuple(c.step_index for c in result.epoch_checkpoints),
    )
    return traj, result, train_ds, test_ds


def _signed_labels(ds: LabeledDataset) -> np.ndarray:
    return encode_targets(ds, "signed_binary").values.reshape(-1)


def _metrics_rows(result: distill.TrainResult) -> list:
    return [
        [m.epoch, m.step, m.loss, m.train_acc, m.test_acc, m.teacher_time]
        for m in result.metrics
    ]


METRICS_HEADER = ["epoch", "step", "loss", "train_acc", "test_acc", "teacher_time"]
COMPLEXITY_HEADER = ["epoch", "target_kind", "raw", "adjusted", "adjusted_star",
                     "normalized", "trace_k", "jitter"]
SIMILARITY_HEADER = ["run_id", "ntk_sim_mean", "ntk_sim_se", "fidelity", "test_acc"]


def _run_complexity_curve(cfg: ExperimentConfig, threads: int) -> dict:
    tau = float(cfg.params.get("tau", 4.0))
    m = int(cfg.params.get("eval_size", 64))
    traj, _, train_ds, test_ds = train_teacher(cfg)
    student_start = model.init(cfg.student)
    sres = distill.train(student_start, train_ds, LossKind("mse"),
                         cfg=cfg.train, test_ds=test_ds)
    eval_x = test_ds.inputs[:m]
    eval_y = _signed_labels(test_ds)[:m]
    rand_y = random_targets(m, 1, "signed_binary", seed=cfg.seed * 7919 + 11).flat
    teacher_final = traj.checkpoints[-1]
    offline_y = soft_teacher_values(
        model.forward_batch(teacher_final, eval_x), tau).reshape(-1)
    rows = []
    for ckpt in sres.epoch_checkpoints:
        kernel = ntk.batch_kernel(ckpt, eval_x)
        f0 = model.forward_batch(ckpt, eval_x).reshape(-1)
        online_teacher = distill.nearest_checkpoint(traj, ckpt.step_index - 1)
        online_y = soft_teacher_values(
            model.forward_batch(online_teacher, eval_x), tau).reshape(-1)
        targets = {
            "random": rand_y,
            "dataset": eval_y,
            "offline_teacher": offline_y,
            "online_teacher": online_y,
        }
        for kind_name, y in targets.items():
            rep = kernel_machine.adjusted_complexity(kernel, y, f0, m)
            rows.append([ckpt.epoch_index, kind_name, rep.raw, rep.adjusted,
                         rep.adjusted_star, rep.normalized, rep.trace_k,
                         rep.jitter_used])
    return {"complexity.csv": (COMPLEXITY_HEADER, rows),
            "student_metrics.csv": (METRICS_HEADER, _metrics_rows(sres))}


def _per_seed_kd_runs(cfg: ExperimentConfig, seed_offset: int, tau: float,
                      update_period: int = 1):
    """One full no-KD / offline / online comparison for one seed."""
    traj, tres, train_ds, test_ds = train_teacher(cfg, seed_offset)
    sspec = _reseed(cfg.student, cfg.student.seed + seed_offset)
    scfg = _reseed_train(cfg.train, cfg.train.seed + seed_offset)
    kd = _kd_loss(cfg, tau)
    base_kind = LossKind("mse") if sspec.output_dim == 1 else LossKind("ce")
    no_kd = distill.train(model.init(sspec), train_ds, base_kind,
                          cfg=scfg, test_ds=test_ds)
    offline = distill.run_offline_kd(sspec, traj.checkpoints[-1], train_ds,
                                     kd, scfg, test_ds=test_ds)
    online = distill.run_online_kd(sspec, traj, train_ds, kd, scfg,
                                   update_period_epochs=update_period,
                                   test_ds=test_ds)
    return {
        "teacher": tres, "no_kd": no_kd, "offline": offline, "online": online,
        "train_ds": train_ds, "test_ds": test_ds, "traj": traj,
    }


def _run_online_vs_offline(cfg: ExperimentConfig, threads: int) -> dict:
    tau = float(cfg.params.get("tau", 4.0))
    num_seeds = int(cfg.params.get("num_seeds", 3))
    def one(s):
        runs = _per_seed_kd_runs(cfg, s, tau)
        return [s,
                runs["no_kd"].metrics[-1].test_acc,
                runs["offline"].metrics[-1].test_acc,
                runs["online"].metrics[-1].test_acc,
                runs["teacher"].metrics[-1].test_acc]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(one, range(num_seeds)))
    return {"accuracy.csv": (["seed", "no_kd", "offline", "online", "teacher"], rows)}


def _run_temperature_sweep(cfg: ExperimentConfig, threads: int) -> dict:
    taus = [float(t) for t in cfg.params.get("taus", [1.0, 2.0, 4.0, 8.0])]
    m = int(cfg.params.get("eval_size", 64))
    student_epochs = int(cfg.params.get("student_epochs", cfg.train.epochs))
    traj, _, train_ds, test_ds = train_teacher(cfg)
    sres = distill.train(model.init(cfg.student), train_ds, LossKind("mse"),
                         cfg=cfg.train, test_ds=test_ds)
    ckpt = sres.epoch_checkpoints[min(student_epochs, len(sres.epoch_checkpoints)) - 1]
    eval_x = test_ds.inputs[:m]
    kernel = ntk.batch_kernel(ckpt, eval_x)
    f0 = model.forward_batch(ckpt, eval_x).reshape(-1)
    g = model.forward_batch(traj.checkpoints[-1], eval_x)
    rows = []
    for tau in taus:
        y = soft_teacher_values(g, tau).reshape(-1)
        rep = kernel_machine.adjusted_complexity(kernel, y, f0, m)
        rows.append([tau, float(np.linalg.norm(y)), rep.raw, rep.adjusted,
                     rep.adjusted_star, rep.normalized, rep.trace_k,
                     rep.jitter_used])
    header = ["tau", "target_norm", "raw", "adjusted", "adjusted_star",
              "normalized", "trace_k", "jitter"]
    return {"temperature.csv": (header, rows)}


def _run_ntk_similarity(cfg: ExperimentConfig, threads: int) -> dict:
    tau = float(cfg.params.get("tau", 4.0))
    num_probes = int(cfg.params.get("num_probes", 16))
    probe_batch = int(cfg.params.get("probe_batch", 32))
    runs = _per_seed_kd_runs(cfg, 0, tau)
    teacher_final = runs["traj"].checkpoints[-1]
    xs = runs["train_ds"].inputs[:probe_batch]
    rows = []
    for run_id in ("no_kd", "offline", "online"):
        res = runs[run_id]
        sim = ntk.ntk_similarity(res.final, teacher_final, xs,
                                 num_probes=num_probes,
                                 probe_seed=cfg.seed * 7919 + 13)
        fid = distill.fidelity(res.final, teacher_final, runs["train_ds"].inputs)
        rows.append([run_id, sim.mean, sim.std_error, fid,
                     res.metrics[-1].test_acc])
    return {"similarity.csv": (SIMILARITY_HEADER, rows)}


def bound_for_trial(cfg: ExperimentConfig, trial: int):
    """One resampled dataset: best margin bound over the gamma grid and
    the held-out misclassification rate."""
    delta = 0.05
    train_ds = cfg.dataset.make(cfg.seed * 100003 + trial * 2 + 1, "train")
    test_ds = cfg.dataset.make(cfg.seed * 100003 + trial * 2 + 2, "test")
    net = model.init(_reseed(cfg.student, cfg.student.seed + trial))
    kernel = ntk.batch_kernel(net, train_ds.inputs)
    y = _signed_labels(train_ds)
    complexity = kernel_machine.supervision_complexity(kernel, y)
    trace_k = float(np.trace(kernel.entries))
    pooled = np.vstack([train_ds.inputs, test_ds.inputs])
    kappa = bounds.estimate_kappa(net, pooled)
    sol = kernel_machine.ridge_solve(
        kernel, y, kernel_machine.KernelRidgeConfig(
            lam=kernel_machine.default_lambda(kernel)))
    preds = sol.train_predictions.reshape(-1)
    best = None
    for gamma in GAMMA_GRID:
        rep = bounds.binary_bound(preds, y, complexity, trace_k, kappa,
                                  train_ds.n,
                                  bounds.MarginParams(gamma=gamma, delta=delta))
        if best is None or rep.total < best[1].total:
            best = (gamma, rep)
    gamma, rep = best
    j_tr = model.jacobian_batch(net, train_ds.inputs).reshape(train_ds.n, -1)
    j_te = model.jacobian_batch(net, test_ds.inputs).reshape(test_ds.n, -1)
    test_pred = (j_te @ j_tr.T) @ sol.alpha
    test_y = _signed_labels(test_ds)
    test_error = float(np.mean(np.sign(test_pred) * test_y <= 0))
    return [trial, gamma, rep.total, rep.empirical_margin_term,
            rep.complexity_term, rep.confidence_term, test_error,
            int(test_error <= rep.total)]


def _run_bound_check(cfg: ExperimentConfig, threads: int) -> dict:
    trials = int(cfg.params.get("trials", 200))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda t: bound_for_trial(cfg, t), range(trials)))
    header = ["trial", "gamma", "bound_total", "empirical_term",
              "complexity_term", "confidence_term", "test_error", "valid"]
    return {"bound.csv": (header, rows)}


def _run_checkpoint_frequency(cfg: ExperimentConfig, threads: int) -> dict:
    tau = float(cfg.params.get("tau", 4.0))
    periods = [int(p) for p in cfg.params.get("periods", [1, 2, 4, 8, 16])]
    num_seeds = int(cfg.params.get("num_seeds", 1))
    kd_tasks = []
    for period in periods:
        for s in range(num_seeds):
            kd_tasks.append((period, s))
    def one(task):
        period, s = task
        traj, _, train_ds, test_ds = train_teacher(cfg, s)
        sspec = _reseed(cfg.student, cfg.student.seed + s)
        scfg = _reseed_train(cfg.train, cfg.train.seed + s)
        res = distill.run_online_kd(sspec, traj, train_ds, _kd_loss(cfg, tau),
                                    scfg, update_period_epochs=period,
                                    test_ds=test_ds)
        return [period, s, res.metrics[-1].test_acc]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(one, kd_tasks))
    return {"frequency.csv": (["period", "seed", "test_acc"], rows)}


def _run_alpha_sweep(cfg: ExperimentConfig, threads: int) -> dict:
    tau = float(cfg.params.get("tau", 4.0))
    alphas = [float(a) for a in cfg.params.get("alphas", [0.0, 0.25, 0.5, 0.75, 1.0])]
    num_seeds = int(cfg.params.get("num_seeds", 1))
    rows = []
    for s in range(num_seeds):
        traj, _, train_ds, test_ds = train_teacher(cfg, s)
        teacher_final = traj.checkpoints[-1]
        sspec = _reseed(cfg.student, cfg.student.seed + s)
        scfg = _reseed_train(cfg.train, cfg.train.seed + s)
        for alpha in alphas:
            kind = LossKind("mixture", tau=tau, alpha=alpha)
            res = distill.run_offline_kd(sspec, teacher_final, train_ds,
                                         kind, scfg, test_ds=test_ds)
            rows.append([alpha, s, res.metrics[-1].test_acc])
    return {"alpha.csv": (["alpha", "seed", "test_acc"], rows)}


_RUNNERS = {
    "complexity_curve": _run_complexity_curve,
    "online_vs_offline": _run_online_vs_offline,
    "temperature_sweep": _run_temperature_sweep,
    "ntk_similarity": _run_ntk_similarity,
    "bound_check": _run_bound_check,
    "checkpoint_frequency": _run_checkpoint_frequency,
    "alpha_sweep": _run_alpha_sweep,
}


def run_recipe(cfg: ExperimentConfig, threads: int = 1) -> RunReport:
    """Execute a recipe deterministically and write its CSV artifacts."""
    tables = _RUNNERS[cfg.recipe](cfg, threads)
    outputs = {}
    for name, (header, rows) in tables.items():
        path = os.path.join(cfg.out_dir, name)
        emit_csv(path, header, rows)
        outputs[name] = path
    return RunReport(
        recipe=cfg.recipe,
        config_digest=cfg.digest,
        outputs=outputs,
        tables=tables,
    )
