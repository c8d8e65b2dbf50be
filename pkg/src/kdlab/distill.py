"""SGD trainer and offline/online knowledge distillation.

Students receive no dataset-label supervision under the pure
distillation kinds; the mixture kind exists for the loss-mixture sweep.
Teacher prediction averaging happens in probability space (soft-value
space), not logit space.

Trainer defaults mirror common practice at desk scale: Nesterov momentum
0.9, linear per-step warmup, step decay by a configured divisor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .data import LabeledDataset, encode_targets
from .errors import DimensionMismatch, InvalidSpec, MissingTeacher
from .losses import LossKind, compute_loss, loss_logit_grad, soft_teacher_values

__all__ = [
    "LossKind", "TrainConfig", "TeacherTrajectory", "TrainResult",
    "MetricRow", "compute_loss", "train", "nearest_checkpoint",
    "run_offline_kd", "run_online_kd", "average_teacher_predictions",
    "fidelity", "accuracy",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    momentum: float = 0.9
    nesterov: bool = True
    schedule: tuple[tuple[int, float], ...] = ()
    warmup_epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidSpec("lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidSpec("batch_size and epochs must be >= 1")
        sched = tuple((int(e), float(f)) for e, f in self.schedule)
        epochs_in_sched = [e for e, _ in sched]
        if epochs_in_sched != sorted(set(epochs_in_sched)):
            raise InvalidSpec("schedule epochs must be strictly increasing")
        object.__setattr__(self, "schedule", sched)


@dataclass(frozen=True)
class TeacherTrajectory:
    checkpoints: tuple[model.Checkpoint, ...]
    times: tuple[int, ...]  # strictly increasing step indices

    def __post_init__(self):
        if len(self.checkpoints) == 0:
            raise InvalidSpec("trajectory must be nonempty")
        if len(self.times) != len(self.checkpoints):
            raise InvalidSpec("times must align with checkpoints")
        if any(a >= b for a, b in zip(self.times, self.times[1:])):
            raise InvalidSpec("times must be strictly increasing")
        object.__setattr__(self, "checkpoints", tuple(self.checkpoints))
        object.__setattr__(self, "times", tuple(int(t) for t in self.times))

    def thin(self, period_epochs: int) -> "TeacherTrajectory":
        """Keep one checkpoint per `period_epochs`, always keeping the last."""
        if period_epochs < 1:
            raise InvalidSpec("update period must be >= 1")
        m = len(self.checkpoints)
        keep = [i for i in range(m) if (i + 1) % period_epochs == 0]
        if not keep or keep[-1] != m - 1:
            keep.append(m - 1)
        return TeacherTrajectory(
            checkpoints=tuple(self.checkpoints[i] for i in keep),
            times=tuple(self.times[i] for i in keep),
        )


@dataclass(frozen=True)
class MetricRow:
    epoch: int
    step: int
    loss: float
    train_acc: float
    test_acc: float
    teacher_time: int  # supervising checkpoint's time index, -1 for non-KD


@dataclass(frozen=True)
class TrainResult:
    final: model.Checkpoint
    epoch_checkpoints: tuple[model.Checkpoint, ...]
    metrics: tuple[MetricRow, ...]


def _hard_targets_for(ds: LabeledDataset, output_dim: int) -> np.ndarray:
    if output_dim == 1:
        return encode_targets(ds, "signed_binary").values
    if output_dim != ds.num_classes:
        raise DimensionMismatch(
            f"model output dim {output_dim} != num_classes {ds.num_classes}"
        )
    return encode_targets(ds, "one_hot").values


def accuracy(c: model.Checkpoint, ds: LabeledDataset) -> float:
    """Fraction of correctly classified examples."""
    logits = model.forward_batch(c, ds.inputs)
    if c.spec.output_dim == 1:
        pred = (logits[:, 0] > 0).astype(np.int64)
    else:
        pred = logits.argmax(axis=1)
    return float(np.mean(pred == ds.hard_labels))


def _lr_at(cfg: TrainConfig, epoch: int, global_step: int, steps_per_epoch: int) -> float:
    lr = cfg.lr
    for boundary, divisor in cfg.schedule:
        if epoch >= boundary:
            lr /= divisor
    if cfg.warmup_epochs > 0:
        warmup_steps = cfg.warmup_epochs * steps_per_epoch
        if global_step < warmup_steps:
            lr *= (global_step + 1) / warmup_steps
    return lr


def train(start: model.Checkpoint, ds: LabeledDataset, kind: LossKind,
          teacher_provider=None, cfg: TrainConfig = None,
          test_ds: LabeledDataset | None = None) -> TrainResult:
    """Minibatch Nesterov-SGD with deterministic seeded shuffling.

    teacher_provider maps a global step index to the supervising teacher
    checkpoint; required for distillation loss kinds. One checkpoint is
    retained per epoch.
    """
    if cfg is None:
        raise InvalidSpec("TrainConfig required")
    if kind.needs_teacher and teacher_provider is None:
        raise MissingTeacher(f"loss {kind.tag!r} requires a teacher provider")
    d = start.spec.output_dim
    hard = _hard_targets_for(ds, d) if kind.needs_hard_targets else None
    n = ds.n
    bs = min(cfg.batch_size, n)
    steps_per_epoch = (n + bs - 1) // bs
    rng = np.random.default_rng(cfg.seed)

    theta = start.params.copy()
    velocity = np.zeros_like(theta)
    global_step = 0
    epoch_checkpoints = []
    metrics = []
    current = start
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        teacher_time = -1
        for b0 in range(0, n, bs):
            idx = perm[b0 : b0 + bs]
            xb = ds.inputs[idx]
            current = start.with_params(theta, step_index=global_step,
                                        epoch_index=epoch)
            teacher_logits = None
            if kind.needs_teacher:
                tc = teacher_provider(global_step)
                teacher_logits = model.forward_batch(tc, xb)
                teacher_time = tc.step_index
            hb = hard[idx] if hard is not None else None
            logits = model.forward_batch(current, xb)
            losses.append(compute_loss(kind, logits, teacher_logits, hb))
            dlogits = loss_logit_grad(kind, logits, teacher_logits, hb)
            grad = model.vjp_batch(current, xb, dlogits)
            lr = _lr_at(cfg, epoch, global_step, steps_per_epoch)
            velocity = cfg.momentum * velocity + grad
            if cfg.nesterov:
                theta = theta - lr * (grad + cfg.momentum * velocity)
            else:
                theta = theta - lr * velocity
            global_step += 1
        current = start.with_params(theta, step_index=global_step,
                                    epoch_index=epoch + 1)
        epoch_checkpoints.append(current)
        metrics.append(MetricRow(
            epoch=epoch + 1,
            step=global_step,
            loss=float(np.mean(losses)),
            train_acc=accuracy(current, ds),
            test_acc=accuracy(current, test_ds) if test_ds is not None else float("nan"),
            teacher_time=teacher_time,
        ))
    return TrainResult(
        final=current,
        epoch_checkpoints=tuple(epoch_checkpoints),
        metrics=tuple(metrics),
    )


def nearest_checkpoint(traj: TeacherTrajectory, t: int) -> model.Checkpoint:
    """Checkpoint with the smallest time strictly greater than t.

    Falls back to the final checkpoint once t passes the last time.
    """
    for time, ckpt in zip(traj.times, traj.checkpoints):
        if time > t:
            return ckpt
    return traj.checkpoints[-1]


def run_offline_kd(student_spec: model.MlpSpec, teacher_final: model.Checkpoint,
                   ds: LabeledDataset, kind: LossKind, cfg: TrainConfig,
                   test_ds: LabeledDataset | None = None) -> TrainResult:
    """Student trained against one fixed, fully trained teacher."""
    start = model.init(student_spec)
    return train(start, ds, kind,
                 teacher_provider=lambda step: teacher_final,
                 cfg=cfg, test_ds=test_ds)


def run_online_kd(student_spec: model.MlpSpec, traj: TeacherTrajectory,
                  ds: LabeledDataset, kind: LossKind, cfg: TrainConfig,
                  update_period_epochs: int = 1,
                  test_ds: LabeledDataset | None = None) -> TrainResult:
    """Student supervised at step t by the next teacher checkpoint in a
    trajectory thinned to one checkpoint per update period."""
    thinned = traj.thin(update_period_epochs)
    start = model.init(student_spec)
    return train(start, ds, kind,
                 teacher_provider=lambda step: nearest_checkpoint(thinned, step),
                 cfg=cfg, test_ds=test_ds)


def average_teacher_predictions(traj: TeacherTrajectory, t: int, window: int,
                                xs: np.ndarray, tau: float) -> np.ndarray:
    """Mean soft predictions of the last `window` checkpoints at or
    before time t (clipped to what exists), averaged in probability space."""
    if window < 1:
        raise InvalidSpec("window must be >= 1")
    eligible = [c for time, c in zip(traj.times, traj.checkpoints) if time <= t]
    if not eligible:
        eligible = [traj.checkpoints[0]]
    chosen = eligible[-window:]
    vals = [soft_teacher_values(model.forward_batch(c, xs), tau) for c in chosen]
    return np.mean(vals, axis=0)


def fidelity(student: model.Checkpoint, teacher: model.Checkpoint,
             xs: np.ndarray) -> float:
    """Classification agreement rate; argmax ties break to the lowest
    class index for both models."""
    if student.spec.output_dim != teacher.spec.output_dim:
        raise DimensionMismatch("student/teacher output dims differ")
    fs = model.forward_batch(student, xs)
    ft = model.forward_batch(teacher, xs)
    if student.spec.output_dim == 1:
        ps = (fs[:, 0] > 0).astype(np.int64)
        pt = (ft[:, 0] > 0).astype(np.int64)
    else:
        ps = fs.argmax(axis=1)
        pt = ft.argmax(axis=1)
    return float(np.mean(ps == pt))
