"""Training losses: cross-entropy, distillation variants, MSE, mixture.

All losses are batch means. Distillation kinds keep their temperature
prefactors (tau^2 for the CE variant, tau for the MSE variant).

For single-output (binary) networks the soft teacher target is
2*sigmoid(g/tau) - 1, matching the +-1 label encoding; multiclass soft
targets go through a temperature-scaled softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, MissingTargets

TAGS = ("ce", "kd_ce", "mse", "kd_mse", "mixture")


@dataclass(frozen=True)
class LossKind:
    tag: str
    tau: float = 1.0
    alpha: float = 1.0  # mixture weight on the distillation term

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InvalidSpec(f"unknown loss tag {self.tag!r}")
        if self.tau <= 0:
            raise InvalidSpec("tau must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidSpec("alpha must be in [0, 1]")

    @property
    def needs_teacher(self) -> bool:
        return self.tag in ("kd_ce", "kd_mse", "mixture")

    @property
    def needs_hard_targets(self) -> bool:
        return self.tag in ("ce", "mse", "mixture")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def soft_teacher_values(teacher_logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-softened teacher predictions.

    (n, 1) logits map to 2*sigmoid(g/tau) - 1 in [-1, 1]; (n, d>=2)
    logits map to softmax(g/tau) rows.
    """
    g = np.asarray(teacher_logits, dtype=np.float64)
    if g.ndim != 2:
        raise InvalidSpec("teacher logits must be (n, d)")
    if g.shape[1] == 1:
        return 2.0 * sigmoid(g / tau) - 1.0
    return softmax(g / tau)


def _check(kind: LossKind, student_logits, teacher_logits, hard_targets):
    f = np.asarray(student_logits, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1:
        raise InvalidSpec("student logits must be a nonempty (n, d) matrix")
    if kind.needs_teacher:
        if teacher_logits is None:
            raise MissingTargets(f"loss {kind.tag!r} requires teacher logits")
        g = np.asarray(teacher_logits, dtype=np.float64)
        if g.shape != f.shape:
            raise InvalidSpec("teacher logits shape must match student logits")
    else:
        g = None
    if kind.needs_hard_targets:
        if hard_targets is None:
            raise MissingTargets(f"loss {kind.tag!r} requires hard targets")
        y = np.asarray(hard_targets, dtype=np.float64)
        if y.shape != f.shape:
            raise InvalidSpec("hard targets shape must match student logits")
    else:
        y = None
    return f, g, y


def compute_loss(kind: LossKind, student_logits, teacher_logits=None,
                 hard_targets=None) -> float:
    """Batch-mean loss value."""
    f, g, y = _check(kind, student_logits, teacher_logits, hard_targets)
    n = f.shape[0]
    tau = kind.tau
    if kind.tag == "ce":
        if f.shape[1] == 1:
            p = (y + 1.0) / 2.0  # +-1 labels to {0, 1}
            return float(-(p * _log_sigmoid(f)
                           + (1.0 - p) * _log_sigmoid(-f)).sum() / n)
        return float(-(y * log_softmax(f)).sum() / n)
    if kind.tag == "kd_ce":
        if f.shape[1] == 1:
            p_g = sigmoid(g / tau)
            return float(-(tau * tau) * (p_g * _log_sigmoid(f / tau)
                         + (1.0 - p_g) * _log_sigmoid(-f / tau)).sum() / n)
        p_g = softmax(g / tau)
        return float(-(tau * tau) * (p_g * log_softmax(f / tau)).sum() / n)
    if kind.tag == "mse":
        return float(0.5 * np.sum((y - f) ** 2) / n)
    if kind.tag == "kd_mse":
        s = soft_teacher_values(g, tau)
        return float(0.5 * tau * np.sum((s - f) ** 2) / n)
    # mixture of plain CE and distillation CE
    ce = compute_loss(LossKind("ce"), f, hard_targets=y)
    kd = compute_loss(LossKind("kd_ce", tau=tau), f, teacher_logits=g)
    return (1.0 - kind.alpha) * ce + kind.alpha * kd


def loss_logit_grad(kind: LossKind, student_logits, teacher_logits=None,
                    hard_targets=None) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. the student logits, (n, d)."""
    f, g, y = _check(kind, student_logits, teacher_logits, hard_targets)
    n = f.shape[0]
    tau = kind.tau
    if kind.tag == "ce":
        if f.shape[1] == 1:
            return (sigmoid(f) - (y + 1.0) / 2.0) / n
        return (softmax(f) - y) / n
    if kind.tag == "kd_ce":
        if f.shape[1] == 1:
            return tau * (sigmoid(f / tau) - sigmoid(g / tau)) / n
        return tau * (softmax(f / tau) - softmax(g / tau)) / n
    if kind.tag == "mse":
        return (f - y) / n
    if kind.tag == "kd_mse":
        return tau * (f - soft_teacher_values(g, tau)) / n
    g_ce = loss_logit_grad(LossKind("ce"), f, hard_targets=y)
    g_kd = loss_logit_grad(LossKind("kd_ce", tau=tau), f, teacher_logits=g)
    return (1.0 - kind.alpha) * g_ce + kind.alpha * g_kd
