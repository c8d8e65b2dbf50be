"""Margin machinery and the generalization bounds.

kappa is estimated as a max over provided samples, a lower estimate of
the true sup over the input space; bounds computed from it are
correspondingly optimistic in the confidence grid and the reports flag
it as a sample max. A margin grid M0 below 1 is clamped to 1 with a
warning (the bound is vacuous there anyway).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import InvalidLabel, InvalidSpec


@dataclass(frozen=True)
class MarginParams:
    gamma: float
    delta: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidSpec("gamma must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise InvalidSpec("delta must be in (0, 1)")


@dataclass(frozen=True)
class BoundReport:
    empirical_margin_term: float
    complexity_term: float
    confidence_term: float
    total: float
    kappa: float
    m0: int
    teacher_risk_term: float | None = None


def margin_loss(alpha: float, gamma: float) -> float:
    """Ramp loss: 1 below margin 0, linear down to 0 at margin gamma."""
    if gamma <= 0:
        raise InvalidSpec("gamma must be > 0")
    if alpha <= 0:
        return 1.0
    if alpha <= gamma:
        return 1.0 - alpha / gamma
    return 0.0


def prediction_margin(logits: np.ndarray, label: int) -> float:
    """Logit of the true class minus the largest other logit."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    d = z.shape[0]
    if d < 2:
        raise InvalidSpec("prediction margin needs d >= 2 logits")
    if not 0 <= label < d:
        raise InvalidLabel(f"label {label} out of range [0, {d})")
    others = np.delete(z, label)
    return float(z[label] - others.max())


def _m0(gamma: float, n: int, kappa: float, scale: float) -> int:
    raw = gamma * math.sqrt(n) / (scale * math.sqrt(kappa))
    if raw < 1.0:
        warnings.warn(
            "margin grid value below 1; clamping M0 to 1 (single-cell grid)",
            stacklevel=3,
        )
        return 1
    return math.ceil(raw)


def binary_bound(predictions: np.ndarray, targets: np.ndarray,
                 complexity: float, trace_k: float, kappa: float, n: int,
                 params: MarginParams) -> BoundReport:
    """Margin bound on binary misclassification risk.

    predictions: student values f*(X_i); targets: signed teacher or
    dataset values Y_i whose signs define the classes.
    """
    f = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if f.shape[0] != n or y.shape[0] != n:
        raise InvalidSpec("predictions/targets must have length n")
    gamma, delta = params.gamma, params.delta
    empirical = float(
        np.mean([margin_loss(float(np.sign(yi) * fi), gamma) for yi, fi in zip(y, f)])
    )
    complexity_term = (2.0 * math.sqrt(complexity) + 2.0) * math.sqrt(trace_k) / (gamma * n)
    m0 = _m0(gamma, n, kappa, scale=2.0)
    confidence = 3.0 * math.sqrt(math.log(2.0 * m0 / delta) / (2.0 * n))
    return BoundReport(
        empirical_margin_term=empirical,
        complexity_term=complexity_term,
        confidence_term=confidence,
        total=empirical + complexity_term + confidence,
        kappa=kappa,
        m0=m0,
    )


def multiclass_bound(margins: np.ndarray, complexity: float, trace_k: float,
                     kappa: float, n: int, d: int,
                     params: MarginParams) -> BoundReport:
    """Margin bound on multiclass misclassification risk."""
    if d < 2:
        raise InvalidSpec("multiclass bound needs d >= 2")
    rho = np.asarray(margins, dtype=np.float64).reshape(-1)
    if rho.shape[0] != n:
        raise InvalidSpec("margins must have length n")
    gamma, delta = params.gamma, params.delta
    empirical = float(np.mean(rho <= gamma))
    complexity_term = 4.0 * d * (complexity + 1.0) * math.sqrt(trace_k) / (gamma * n)
    m0 = _m0(gamma, n, kappa, scale=4.0 * d)
    confidence = 3.0 * math.sqrt(math.log(2.0 * m0 / delta) / (2.0 * n))
    return BoundReport(
        empirical_margin_term=empirical,
        complexity_term=complexity_term,
        confidence_term=confidence,
        total=empirical + complexity_term + confidence,
        kappa=kappa,
        m0=m0,
    )


def distillation_bound(teacher_risk_estimate: float,
                       student_predictions: np.ndarray,
                       teacher_soft_targets: np.ndarray,
                       complexity_of_teacher_targets: float,
                       trace_k: float, kappa: float, n: int,
                       params: MarginParams) -> BoundReport:
    """Student-risk decomposition: teacher risk plus the binary bound
    taken against the teacher's soft targets."""
    if not 0.0 <= teacher_risk_estimate <= 1.0:
        raise InvalidSpec("teacher risk estimate must be in [0, 1]")
    base = binary_bound(
        predictions=student_predictions,
        targets=teacher_soft_targets,
        complexity=complexity_of_teacher_targets,
        trace_k=trace_k,
        kappa=kappa,
        n=n,
        params=params,
    )
    return BoundReport(
        empirical_margin_term=base.empirical_margin_term,
        complexity_term=base.complexity_term,
        confidence_term=base.confidence_term,
        total=teacher_risk_estimate + base.total,
        kappa=base.kappa,
        m0=base.m0,
        teacher_risk_term=teacher_risk_estimate,
    )


def estimate_kappa(c: model.Checkpoint, xs: np.ndarray) -> float:
    """Max diagonal tangent-kernel entry over the provided examples.

    A sample-based lower estimate of the sup over the whole input space.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise InvalidSpec("xs must be a nonempty (b, p) matrix")
    jac = model.jacobian_batch(c, xs)  # (b, d, P)
    diag = np.einsum("bkp,bkp->bk", jac, jac)
    return float(diag.max())
