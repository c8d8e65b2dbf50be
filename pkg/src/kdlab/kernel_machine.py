"""Regularized kernel classifiers and the supervision-complexity metrics.

Objective convention: per-example mean of unhalved squared error plus
(lambda/2) * ||f||_H^2. With f restricted to the span of kernel sections
(f(train) = K alpha, ||f||^2 = alpha^T K alpha), stationarity on a
full-rank K gives (K + (n*lambda/2) I) alpha = Y; the n*lambda/2 shift
is the factor pinned by the gradient-descent oracle in the tests.

Non-invertible kernels yield +inf complexity rather than an error so
complexity curves never abort a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NotPositiveDefinite
from .ntk import NtkMatrix

DEFAULT_MAX_JITTER = 1e-6


@dataclass(frozen=True)
class KernelRidgeConfig:
    lam: float
    max_jitter: float = DEFAULT_MAX_JITTER

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")


@dataclass(frozen=True)
class KernelSolution:
    alpha: np.ndarray            # flat, length n*d
    rkhs_norm_sq: float
    train_predictions: np.ndarray  # (n, d)
    lam: float
    jitter_used: float
    offset: str | None = None    # tag of the initial-prediction function, if any


@dataclass(frozen=True)
class ComplexityReport:
    raw: float
    adjusted: float
    adjusted_star: float
    normalized: float
    trace_k: float
    jitter_used: float
    m: int
    normalizer: float  # sqrt(m) * ||Y - f0||_2, recorded for auditability


def _as_sym(K) -> tuple[linalg.SymMatrix, int, int]:
    """Accept NtkMatrix or SymMatrix; return (matrix, n_examples, d)."""
    if isinstance(K, NtkMatrix):
        return K.base, K.batch_size, K.output_dim
    if isinstance(K, linalg.SymMatrix):
        return K, K.order, 1
    return linalg.SymMatrix(np.asarray(K)), np.asarray(K).shape[0], 1


def default_lambda(K) -> float:
    """Unitless small lambda for near-interpolating solves."""
    sym, _, _ = _as_sym(K)
    return 1e-8 * linalg.trace(sym) / sym.order


def ridge_solve(K, targets: np.ndarray, cfg: KernelRidgeConfig,
                offset: str | None = None) -> KernelSolution:
    """Minimize (1/n) sum ||f(X_i) - Y_i||^2 + (lam/2) ||f||_H^2."""
    sym, n_examples, d = _as_sym(K)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.shape[0] != sym.order:
        raise DimensionMismatch(
            f"targets length {y.shape[0]} != kernel order {sym.order}"
        )
    shift = n_examples * cfg.lam / 2.0
    shifted = linalg.SymMatrix(sym.entries + shift * np.eye(sym.order))
    fact = linalg.factor_psd(shifted, max_jitter=cfg.max_jitter)
    alpha = linalg.solve_psd(fact, y)
    k_alpha = sym.entries @ alpha
    return KernelSolution(
        alpha=alpha,
        rkhs_norm_sq=float(alpha @ k_alpha),
        train_predictions=k_alpha.reshape(n_examples, d),
        lam=cfg.lam,
        jitter_used=fact.jitter_used,
        offset=offset,
    )


def evaluate(sol: KernelSolution, k_cross: np.ndarray,
             offset_values: np.ndarray | None = None) -> np.ndarray:
    """Predictions at new points: k_cross @ alpha (+ offset values).

    k_cross rows index new-point outputs, columns index the training
    kernel order (same example-major, class-minor layout).
    """
    kc = np.asarray(k_cross, dtype=np.float64)
    if kc.ndim != 2 or kc.shape[1] != sol.alpha.shape[0]:
        raise DimensionMismatch(
            f"cross-kernel shape {kc.shape} incompatible with alpha length "
            f"{sol.alpha.shape[0]}"
        )
    out = kc @ sol.alpha
    if offset_values is not None:
        off = np.asarray(offset_values, dtype=np.float64).reshape(-1)
        if off.shape != out.shape:
            raise DimensionMismatch("offset values shape mismatch")
        out = out + off
    return out


def supervision_complexity(K, targets: np.ndarray,
                           max_jitter: float = DEFAULT_MAX_JITTER) -> float:
    """Y^T K^-1 Y; +inf when the kernel is numerically singular."""
    sym, _, _ = _as_sym(K)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.shape[0] != sym.order:
        raise DimensionMismatch(
            f"targets length {y.shape[0]} != kernel order {sym.order}"
        )
    try:
        fact = linalg.factor_psd(sym, max_jitter=max_jitter)
    except NotPositiveDefinite:
        return float("inf")
    return float(y @ linalg.solve_psd(fact, y))


def adjusted_complexity(K, targets: np.ndarray,
                        initial_predictions: np.ndarray, m: int,
                        max_jitter: float = DEFAULT_MAX_JITTER) -> ComplexityReport:
    """All four complexity metrics for one kernel/target pair.

    adjusted uses the residual Y - f0; adjusted_star uses raw Y;
    normalized divides adjusted by sqrt(m) * ||Y - f0||_2 (the literal
    target-norm convention; the normalizer is recorded so the RMS
    convention can be recovered).
    """
    sym, _, _ = _as_sym(K)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    f0 = np.asarray(initial_predictions, dtype=np.float64).reshape(-1)
    if y.shape != f0.shape or y.shape[0] != sym.order:
        raise DimensionMismatch("targets/initial predictions/kernel disagree")
    if m < 1:
        raise DimensionMismatch("m must be >= 1")
    res = y - f0
    trace_k = linalg.trace(sym)
    try:
        fact = linalg.factor_psd(sym, max_jitter=max_jitter)
        jitter = fact.jitter_used
        raw = float(y @ linalg.solve_psd(fact, y))
        quad_res = float(res @ linalg.solve_psd(fact, res))
    except NotPositiveDefinite:
        jitter = max_jitter
        raw = float("inf")
        quad_res = float("inf")
    # inf * 0 trace would otherwise produce nan; report +inf explicitly
    adjusted = np.sqrt(quad_res * trace_k) / m if np.isfinite(quad_res) else float("inf")
    adjusted_star = np.sqrt(raw * trace_k) / m if np.isfinite(raw) else float("inf")
    res_norm = float(np.linalg.norm(res))
    normalizer = np.sqrt(m) * res_norm
    normalized = 0.0 if res_norm == 0.0 else float(adjusted / normalizer)
    return ComplexityReport(
        raw=raw,
        adjusted=float(adjusted),
        adjusted_star=float(adjusted_star),
        normalized=normalized,
        trace_k=trace_k,
        jitter_used=jitter,
        m=m,
        normalizer=float(normalizer),
    )
