"""Linearized networks, their function-space gradient-flow dynamics, and
the equivalence check against the residual-form kernel solver.

Gradient flow is integrated in function space (dimension n*d) using the
anchor tangent kernel, keeping cost independent of the parameter count.
The loss is the per-example mean of halved squared error, so the flow
operator is K/n; lambda_max below always refers to that effective
operator. The Euler step auto-tunes to 1/(2 * eta * lambda_max), with
lambda_max estimated by 50 power iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .errors import DimensionMismatch, UnstableStep
from .kernel_machine import KernelRidgeConfig, ridge_solve
from .ntk import batch_kernel

_POWER_ITERS = 50


@dataclass(frozen=True)
class LinearizedModel:
    anchor: model.Checkpoint
    delta: np.ndarray  # flat parameter displacement, length P

    def __post_init__(self):
        w = np.asarray(self.delta, dtype=np.float64).reshape(-1)
        if w.shape[0] != self.anchor.spec.num_params:
            raise DimensionMismatch("delta length != parameter count")
        w.flags.writeable = False
        object.__setattr__(self, "delta", w)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Anchor predictions plus the first-order parameter correction."""
        base = model.forward_batch(self.anchor, X)
        if not self.delta.any():
            return base
        return base + model.jvp_batch(self.anchor, X, self.delta)


@dataclass(frozen=True)
class FlowResult:
    train_predictions: np.ndarray          # (n, d) at the final step
    test_predictions: np.ndarray | None    # (m, d) or None
    train_snapshots: tuple[tuple[int, np.ndarray], ...]
    steps_taken: int
    step_size: float
    lambda_max: float


@dataclass(frozen=True)
class EquivalenceReport:
    max_train_gap: float
    max_test_gap: float
    flow_steps: int
    lam: float


def linearize(c: model.Checkpoint) -> LinearizedModel:
    """Fresh linearization: zero displacement, predictions match the anchor."""
    return LinearizedModel(anchor=c, delta=np.zeros(c.spec.num_params))


def _power_lambda_max(k: np.ndarray, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(k.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(_POWER_ITERS):
        w = k @ v
        lam = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return lam


def gradient_flow(lm: LinearizedModel, train_inputs: np.ndarray,
                  targets: np.ndarray, eta: float, num_steps: int,
                  step_size: float | None = None,
                  test_inputs: np.ndarray | None = None,
                  snapshot_every: int | None = None) -> FlowResult:
    """Explicit Euler integration of the function-space MSE dynamics.

    Train predictions evolve as f <- f - step*eta*K(f - y)/n under the
    anchor kernel K. Test predictions are reconstructed from the
    accumulated gradient path, so the per-step cost only involves the
    train kernel.

    Raises:
        UnstableStep: step_size * eta * lambda_max(K/n) >= 2.
    """
    X = np.asarray(train_inputs, dtype=np.float64)
    n = X.shape[0]
    d = lm.anchor.spec.output_dim
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if y.shape[0] != n * d:
        raise DimensionMismatch(f"targets length {y.shape[0]} != {n * d}")
    k_tr = batch_kernel(lm.anchor, X).entries
    lam_max = _power_lambda_max(k_tr) / n
    if step_size is None:
        if lam_max <= 0.0:
            step_size = 1.0
        else:
            step_size = 1.0 / (2.0 * eta * lam_max)
    if lam_max > 0.0 and step_size * eta * lam_max >= 2.0:
        raise UnstableStep(
            f"step {step_size:g} * eta {eta:g} * lambda_max {lam_max:g} >= 2"
        )
    f = lm.predict(X).reshape(-1).copy()
    grad_sum = np.zeros_like(f)
    snapshots = []
    coeff = step_size * eta / n
    # preallocated buffers: the loop runs up to millions of tiny steps
    g = np.empty_like(f)
    kg = np.empty_like(f)
    for t in range(num_steps):
        np.subtract(f, y, out=g)
        grad_sum += g
        np.matmul(k_tr, g, out=kg)
        kg *= coeff
        f -= kg
        if snapshot_every and (t + 1) % snapshot_every == 0:
            snapshots.append((t + 1, f.reshape(n, d).copy()))
    test_pred = None
    if test_inputs is not None:
        Xt = np.asarray(test_inputs, dtype=np.float64)
        j_tr = model.jacobian_batch(lm.anchor, X).reshape(n * d, -1)
        j_te = model.jacobian_batch(lm.anchor, Xt).reshape(-1, j_tr.shape[1])
        k_cross = j_te @ j_tr.T
        f0_te = lm.predict(Xt).reshape(-1)
        test_pred = (f0_te - coeff * (k_cross @ grad_sum)).reshape(Xt.shape[0], d)
    return FlowResult(
        train_predictions=f.reshape(n, d),
        test_predictions=test_pred,
        train_snapshots=tuple(snapshots),
        steps_taken=num_steps,
        step_size=step_size,
        lambda_max=lam_max,
    )


def _auto_steps(k_tr: np.ndarray, n: int, tol: float, cap: int) -> int:
    eig = np.linalg.eigvalsh(k_tr)
    lam_max = eig[-1]
    lam_min = eig[0]
    if lam_max <= 0.0 or lam_min <= 1e-14 * lam_max:
        return cap
    # Top mode halves per auto-tuned step; the slowest mode contracts by
    # (1 - lam_min / (2 lam_max)) per step.
    kappa = lam_max / lam_min
    steps = int(np.ceil(2.0 * kappa * np.log(1.0 / tol)))
    return min(max(steps, 100), cap)


def equivalence_check(lm: LinearizedModel, train_inputs: np.ndarray,
                      train_targets: np.ndarray, test_inputs: np.ndarray,
                      lam_small: float = 1e-10, num_steps: int | None = None,
                      max_steps: int = 10_000_000) -> EquivalenceReport:
    """Compare gradient-flow convergence with the residual-form ridge
    solution on train and held-out points."""
    X = np.asarray(train_inputs, dtype=np.float64)
    Xt = np.asarray(test_inputs, dtype=np.float64)
    n = X.shape[0]
    d = lm.anchor.spec.output_dim
    y = np.asarray(train_targets, dtype=np.float64).reshape(-1)
    k_tr = batch_kernel(lm.anchor, X)
    if num_steps is None:
        num_steps = _auto_steps(k_tr.entries, n, tol=1e-8, cap=max_steps)
    flow = gradient_flow(lm, X, y, eta=1.0, num_steps=num_steps,
                         test_inputs=Xt)
    f0_tr = lm.predict(X).reshape(-1)
    f0_te = lm.predict(Xt).reshape(-1)
    sol = ridge_solve(k_tr, y - f0_tr, KernelRidgeConfig(lam=lam_small),
                      offset="anchor")
    ridge_train = f0_tr + k_tr.entries @ sol.alpha
    j_tr = model.jacobian_batch(lm.anchor, X).reshape(n * d, -1)
    j_te = model.jacobian_batch(lm.anchor, Xt).reshape(-1, j_tr.shape[1])
    ridge_test = f0_te + (j_te @ j_tr.T) @ sol.alpha
    return EquivalenceReport(
        max_train_gap=float(np.abs(flow.train_predictions.reshape(-1) - ridge_train).max()),
        max_test_gap=float(np.abs(flow.test_predictions.reshape(-1) - ridge_test).max()),
        flow_steps=num_steps,
        lam=lam_small,
    )
