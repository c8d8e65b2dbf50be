"""Empirical tangent kernels: dense assembly, matrix-free products, and
the teacher-student kernel similarity probe.

Block indexing contract: row index i*d + y (example-major, class-minor),
shared with the kernel solver. Dense kernels are capped at order 4096;
the similarity probe is matrix-free and has no such cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, model
from .errors import DegenerateKernel, DimensionMismatch, InvalidSpec

MAX_DENSE_ORDER = 4096
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class NtkMatrix:
    base: linalg.SymMatrix
    batch_size: int
    output_dim: int
    source_step: int = 0

    @property
    def order(self) -> int:
        return self.base.order

    @property
    def entries(self) -> np.ndarray:
        return self.base.entries


@dataclass(frozen=True)
class NtkSimEstimate:
    mean: float
    std_error: float
    num_probes: int
    probe_seed: int


def pair_kernel(c: model.Checkpoint, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """J(x) J(x')^T, a d x d block."""
    jx = model.jacobian(c, x)
    jy = model.jacobian(c, x2)
    return jx @ jy.T


def batch_kernel(c: model.Checkpoint, xs: np.ndarray, source_step: int | None = None) -> NtkMatrix:
    """Dense (b*d) x (b*d) tangent kernel of a batch, symmetrized."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise DimensionMismatch("xs must be a nonempty (b, p) matrix")
    b = xs.shape[0]
    d = c.spec.output_dim
    if b * d > MAX_DENSE_ORDER:
        raise InvalidSpec(
            f"dense kernel order {b * d} exceeds cap {MAX_DENSE_ORDER}"
        )
    jac = model.jacobian_batch(c, xs).reshape(b * d, -1)
    k = jac @ jac.T
    step = c.step_index if source_step is None else source_step
    return NtkMatrix(
        base=linalg.SymMatrix(k), batch_size=b, output_dim=d, source_step=step
    )


def kernel_vec_product(c: model.Checkpoint, xs: np.ndarray, v: np.ndarray) -> np.ndarray:
    """batch_kernel(c, xs) @ v without materializing the matrix.

    One vector-Jacobian product pulls v back to parameter space, one
    Jacobian-vector product pushes it forward again.
    """
    xs = np.asarray(xs, dtype=np.float64)
    b = xs.shape[0]
    d = c.spec.output_dim
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != b * d:
        raise DimensionMismatch(f"vector length {v.shape[0]} != {b * d}")
    u = model.vjp_batch(c, xs, v.reshape(b, d))
    return model.jvp_batch(c, xs, u).reshape(-1)


def ntk_similarity(student: model.Checkpoint, teacher: model.Checkpoint,
                   xs: np.ndarray, num_probes: int = 16,
                   probe_seed: int = 0) -> NtkSimEstimate:
    """Monte-Carlo cosine similarity of two tangent kernels on a batch.

    Each probe draws v ~ N(0, I) and compares K_s v against K_t v by
    cosine. Probes where either response is numerically zero (possible
    with dead-ReLU networks) are resampled; if more than half of the
    attempts degenerate, DegenerateKernel is raised.
    """
    if student.spec.output_dim != teacher.spec.output_dim:
        raise DimensionMismatch("student/teacher output dims differ")
    if num_probes < 2:
        raise InvalidSpec("num_probes must be >= 2")
    xs = np.asarray(xs, dtype=np.float64)
    dim = xs.shape[0] * student.spec.output_dim
    rng = np.random.default_rng(probe_seed)
    cosines = []
    degenerate = 0
    attempts = 0
    max_attempts = 2 * num_probes
    while len(cosines) < num_probes:
        if attempts >= max_attempts:
            raise DegenerateKernel(
                f"{degenerate}/{attempts} probes had near-zero kernel response"
            )
        attempts += 1
        v = rng.standard_normal(dim)
        a = kernel_vec_product(student, xs, v)
        b = kernel_vec_product(teacher, xs, v)
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na < _NORM_FLOOR or nb < _NORM_FLOOR:
            degenerate += 1
            continue
        if np.array_equal(a, b):
            cosines.append(1.0)  # identical responses: cosine is 1 by definition
        else:
            cosines.append(float(a @ b / (na * nb)))
    arr = np.asarray(cosines)
    mean = float(arr.mean())
    std_error = float(arr.std(ddof=1) / np.sqrt(num_probes))
    return NtkSimEstimate(
        mean=mean, std_error=std_error,
        num_probes=num_probes, probe_seed=probe_seed,
    )


def ntk_condition_number(c: model.Checkpoint, xs: np.ndarray) -> float:
    """Condition number of the dense batch kernel."""
    return linalg.condition_number(batch_kernel(c, xs).base)
