"""Dense symmetric linear algebra used by every kernel computation.

All storage is float64. Kernel matrices at desk scale are small (order
<= ~4096) but often badly conditioned, so factorizations retry with a
jitter term escalating by decades; the jitter actually used is recorded
so downstream complexity numbers stay auditable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite

# Eigenvalues below this fraction of the largest are treated as zero.
_RANK_TOL = 1e-14


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric matrix; symmetrized on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise DimensionMismatch("matrix order must be >= 1")
        sym = 0.5 * (a + a.T)
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def order(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class PsdFactorization:
    """Lower-triangular Cholesky factor of source + jitter_used * I."""

    source: SymMatrix
    factor: np.ndarray
    jitter_used: float

    @property
    def order(self) -> int:
        return self.source.order


def factor_psd(m: SymMatrix, max_jitter: float = 0.0) -> PsdFactorization:
    """Cholesky-factor a symmetric matrix, escalating jitter on failure.

    Jitter starts at 1e-12 and grows by decades until the factorization
    succeeds or max_jitter is exhausted.

    Raises:
        NotPositiveDefinite: no jitter <= max_jitter made the matrix PD.
    """
    if max_jitter < 0:
        raise ValueError("max_jitter must be >= 0")
    a = m.entries
    jitter = 0.0
    while True:
        try:
            target = a if jitter == 0.0 else a + jitter * np.eye(m.order)
            factor = np.linalg.cholesky(target)
            return PsdFactorization(source=m, factor=factor, jitter_used=jitter)
        except np.linalg.LinAlgError:
            nxt = 1e-12 if jitter == 0.0 else jitter * 10.0
            if nxt > max_jitter:
                raise NotPositiveDefinite(
                    f"factorization failed at max_jitter={max_jitter:g}"
                ) from None
            jitter = nxt


def solve_psd(f: PsdFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve (source + jitter * I) x = rhs via the Cholesky factor."""
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape[0] != f.order:
        raise DimensionMismatch(
            f"rhs length {b.shape[0]} != matrix order {f.order}"
        )
    y = solve_triangular(f.factor, b, lower=True)
    return solve_triangular(f.factor.T, y, lower=False)


def trace(m: SymMatrix) -> float:
    """Sum of the diagonal entries."""
    return float(np.trace(m.entries))


def condition_number(m: SymMatrix) -> float:
    """lambda_max / lambda_min of a PSD matrix.

    Returns +inf when the smallest eigenvalue is numerically zero or
    negative (<= 1e-14 * lambda_max).
    """
    eig = np.linalg.eigvalsh(m.entries)
    lam_max = eig[-1]
    lam_min = eig[0]
    if lam_max <= 0.0:
        return float("inf")
    if lam_min <= _RANK_TOL * lam_max:
        return float("inf")
    return float(lam_max / lam_min)
