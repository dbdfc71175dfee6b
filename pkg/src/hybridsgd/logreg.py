"""Logistic-regression loss, sigmoid and gradient kernels.

With Z = diag(y) A the loss is (1/m) sum_i log(1 + exp(-z_i . x)). Its
gradient is -(1/m) Z^T u with u = 1 / (1 + exp(Z x)), so the descent step
adds (eta / b) Z_batch^T u to x.

The ``acct`` argument of the counting kernels is anything with a
``record_flops(category, amount, transcendental=0)`` method: a
:class:`~hybridsgd.simgrid.CostLedger` or a simulator rank context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .csr import CsrMatrix
from .dataio.dataset import Dataset, scale_rows_by_labels


def _finite_vector(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("weight vector must be one-dimensional")
    if n is not None and x.size != n:
        raise ValueError(f"weight vector has length {x.size}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("weight vector contains non-finite entries")
    return x


@dataclass
class ModelState:
    x: np.ndarray
    iteration: int = 0

    def __post_init__(self) -> None:
        self.x = _finite_vector(self.x).copy()

    @classmethod
    def zeros(cls, n: int) -> ModelState:
        return cls(np.zeros(n))


@dataclass(frozen=True, eq=False)
class BatchView:
    """Rows of Z = diag(y) A selected for one iteration."""

    Z_batch: CsrMatrix
    global_row_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self) -> None:
        if self.global_row_ids.size != self.Z_batch.num_rows:
            raise ValueError("one global row id per batch row is required")

    @classmethod
    def from_rows(cls, Z: CsrMatrix, rows) -> BatchView:
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= Z.num_rows):
            raise IndexError("batch row outside the matrix")
        return cls(Z.take_rows(rows), rows)

    @property
    def b(self) -> int:
        return self.Z_batch.num_rows


def softplus(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid_complement(z: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(z)) evaluated on the branch that cannot overflow."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def objective_z(Z: CsrMatrix, x, m: int | None = None) -> float:
    """Mean loss over the first ``m`` rows of Z (all rows by default)."""
    x = _finite_vector(x, Z.num_cols)
    m = Z.num_rows if m is None else m
    if m == 0:
        return float("nan")
    margins = Z.matvec(x)[:m]
    return float(np.sum(softplus(-margins)) / m)


def objective(d: Dataset, x) -> float:
    """Loss over the original rows; padded rows are excluded."""
    return objective_z(scale_rows_by_labels(d), x, d.m_original)


def compute_u(batch: BatchView, x) -> np.ndarray:
    return sigmoid_complement(batch.Z_batch.matvec(np.asarray(x, dtype=np.float64)))


def descent_direction(batch: BatchView, u, b: int) -> np.ndarray:
    """(1/b) Z_batch^T u, the negative of the batch gradient."""
    u = np.asarray(u, dtype=np.float64)
    if u.size != batch.b:
        raise ValueError(f"u has length {u.size}, batch has {batch.b} rows")
    return batch.Z_batch.rmatvec(u) / b


def full_gradient(d: Dataset, x) -> np.ndarray:
    """Analytic gradient of :func:`objective`."""
    Z = scale_rows_by_labels(d)
    m = d.m_original
    x = _finite_vector(x, d.n)
    u = sigmoid_complement(Z.matvec(x))
    u[m:] = 0.0
    return -Z.rmatvec(u) / m


def grad_fd_oracle(d: Dataset, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the objective, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    Z = scale_rows_by_labels(d)
    x = _finite_vector(x, d.n).copy()
    g = np.empty(d.n)
    for k in range(d.n):
        saved = x[k]
        x[k] = saved + h
        up = objective_z(Z, x, d.m_original)
        x[k] = saved - h
        down = objective_z(Z, x, d.m_original)
        x[k] = saved
        g[k] = (up - down) / (2 * h)
    return g


def accuracy(d: Dataset, x) -> float:
    """Fraction of original rows with y_i a_i . x > 0; a zero margin counts as wrong."""
    m = d.m_original
    if m == 0:
        return float("nan")
    margins = scale_rows_by_labels(d).matvec(_finite_vector(x, d.n))[:m]
    return float(np.count_nonzero(margins > 0) / m)


# Counting kernels. Flop rules: 2 per stored nonzero for sparse products,
# 1 transcendental + 2 flops per sigmoid entry, 2 per entry for axpy.

def spmv(M: CsrMatrix, x: np.ndarray, acct=None, category: str = "spmv") -> np.ndarray:
    if acct is not None:
        acct.record_flops(category, 2 * M.nnz)
    return M.matvec(x)


def spmv_t(M: CsrMatrix, u: np.ndarray, acct=None, category: str = "gradient") -> np.ndarray:
    if acct is not None:
        acct.record_flops(category, 2 * M.nnz)
    return M.rmatvec(u)


def sigmoid(z: np.ndarray, acct=None, category: str = "gradient") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if acct is not None:
        acct.record_flops(category, 2 * z.size, transcendental=z.size)
    return sigmoid_complement(z)


def update(x: np.ndarray, zt_u: np.ndarray, eta: float, b: int, acct=None,
           category: str = "gradient") -> np.ndarray:
    """x + (eta / b) * zt_u."""
    if acct is not None:
        acct.record_flops(category, 2 * x.size)
    return x + (eta / b) * zt_u
