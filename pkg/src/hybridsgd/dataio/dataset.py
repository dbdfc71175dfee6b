from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..csr import CsrMatrix


@dataclass(frozen=True, eq=False)
class Dataset:
    """A CSR design matrix with +/-1 labels.

    ``padded_rows`` counts all-zero rows appended at the bottom so that the
    row count divides the sampling period; they carry label +1.
    """

    matrix: CsrMatrix
    labels: np.ndarray
    name: str = "unnamed"
    padded_rows: int = 0

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        if labels.shape != (self.matrix.num_rows,):
            raise ValueError("labels length must equal the number of rows")
        if not np.all((labels == 1.0) | (labels == -1.0)):
            raise ValueError("labels must be +1 or -1")
        if not 0 <= self.padded_rows <= self.matrix.num_rows:
            raise ValueError("padded_rows out of range")
        if self.padded_rows:
            tail = self.matrix.row_nnz()[-self.padded_rows:]
            if np.any(tail != 0) or np.any(labels[-self.padded_rows:] != 1.0):
                raise ValueError("padded rows must be empty and labelled +1")

    @property
    def m(self) -> int:
        """Row count including padding."""
        return self.matrix.num_rows

    @property
    def n(self) -> int:
        return self.matrix.num_cols

    @property
    def m_original(self) -> int:
        return self.matrix.num_rows - self.padded_rows

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def density(self) -> float:
        cells = self.m_original * self.n
        return self.nnz / cells if cells else 0.0

    @property
    def mean_row_nnz(self) -> float:
        return self.nnz / self.m_original if self.m_original else 0.0

    def equals(self, other: Dataset) -> bool:
        return (self.matrix.equals(other.matrix)
                and np.array_equal(self.labels, other.labels)
                and self.padded_rows == other.padded_rows)


def scale_rows_by_labels(d: Dataset) -> CsrMatrix:
    """Return Z = diag(y) A with A's sparsity structure."""
    return d.matrix.scale_rows(d.labels)
