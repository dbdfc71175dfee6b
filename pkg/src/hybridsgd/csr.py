"""Minimal three-array CSR matrix used for datasets and their partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix with 64-bit values.

    Column indices are 0-based and strictly increasing within each row.
    Instances are treated as immutable once constructed.
    """

    num_rows: int
    num_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _row_ids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self._check()
        counts = np.diff(row_ptr)
        object.__setattr__(
            self, "_row_ids", np.repeat(np.arange(self.num_rows, dtype=np.int64), counts)
        )

    def _check(self) -> None:
        if self.num_rows < 0 or self.num_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if self.row_ptr.shape != (self.num_rows + 1,):
            raise ValueError(f"row_ptr must have length {self.num_rows + 1}")
        if self.row_ptr[0] != 0:
            raise ValueError("row_ptr[0] must be 0")
        nnz = int(self.row_ptr[-1])
        if self.col_idx.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_idx and values must have length row_ptr[-1]")
        counts = np.diff(self.row_ptr)
        if np.any(counts < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.num_cols:
                raise ValueError("column index out of range")
            # strictly increasing within a row <=> every in-row step is positive
            steps = np.diff(self.col_idx)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[self.row_ptr[:-1][counts > 0]] = True
            if np.any(steps[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_rows, self.num_cols)

    @classmethod
    def empty(cls, num_rows: int, num_cols: int) -> CsrMatrix:
        return cls(num_rows, num_cols, np.zeros(num_rows + 1, np.int64),
                   np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_dense(cls, dense) -> CsrMatrix:
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise ValueError("expected a 2-D array")
        rows, cols = np.nonzero(dense)
        counts = np.bincount(rows, minlength=dense.shape[0])
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return cls(dense.shape[0], dense.shape[1], row_ptr, cols, dense[rows, cols])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self._row_ids, self.col_idx] = self.values
        return out

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return A @ x. Each row sums its products in storage order."""
        if x.shape != (self.num_cols,):
            raise ValueError(f"x has shape {x.shape}, expected ({self.num_cols},)")
        return np.bincount(self._row_ids, weights=self.values * x[self.col_idx],
                           minlength=self.num_rows)

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        """Return A.T @ u."""
        if u.shape != (self.num_rows,):
            raise ValueError(f"u has shape {u.shape}, expected ({self.num_rows},)")
        return np.bincount(self.col_idx, weights=self.values * u[self._row_ids],
                           minlength=self.num_cols)

    def take_rows(self, rows) -> CsrMatrix:
        """Stack the given rows (repeats allowed) into a new matrix."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.num_rows):
            raise IndexError("row index out of range")
        starts = self.row_ptr[rows]
        counts = self.row_ptr[rows + 1] - starts
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        # gather positions: for each selected row, its contiguous slice
        offsets = np.repeat(starts - row_ptr[:-1], counts) + np.arange(row_ptr[-1])
        return CsrMatrix(rows.size, self.num_cols, row_ptr,
                         self.col_idx[offsets], self.values[offsets])

    def take_cols(self, start: int, stop: int) -> CsrMatrix:
        """Restrict to columns [start, stop), re-basing indices to start."""
        if not 0 <= start <= stop:
            raise ValueError("invalid column range")
        keep = (self.col_idx >= start) & (self.col_idx < stop)
        counts = np.bincount(self._row_ids[keep], minlength=self.num_rows)
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return CsrMatrix(self.num_rows, stop - start, row_ptr,
                         self.col_idx[keep] - start, self.values[keep])

    def scale_rows(self, factors: np.ndarray) -> CsrMatrix:
        factors = np.asarray(factors, dtype=np.float64)
        if factors.shape != (self.num_rows,):
            raise ValueError("one factor per row required")
        return CsrMatrix(self.num_rows, self.num_cols, self.row_ptr.copy(),
                         self.col_idx.copy(), self.values * factors[self._row_ids])

    def with_num_cols(self, num_cols: int) -> CsrMatrix:
        return CsrMatrix(self.num_rows, num_cols, self.row_ptr, self.col_idx, self.values)

    def append_empty_rows(self, count: int) -> CsrMatrix:
        if count == 0:
            return self
        row_ptr = np.concatenate([self.row_ptr, np.full(count, self.nnz, np.int64)])
        return CsrMatrix(self.num_rows + count, self.num_cols, row_ptr,
                         self.col_idx, self.values)

    @staticmethod
    def vstack(blocks) -> CsrMatrix:
        blocks = list(blocks)
        if not blocks:
            raise ValueError("nothing to stack")
        ncols = blocks[0].num_cols
        if any(b.num_cols != ncols for b in blocks):
            raise ValueError("column counts differ")
        ptrs, offset = [np.zeros(1, np.int64)], 0
        for b in blocks:
            ptrs.append(b.row_ptr[1:] + offset)
            offset += b.nnz
        return CsrMatrix(sum(b.num_rows for b in blocks), ncols, np.concatenate(ptrs),
                         np.concatenate([b.col_idx for b in blocks]),
                         np.concatenate([b.values for b in blocks]))

    def equals(self, other: CsrMatrix) -> bool:
        """Exact structural and bitwise value equality."""
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.values.view(np.uint64), other.values.view(np.uint64)))
