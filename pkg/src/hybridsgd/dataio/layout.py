"""Row padding, cyclic batch sampling and block partitioning of datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..csr import CsrMatrix
from ..simgrid.grid import ProcessorGrid
from .dataset import Dataset

LAYOUTS = ("row1d", "col1d", "grid2d")


def pad_to_multiple(d: Dataset, multiple: int) -> Dataset:
    """Append the fewest empty +1 rows making the row count divisible by ``multiple``."""
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    extra = (-d.m) % multiple
    if extra == 0:
        return d
    labels = np.concatenate([d.labels, np.ones(extra)])
    return Dataset(d.matrix.append_empty_rows(extra), labels, d.name, d.padded_rows + extra)


def pad_rows(d: Dataset, s_max: int, b: int) -> Dataset:
    if s_max < 1 or b < 1:
        raise ValueError("s_max and b must be >= 1")
    return pad_to_multiple(d, s_max * b)


def cyclic_batch(start: int, b: int, m: int) -> tuple[list[int], int]:
    """Rows ``start .. start+b-1`` modulo ``m`` and the next start."""
    if not 0 <= start < m:
        raise ValueError(f"start={start} outside [0, {m})")
    if not 1 <= b <= m:
        raise ValueError(f"batch size {b} outside [1, {m}]")
    return [(start + k) % m for k in range(b)], (start + b) % m


class CyclicSampler:
    """Yields successive cyclic batches as index arrays."""

    def __init__(self, m: int, b: int, start: int = 0):
        if not 1 <= b <= m:
            raise ValueError(f"batch size {b} outside [1, {m}]")
        self.m, self.b, self.start = m, b, start % m

    def next(self) -> np.ndarray:
        rows = (self.start + np.arange(self.b)) % self.m
        self.start = (self.start + self.b) % self.m
        return rows


class RandomSampler:
    """Uniform batches without replacement; for convergence studies only."""

    def __init__(self, m: int, b: int, seed: int = 0):
        if not 1 <= b <= m:
            raise ValueError(f"batch size {b} outside [1, {m}]")
        self.m, self.b = m, b
        self.rng = np.random.default_rng(seed)

    def next(self) -> np.ndarray:
        return np.sort(self.rng.choice(self.m, size=self.b, replace=False))


def batch_block_rows(m: int, b: int, parts: int, part: int) -> np.ndarray:
    """Global rows that land in chunk ``part`` of every cyclic batch.

    With ``m`` a multiple of ``b`` and ``parts`` dividing ``b``, splitting each
    cyclic batch of ``b`` rows into ``parts`` contiguous chunks assigns row r to
    chunk (r mod b) // (b / parts). Returned in ascending order, so local cyclic
    sampling of b/parts rows reproduces the chunk of every global batch.
    """
    if m % b or b % parts:
        raise ValueError(f"need b | m and parts | b (m={m}, b={b}, parts={parts})")
    chunk = b // parts
    rows = np.arange(m)
    return rows[(rows % b) // chunk == part]


@dataclass(frozen=True, eq=False)
class LocalBlock:
    rank: int
    coords: tuple[int, int]
    matrix: CsrMatrix
    rows: np.ndarray  # global row ids, ascending
    col_start: int
    col_stop: int

    @property
    def row_range(self) -> tuple[int, int]:
        lo, hi = int(self.rows[0]), int(self.rows[-1]) + 1
        if hi - lo != self.rows.size:
            raise ValueError("rows of this block are not a contiguous range")
        return lo, hi

    @property
    def col_range(self) -> tuple[int, int]:
        return self.col_start, self.col_stop


@dataclass(frozen=True, eq=False)
class Partition:
    layout: str
    grid: ProcessorGrid
    blocks: tuple[LocalBlock, ...]
    n_padded: int

    def block(self, i: int, j: int) -> LocalBlock:
        return self.blocks[self.grid.rank(i, j)]

    def assemble(self, m: int, n: int) -> CsrMatrix:
        """Rebuild the global (m x n) matrix from the local blocks."""
        dense = np.zeros((m, self.n_padded))
        for blk in self.blocks:
            dense[np.ix_(blk.rows, np.arange(blk.col_start, blk.col_stop))] += blk.matrix.to_dense()
        return CsrMatrix.from_dense(dense[:, :n])


def column_ranges(n: int, p_c: int) -> tuple[int, list[tuple[int, int]]]:
    """Contiguous column blocks after padding n up to a multiple of p_c."""
    width = math.ceil(n / p_c) if n else 0
    return width * p_c, [(j * width, (j + 1) * width) for j in range(p_c)]


def partition(d: Dataset | CsrMatrix, grid: ProcessorGrid, layout: str = "grid2d",
              row_scheme: str = "contiguous", batch: int | None = None) -> Partition:
    """Split a matrix over ``grid`` in one of the three block layouts.

    ``row_scheme="contiguous"`` gives each grid row m/p_r consecutive rows.
    ``row_scheme="batch"`` instead deals every cyclic batch of ``batch`` rows
    out in p_r contiguous chunks, which is what the per-iteration row split of
    parallel SGD needs. Columns are always contiguous; n is padded with empty
    columns to a multiple of p_c.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    if layout == "row1d" and grid.p_c != 1:
        raise ValueError("row1d layout requires p_c = 1")
    if layout == "col1d" and grid.p_r != 1:
        raise ValueError("col1d layout requires p_r = 1")
    A = d.matrix if isinstance(d, Dataset) else d
    m, n = A.shape
    if m % grid.p_r:
        raise ValueError(f"p_r={grid.p_r} does not divide the (padded) row count {m}")
    n_pad, cranges = column_ranges(n, grid.p_c)
    A = A.with_num_cols(n_pad)

    if row_scheme == "contiguous":
        h = m // grid.p_r
        row_sets = [np.arange(i * h, (i + 1) * h) for i in range(grid.p_r)]
    elif row_scheme == "batch":
        if batch is None:
            raise ValueError("row_scheme='batch' needs the batch size")
        row_sets = [batch_block_rows(m, batch, grid.p_r, i) for i in range(grid.p_r)]
    else:
        raise ValueError(f"unknown row scheme {row_scheme!r}")

    blocks = []
    for i, rows in enumerate(row_sets):
        strip = A.take_rows(rows)
        for j, (c0, c1) in enumerate(cranges):
            blocks.append(LocalBlock(grid.rank(i, j), (i, j), strip.take_cols(c0, c1),
                                     rows, c0, c1))
    return Partition(layout, grid, tuple(blocks), n_pad)
