from __future__ import annotations

import numpy as np

from ..csr import CsrMatrix
from .dataset import Dataset


def gen_synthetic(m: int, n: int, c: int, seed: int = 0) -> Dataset:
    """Random m x n matrix with exactly c nonzeros per row.

    Columns are distinct and uniform per row, values uniform in [-1, 1] and
    labels uniform in {+1, -1}.
    """
    if m < 0 or n < 1:
        raise ValueError("need m >= 0 and n >= 1")
    if not 0 < c <= n:
        raise ValueError(f"need 0 < c <= n, got c={c}, n={n}")
    rng = np.random.default_rng(seed)
    cols = np.empty((m, c), dtype=np.int64)
    for i in range(m):
        cols[i] = np.sort(rng.choice(n, size=c, replace=False))
    values = rng.uniform(-1.0, 1.0, size=m * c)
    labels = rng.choice(np.array([-1.0, 1.0]), size=m)
    matrix = CsrMatrix(m, n, np.arange(m + 1, dtype=np.int64) * c, cols.ravel(), values)
    return Dataset(matrix, labels, name=f"synthetic-m{m}-n{n}-c{c}-s{seed}")
