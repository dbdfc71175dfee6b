"""Reading and writing the LIBSVM sparse text format."""

from __future__ import annotations

import gzip
import io
from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np

from ..csr import CsrMatrix
from .dataset import Dataset


class LibsvmParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class LabelMapError(ValueError):
    pass


def _default_label_map(raw: set[float]) -> dict[float, float]:
    if raw <= {1.0, -1.0}:
        return {1.0: 1.0, -1.0: -1.0}
    if len(raw) == 2:
        lo, hi = sorted(raw)
        return {lo: -1.0, hi: 1.0}
    raise LabelMapError(
        f"cannot infer a binary label map from observed labels {sorted(raw)}")


def parse_libsvm(text: str | Iterable[str], n: int | None = None,
                 label_map: Mapping[float, float] | None = None,
                 name: str = "libsvm") -> Dataset:
    """Parse LIBSVM text into a Dataset.

    Feature indices are 1-based in the file and stored 0-based. ``n`` forces
    the column count (it must cover every index seen). Without a label map,
    {+1, -1} is kept as-is and any other pair maps its larger value to +1.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    raw_labels: list[float] = []
    row_ptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw_labels.append(float(tokens[0]))
        except ValueError:
            raise LibsvmParseError(lineno, f"bad label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"malformed feature {tok!r}") from None
            if idx <= prev:
                raise LibsvmParseError(
                    lineno, f"feature index {idx} not strictly increasing (previous {prev})")
            prev = idx
            cols.append(idx - 1)
            vals.append(val)
        max_index = max(max_index, prev)
        row_ptr.append(len(cols))

    if n is None:
        n = max_index
    elif n < max_index:
        raise ValueError(f"n={n} is smaller than the largest feature index {max_index}")

    observed = set(raw_labels)
    if label_map is None:
        label_map = _default_label_map(observed) if observed else {}
    label_map = {float(k): float(v) for k, v in label_map.items()}
    missing = observed - set(label_map)
    if missing:
        raise LabelMapError(
            f"labels {sorted(missing)} not in label map; observed labels {sorted(observed)}")
    labels = np.array([label_map[r] for r in raw_labels], dtype=np.float64)

    matrix = CsrMatrix(len(raw_labels), n, np.array(row_ptr), np.array(cols, dtype=np.int64),
                       np.array(vals, dtype=np.float64))
    return Dataset(matrix, labels, name=name)


def load_libsvm(path: str | Path, **kwargs) -> Dataset:
    """Parse a plain or gzip-compressed LIBSVM file."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    kwargs.setdefault("name", path.name)
    return parse_libsvm(io.StringIO(raw.decode("ascii")), **kwargs)


def serialize_libsvm(d: Dataset) -> str:
    """Write ``d`` back as LIBSVM text with round-trip exact values."""
    m = d.matrix
    out = []
    for i in range(m.num_rows):
        lo, hi = m.row_ptr[i], m.row_ptr[i + 1]
        parts = ["+1" if d.labels[i] > 0 else "-1"]
        parts.extend(f"{c + 1}:{v!r}" for c, v in zip(m.col_idx[lo:hi].tolist(),
                                                       m.values[lo:hi].tolist()))
        out.append(" ".join(parts))
    return "".join(line + "\n" for line in out)
