"""Sparse dataset handling: parsing, generation, padding, sampling, partitioning."""

from .dataset import Dataset, scale_rows_by_labels
from .fetch import ChecksumError, FetchError, default_cache_dir, fetch_dataset, load_registry
from .layout import (
    LAYOUTS,
    CyclicSampler,
    LocalBlock,
    Partition,
    RandomSampler,
    batch_block_rows,
    column_ranges,
    cyclic_batch,
    pad_rows,
    pad_to_multiple,
    partition,
)
from .libsvm import LabelMapError, LibsvmParseError, load_libsvm, parse_libsvm, serialize_libsvm
from .synthetic import gen_synthetic

__all__ = [
    "LAYOUTS", "ChecksumError", "CyclicSampler", "Dataset", "FetchError", "LabelMapError",
    "LibsvmParseError", "LocalBlock", "Partition", "RandomSampler", "batch_block_rows",
    "column_ranges", "cyclic_batch", "default_cache_dir", "fetch_dataset", "gen_synthetic",
    "load_libsvm", "load_registry", "pad_rows", "pad_to_multiple", "parse_libsvm",
    "partition", "scale_rows_by_labels", "serialize_libsvm",
]
