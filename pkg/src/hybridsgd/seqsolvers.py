"""Single-process GD, SGD and s-step SGD; the oracles for the parallel solvers."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import logreg
from .csr import CsrMatrix
from .dataio.dataset import Dataset, scale_rows_by_labels
from .dataio.layout import CyclicSampler, RandomSampler
from .simgrid.ledger import CostLedger, HockneyParams, hockney_time

SAMPLERS = ("cyclic", "random")


class DivergenceError(ArithmeticError):
    """The iterate became non-finite. ``trace`` holds the records made before that."""

    def __init__(self, iteration: int, trace: ConvergenceTrace | None = None):
        super().__init__(f"iterate became non-finite at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters shared by every solver.

    ``K`` counts inner iterations (mini-batch updates). ``tau`` is the number
    of local iterations between averaging rounds for FedAvg and HybridSGD.
    Step sizes above 1 are rejected unless ``allow_large_eta`` is set.
    """

    b: int = 1
    eta: float = 1.0
    K: int = 1
    s: int = 1
    tau: int = 1
    seed: int = 0
    sampler: str = "cyclic"
    trace_every: int | None = None
    allow_large_eta: bool = False

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError(f"batch size must be >= 1, got {self.b}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"step size must be finite and >= 0, got {self.eta}")
        if self.eta > 1 and not self.allow_large_eta:
            raise ValueError(f"step size {self.eta} > 1; set allow_large_eta to override")
        if self.K < 0:
            raise ValueError(f"iteration count must be >= 0, got {self.K}")
        if self.s < 1 or self.tau < 1:
            raise ValueError("s and tau must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.trace_every is not None and self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    grad_evals: int
    objective: float
    modeled_time: float
    wall_time: float


@dataclass
class ConvergenceTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, rec: TraceRecord) -> None:
        if self.records and rec.grad_evals < self.records[-1].grad_evals:
            raise ValueError("gradient evaluations must not decrease")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self.records])

    @property
    def grad_evals(self) -> np.ndarray:
        return np.array([r.grad_evals for r in self.records])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    def to_csv(self, wall_time: bool = False) -> str:
        """CSV text; wall-clock seconds are left out unless asked for so reruns match byte for byte."""
        cols = ["iteration", "grad_evals", "objective", "modeled_time"]
        if wall_time:
            cols.append("wall_time")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.records:
            row = [r.iteration, r.grad_evals, repr(r.objective), repr(r.modeled_time)]
            if wall_time:
                row.append(f"{r.wall_time:.6f}")
            writer.writerow(row)
        return buf.getvalue()


class _Recorder:
    """Appends trace records at a fixed iteration interval (plus the last iteration).

    ``on_record(k, x)``, when given, sees the iterate at every record.
    """

    def __init__(self, Z: CsrMatrix, m: int, K: int, every: int, ledger: CostLedger,
                 hockney: HockneyParams, on_record=None):
        self.Z, self.m, self.K, self.every = Z, m, K, every
        self.ledger, self.hockney = ledger, hockney
        self.on_record = on_record
        self.trace = ConvergenceTrace()
        self.next_due = 0
        self.t0 = time.perf_counter()

    def __call__(self, k: int, grad_evals: int, x: np.ndarray) -> None:
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k, self.trace)
        if k < self.next_due and k != self.K:
            return
        self.next_due = (k // self.every + 1) * self.every
        h = self.hockney
        modeled = hockney_time(self.ledger, h.alpha, h.beta, h.gamma, h.phi)
        self.trace.append(TraceRecord(k, grad_evals, logreg.objective_z(self.Z, x, self.m),
                                      modeled, time.perf_counter() - self.t0))
        if self.on_record is not None:
            self.on_record(k, x)


def make_sampler(cfg: SolverConfig, m: int, b: int | None = None, seed_offset: int = 0):
    b = cfg.b if b is None else b
    if cfg.sampler == "random":
        return RandomSampler(m, b, cfg.seed + seed_offset)
    return CyclicSampler(m, b)


def _start(d: Dataset, x0) -> np.ndarray:
    if x0 is None:
        return np.zeros(d.n)
    x = np.array(x0, dtype=np.float64)
    if x.shape != (d.n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({d.n},)")
    return x


def gd(d: Dataset, cfg: SolverConfig, x0=None, ledger: CostLedger | None = None,
       hockney: HockneyParams | None = None,
       on_record=None) -> tuple[np.ndarray, ConvergenceTrace]:
    """K full-batch descent steps normalized by the row count of ``d``; ``cfg.b`` is ignored."""
    ledger = CostLedger() if ledger is None else ledger
    Z = scale_rows_by_labels(d)
    x = _start(d, x0)
    rec = _Recorder(Z, d.m_original, cfg.K, cfg.trace_every or 1, ledger,
                    hockney or HockneyParams(), on_record)
    rec(0, 0, x)
    for k in range(1, cfg.K + 1):
        v = logreg.spmv(Z, x, ledger)
        u = logreg.sigmoid(v, ledger)
        x = logreg.update(x, logreg.spmv_t(Z, u, ledger), cfg.eta, d.m, ledger)
        rec(k, k * d.m, x)
    return x, rec.trace


def sgd(d: Dataset, cfg: SolverConfig, x0=None, ledger: CostLedger | None = None,
        hockney: HockneyParams | None = None,
        on_record=None) -> tuple[np.ndarray, ConvergenceTrace]:
    """Mini-batch SGD with cyclic (default) or seeded random batches."""
    if d.m % cfg.b:
        raise ValueError(f"row count {d.m} is not a multiple of b={cfg.b}; pad the dataset first")
    ledger = CostLedger() if ledger is None else ledger
    Z = scale_rows_by_labels(d)
    x = _start(d, x0)
    sampler = make_sampler(cfg, d.m)
    rec = _Recorder(Z, d.m_original, cfg.K, cfg.trace_every or 1, ledger,
                    hockney or HockneyParams(), on_record)
    rec(0, 0, x)
    for k in range(1, cfg.K + 1):
        Zb = Z.take_rows(sampler.next())
        v = logreg.spmv(Zb, x, ledger)
        u = logreg.sigmoid(v, ledger)
        x = logreg.update(x, logreg.spmv_t(Zb, u, ledger), cfg.eta, cfg.b, ledger)
        rec(k, k * cfg.b, x)
    return x, rec.trace


def gram_lower(Y: CsrMatrix, s: int, b: int, acct=None,
               category: str = "gram") -> list[np.ndarray]:
    """Strictly lower block row j of Y Y^T as a (b x j*b) array, for j = 0..s-1.

    Only blocks (j, l) with l < j are formed. The flop charge is twice the
    number of multiply-adds a sparse-sparse product performs, i.e. twice the
    sum over row pairs of their common nonzero columns.
    """
    if Y.num_rows != s * b:
        raise ValueError("Y must have s*b rows")
    used, local_cols = np.unique(Y.col_idx, return_inverse=True)
    dense = np.zeros((Y.num_rows, used.size))
    dense[np.repeat(np.arange(Y.num_rows), Y.row_nnz()), local_cols] = Y.values
    if acct is not None:
        # Stored zeros still cost a multiply-add in a sparse product.
        pattern = np.zeros(dense.shape, dtype=np.int64)
        pattern[np.repeat(np.arange(Y.num_rows), Y.row_nnz()), local_cols] = 1
        counts = pattern.reshape(s, b, -1).sum(axis=1)  # per-block column counts
        earlier = np.cumsum(counts, axis=0) - counts
        acct.record_flops(category, 2 * int(np.sum(counts * earlier)))
    return [dense[j * b:(j + 1) * b] @ dense[:j * b].T for j in range(s)]


def sstep_u(v: np.ndarray, G: list[np.ndarray] | None, s: int, b: int, eta: float,
            acct=None) -> np.ndarray:
    """Recover the s stacked sigmoid vectors of one block from v = Y x and Gram rows.

    Batch j sees v_j + (eta/b) sum_{l<j} G_jl u_l, which equals Y_j times the
    iterate that plain SGD reaches after the first j batches. ``G=None``
    skips the corrections.
    """
    u = np.empty(s * b)
    for j in range(s):
        arg = v[j * b:(j + 1) * b]
        if G is not None and j > 0:
            arg = arg + (eta / b) * (G[j] @ u[:j * b])
            if acct is not None:
                acct.record_flops("gradient", 2 * b * j * b + 2 * b)
        u[j * b:(j + 1) * b] = logreg.sigmoid(arg, acct)
    return u


def sstep_block(Y: CsrMatrix, x: np.ndarray, s: int, b: int, eta: float, acct=None,
                apply_corrections: bool = True) -> np.ndarray:
    """Stacked u of s consecutive SGD steps, computed from x alone."""
    v = logreg.spmv(Y, x, acct)
    G = gram_lower(Y, s, b, acct) if apply_corrections and s > 1 else None
    return sstep_u(v, G, s, b, eta, acct)


def sstep_sgd(d: Dataset, cfg: SolverConfig, x0=None, ledger: CostLedger | None = None,
              hockney: HockneyParams | None = None, apply_corrections: bool = True,
              on_record=None) -> tuple[np.ndarray, ConvergenceTrace]:
    """SGD reorganized into blocks of s steps that touch x once per block.

    Produces the same iterates as :func:`sgd` up to rounding (bitwise for s=1).
    ``apply_corrections=False`` drops the Gram terms and exists only to show
    that they matter.
    """
    s, b = cfg.s, cfg.b
    if cfg.K % s:
        raise ValueError(f"K={cfg.K} is not a multiple of s={s}")
    if d.m % (s * b):
        raise ValueError(f"row count {d.m} is not a multiple of s*b={s * b}; pad the dataset first")
    ledger = CostLedger() if ledger is None else ledger
    Z = scale_rows_by_labels(d)
    x = _start(d, x0)
    sampler = make_sampler(cfg, d.m)
    rec = _Recorder(Z, d.m_original, cfg.K, cfg.trace_every or s, ledger,
                    hockney or HockneyParams(), on_record)
    rec(0, 0, x)
    for blk in range(cfg.K // s):
        rows = np.concatenate([sampler.next() for _ in range(s)])
        Y = Z.take_rows(rows)
        u = sstep_block(Y, x, s, b, cfg.eta, ledger, apply_corrections)
        x = logreg.update(x, logreg.spmv_t(Y, u, ledger), cfg.eta, b, ledger)
        k = (blk + 1) * s
        rec(k, k * b, x)
    return x, rec.trace
