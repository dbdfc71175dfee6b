"""Parallel SGD, FedAvg and HybridSGD as rank programs on the simulated grid.

Every rank holds a block of Z = diag(y) A and the slice of x matching its
columns. Communication happens only through sum-allreduces on the row team
(ranks sharing a row block) or the column team (ranks sharing a column block).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import logreg
from .csr import CsrMatrix
from .dataio.dataset import Dataset, scale_rows_by_labels
from .dataio.layout import LAYOUTS, batch_block_rows, partition
from .seqsolvers import (
    ConvergenceTrace,
    DivergenceError,
    SolverConfig,
    TraceRecord,
    gram_lower,
    make_sampler,
    sstep_u,
)
from .simgrid.grid import ProcessorGrid
from .simgrid.ledger import HockneyParams, MergedLedger
from .simgrid.runtime import Simulator, SpawnResult


@dataclass
class DistributedRun:
    algorithm: str
    grid: ProcessorGrid
    layout: str
    cfg: SolverConfig
    x: np.ndarray
    trace: ConvergenceTrace
    ledger: MergedLedger
    spawn: SpawnResult

    @property
    def modeled_time(self) -> float:
        return self.spawn.modeled_time

    def replicas_agree(self) -> bool:
        """True when every rank's final slice equals the gathered solution."""
        for rank, (c0, c1, x_loc) in enumerate(self.spawn.results):
            if not np.array_equal(x_loc[: max(0, min(c1, self.x.size) - c0)],
                                  self.x[c0:min(c1, self.x.size)]):
                return False
        return True


def _check_finite(x: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(k)


def _due(k: int, every: int, K: int, last: int) -> bool:
    """Whether iteration k (reached from ``last``) crosses a trace checkpoint."""
    return k == K or k // every > last // every


def _assemble(records, grid: ProcessorGrid, n: int, Z: CsrMatrix, m: int,
              row: int = 0) -> ConvergenceTrace:
    """Stitch per-rank checkpoints of grid row ``row`` into a global trace."""
    trace = ConvergenceTrace()
    heads = [records[grid.rank(row, j)] for j in range(grid.p_c)]
    count = min((len(r) for r in records), default=0)
    for t in range(count):
        x = np.concatenate([h[t].data["x"] for h in heads])[:n]
        clock = max(r[t].clock for r in records)
        first = heads[0][t]
        trace.append(TraceRecord(first.iteration, first.grad_evals,
                                 logreg.objective_z(Z, x, m), clock, 0.0))
    return trace


def _execute(algorithm: str, d: Dataset, grid: ProcessorGrid, layout: str, cfg: SolverConfig,
             program, args: tuple, hockney: HockneyParams | None, mode: str) -> DistributedRun:
    Z = scale_rows_by_labels(d)
    sim = Simulator(grid, hockney, mode)
    try:
        res = sim.spawn(program, *args)
    except DivergenceError as exc:
        partial = _assemble([c.records for c in sim.contexts], grid, d.n, Z, d.m_original)
        raise DivergenceError(exc.iteration, partial) from exc
    trace = _assemble(res.records, grid, d.n, Z, d.m_original)
    heads = [res.results[grid.rank(0, j)][2] for j in range(grid.p_c)]
    x = np.concatenate(heads)[:d.n]
    return DistributedRun(algorithm, grid, layout, cfg, x, trace, res.ledger, res)


# Parallel SGD ---------------------------------------------------------------

def _par_sgd_rank(ctx, blocks, cfg: SolverConfig):
    blk = blocks[ctx.rank]
    b_loc = cfg.b // ctx.grid.p_r
    x = np.zeros(blk.col_stop - blk.col_start)
    # Every team walks its own rows with the same cyclic pattern, so together
    # they see exactly the global batch of each iteration.
    sampler = make_sampler(cfg, blk.matrix.num_rows, b_loc)
    every = cfg.trace_every or 1
    ctx.record(0, 0, x=x.copy())
    for k in range(1, cfg.K + 1):
        Zb = blk.matrix.take_rows(sampler.next())
        v = logreg.spmv(Zb, x, ctx)
        v = yield ctx.allreduce(ctx.row_team, v, "sgd_comm")
        u = logreg.sigmoid(v, ctx)
        g = logreg.spmv_t(Zb, u, ctx)
        g = yield ctx.allreduce(ctx.column_team, g, "sgd_comm")
        x = logreg.update(x, g, cfg.eta, cfg.b, ctx)
        _check_finite(x, k)
        if _due(k, every, cfg.K, k - 1):
            ctx.record(k, k * cfg.b, x=x.copy())
    return blk.col_start, blk.col_stop, x


def par_sgd(d: Dataset, grid: ProcessorGrid, layout: str, cfg: SolverConfig,
            hockney: HockneyParams | None = None, mode: str = "reference") -> DistributedRun:
    """Mini-batch SGD with A split over a p_r x p_c grid.

    Each global batch of b rows is cut into p_r chunks of b/p_r rows, one per
    grid row. A rank forms its partial Z_batch x, sums it over its row team
    (b/p_r words), applies the sigmoid, forms its partial gradient and sums
    that over its column team (n/p_c words). The x update is replicated.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}")
    if cfg.b % grid.p_r:
        raise ValueError(f"p_r={grid.p_r} must divide the batch size b={cfg.b}")
    if d.m % cfg.b:
        raise ValueError(f"row count {d.m} is not a multiple of b={cfg.b}; pad the dataset first")
    part = partition(scale_rows_by_labels(d), grid, layout, row_scheme="batch", batch=cfg.b)
    return _execute("sgd", d, grid, layout, cfg, _par_sgd_rank, (part.blocks, cfg),
                    hockney, mode)


# FedAvg ---------------------------------------------------------------------

def local_batch_sizes(b: int, p: int) -> list[int]:
    """ceil(b/p) rows per worker; the last worker gets the remainder when one exists."""
    size = math.ceil(b / p)
    sizes = [size] * p
    rest = b - size * (p - 1)
    if 0 < rest < size:
        sizes[-1] = rest
    return sizes


def _fedavg_rank(ctx, Z_loc: CsrMatrix, b_loc: int, cfg: SolverConfig, grad_per_iter: int):
    p = ctx.grid.p
    x = np.zeros(Z_loc.num_cols)
    sampler = make_sampler(cfg, Z_loc.num_rows, b_loc, seed_offset=ctx.rank)
    every = cfg.trace_every or cfg.tau
    ctx.record(0, 0, x=x.copy())
    for r in range(cfg.K // cfg.tau):
        for _ in range(cfg.tau):
            Zb = Z_loc.take_rows(sampler.next())
            u = logreg.sigmoid(logreg.spmv(Zb, x, ctx), ctx)
            x = logreg.update(x, logreg.spmv_t(Zb, u, ctx), cfg.eta, b_loc, ctx)
        k = (r + 1) * cfg.tau
        _check_finite(x, k)
        if p > 1:
            total = yield ctx.allreduce(ctx.world, x, "fedavg_comm")
            ctx.record_flops("gradient", x.size)
            x = total / p
        if _due(k, every, cfg.K, k - cfg.tau):
            ctx.record(k, k * grad_per_iter, x=x.copy())
    return 0, x.size, x


def fedavg(d: Dataset, p: int, cfg: SolverConfig, matched: bool = False,
           hockney: HockneyParams | None = None, mode: str = "reference") -> DistributedRun:
    """Federated averaging on p workers that each own m/p consecutive rows.

    ``cfg.K`` counts local iterations per worker; there are K/tau averaging
    rounds. Workers sample their own rows cyclically from local row 0 with
    batch ceil(b/p). With ``matched=True`` worker i instead owns the i-th
    chunk of every global cyclic batch (b/p rows each), so that a round with
    tau = 1 reproduces one global-batch SGD step.
    """
    if p < 1:
        raise ValueError("need at least one worker")
    if cfg.tau < 1 or cfg.K % cfg.tau:
        raise ValueError(f"K={cfg.K} must be a multiple of tau={cfg.tau}")
    if d.m % p:
        raise ValueError(f"p={p} does not divide the (padded) row count {d.m}")
    grid = ProcessorGrid(p, 1)
    Z = scale_rows_by_labels(d)
    if matched:
        if cfg.b % p or d.m % cfg.b:
            raise ValueError("matched sampling needs p | b and b | m")
        row_sets = [batch_block_rows(d.m, cfg.b, p, i) for i in range(p)]
        sizes = [cfg.b // p] * p
    else:
        h = d.m // p
        row_sets = [np.arange(i * h, (i + 1) * h) for i in range(p)]
        sizes = local_batch_sizes(cfg.b, p)
    if max(sizes) > d.m // p:
        raise ValueError(f"local batch {max(sizes)} exceeds the {d.m // p} rows per worker")
    locals_ = [Z.take_rows(rows) for rows in row_sets]
    grad_per_iter = sum(sizes)

    def program(ctx):
        return (yield from _fedavg_rank(ctx, locals_[ctx.rank], sizes[ctx.rank], cfg,
                                        grad_per_iter))

    return _execute("fedavg", d, grid, "row1d", cfg, program, (), hockney, mode)


# HybridSGD ------------------------------------------------------------------

def _hybrid_rank(ctx, blocks, cfg: SolverConfig):
    blk = blocks[ctx.rank]
    p_r = ctx.grid.p_r
    s, tau = cfg.s, cfg.tau
    b_loc = cfg.b // p_r
    gram_words = s * (s - 1) // 2 * b_loc * b_loc
    x = np.zeros(blk.col_stop - blk.col_start)
    sampler = make_sampler(cfg, blk.matrix.num_rows, b_loc)
    every = cfg.trace_every or tau
    ctx.record(0, 0, x=x.copy())
    for r in range(cfg.K // tau):
        for _ in range(tau // s):
            Y = blk.matrix.take_rows(np.concatenate([sampler.next() for _ in range(s)]))
            v = logreg.spmv(Y, x, ctx)
            G = gram_lower(Y, s, b_loc, ctx) if s > 1 else []
            payload = np.concatenate([g.ravel() for g in G[1:]] + [v])
            payload = yield ctx.allreduce(ctx.row_team, payload, "sstep_comm",
                                          parts=[("gram", gram_words), ("v", s * b_loc)])
            G_sum, off = [np.zeros((b_loc, 0))], 0
            for j in range(1, s):
                G_sum.append(payload[off:off + b_loc * j * b_loc].reshape(b_loc, j * b_loc))
                off += b_loc * j * b_loc
            u = sstep_u(payload[off:], G_sum if s > 1 else None, s, b_loc, cfg.eta, ctx)
            x = logreg.update(x, logreg.spmv_t(Y, u, ctx), cfg.eta, b_loc, ctx)
        k = (r + 1) * tau
        _check_finite(x, k)
        if p_r > 1:
            total = yield ctx.allreduce(ctx.column_team, x, "fedavg_comm")
            ctx.record_flops("gradient", x.size)
            x = total / p_r
        if _due(k, every, cfg.K, k - tau):
            ctx.record(k, k * cfg.b, x=x.copy())
    return blk.col_start, blk.col_stop, x


def hybrid_sgd(d: Dataset, grid: ProcessorGrid, cfg: SolverConfig,
               hockney: HockneyParams | None = None, mode: str = "reference") -> DistributedRun:
    """FedAvg across the p_r row teams, column-parallel s-step SGD inside each.

    Row team i owns m/p_r consecutive rows and runs s-step SGD with local batch
    b/p_r, its p_c ranks summing Gram blocks and Y x in one allreduce of
    C(s,2)(b/p_r)^2 + s b/p_r words per s-block. After every tau local
    iterations the column teams average their x slices. ``cfg.K`` counts
    local iterations, giving K/tau averaging rounds.
    """
    s, tau = cfg.s, cfg.tau
    if s > tau:
        raise ValueError(f"s={s} must not exceed tau={tau}")
    if tau % s:
        raise ValueError(f"tau={tau} must be a multiple of s={s}")
    if cfg.K % tau:
        raise ValueError(f"K={cfg.K} must be a multiple of tau={tau}")
    if cfg.b % grid.p_r:
        raise ValueError(f"p_r={grid.p_r} must divide the batch size b={cfg.b}")
    if d.m % grid.p_r or (d.m // grid.p_r) % (s * cfg.b // grid.p_r):
        raise ValueError(f"row count {d.m} must split into p_r={grid.p_r} teams whose rows "
                         f"are a multiple of s*b/p_r; pad the dataset first")
    part = partition(scale_rows_by_labels(d), grid, "grid2d")
    return _execute("hybrid", d, grid, "grid2d", cfg, _hybrid_rank, (part.blocks, cfg),
                    hockney, mode)


def par_sstep_sgd(d: Dataset, p: int, cfg: SolverConfig, hockney: HockneyParams | None = None,
                  mode: str = "reference") -> DistributedRun:
    """s-step SGD with columns split over p ranks (HybridSGD on a 1 x p grid)."""
    cfg = dataclasses.replace(cfg, tau=cfg.s)
    run = hybrid_sgd(d, ProcessorGrid(1, p), cfg, hockney, mode)
    run.algorithm, run.layout = "sstep", "col1d"
    return run


__all__ = [
    "DistributedRun", "fedavg", "hybrid_sgd", "local_batch_sizes",
    "par_sgd", "par_sstep_sgd",
]
