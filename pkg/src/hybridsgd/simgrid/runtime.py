"""Deterministic virtual-cluster runtime.

A rank program is a generator function ``program(ctx, *args)``. It performs
local work directly and communicates by yielding collective requests::

    total = yield ctx.allreduce(ctx.row_team, v, "sgd_comm")

Collectives are matched by communicator name and a per-communicator sequence
number kept by every rank. Reductions fold members in ascending rank order,
so the result never depends on which rank arrives first. Programs that are
plain functions (no ``yield``) are also accepted.
"""

from __future__ import annotations

import inspect
import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .grid import Communicator, ProcessorGrid
from .ledger import CostLedger, HockneyParams, MergedLedger, allreduce_messages

MODES = ("reference", "threaded")


class CollectiveError(RuntimeError):
    """Ranks disagreed about a collective (payload length, category)."""


class DeadlockError(CollectiveError):
    """Some ranks wait on a collective that the remaining ranks never join."""

    def __init__(self, comm: str, seq: int, waiting: Sequence[int], missing: Sequence[int]):
        super().__init__(
            f"deadlock in allreduce #{seq} on communicator {comm!r}: "
            f"ranks {list(waiting)} are waiting, ranks {list(missing)} never arrived"
        )
        self.comm = comm
        self.seq = seq


@dataclass(frozen=True)
class AllreduceRequest:
    comm: Communicator
    seq: int
    vector: np.ndarray
    category: str
    parts: tuple[tuple[str, int], ...] | None

    @property
    def key(self) -> tuple[str, int]:
        return (self.comm.name, self.seq)


@dataclass(frozen=True)
class CollectiveEvent:
    comm: str
    seq: int
    size: int
    words: int
    messages: int
    category: str


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    grad_evals: int
    clock: float
    data: dict


class RankContext:
    """Everything a rank program may touch: its coordinates, teams and ledger."""

    def __init__(self, grid: ProcessorGrid, rank: int, hockney: HockneyParams):
        self.grid = grid
        self.rank = rank
        self.coords = grid.coords(rank)
        self.hockney = hockney
        self.ledger = CostLedger()
        self.clock = 0.0
        self.records: list[Checkpoint] = []
        self._seq: dict[str, int] = {}

    @property
    def world(self) -> Communicator:
        return self.grid.world

    @property
    def row_team(self) -> Communicator:
        return self.grid.row_team(self.coords[0])

    @property
    def column_team(self) -> Communicator:
        return self.grid.column_team(self.coords[1])

    def allreduce(self, comm: Communicator, v, category: str,
                  parts: Sequence[tuple[str, int]] | None = None) -> AllreduceRequest:
        """Build a sum-allreduce request; ``yield`` it to obtain the result."""
        if self.rank not in comm.members:
            raise CollectiveError(f"rank {self.rank} is not a member of {comm.name!r}")
        vec = np.array(v, dtype=np.float64, copy=True).ravel()
        if parts is not None and sum(size for _, size in parts) != vec.size:
            raise CollectiveError("payload parts must add up to the vector length")
        seq = self._seq.get(comm.name, 0)
        self._seq[comm.name] = seq + 1
        return AllreduceRequest(comm, seq, vec, category,
                                None if parts is None else tuple(parts))

    def record_flops(self, category: str, amount: int, transcendental: int = 0) -> None:
        self.ledger.record_flops(category, amount, transcendental)
        self.clock += self.hockney.compute_seconds(amount, transcendental)

    def record(self, iteration: int, grad_evals: int, **data) -> None:
        """Store a trace checkpoint stamped with this rank's virtual clock."""
        self.records.append(Checkpoint(iteration, grad_evals, self.clock, data))


@dataclass
class SpawnResult:
    results: list
    ledger: MergedLedger
    clocks: list[float]
    records: list[list[Checkpoint]]
    events: list[CollectiveEvent] = field(default_factory=list)

    @property
    def modeled_time(self) -> float:
        return max(self.clocks) if self.clocks else 0.0


class Simulator:
    """Run one program on every rank of a grid.

    ``mode="reference"`` steps ranks cooperatively in ascending rank order;
    ``mode="threaded"`` gives each rank an OS thread. Both produce the same
    results, ledgers, clocks and event list.
    """

    def __init__(self, grid: ProcessorGrid, hockney: HockneyParams | None = None,
                 mode: str = "reference"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.grid = grid
        self.hockney = hockney or HockneyParams()
        self.mode = mode
        self.contexts: list[RankContext] = []

    def spawn(self, program: Callable, *args, **kwargs) -> SpawnResult:
        ctxs = [RankContext(self.grid, r, self.hockney) for r in range(self.grid.p)]
        self.contexts = ctxs  # left in place so callers can inspect a failed run
        events: list[CollectiveEvent] = []
        run = self._run_reference if self.mode == "reference" else self._run_threaded
        results = run(program, args, kwargs, ctxs, events)
        events.sort(key=lambda e: (e.comm, e.seq))
        return SpawnResult(results, MergedLedger([c.ledger for c in ctxs]),
                           [c.clock for c in ctxs], [c.records for c in ctxs], events)

    def _complete(self, posts: dict[int, AllreduceRequest], ctxs: list[RankContext],
                  events: list[CollectiveEvent]) -> dict[int, np.ndarray]:
        members = posts[min(posts)].comm.members
        reqs = [posts[r] for r in members]
        first = reqs[0]
        for req in reqs[1:]:
            if req.vector.size != first.vector.size:
                raise CollectiveError(
                    f"allreduce #{first.seq} on {first.comm.name!r}: rank {members[0]} sent "
                    f"{first.vector.size} words but a peer sent {req.vector.size}")
            if req.category != first.category:
                raise CollectiveError(
                    f"allreduce #{first.seq} on {first.comm.name!r}: category mismatch "
                    f"({first.category!r} vs {req.category!r})")
        total = first.vector.copy()
        for req in reqs[1:]:
            total = total + req.vector
        size = len(members)
        words = first.vector.size if size > 1 else 0
        messages = allreduce_messages(size)
        finish = max(ctxs[r].clock for r in members) + self.hockney.comm_seconds(words, messages)
        for r in members:
            ctxs[r].ledger.record_comm(first.category, words, messages, first.parts)
            ctxs[r].clock = finish
        events.append(CollectiveEvent(first.comm.name, first.seq, size, words, messages,
                                      first.category))
        return {r: total.copy() for r in members}

    @staticmethod
    def _start(program, args, kwargs, ctx):
        out = program(ctx, *args, **kwargs)
        return out if inspect.isgenerator(out) else None, out

    @staticmethod
    def _check_request(req, rank: int) -> AllreduceRequest:
        if not isinstance(req, AllreduceRequest):
            raise TypeError(f"rank {rank} yielded {type(req).__name__}; "
                            "rank programs may only yield ctx.allreduce(...)")
        return req

    @staticmethod
    def _deadlock(pending: dict[tuple[str, int], dict[int, AllreduceRequest]]) -> DeadlockError:
        key = min(pending)
        posts = pending[key]
        members = next(iter(posts.values())).comm.members
        waiting = sorted(posts)
        missing = [r for r in members if r not in posts]
        return DeadlockError(key[0], key[1], waiting, missing)

    def _run_reference(self, program, args, kwargs, ctxs, events) -> list:
        p = len(ctxs)
        gens: list = [None] * p
        results: list = [None] * p
        done = [False] * p
        for r in range(p):
            gens[r], value = self._start(program, args, kwargs, ctxs[r])
            if gens[r] is None:
                results[r], done[r] = value, True
        inbox: list = [None] * p
        waiting: list = [None] * p
        pending: dict[tuple[str, int], dict[int, AllreduceRequest]] = {}
        while not all(done):
            progressed = False
            for r in range(p):
                if done[r] or waiting[r] is not None:
                    continue
                progressed = True
                try:
                    req = gens[r].send(inbox[r])
                except StopIteration as stop:
                    results[r], done[r] = stop.value, True
                    continue
                inbox[r] = None
                req = self._check_request(req, r)
                posts = pending.setdefault(req.key, {})
                posts[r] = req
                waiting[r] = req.key
                if len(posts) == req.comm.size:
                    del pending[req.key]
                    for member, value in self._complete(posts, ctxs, events).items():
                        inbox[member] = value
                        waiting[member] = None
            if not progressed:
                raise self._deadlock(pending)
        return results

    def _run_threaded(self, program, args, kwargs, ctxs, events) -> list:
        p = len(ctxs)
        cond = threading.Condition()
        results: list = [None] * p
        done = [False] * p
        blocked = [False] * p
        inbox: list = [None] * p
        pending: dict[tuple[str, int], dict[int, AllreduceRequest]] = {}
        failure: list[BaseException] = []

        def fail(exc: BaseException) -> None:
            if not failure:
                failure.append(exc)
            cond.notify_all()

        def check_deadlock() -> None:
            # Called under the lock: nobody can make progress any more.
            if pending and all(done[r] or blocked[r] for r in range(p)):
                fail(self._deadlock(pending))

        def worker(r: int) -> None:
            try:
                gen, value = self._start(program, args, kwargs, ctxs[r])
                if gen is None:
                    with cond:
                        results[r], done[r] = value, True
                        check_deadlock()
                    return
                value = None
                while True:
                    try:
                        req = gen.send(value)
                    except StopIteration as stop:
                        with cond:
                            results[r], done[r] = stop.value, True
                            check_deadlock()
                        return
                    req = self._check_request(req, r)
                    with cond:
                        if failure:
                            return
                        posts = pending.setdefault(req.key, {})
                        posts[r] = req
                        blocked[r] = True
                        if len(posts) == req.comm.size:
                            del pending[req.key]
                            for member, out in self._complete(posts, ctxs, events).items():
                                inbox[member] = out
                                blocked[member] = False
                            cond.notify_all()
                        else:
                            check_deadlock()
                        while blocked[r] and not failure:
                            cond.wait()
                        if failure:
                            return
                        value, inbox[r] = inbox[r], None
            except BaseException as exc:  # surfaced to the caller below
                with cond:
                    fail(exc)

        threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in range(p)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if failure:
            raise failure[0]
        return results


def spawn(grid: ProcessorGrid, program: Callable, *args, hockney: HockneyParams | None = None,
          mode: str = "reference", **kwargs) -> SpawnResult:
    return Simulator(grid, hockney, mode).spawn(program, *args, **kwargs)
