"""Virtual processor grid, collectives and exact cost accounting."""

from .grid import Communicator, ProcessorGrid
from .ledger import (
    CATEGORIES,
    CostLedger,
    HockneyParams,
    MergedLedger,
    allreduce_messages,
    hockney_seconds,
    hockney_time,
    merge,
)
from .runtime import (
    AllreduceRequest,
    Checkpoint,
    CollectiveError,
    CollectiveEvent,
    DeadlockError,
    RankContext,
    Simulator,
    SpawnResult,
    spawn,
)

__all__ = [
    "CATEGORIES", "AllreduceRequest", "Checkpoint", "CollectiveError", "CollectiveEvent",
    "Communicator", "CostLedger", "DeadlockError", "HockneyParams", "MergedLedger",
    "ProcessorGrid", "RankContext", "Simulator", "SpawnResult", "allreduce_messages",
    "hockney_seconds", "hockney_time", "merge", "spawn",
]
