"""Flop / word / message counters and the Hockney time model."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

CATEGORIES = ("spmv", "gram", "gradient", "sstep_comm", "fedavg_comm", "sgd_comm", "memory_mgmt")
COUNTERS = ("flops", "transcendental", "words", "messages")


def _zeros() -> dict[str, int]:
    return dict.fromkeys(CATEGORIES, 0)


def allreduce_messages(size: int) -> int:
    """Latency charge of one allreduce over ``size`` ranks: 2 * ceil(log2 size)."""
    return 2 * math.ceil(math.log2(size)) if size > 1 else 0


@dataclass
class CostLedger:
    """Per-category counters for one rank (or an aggregate of ranks).

    ``detail`` splits words of a collective payload into named parts, keyed
    ``"<category>.<part>"``.
    """

    flops: dict[str, int] = field(default_factory=_zeros)
    transcendental: dict[str, int] = field(default_factory=_zeros)
    words: dict[str, int] = field(default_factory=_zeros)
    messages: dict[str, int] = field(default_factory=_zeros)
    detail: dict[str, int] = field(default_factory=dict)

    def _check(self, category: str) -> None:
        if category not in CATEGORIES:
            raise KeyError(f"unknown cost category {category!r}")

    def record_flops(self, category: str, amount: int, transcendental: int = 0) -> None:
        self._check(category)
        if amount < 0 or transcendental < 0:
            raise ValueError("cost amounts must be nonnegative")
        self.flops[category] += int(amount)
        self.transcendental[category] += int(transcendental)

    def record_comm(self, category: str, words: int, messages: int,
                    parts: Iterable[tuple[str, int]] | None = None) -> None:
        self._check(category)
        if words < 0 or messages < 0:
            raise ValueError("cost amounts must be nonnegative")
        self.words[category] += int(words)
        self.messages[category] += int(messages)
        if parts and words:
            for part, size in parts:
                key = f"{category}.{part}"
                self.detail[key] = self.detail.get(key, 0) + int(size)

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())

    @property
    def total_transcendental(self) -> int:
        return sum(self.transcendental.values())

    @property
    def words_moved(self) -> int:
        return sum(self.words.values())

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    def copy(self) -> CostLedger:
        return CostLedger(dict(self.flops), dict(self.transcendental), dict(self.words),
                          dict(self.messages), dict(self.detail))

    def rows(self) -> list[dict]:
        out = [{"category": c, **{k: getattr(self, k)[c] for k in COUNTERS}} for c in CATEGORIES]
        out.append({"category": "total", "flops": self.total_flops,
                    "transcendental": self.total_transcendental,
                    "words": self.words_moved, "messages": self.total_messages})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["category", *COUNTERS], lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"categories": self.rows(), "detail": self.detail}, indent=2,
                          sort_keys=True)


def merge(ledgers: Iterable[CostLedger], how: str = "max") -> CostLedger:
    """Combine ledgers category by category with ``max`` or ``sum``."""
    ledgers = list(ledgers)
    if how not in ("max", "sum"):
        raise ValueError("how must be 'max' or 'sum'")
    op = max if how == "max" else sum
    out = CostLedger()
    if not ledgers:
        return out
    for counter in COUNTERS:
        target = getattr(out, counter)
        for c in CATEGORIES:
            target[c] = op(getattr(led, counter)[c] for led in ledgers)
    keys = sorted({k for led in ledgers for k in led.detail})
    out.detail = {k: op(led.detail.get(k, 0) for led in ledgers) for k in keys}
    return out


@dataclass
class MergedLedger:
    """Rank-private ledgers plus their critical-path and summed aggregates.

    ``critical`` takes each category's maximum over ranks; since every
    collective is charged to each participant, concurrent team collectives
    count once there.
    """

    per_rank: list[CostLedger]

    @property
    def critical(self) -> CostLedger:
        return merge(self.per_rank, "max")

    @property
    def total(self) -> CostLedger:
        return merge(self.per_rank, "sum")

    def __eq__(self, other) -> bool:
        return isinstance(other, MergedLedger) and self.per_rank == other.per_rank

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["scope", "category", *COUNTERS],
                                lineterminator="\n")
        writer.writeheader()
        for row in self.critical.rows():
            writer.writerow({"scope": "critical", **row})
        for rank, led in enumerate(self.per_rank):
            for row in led.rows():
                writer.writerow({"scope": f"rank{rank}", **row})
        return buf.getvalue()


@dataclass(frozen=True)
class HockneyParams:
    alpha: float = 0.0  # seconds per message
    beta: float = 0.0   # seconds per word
    gamma: float = 0.0  # seconds per flop
    phi: float = 4.0    # flop-equivalents per transcendental op

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("Hockney parameters must be nonnegative")
        if self.phi < 1:
            raise ValueError("phi must be >= 1")

    def compute_seconds(self, flops: float, transcendental: float = 0) -> float:
        return self.gamma * (flops + self.phi * transcendental)

    def comm_seconds(self, words: float, messages: float) -> float:
        return self.alpha * messages + self.beta * words


def hockney_seconds(F: float, L: float, W: float, alpha: float, beta: float, gamma: float,
                    transcendental: float = 0.0, phi: float = 4.0) -> float:
    """gamma*(F + phi*T) + alpha*L + beta*W."""
    return gamma * (F + phi * transcendental) + alpha * L + beta * W


def hockney_time(ledger: CostLedger | MergedLedger, alpha: float, beta: float, gamma: float,
                 phi: float = 4.0) -> float:
    if min(alpha, beta, gamma) < 0:
        raise ValueError("Hockney parameters must be nonnegative")
    if isinstance(ledger, MergedLedger):
        ledger = ledger.critical
    return hockney_seconds(ledger.total_flops, ledger.total_messages, ledger.words_moved,
                           alpha, beta, gamma, ledger.total_transcendental, phi)
