from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property


@dataclass(frozen=True)
class Communicator:
    """An ordered group of global ranks that take part in collectives together."""

    name: str
    scope: str  # "world", "row-team" or "column-team"
    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if list(self.members) != sorted(set(self.members)):
            raise ValueError("communicator members must be unique and ascending")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ProcessorGrid:
    """A p_r x p_c grid of ranks numbered row-major: rank = i * p_c + j.

    A row team is the p_c ranks of one grid row; a column team is the p_r
    ranks of one grid column.
    """

    p_r: int
    p_c: int

    def __post_init__(self) -> None:
        if self.p_r < 1 or self.p_c < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.p_r} x {self.p_c}")

    @property
    def p(self) -> int:
        return self.p_r * self.p_c

    def rank(self, i: int, j: int) -> int:
        return i * self.p_c + j

    def coords(self, rank: int) -> tuple[int, int]:
        return divmod(rank, self.p_c)

    @cached_property
    def world(self) -> Communicator:
        return Communicator("world", "world", tuple(range(self.p)))

    def row_team(self, i: int) -> Communicator:
        return Communicator(f"row[{i}]", "row-team",
                            tuple(self.rank(i, j) for j in range(self.p_c)))

    def column_team(self, j: int) -> Communicator:
        return Communicator(f"col[{j}]", "column-team",
                            tuple(self.rank(i, j) for i in range(self.p_r)))
