"""Cells, directions and the matrix coordinate convention."""
from __future__ import annotations

from enum import Enum, IntEnum

Coord = tuple[int, int]


class Cell(IntEnum):
    WALL = 0
    OPEN = 1
    EXIT = 2
    FRAME = 3

    @property
    def char(self) -> str:
        return "WOEX"[self]

    @classmethod
    def from_char(cls, ch: str) -> "Cell":
        try:
            return cls("WOEX".index(ch))
        except ValueError:
            raise ValueError(f"unknown cell character {ch!r}") from None


class Direction(Enum):
    """Cardinal moves. NORTH decrements the row, EAST increments the column."""

    NORTH = (-1, 0)
    SOUTH = (1, 0)
    EAST = (0, 1)
    WEST = (0, -1)

    @property
    def delta(self) -> Coord:
        return self.value

    @property
    def letter(self) -> str:
        return self.name[0]

    @property
    def reverse(self) -> "Direction":
        return _REVERSE[self]

    def step(self, cell: Coord) -> Coord:
        dr, dc = _DELTAS[self]
        return (cell[0] + dr, cell[1] + dc)

    @classmethod
    def between(cls, a: Coord, b: Coord) -> "Direction":
        """Direction of the single step from ``a`` to the adjacent cell ``b``."""
        try:
            return cls((b[0] - a[0], b[1] - a[1]))
        except ValueError:
            raise ValueError(f"{a} and {b} are not 4-adjacent") from None

    @classmethod
    def from_letter(cls, letter: str) -> "Direction":
        for d in cls:
            if d.letter == letter.upper():
                return d
        raise ValueError(f"unknown direction {letter!r}")


# Fixed iteration order everywhere: N, S, E, W.
DIRECTIONS: tuple[Direction, ...] = (Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST)

_DELTAS = {d: d.value for d in Direction}

_REVERSE = {
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
}


def neighbors(cell: Coord) -> list[Coord]:
    return [d.step(cell) for d in DIRECTIONS]


def manhattan(a: tuple[float, float], b: tuple[float, float]) -> float:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
