"""
Tile-grid level model for the 1v1 deathmatch arena.

A level is a 20x20 grid. Rows run north to south, columns west to east.
Player 1 owns the 5x5 base in the north-west corner, player 2 the one in
the south-east corner.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

SIZE = 20
BASE_SIZE = 5
N_CHANNELS = 8

CHANNEL_NAMES = (
    "ground",
    "first_floor",
    "second_floor",
    "stairs",
    "double_damage",
    "healing",
    "armor",
    "cover",
)

# N, E, S, W
DIRECTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))

Coord = Tuple[int, int]


class Elevation(IntEnum):
    GROUND = 0
    FIRST_FLOOR = 1
    WALL = 2


class Entity(IntEnum):
    NONE = 0
    STAIRS = 1
    DOUBLE_DAMAGE = 2
    HEALING = 3
    ARMOR = 4


POWERUPS = (Entity.DOUBLE_DAMAGE, Entity.HEALING, Entity.ARMOR)


class Base(IntEnum):
    NONE = 0
    PLAYER1 = 1
    PLAYER2 = 2


@dataclass(frozen=True)
class Tile:
    elevation: Elevation
    entity: Entity
    base: Base


class LevelParseError(ValueError):
    """Raised when a level text grid is malformed or violates level invariants"""

    def __init__(self, message: str, row: Optional[int] = None, col: Optional[int] = None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f"row {row}" + (f", column {col}" if col is not None else "") + ": "
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class LevelIssue:
    row: int
    col: int
    message: str


def index_of(row: int, col: int) -> int:
    return row * SIZE + col


def coord_of(index: int) -> Coord:
    return divmod(index, SIZE)


def in_bounds(row: int, col: int) -> bool:
    return 0 <= row < SIZE and 0 <= col < SIZE


def base_of(row: int, col: int) -> Base:
    """Base ownership is fixed by position"""
    if row < BASE_SIZE and col < BASE_SIZE:
        return Base.PLAYER1
    if row >= SIZE - BASE_SIZE and col >= SIZE - BASE_SIZE:
        return Base.PLAYER2
    return Base.NONE


def base_mask(player: Base) -> np.ndarray:
    mask = np.zeros((SIZE, SIZE), dtype=bool)
    if player == Base.PLAYER1:
        mask[:BASE_SIZE, :BASE_SIZE] = True
    elif player == Base.PLAYER2:
        mask[SIZE - BASE_SIZE:, SIZE - BASE_SIZE:] = True
    return mask


# Respawn points sit in the middle of each base
SPAWN_POINTS = {
    Base.PLAYER1: (BASE_SIZE // 2, BASE_SIZE // 2),
    Base.PLAYER2: (SIZE - 1 - BASE_SIZE // 2, SIZE - 1 - BASE_SIZE // 2),
}


@dataclass(frozen=True, eq=False)
class Level:
    """An immutable 20x20 level. Equality compares tiles only; the seed is provenance."""

    elevation: np.ndarray
    entity: np.ndarray
    seed: int = 0

    def __post_init__(self):
        elevation = np.array(self.elevation, dtype=np.int8)
        entity = np.array(self.entity, dtype=np.int8)
        if elevation.shape != (SIZE, SIZE) or entity.shape != (SIZE, SIZE):
            raise ValueError(f"Level grids must be {SIZE}x{SIZE}")
        elevation.setflags(write=False)
        entity.setflags(write=False)
        object.__setattr__(self, "elevation", elevation)
        object.__setattr__(self, "entity", entity)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Level):
            return NotImplemented
        return bool(np.array_equal(self.elevation, other.elevation)
                    and np.array_equal(self.entity, other.entity))

    def __hash__(self) -> int:
        return hash((self.elevation.tobytes(), self.entity.tobytes()))

    @classmethod
    def empty(cls, seed: int = 0) -> "Level":
        """All-ground level without entities"""
        return cls(np.zeros((SIZE, SIZE), np.int8), np.zeros((SIZE, SIZE), np.int8), seed)

    def tile(self, row: int, col: int) -> Tile:
        return Tile(Elevation(int(self.elevation[row, col])),
                    Entity(int(self.entity[row, col])),
                    base_of(row, col))

    def tiles(self) -> Iterator[Tuple[Coord, Tile]]:
        for row in range(SIZE):
            for col in range(SIZE):
                yield (row, col), self.tile(row, col)

    def is_walkable(self, row: int, col: int) -> bool:
        return in_bounds(row, col) and self.elevation[row, col] != Elevation.WALL

    def stairs_link(self, row: int, col: int) -> Optional[Coord]:
        """First-floor tile a stairs tile leads to (first 4-neighbour in N, E, S, W order)"""
        if self.entity[row, col] != Entity.STAIRS:
            return None
        for dr, dc in DIRECTIONS:
            r, c = row + dr, col + dc
            if in_bounds(r, c) and self.elevation[r, c] == Elevation.FIRST_FLOOR:
                return (r, c)
        return None

    def powerups(self) -> List[Tuple[Coord, Entity]]:
        found = []
        for row, col in zip(*np.nonzero(np.isin(self.entity, [int(p) for p in POWERUPS]))):
            found.append(((int(row), int(col)), Entity(int(self.entity[row, col]))))
        return found

    def rotated(self) -> "Level":
        """The level turned by 180 degrees (bases swap owners)"""
        return Level(self.elevation[::-1, ::-1], self.entity[::-1, ::-1], self.seed)

    def validate(self) -> List[LevelIssue]:
        return validate_level(self)

    def is_valid(self) -> bool:
        return not validate_level(self)


# -------------------------
# MOVEMENT GRAPH
# -------------------------

@dataclass
class MovementGraph:
    """Directed movement graph over walkable tiles, keyed by tile index (row*20+col)"""

    successors: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def nodes(self) -> List[int]:
        return sorted(self.successors)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.successors.get(a, ())

    def predecessors(self) -> Dict[int, Tuple[int, ...]]:
        preds: Dict[int, List[int]] = {node: [] for node in self.successors}
        for node, succ in self.successors.items():
            for other in succ:
                preds[other].append(node)
        return {node: tuple(sorted(p)) for node, p in preds.items()}

    def reachable_from(self, start: int, reverse: bool = False) -> set:
        edges = self.predecessors() if reverse else self.successors
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for other in edges.get(node, ()):
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        return seen


def movement_graph(level: Level) -> MovementGraph:
    """Build the movement graph: flat moves, stairs up/down, one-way jumps down"""
    elevation = level.elevation
    edges: Dict[int, set] = {}
    for row in range(SIZE):
        for col in range(SIZE):
            if elevation[row, col] != Elevation.WALL:
                edges[index_of(row, col)] = set()

    for row in range(SIZE):
        for col in range(SIZE):
            here = elevation[row, col]
            if here == Elevation.WALL:
                continue
            node = index_of(row, col)
            for dr, dc in DIRECTIONS:
                r, c = row + dr, col + dc
                if not in_bounds(r, c):
                    continue
                there = elevation[r, c]
                if there == here:
                    edges[node].add(index_of(r, c))
                elif here == Elevation.FIRST_FLOOR and there == Elevation.GROUND:
                    edges[node].add(index_of(r, c))  # jump down

            link = level.stairs_link(row, col)
            if link is not None:
                edges[node].add(index_of(*link))
                edges[index_of(*link)].add(node)

    return MovementGraph({node: tuple(sorted(succ)) for node, succ in edges.items()})


# -------------------------
# VALIDATION
# -------------------------

def validate_level(level: Level) -> List[LevelIssue]:
    """Return every invariant violation, in row-major order of the first offending tile"""
    issues: List[LevelIssue] = []
    elevation, entity = level.elevation, level.entity

    for row in range(SIZE):
        for col in range(SIZE):
            elev, ent = int(elevation[row, col]), int(entity[row, col])
            if elev not in (0, 1, 2):
                issues.append(LevelIssue(row, col, f"unknown elevation {elev}"))
                continue
            if ent not in (0, 1, 2, 3, 4):
                issues.append(LevelIssue(row, col, f"unknown entity {ent}"))
                continue
            if base_of(row, col) != Base.NONE and (elev != Elevation.GROUND or ent != Entity.NONE):
                issues.append(LevelIssue(row, col, "base tiles must be empty ground"))
            if ent == Entity.STAIRS:
                if elev != Elevation.GROUND:
                    issues.append(LevelIssue(row, col, "stairs must be on the ground floor"))
                elif level.stairs_link(row, col) is None:
                    issues.append(LevelIssue(row, col, "stairs without an adjacent first-floor tile"))
            elif ent != Entity.NONE and elev == Elevation.WALL:
                issues.append(LevelIssue(row, col, "powerup on a wall tile"))

    if issues:
        return issues

    graph = movement_graph(level)
    start = index_of(*SPAWN_POINTS[Base.PLAYER1])
    forward = graph.reachable_from(start)
    backward = graph.reachable_from(start, reverse=True)
    for node in graph.nodes:
        if node not in forward:
            issues.append(LevelIssue(*coord_of(node), "walkable tile unreachable from player 1 base"))
        elif node not in backward:
            issues.append(LevelIssue(*coord_of(node), "walkable tile cannot return to player 1 base"))
    return issues


# -------------------------
# CHANNEL ENCODING
# -------------------------

def encode_level(level: Level) -> np.ndarray:
    """Encode a level as an 8x20x20 binary channel stack (cover channel stays zero)"""
    channels = np.zeros((N_CHANNELS, SIZE, SIZE), dtype=np.uint8)
    for elev in Elevation:
        channels[int(elev)] = level.elevation == elev
    for ent in Entity:
        if ent != Entity.NONE:
            channels[2 + int(ent)] = level.entity == ent
    return channels


def decode_level(channels: np.ndarray, seed: int = 0) -> Level:
    """Inverse of encode_level"""
    channels = np.asarray(channels)
    if channels.shape != (N_CHANNELS, SIZE, SIZE):
        raise ValueError(f"channel stack must have shape {(N_CHANNELS, SIZE, SIZE)}, got {channels.shape}")
    if not np.all(channels[:3].sum(axis=0) == 1):
        raise ValueError("every tile needs exactly one elevation channel set")
    elevation = np.argmax(channels[:3], axis=0).astype(np.int8)
    entity = np.zeros((SIZE, SIZE), dtype=np.int8)
    for ent in Entity:
        if ent != Entity.NONE:
            entity[channels[2 + int(ent)] != 0] = int(ent)
    return Level(elevation, entity, seed)


# -------------------------
# TEXT FORMAT
# -------------------------

_CHAR_TO_TILE = {
    ".": (Elevation.GROUND, Entity.NONE),
    "#": (Elevation.WALL, Entity.NONE),
    "=": (Elevation.FIRST_FLOOR, Entity.NONE),
    "S": (Elevation.GROUND, Entity.STAIRS),
    "D": (Elevation.GROUND, Entity.DOUBLE_DAMAGE),
    "H": (Elevation.GROUND, Entity.HEALING),
    "A": (Elevation.GROUND, Entity.ARMOR),
    "d": (Elevation.FIRST_FLOOR, Entity.DOUBLE_DAMAGE),
    "h": (Elevation.FIRST_FLOOR, Entity.HEALING),
    "a": (Elevation.FIRST_FLOOR, Entity.ARMOR),
}
_TILE_TO_CHAR = {(int(e), int(n)): ch for ch, (e, n) in _CHAR_TO_TILE.items()}


def render_level(level: Level) -> str:
    """Render a level in the one-character-per-tile text format (trailing newline)"""
    lines = []
    for row in range(SIZE):
        chars = []
        for col in range(SIZE):
            key = (int(level.elevation[row, col]), int(level.entity[row, col]))
            if key not in _TILE_TO_CHAR:
                raise ValueError(f"Tile at row {row}, column {col} has no text form: {key}")
            chars.append(_TILE_TO_CHAR[key])
        lines.append("".join(chars))
    return "\n".join(lines) + "\n"


def parse_level(text: str, seed: int = 0) -> Level:
    """Parse the text format; raises LevelParseError naming the offending row/column"""
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if len(lines) != SIZE:
        raise LevelParseError(f"expected {SIZE} lines, found {len(lines)}")

    elevation = np.zeros((SIZE, SIZE), dtype=np.int8)
    entity = np.zeros((SIZE, SIZE), dtype=np.int8)
    for row, line in enumerate(lines):
        if len(line) != SIZE:
            raise LevelParseError(f"expected {SIZE} characters, found {len(line)}", row)
        for col, ch in enumerate(line):
            if ch not in _CHAR_TO_TILE:
                raise LevelParseError(f"unknown character {ch!r}", row, col)
            elevation[row, col], entity[row, col] = _CHAR_TO_TILE[ch]

    level = Level(elevation, entity, seed)
    issues = validate_level(level)
    if issues:
        first = issues[0]
        raise LevelParseError(first.message, first.row, first.col)
    return level


def load_level(path: str, seed: int = 0) -> Level:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_level(handle.read(), seed)


def save_level(level: Level, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(render_level(level))
