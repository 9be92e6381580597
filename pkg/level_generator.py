"""
Constructive level generator: hierarchical digger agents on a 4x4 sketch,
5x5 cell expansion, stairs placement, stochastic cellular automata for the
second floor, and powerup placement.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from config import GENERATOR_SETTINGS
from level import (
    BASE_SIZE,
    DIRECTIONS,
    POWERUPS,
    SIZE,
    SPAWN_POINTS,
    Base,
    Elevation,
    Entity,
    Level,
    base_of,
    coord_of,
    in_bounds,
    index_of,
    movement_graph,
    validate_level,
)

logger = logging.getLogger(__name__)

SKETCH_SIZE = SIZE // BASE_SIZE  # 4x4 cells of 5x5 tiles
CELL_SIZE = BASE_SIZE

Cell = Tuple[int, int]


class LevelGenerationError(RuntimeError):
    """Raised when no valid level is produced within the retry budget"""

    def __init__(self, seed: int, attempts: int, reason: str = ""):
        self.seed = seed
        self.attempts = attempts
        detail = f": {reason}" if reason else ""
        super().__init__(f"Level generation failed for seed {seed} after {attempts} attempts{detail}")


@dataclass(frozen=True)
class GeneratorConfig:
    stairs_probability: float = GENERATOR_SETTINGS["stairs_probability"]
    powerup_probability: float = GENERATOR_SETTINGS["powerup_probability"]
    toward_target_probability: float = GENERATOR_SETTINGS["toward_target_probability"]
    ca_iterations: int = GENERATOR_SETTINGS["ca_iterations"]
    ca_wall_threshold: int = GENERATOR_SETTINGS["ca_wall_threshold"]
    ca_floor_threshold: int = GENERATOR_SETTINGS["ca_floor_threshold"]
    ca_flip_probability: float = GENERATOR_SETTINGS["ca_flip_probability"]
    max_attempts: int = GENERATOR_SETTINGS["max_attempts"]

    def __post_init__(self):
        for name in ("stairs_probability", "powerup_probability",
                     "toward_target_probability", "ca_flip_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.ca_iterations < 0:
            raise ValueError("ca_iterations must be non-negative")

    @classmethod
    def from_dict(cls, settings: Dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in settings.items() if k in known})


@dataclass
class SketchCell:
    is_base: bool = False
    connections: Set[int] = field(default_factory=set)  # indices into DIRECTIONS
    has_powerup: bool = False


@dataclass
class SketchGrid:
    """Low-resolution 4x4 plan of the level"""

    cells: List[List[SketchCell]]
    doors: Dict[FrozenSet[Cell], int] = field(default_factory=dict)

    @classmethod
    def blank(cls) -> "SketchGrid":
        cells = [[SketchCell() for _ in range(SKETCH_SIZE)] for _ in range(SKETCH_SIZE)]
        cells[0][0].is_base = True
        cells[SKETCH_SIZE - 1][SKETCH_SIZE - 1].is_base = True
        return cls(cells)

    def cell(self, pos: Cell) -> SketchCell:
        return self.cells[pos[0]][pos[1]]

    def connect(self, a: Cell, b: Cell) -> None:
        d = (b[0] - a[0], b[1] - a[1])
        direction = DIRECTIONS.index(d)
        self.cell(a).connections.add(direction)
        self.cell(b).connections.add((direction + 2) % 4)

    def is_dug(self, pos: Cell) -> bool:
        cell = self.cell(pos)
        return cell.is_base or bool(cell.connections)

    def links(self) -> List[Tuple[Cell, Cell]]:
        """Each connected neighbour pair once, in row-major order"""
        pairs = []
        for row in range(SKETCH_SIZE):
            for col in range(SKETCH_SIZE):
                for direction in sorted(self.cells[row][col].connections):
                    if direction in (1, 2):  # east and south only
                        dr, dc = DIRECTIONS[direction]
                        pairs.append(((row, col), (row + dr, col + dc)))
        return pairs


# -------------------------
# SKETCH DIGGERS
# -------------------------

def _manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _dig_sketch_path(sketch: SketchGrid, rng: np.random.Generator, upper: bool, bias: float) -> None:
    start, goal = (0, 0), (SKETCH_SIZE - 1, SKETCH_SIZE - 1)

    def allowed(cell: Cell) -> bool:
        row, col = cell
        if not (0 <= row < SKETCH_SIZE and 0 <= col < SKETCH_SIZE):
            return False
        return col >= row if upper else row >= col

    pos = start
    steps = 0
    while pos != goal:
        moves = [(pos[0] + dr, pos[1] + dc) for dr, dc in DIRECTIONS if allowed((pos[0] + dr, pos[1] + dc))]
        toward = [m for m in moves if _manhattan(m, goal) < _manhattan(pos, goal)]
        # Long wanders are cut short so the walk always terminates
        if toward and (steps > 64 or rng.random() < bias):
            nxt = toward[int(rng.integers(len(toward)))]
        else:
            nxt = moves[int(rng.integers(len(moves)))]
        sketch.connect(pos, nxt)
        pos = nxt
        steps += 1


def generate_sketch(rng: np.random.Generator, cfg: GeneratorConfig) -> SketchGrid:
    """Two diggers carve base-to-base routes on either side of the bases' diagonal"""
    sketch = SketchGrid.blank()
    _dig_sketch_path(sketch, rng, upper=True, bias=cfg.toward_target_probability)
    _dig_sketch_path(sketch, rng, upper=False, bias=cfg.toward_target_probability)
    for a, b in sketch.links():
        sketch.doors[frozenset((a, b))] = int(rng.integers(1, CELL_SIZE - 1))
    return sketch


# -------------------------
# CELL EXPANSION
# -------------------------

def _door_tiles(a: Cell, b: Cell, offset: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Facing tiles of two neighbouring cells through their shared door (a is north or west of b)"""
    if a[0] != b[0]:  # vertical neighbours
        col = a[1] * CELL_SIZE + offset
        return (a[0] * CELL_SIZE + CELL_SIZE - 1, col), (b[0] * CELL_SIZE, col)
    row = a[0] * CELL_SIZE + offset
    return (row, a[1] * CELL_SIZE + CELL_SIZE - 1), (row, b[1] * CELL_SIZE)


def _dig_cell(ground: np.ndarray, cell: Cell, entries: List[Tuple[int, int]],
              rng: np.random.Generator, bias: float) -> None:
    top, left = cell[0] * CELL_SIZE, cell[1] * CELL_SIZE
    hub = (top + int(rng.integers(1, CELL_SIZE - 1)), left + int(rng.integers(1, CELL_SIZE - 1)))
    ground[hub] = True

    def inside(pos):
        return top <= pos[0] < top + CELL_SIZE and left <= pos[1] < left + CELL_SIZE

    for entry in entries:
        pos = entry
        ground[pos] = True
        while pos != hub:
            moves = [(pos[0] + dr, pos[1] + dc) for dr, dc in DIRECTIONS if inside((pos[0] + dr, pos[1] + dc))]
            toward = [m for m in moves if _manhattan(m, hub) < _manhattan(pos, hub)]
            if rng.random() < bias:
                pos = toward[int(rng.integers(len(toward)))]
            else:
                pos = moves[int(rng.integers(len(moves)))]
            ground[pos] = True


def expand_sketch(sketch: SketchGrid, rng: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    """Carve ground tiles for the sketch; returns a boolean ground mask"""
    ground = np.zeros((SIZE, SIZE), dtype=bool)
    ground[:BASE_SIZE, :BASE_SIZE] = True
    ground[SIZE - BASE_SIZE:, SIZE - BASE_SIZE:] = True

    entries: Dict[Cell, List[Tuple[int, int]]] = {}
    for a, b in sketch.links():
        tile_a, tile_b = _door_tiles(a, b, sketch.doors[frozenset((a, b))])
        entries.setdefault(a, []).append(tile_a)
        entries.setdefault(b, []).append(tile_b)

    for row in range(SKETCH_SIZE):
        for col in range(SKETCH_SIZE):
            cell = (row, col)
            if sketch.cell(cell).is_base or cell not in entries:
                continue
            _dig_cell(ground, cell, entries[cell], rng, cfg.toward_target_probability)
    return ground


# -------------------------
# FLOORS, STAIRS, CELLULAR AUTOMATA
# -------------------------

def _neighbour_count(mask: np.ndarray, diagonal: bool) -> np.ndarray:
    """Count set neighbours; out-of-bounds counts as set"""
    padded = np.pad(mask.astype(np.int16), 1, constant_values=1)
    total = np.zeros(mask.shape, dtype=np.int16)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if (dr, dc) == (0, 0) or (not diagonal and dr != 0 and dc != 0):
                continue
            total += padded[1 + dr:1 + dr + SIZE, 1 + dc:1 + dc + SIZE]
    return total


def _ground_neighbours(ground: np.ndarray) -> np.ndarray:
    padded = np.pad(ground.astype(np.int16), 1, constant_values=0)
    return (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:])


def _first_floor_adjacent(elevation: np.ndarray) -> np.ndarray:
    first = elevation == Elevation.FIRST_FLOOR
    padded = np.pad(first, 1, constant_values=False)
    return padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]


def run_cellular_automata(elevation: np.ndarray, candidates: np.ndarray,
                          rng: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    """Stochastic CA turning first-floor candidates into second-floor walls (and back)"""
    elevation = elevation.copy()
    for _ in range(cfg.ca_iterations):
        walls = _neighbour_count(elevation == Elevation.WALL, diagonal=True)
        flips = rng.random((SIZE, SIZE)) < cfg.ca_flip_probability
        first = candidates & (elevation == Elevation.FIRST_FLOOR)
        walled = candidates & (elevation == Elevation.WALL)
        to_wall = first & (walls >= cfg.ca_wall_threshold) & flips
        to_floor = walled & (walls <= cfg.ca_floor_threshold) & flips
        elevation[to_wall] = Elevation.WALL
        elevation[to_floor] = Elevation.FIRST_FLOOR
    return elevation


def _seal_unreachable(elevation: np.ndarray, entity: np.ndarray) -> None:
    """Second-floor walls go on top of first-floor areas no stairs lead to"""
    graph = movement_graph(Level(elevation, entity))
    reachable = graph.reachable_from(index_of(*SPAWN_POINTS[Base.PLAYER1]))
    for node in graph.nodes:
        row, col = coord_of(node)
        if node not in reachable and elevation[row, col] == Elevation.FIRST_FLOOR:
            elevation[row, col] = Elevation.WALL
            entity[row, col] = Entity.NONE


def _place_powerups(sketch: SketchGrid, elevation: np.ndarray, entity: np.ndarray,
                    rng: np.random.Generator, cfg: GeneratorConfig) -> None:
    for row in range(SKETCH_SIZE):
        for col in range(SKETCH_SIZE):
            cell = sketch.cells[row][col]
            if cell.is_base:
                continue
            if rng.random() >= cfg.powerup_probability:
                continue
            block_elev = elevation[row * CELL_SIZE:(row + 1) * CELL_SIZE, col * CELL_SIZE:(col + 1) * CELL_SIZE]
            block_ent = entity[row * CELL_SIZE:(row + 1) * CELL_SIZE, col * CELL_SIZE:(col + 1) * CELL_SIZE]
            spots = np.argwhere((block_elev != Elevation.WALL) & (block_ent == Entity.NONE))
            if len(spots) == 0:
                continue
            r, c = spots[int(rng.integers(len(spots)))]
            kind = POWERUPS[int(rng.integers(len(POWERUPS)))]
            block_ent[r, c] = kind
            cell.has_powerup = True


def _build_level(seed: int, attempt_seed: int, cfg: GeneratorConfig) -> Level:
    rng = np.random.default_rng(attempt_seed)
    sketch = generate_sketch(rng, cfg)
    ground = expand_sketch(sketch, rng, cfg)

    elevation = np.full((SIZE, SIZE), Elevation.WALL, dtype=np.int8)
    elevation[ground] = Elevation.GROUND
    entity = np.zeros((SIZE, SIZE), dtype=np.int8)

    not_base = np.array([[base_of(r, c) == Base.NONE for c in range(SIZE)] for r in range(SIZE)])
    candidates = (~ground) & not_base & (_ground_neighbours(ground) >= 2)
    elevation[candidates] = Elevation.FIRST_FLOOR

    stairs_spots = ground & not_base & _first_floor_adjacent(elevation)
    entity[stairs_spots & (rng.random((SIZE, SIZE)) < cfg.stairs_probability)] = Entity.STAIRS

    elevation = run_cellular_automata(elevation, candidates, rng, cfg)
    orphaned = (entity == Entity.STAIRS) & ~_first_floor_adjacent(elevation)
    entity[orphaned] = Entity.NONE

    _seal_unreachable(elevation, entity)
    _place_powerups(sketch, elevation, entity, rng, cfg)
    return Level(elevation, entity, seed)


def generate_level(seed: int, cfg: Optional[GeneratorConfig] = None) -> Level:
    """Generate a playable level; a pure function of (seed, cfg)"""
    cfg = cfg or GeneratorConfig()
    reason = ""
    for attempt in range(cfg.max_attempts):
        level = _build_level(seed, seed ^ attempt, cfg)
        issues = validate_level(level)
        if not issues:
            if attempt:
                logger.debug("seed %d: valid level on attempt %d", seed, attempt + 1)
            return level
        first = issues[0]
        reason = f"row {first.row}, column {first.col}: {first.message}"
        logger.debug("seed %d attempt %d rejected (%s)", seed, attempt + 1, reason)
    raise LevelGenerationError(seed, cfg.max_attempts, reason)
