"""
Grid pathfinding and line of sight over a level's movement graph.

Every move costs one hop, so breadth-first search gives minimal-hop paths.
"""

import math
from collections import deque
from typing import Dict, List, Optional, Tuple

from level import Coord, Elevation, Level, MovementGraph, coord_of

SAMPLES_PER_TILE = 8


def shortest_path(graph: MovementGraph, start: int, goal: int) -> Optional[List[int]]:
    """Minimal-hop path from start to goal, excluding start; None when unreachable.

    Ties are broken toward lower node indices.
    """
    if start not in graph.successors or goal not in graph.successors:
        return None
    if start == goal:
        return []

    came_from: Dict[int, int] = {start: start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for other in graph.successors[node]:  # successors are sorted by index
            if other in came_from:
                continue
            came_from[other] = node
            if other == goal:
                return _reconstruct_path(came_from, start, goal)
            queue.append(other)
    return None


def _reconstruct_path(came_from: Dict[int, int], start: int, goal: int) -> List[int]:
    path = [goal]
    current = goal
    while came_from[current] != start:
        current = came_from[current]
        path.append(current)
    path.reverse()
    return path


class PathPlanner:
    """Cached next-hop lookups toward arbitrary targets.

    A reverse breadth-first search from each target yields the hop distance of
    every tile; an agent steps to the successor one hop closer. `prefer_high`
    flips the index tie-break so two mirrored agents take mirrored routes.
    """

    def __init__(self, graph: MovementGraph, prefer_high: bool = False):
        self.graph = graph
        self.prefer_high = prefer_high
        self._predecessors = graph.predecessors()
        self._fields: Dict[int, Dict[int, int]] = {}

    def distances_to(self, target: int) -> Dict[int, int]:
        field = self._fields.get(target)
        if field is None:
            field = {target: 0}
            queue = deque([target])
            while queue:
                node = queue.popleft()
                for other in self._predecessors.get(node, ()):
                    if other not in field:
                        field[other] = field[node] + 1
                        queue.append(other)
            self._fields[target] = field
        return field

    def distance(self, start: int, target: int) -> Optional[int]:
        return self.distances_to(target).get(start)

    def next_hop(self, start: int, target: int) -> Optional[int]:
        """Successor of start on a shortest route to target; None if unreachable or already there"""
        field = self.distances_to(target)
        here = field.get(start)
        if here is None or here == 0:
            return None
        options = [n for n in self.graph.successors[start] if field.get(n) == here - 1]
        return max(options) if self.prefer_high else min(options)


def _cells_for(value: float) -> Tuple[int, ...]:
    """Tiles covering a coordinate; exact tile boundaries touch both neighbours"""
    edge = round(value + 0.5)
    if abs((value + 0.5) - edge) < 1e-9:
        return (edge - 1, edge)
    return (math.floor(value + 0.5),)


def line_of_sight(level: Level, a: Coord, b: Coord) -> bool:
    """True iff the straight ray between tile centers crosses no second-floor wall.

    The ray is sampled symmetrically, so line_of_sight(a, b) == line_of_sight(b, a)
    and the result is preserved under 180-degree rotation of the level.
    """
    elevation = level.elevation
    if abs(int(elevation[a]) - int(elevation[b])) > 1:
        return False
    if a == b:
        return elevation[a] != Elevation.WALL

    steps = SAMPLES_PER_TILE * max(abs(b[0] - a[0]), abs(b[1] - a[1]))
    for k in range(steps + 1):
        t = k / steps
        row = a[0] + (b[0] - a[0]) * t
        col = a[1] + (b[1] - a[1]) * t
        for r in _cells_for(row):
            for c in _cells_for(col):
                if elevation[r, c] == Elevation.WALL:
                    return False
    return True


class SightCache:
    """Memoized line_of_sight over one level, keyed by unordered tile pair"""

    def __init__(self, level: Level):
        self.level = level
        self._cache: Dict[Tuple[int, int], bool] = {}

    def visible(self, a: int, b: int) -> bool:
        key = (a, b) if a <= b else (b, a)
        seen = self._cache.get(key)
        if seen is None:
            seen = line_of_sight(self.level, coord_of(key[0]), coord_of(key[1]))
            self._cache[key] = seen
        return seen
