"""
Discrete-time 1v1 deathmatch simulation on a level grid.

Two priority-driven agents play until the kill limit or the time limit.
The simulation is a pure function of (level, pair, seed, config): all
randomness comes from one numpy Generator seeded per match.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from classes import ClassPair, ParamRanges, PhysicalClass, denormalize
from config import MATCH_SETTINGS
from level import SIZE, SPAWN_POINTS, Base, Entity, Level, coord_of, index_of, movement_graph
from pathfinding import PathPlanner, SightCache

logger = logging.getLogger(__name__)

EventSink = Callable[[str], None]

_PICKUP_NAMES = {
    Entity.HEALING: "healing",
    Entity.ARMOR: "armor",
    Entity.DOUBLE_DAMAGE: "double_damage",
}


@dataclass(frozen=True)
class MatchConfig:
    kill_limit: int = MATCH_SETTINGS["kill_limit"]
    time_limit: float = MATCH_SETTINGS["time_limit"]
    tick: float = MATCH_SETTINGS["tick"]
    respawn_delay: float = MATCH_SETTINGS["respawn_delay"]
    healing_respawn: float = MATCH_SETTINGS["powerup_respawn"]["healing"]
    armor_respawn: float = MATCH_SETTINGS["powerup_respawn"]["armor"]
    double_damage_respawn: float = MATCH_SETTINGS["powerup_respawn"]["double_damage"]
    perception_radius: float = MATCH_SETTINGS["perception_radius"]
    heal_seek_threshold: float = MATCH_SETTINGS["heal_seek_threshold"]
    double_damage_duration: float = MATCH_SETTINGS["double_damage_duration"]
    reload_time: float = MATCH_SETTINGS["reload_time"]
    heal_amount: float = MATCH_SETTINGS["heal_amount"]
    armor_amount: float = MATCH_SETTINGS["armor_amount"]

    def __post_init__(self):
        if self.kill_limit <= 0:
            raise ValueError("kill_limit must be positive")
        if self.tick <= 0:
            raise ValueError("tick must be positive")
        if self.time_limit < 150:
            raise ValueError("time_limit must be at least 150 seconds")
        if not 0.0 <= self.heal_seek_threshold <= 1.0:
            raise ValueError("heal_seek_threshold must be a fraction of max hit points")

    @classmethod
    def from_dict(cls, settings: Mapping = None) -> "MatchConfig":
        settings = dict(settings or MATCH_SETTINGS)
        respawn = settings.pop("powerup_respawn", {}) or {}
        values = {key: value for key, value in settings.items()}
        for name in ("healing", "armor", "double_damage"):
            if name in respawn:
                values[f"{name}_respawn"] = respawn[name]
        return cls(**values)

    def ticks(self, seconds: float) -> int:
        """Whole ticks covering a duration, at least one"""
        return max(1, int(round(seconds / self.tick)))

    @property
    def max_ticks(self) -> int:
        return int(round(self.time_limit / self.tick))

    def respawn_ticks(self, entity: Entity) -> int:
        return self.ticks(getattr(self, f"{_PICKUP_NAMES[entity]}_respawn"))


@dataclass
class AgentState:
    """Mutable per-match state of one player; timers count ticks"""

    player: Base
    cls: PhysicalClass
    spawn: int
    node: int = 0
    progress: float = 0.0
    hp: float = 0.0
    armor: float = 0.0
    clip: int = 0
    reload_timer: int = 0
    fire_cooldown: int = 0
    double_damage_timer: int = 0
    respawn_timer: int = 0
    kills: int = 0
    deaths: int = 0
    patrol_leg: int = 0

    @property
    def max_hp(self) -> float:
        return self.cls.hit_points

    @property
    def clip_size(self) -> int:
        return max(1, int(round(self.cls.clip_size)))

    @property
    def bullets(self) -> int:
        return max(1, int(round(self.cls.bullets_per_shot)))

    @property
    def alive(self) -> bool:
        return self.respawn_timer == 0

    @property
    def position(self) -> Tuple[int, int]:
        return coord_of(self.node)

    def can_fire(self) -> bool:
        return self.alive and self.clip > 0 and self.reload_timer == 0 and self.fire_cooldown == 0

    def respawn(self) -> None:
        self.node = self.spawn
        self.progress = 0.0
        self.hp = self.max_hp
        self.armor = 0.0
        self.clip = self.clip_size
        self.reload_timer = 0
        self.fire_cooldown = 0
        self.double_damage_timer = 0
        self.respawn_timer = 0
        self.patrol_leg = 0


@dataclass(frozen=True)
class MatchOutcome:
    kills_p1: int
    kills_p2: int
    duration: float
    completed: bool

    @property
    def score(self) -> float:
        """Player 1 kill ratio; 0.5 when nobody scored"""
        total = self.kills_p1 + self.kills_p2
        return self.kills_p1 / total if total else 0.5

    def to_record(self) -> Dict:
        return {
            "kills_p1": self.kills_p1,
            "kills_p2": self.kills_p2,
            "duration": round(self.duration, 6),
            "completed": self.completed,
            "score": self.score,
        }


@dataclass
class Pickup:
    entity: Entity
    timer: int = 0  # ticks until respawn; 0 means present

    @property
    def live(self) -> bool:
        return self.timer == 0


def distance_between(a: int, b: int) -> float:
    (ar, ac), (br, bc) = coord_of(a), coord_of(b)
    return math.hypot(ar - br, ac - bc)


def falloff(distance: float, weapon_range: float) -> float:
    """1 inside range, linear down to 0 at twice the range"""
    if distance <= weapon_range:
        return 1.0
    return max(0.0, 2.0 - distance / weapon_range)


def apply_damage(defender: AgentState, amount: float) -> None:
    absorbed = min(defender.armor, amount)
    defender.armor -= absorbed
    defender.hp -= amount - absorbed


def resolve_shot(attacker: AgentState, defender: AgentState, distance: float,
                 rng: np.random.Generator, cfg: MatchConfig) -> float:
    """Fire one shot of bullets_per_shot bullets and return the damage dealt"""
    if not attacker.can_fire():
        logger.debug("player %d cannot fire (clip=%d reload=%d cooldown=%d)", attacker.player,
                     attacker.clip, attacker.reload_timer, attacker.fire_cooldown)
        return 0.0

    p_hit = attacker.cls.accuracy * falloff(distance, attacker.cls.weapon_range)
    hits = int(rng.binomial(attacker.bullets, min(1.0, p_hit)))
    per_bullet = attacker.cls.damage * (2.0 if attacker.double_damage_timer > 0 else 1.0)
    dealt = hits * per_bullet
    apply_damage(defender, dealt)

    attacker.clip -= 1
    attacker.fire_cooldown = cfg.ticks(1.0 / attacker.cls.rate_of_fire)
    if attacker.clip == 0:
        attacker.reload_timer = cfg.ticks(cfg.reload_time)
    return dealt


def consume(agent: AgentState, entity: Entity, cfg: MatchConfig) -> None:
    if entity == Entity.HEALING:
        agent.hp = min(agent.max_hp, agent.hp + cfg.heal_amount)
    elif entity == Entity.ARMOR:
        agent.armor = cfg.armor_amount
    elif entity == Entity.DOUBLE_DAMAGE:
        agent.double_damage_timer = cfg.ticks(cfg.double_damage_duration)


def powerup_tick(pickups: Dict[int, Pickup], agents: List[AgentState], cfg: MatchConfig,
                 rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Advance respawn timers, then let agents standing on live pickups consume them.

    Returns (player, tile) for every consumption. Two agents on one live
    pickup contest it with a fair coin.
    """
    for pickup in pickups.values():
        if pickup.timer > 0:
            pickup.timer -= 1

    consumed = []
    standing: Dict[int, List[AgentState]] = {}
    for agent in agents:
        if agent.alive and agent.node in pickups:
            standing.setdefault(agent.node, []).append(agent)

    for tile in sorted(standing):
        pickup = pickups[tile]
        if not pickup.live:
            continue
        contenders = standing[tile]
        winner = contenders[0] if len(contenders) == 1 else contenders[int(rng.integers(2))]
        consume(winner, pickup.entity, cfg)
        pickup.timer = cfg.respawn_ticks(pickup.entity)
        consumed.append((int(winner.player), tile))
    return consumed


# -------------------------
# ARENA
# -------------------------

class Arena:
    """Per-level data shared by every match on that level"""

    def __init__(self, level: Level):
        issues = level.validate()
        if issues:
            first = issues[0]
            raise ValueError(f"invalid level: row {first.row}, column {first.col}: {first.message}")
        self.level = level
        self.graph = movement_graph(level)
        self.planners = {
            Base.PLAYER1: PathPlanner(self.graph, prefer_high=False),
            Base.PLAYER2: PathPlanner(self.graph, prefer_high=True),
        }
        self.sight = SightCache(level)
        self.spawns = {player: index_of(*SPAWN_POINTS[player]) for player in (Base.PLAYER1, Base.PLAYER2)}
        self.centers = {player: self._center_tile(player) for player in (Base.PLAYER1, Base.PLAYER2)}
        self.pickup_layout = {index_of(*coord): entity for coord, entity in level.powerups()}

    def _center_tile(self, player: Base) -> int:
        middle = (SIZE - 1) / 2.0
        best = None
        for node in self.graph.nodes:
            row, col = coord_of(node)
            key = round(math.hypot(row - middle, col - middle), 9)
            if best is None or key < best[0] or (key == best[0] and player == Base.PLAYER2):
                best = (key, node)
        return best[1]

    def fresh_pickups(self) -> Dict[int, Pickup]:
        return {tile: Pickup(entity) for tile, entity in sorted(self.pickup_layout.items())}


@dataclass
class Intent:
    move_to: Optional[int] = None
    shoot: bool = False
    behavior: str = "idle"


class Match:
    """One match in progress"""

    def __init__(self, arena: Arena, pair: ClassPair, seed: int, cfg: MatchConfig,
                 ranges: ParamRanges, on_event: Optional[EventSink] = None):
        self.arena = arena
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.on_event = on_event
        self.pickups = arena.fresh_pickups()
        self.agents = [
            AgentState(Base.PLAYER1, denormalize(pair.player1, ranges), arena.spawns[Base.PLAYER1]),
            AgentState(Base.PLAYER2, denormalize(pair.player2, ranges), arena.spawns[Base.PLAYER2]),
        ]
        for agent in self.agents:
            agent.respawn()
        self.tick_count = 0

    @property
    def total_kills(self) -> int:
        return self.agents[0].kills + self.agents[1].kills

    def _emit(self, message: str) -> None:
        if self.on_event is not None:
            self.on_event(f"t={self.tick_count * self.cfg.tick:.1f} {message}")

    def _advance_timers(self) -> None:
        for agent in self.agents:
            if agent.respawn_timer > 0:
                agent.respawn_timer -= 1
                if agent.respawn_timer == 0:
                    agent.respawn()
                    self._emit(f"p{int(agent.player)} respawns")
                continue
            if agent.fire_cooldown > 0:
                agent.fire_cooldown -= 1
            if agent.double_damage_timer > 0:
                agent.double_damage_timer -= 1
            if agent.reload_timer > 0:
                agent.reload_timer -= 1
                if agent.reload_timer == 0:
                    agent.clip = agent.clip_size

    # -- behaviour selection --

    def _useful(self, agent: AgentState, entity: Entity) -> bool:
        if entity == Entity.HEALING:
            return agent.hp < agent.max_hp
        if entity == Entity.ARMOR:
            return agent.armor < self.cfg.armor_amount
        return agent.double_damage_timer == 0

    def _nearest_pickup(self, agent: AgentState, accept: Callable[[int, Pickup], bool]) -> Optional[int]:
        planner = self.arena.planners[agent.player]
        best = None
        for tile, pickup in self.pickups.items():
            if not pickup.live or not accept(tile, pickup):
                continue
            hops = planner.distance(agent.node, tile)
            if hops is None:
                continue
            key = (hops, -tile if planner.prefer_high else tile)
            if best is None or key < best[0]:
                best = (key, tile)
        return None if best is None else best[1]

    def _decide(self, agent: AgentState, opponent: AgentState) -> Intent:
        cfg = self.cfg

        if agent.hp < cfg.heal_seek_threshold * agent.max_hp:
            tile = self._nearest_pickup(agent, lambda t, p: p.entity == Entity.HEALING)
            if tile is not None:
                return Intent(move_to=tile, behavior="seek_healing")

        tile = self._nearest_pickup(
            agent,
            lambda t, p: self._useful(agent, p.entity)
            and distance_between(agent.node, t) <= cfg.perception_radius,
        )
        if tile is not None:
            return Intent(move_to=tile, behavior="near_powerup")

        if opponent.alive and self.arena.sight.visible(agent.node, opponent.node):
            distance = distance_between(agent.node, opponent.node)
            weapon_range = agent.cls.weapon_range
            return Intent(
                move_to=opponent.node if distance > weapon_range else None,
                shoot=distance < 2 * weapon_range and agent.can_fire(),
                behavior="attack",
            )

        tile = self._nearest_pickup(agent, lambda t, p: self._useful(agent, p.entity))
        if tile is not None:
            return Intent(move_to=tile, behavior="far_powerup")

        return Intent(move_to=self._patrol_target(agent, opponent), behavior="patrol")

    def _patrol_target(self, agent: AgentState, opponent: AgentState) -> int:
        center = self.arena.centers[agent.player]
        if agent.patrol_leg == 0 and agent.node == center:
            agent.patrol_leg = 1
        elif agent.patrol_leg == 1 and agent.node == opponent.spawn:
            agent.patrol_leg = 0
        return center if agent.patrol_leg == 0 else opponent.spawn

    # -- actions --

    def _shoot(self, shooter: AgentState, target: AgentState) -> None:
        distance = distance_between(shooter.node, target.node)
        dealt = resolve_shot(shooter, target, distance, self.rng, self.cfg)
        if dealt > 0:
            self._emit(f"p{int(shooter.player)} hits p{int(target.player)} for {dealt:.1f}")
        if target.hp <= 0:
            shooter.kills += 1
            target.deaths += 1
            target.hp = 0.0
            target.respawn_timer = self.cfg.ticks(self.cfg.respawn_delay)
            self._emit(f"p{int(shooter.player)} kills p{int(target.player)} "
                       f"({self.agents[0].kills}-{self.agents[1].kills})")

    def _move(self, agent: AgentState, target: Optional[int]) -> None:
        planner = self.arena.planners[agent.player]
        hop = None if target is None else planner.next_hop(agent.node, target)
        if hop is None:
            agent.progress = 0.0
            return
        agent.progress += agent.cls.speed * self.cfg.tick
        while agent.progress >= 1.0 and hop is not None:
            agent.node = hop
            agent.progress -= 1.0
            hop = planner.next_hop(agent.node, target)
        if hop is None:
            agent.progress = 0.0

    def step(self) -> None:
        self.tick_count += 1
        self._advance_timers()

        p1, p2 = self.agents
        intents = [
            self._decide(p1, p2) if p1.alive else Intent(),
            self._decide(p2, p1) if p2.alive else Intent(),
        ]

        shooters = [i for i, intent in enumerate(intents) if intent.shoot]
        if len(shooters) == 2 and self.rng.random() < 0.5:
            shooters.reverse()
        for i in shooters:
            if self.total_kills >= self.cfg.kill_limit:
                break
            shooter, target = self.agents[i], self.agents[1 - i]
            if shooter.alive and target.alive:
                self._shoot(shooter, target)

        for agent, intent in zip(self.agents, intents):
            if agent.alive:
                self._move(agent, intent.move_to)

        for player, tile in powerup_tick(self.pickups, self.agents, self.cfg, self.rng):
            self._emit(f"p{player} takes {_PICKUP_NAMES[self.pickups[tile].entity]} at {coord_of(tile)}")

    def run(self) -> MatchOutcome:
        max_ticks = self.cfg.max_ticks
        while self.tick_count < max_ticks and self.total_kills < self.cfg.kill_limit:
            self.step()
        p1, p2 = self.agents
        completed = self.total_kills >= self.cfg.kill_limit
        outcome = MatchOutcome(p1.kills, p2.kills, self.tick_count * self.cfg.tick, completed)
        self._emit(f"match ends {p1.kills}-{p2.kills} completed={completed}")
        return outcome


def simulate_match(level: Level, pair: ClassPair, seed: int, cfg: MatchConfig = None,
                   ranges: ParamRanges = None, arena: Arena = None,
                   on_event: Optional[EventSink] = None) -> MatchOutcome:
    """Play one match; identical inputs give an identical outcome.

    Classes are given in normalized units and denormalized with `ranges`.
    Pass a prebuilt `arena` to reuse pathfinding and sight caches across
    matches on the same level.
    """
    cfg = cfg or MatchConfig()
    ranges = ranges or ParamRanges.from_dict()
    if arena is None:
        arena = Arena(level)
    elif arena.level != level:
        raise ValueError("arena was built for a different level")
    return Match(arena, pair, seed, cfg, ranges, on_event).run()
