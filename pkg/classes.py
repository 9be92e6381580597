"""
Character-class parameter model: normalized classes, physical ranges,
16-gene genotypes and nearest-TF2-class labelling.
"""

import json
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from config import PARAM_RANGES, TF2_REFERENCES, TF2_THRESHOLD

CONTINUOUS_PARAMS = (
    "hit_points",
    "speed",
    "damage",
    "accuracy",
    "rate_of_fire",
    "clip_size",
    "bullets_per_shot",
)
PARAM_NAMES = CONTINUOUS_PARAMS + ("weapon_range",)
GENES_PER_PLAYER = len(PARAM_NAMES)
GENOTYPE_LENGTH = 2 * GENES_PER_PLAYER
RANGE_GENES = (GENES_PER_PLAYER - 1, GENOTYPE_LENGTH - 1)  # 7 and 15

UNDEFINED = "undefined"
TF2_LABEL_ORDER = ("scout", "soldier", "pyro", "heavy", "sniper")


class WeaponRange(Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"

    @property
    def code(self) -> int:
        return _RANGE_ORDER.index(self)

    @property
    def embedding(self) -> float:
        """Numeric form used by the network and by distances: 0, 0.5, 1"""
        return self.code / 2.0

    @classmethod
    def from_code(cls, code: int) -> "WeaponRange":
        return _RANGE_ORDER[int(code)]


_RANGE_ORDER = (WeaponRange.SHORT, WeaponRange.MEDIUM, WeaponRange.LONG)


@dataclass(frozen=True)
class CharacterClass:
    """A class in normalized units: continuous fields in [0,1] plus a range category"""

    hit_points: float
    speed: float
    damage: float
    accuracy: float
    rate_of_fire: float
    clip_size: float
    bullets_per_shot: float
    weapon_range: WeaponRange

    def __post_init__(self):
        for name in CONTINUOUS_PARAMS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not isinstance(self.weapon_range, WeaponRange):
            object.__setattr__(self, "weapon_range", WeaponRange(self.weapon_range))

    def to_vector(self) -> np.ndarray:
        """8-dimensional vector with the range embedded as 0/0.5/1"""
        values = [getattr(self, name) for name in CONTINUOUS_PARAMS]
        return np.array(values + [self.weapon_range.embedding], dtype=np.float64)

    def to_record(self) -> Dict:
        record = {name: float(getattr(self, name)) for name in CONTINUOUS_PARAMS}
        record["weapon_range"] = self.weapon_range.value
        return record

    @classmethod
    def from_record(cls, record: Mapping) -> "CharacterClass":
        missing = [name for name in PARAM_NAMES if name not in record]
        if missing:
            raise ValueError(f"class record is missing {', '.join(missing)}")
        values = {name: float(record[name]) for name in CONTINUOUS_PARAMS}
        return cls(**values, weapon_range=WeaponRange(record["weapon_range"]))


@dataclass(frozen=True)
class ClassPair:
    player1: CharacterClass
    player2: CharacterClass

    def swapped(self) -> "ClassPair":
        return ClassPair(self.player2, self.player1)

    def to_params(self) -> np.ndarray:
        """16 network inputs, player 1 block first"""
        return np.concatenate([self.player1.to_vector(), self.player2.to_vector()])


@dataclass(frozen=True)
class PhysicalClass:
    """A class in simulator units"""

    hit_points: float
    speed: float
    damage: float
    accuracy: float
    rate_of_fire: float
    clip_size: float
    bullets_per_shot: float
    weapon_range: float


@dataclass(frozen=True)
class ParamRanges:
    """Physical (min, max) per continuous parameter and tile distance per range category"""

    bounds: Tuple[Tuple[str, float, float], ...]
    range_tiles: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        names = [name for name, _, _ in self.bounds]
        if sorted(names) != sorted(CONTINUOUS_PARAMS):
            raise ValueError(f"ranges must cover exactly {', '.join(CONTINUOUS_PARAMS)}")
        for name, low, high in self.bounds:
            if not low < high:
                raise ValueError(f"range for {name} must have min < max, got ({low}, {high})")
        if sorted(k for k, _ in self.range_tiles) != sorted(r.value for r in WeaponRange):
            raise ValueError("range_tiles must define short, medium and long")

    @classmethod
    def from_dict(cls, settings: Mapping = None) -> "ParamRanges":
        settings = settings or PARAM_RANGES
        bounds = tuple((name, float(settings[name][0]), float(settings[name][1])) for name in CONTINUOUS_PARAMS)
        tiles = settings["weapon_range"]
        range_tiles = tuple((r.value, float(tiles[r.value])) for r in WeaponRange)
        return cls(bounds, range_tiles)

    def bound(self, name: str) -> Tuple[float, float]:
        for key, low, high in self.bounds:
            if key == name:
                return low, high
        raise KeyError(name)

    def tiles_for(self, weapon_range: WeaponRange) -> float:
        return dict(self.range_tiles)[weapon_range.value]


def denormalize(cls: CharacterClass, ranges: ParamRanges) -> PhysicalClass:
    """Map a normalized class to physical units: value*(max-min)+min"""
    values = {}
    for name in CONTINUOUS_PARAMS:
        low, high = ranges.bound(name)
        values[name] = getattr(cls, name) * (high - low) + low
    return PhysicalClass(**values, weapon_range=ranges.tiles_for(cls.weapon_range))


def random_class(rng: np.random.Generator) -> CharacterClass:
    """Uniform continuous parameters and a uniform range category"""
    values = rng.random(len(CONTINUOUS_PARAMS))
    weapon_range = WeaponRange.from_code(int(rng.integers(3)))
    return CharacterClass(*[float(v) for v in values], weapon_range=weapon_range)


def random_pair(rng: np.random.Generator) -> ClassPair:
    return ClassPair(random_class(rng), random_class(rng))


# -------------------------
# GENOTYPE
# -------------------------

@dataclass(frozen=True, eq=False)
class Genotype:
    """16 genes: [hp, speed, damage, accuracy, rof, clip, bullets, range] x {player1, player2}.

    Range genes hold the category code 0 (short), 1 (medium) or 2 (long).
    """

    genes: np.ndarray

    def __post_init__(self):
        genes = np.array(self.genes, dtype=np.float64)
        if genes.shape != (GENOTYPE_LENGTH,):
            raise ValueError(f"genotype must have {GENOTYPE_LENGTH} genes, got shape {genes.shape}")
        genes = clamp_genes(genes)
        genes.setflags(write=False)
        object.__setattr__(self, "genes", genes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Genotype):
            return NotImplemented
        return bool(np.array_equal(self.genes, other.genes))

    def __hash__(self) -> int:
        return hash(self.genes.tobytes())

    def to_params(self) -> np.ndarray:
        return genes_to_params(self.genes[np.newaxis, :])[0]


def clamp_genes(genes: np.ndarray) -> np.ndarray:
    """Clamp continuous genes to [0,1] and snap range genes to {0,1,2}; works on (16,) or (N,16)"""
    genes = np.array(genes, dtype=np.float64)
    flat = genes.reshape(-1, GENOTYPE_LENGTH)
    continuous = np.ones(GENOTYPE_LENGTH, dtype=bool)
    continuous[list(RANGE_GENES)] = False
    flat[:, continuous] = np.clip(flat[:, continuous], 0.0, 1.0)
    flat[:, ~continuous] = np.clip(np.rint(flat[:, ~continuous]), 0, 2)
    return flat.reshape(genes.shape)


def genes_to_params(genes: np.ndarray) -> np.ndarray:
    """(N,16) genotypes to (N,16) network inputs with range codes embedded as 0/0.5/1"""
    params = np.array(genes, dtype=np.float64)
    params[:, list(RANGE_GENES)] = params[:, list(RANGE_GENES)] / 2.0
    return params


def encode_genotype(pair: ClassPair) -> Genotype:
    genes = []
    for cls in (pair.player1, pair.player2):
        genes.extend(getattr(cls, name) for name in CONTINUOUS_PARAMS)
        genes.append(float(cls.weapon_range.code))
    return Genotype(np.array(genes))


def decode_genotype(genotype: Genotype) -> ClassPair:
    genes = genotype.genes
    players = []
    for offset in (0, GENES_PER_PLAYER):
        block = genes[offset:offset + GENES_PER_PLAYER]
        players.append(CharacterClass(*[float(v) for v in block[:-1]],
                                      weapon_range=WeaponRange.from_code(int(block[-1]))))
    return ClassPair(*players)


# -------------------------
# TF2 MATCHING
# -------------------------

@dataclass(frozen=True)
class TF2Reference:
    label: str
    vector: Tuple[float, ...]


def load_tf2_references(table: Mapping = None) -> List[TF2Reference]:
    """Build references from the config table; range category strings become 0/0.5/1"""
    table = table or TF2_REFERENCES
    refs = []
    for label, values in table.items():
        if len(values) != GENES_PER_PLAYER:
            raise ValueError(f"TF2 reference {label} needs {GENES_PER_PLAYER} values")
        vector = [float(v) for v in values[:-1]]
        vector.append(WeaponRange(values[-1]).embedding)
        refs.append(TF2Reference(label, tuple(vector)))
    if len({r.label for r in refs}) != len(refs):
        raise ValueError("TF2 reference labels must be distinct")
    return refs


def _label_rank(label: str) -> int:
    return TF2_LABEL_ORDER.index(label) if label in TF2_LABEL_ORDER else len(TF2_LABEL_ORDER)


def nearest_reference(vector: Sequence[float], refs: Iterable[TF2Reference],
                      threshold: float = TF2_THRESHOLD) -> Tuple[str, float]:
    """Label and distance of the nearest reference; ties go to the earlier label in the fixed order"""
    refs = sorted(refs, key=lambda r: (_label_rank(r.label), r.label))
    if not refs:
        raise ValueError("at least one TF2 reference is required")
    point = np.asarray(vector, dtype=np.float64)
    best_label, best_distance = None, np.inf
    for ref in refs:
        distance = float(np.linalg.norm(point - np.asarray(ref.vector)))
        if distance < best_distance - 1e-12:
            best_label, best_distance = ref.label, distance
    if best_distance > threshold:
        return UNDEFINED, best_distance
    return best_label, best_distance


def match_tf2(cls: CharacterClass, refs: Iterable[TF2Reference], threshold: float = TF2_THRESHOLD) -> str:
    return nearest_reference(cls.to_vector(), refs, threshold)[0]


# -------------------------
# CLASS FILES
# -------------------------

def dumps_classes(classes: Iterable[CharacterClass]) -> str:
    """One JSON record per line"""
    return "".join(json.dumps(cls.to_record(), sort_keys=True) + "\n" for cls in classes)


def loads_classes(text: str) -> List[CharacterClass]:
    classes = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            classes.append(CharacterClass.from_record(json.loads(line)))
        except (ValueError, TypeError) as e:
            raise ValueError(f"class record on line {number}: {e}") from e
    return classes


def save_classes(classes: Iterable[CharacterClass], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps_classes(classes))


def load_classes(path: str) -> List[CharacterClass]:
    with open(path, "r", encoding="utf-8") as handle:
        return loads_classes(handle.read())


def save_pair(pair: ClassPair, path: str) -> None:
    save_classes([pair.player1, pair.player2], path)


def load_pair(path: str) -> ClassPair:
    classes = load_classes(path)
    if len(classes) != 2:
        raise ValueError(f"{path}: a class pair file holds exactly 2 classes, found {len(classes)}")
    return ClassPair(*classes)
