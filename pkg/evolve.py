"""
Genetic algorithm evolving class pairs against a surrogate model.

Fitness is the Euclidean distance between the surrogate's clamped
(duration, score) prediction and the designer's desired pair, so lower is
better. The population carries no elites; the best individual ever
evaluated is tracked on the side.
"""

import logging
from dataclasses import dataclass, fields
from typing import Callable, List, Mapping, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from classes import GENOTYPE_LENGTH, RANGE_GENES, ClassPair, Genotype, clamp_genes, decode_genotype, genes_to_params
from config import DEFAULT_BALANCE, DURATION_PRESETS, EVOLUTION_SETTINGS
from level import Level, encode_level

logger = logging.getLogger(__name__)

_CONTINUOUS = np.array([i not in RANGE_GENES for i in range(GENOTYPE_LENGTH)])


class Predictor(Protocol):
    def predict_outcomes(self, channels: np.ndarray, params: np.ndarray) -> np.ndarray:
        """(N,2) raw [score, duration] for a shared (8,20,20) level and (N,16) parameters"""


@dataclass(frozen=True)
class DesiredOutcome:
    d_t: float
    d_s: float = DEFAULT_BALANCE

    def __post_init__(self):
        for name in ("d_t", "d_s"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def from_preset(cls, name: str) -> "DesiredOutcome":
        if name not in DURATION_PRESETS:
            raise ValueError(f"unknown duration preset {name!r}; expected one of {', '.join(DURATION_PRESETS)}")
        return cls(DURATION_PRESETS[name], DEFAULT_BALANCE)


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = EVOLUTION_SETTINGS["population"]
    generations: int = EVOLUTION_SETTINGS["generations"]
    crossover_probability: float = EVOLUTION_SETTINGS["crossover_probability"]
    mutation_probability: float = EVOLUTION_SETTINGS["mutation_probability"]
    mutation_sigma: float = EVOLUTION_SETTINGS["mutation_sigma"]
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number of at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        for name in ("crossover_probability", "mutation_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.mutation_sigma < 0:
            raise ValueError("mutation_sigma must be non-negative")

    @classmethod
    def from_dict(cls, settings: Mapping = None, **overrides) -> "EvolutionConfig":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in dict(settings or EVOLUTION_SETTINGS).items() if k in known}
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float
    mean: float
    best_ever: float


@dataclass(frozen=True)
class RunResult:
    best: Genotype
    best_fitness: float
    trace: Tuple[GenerationStats, ...]

    @property
    def best_pair(self) -> ClassPair:
        return decode_genotype(self.best)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(g) for g in self.trace], columns=["generation", "best", "mean", "best_ever"])


def fitness(t: Union[float, np.ndarray], s: Union[float, np.ndarray], target: DesiredOutcome):
    """Distance of (t, s) from the desired (d_t, d_s); works elementwise on arrays"""
    return np.hypot(np.subtract(t, target.d_t), np.subtract(s, target.d_s))


def predict_population(model: Predictor, channels: np.ndarray, genotypes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Clamped (duration, score) predictions for an (N,16) genotype array"""
    genotypes = np.atleast_2d(np.asarray(genotypes, dtype=np.float64))
    outputs = np.asarray(model.predict_outcomes(channels, genes_to_params(genotypes)), dtype=np.float64)
    if outputs.shape != (len(genotypes), 2):
        raise ValueError(f"predictor returned shape {outputs.shape}, expected {(len(genotypes), 2)}")
    return np.clip(outputs[:, 1], 0.0, 1.0), np.clip(outputs[:, 0], 0.0, 1.0)


def evaluate_population(model: Predictor, channels: np.ndarray, genotypes: np.ndarray,
                        target: DesiredOutcome) -> np.ndarray:
    t, s = predict_population(model, channels, genotypes)
    return fitness(t, s, target)


def roulette_select(values: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Fitness-proportionate sampling with replacement for a minimized fitness.

    Weights are (f_max - f) + eps with eps = 1e-6 * (1 + f_max).
    """
    values = np.asarray(values, dtype=np.float64)
    if count < 1:
        raise ValueError("count must be at least 1")
    if not np.all(np.isfinite(values)):
        raise ValueError("fitness values must be finite")
    worst = float(values.max())
    weights = (worst - values) + 1e-6 * (1.0 + worst)
    return rng.choice(len(values), size=count, replace=True, p=weights / weights.sum())


def _genes(g) -> np.ndarray:
    return np.asarray(g.genes if isinstance(g, Genotype) else g, dtype=np.float64)


def one_point_crossover(a, b, point: int) -> Tuple[Genotype, Genotype]:
    """Swap gene suffixes from `point` on; 1 <= point <= 15"""
    if not 1 <= point < GENOTYPE_LENGTH:
        raise ValueError(f"crossover point must be in [1, {GENOTYPE_LENGTH - 1}], got {point}")
    ga, gb = _genes(a), _genes(b)
    child1 = np.concatenate([ga[:point], gb[point:]])
    child2 = np.concatenate([gb[:point], ga[point:]])
    return Genotype(child1), Genotype(child2)


def mutate(g, cfg: EvolutionConfig, rng: np.random.Generator) -> Genotype:
    """Gaussian mutation of continuous genes, category switch for range genes.

    Always draws the same amount of randomness so the stream stays aligned.
    """
    genes = _genes(g).copy()
    hit = rng.random(GENOTYPE_LENGTH) < cfg.mutation_probability
    noise = rng.normal(0.0, cfg.mutation_sigma, GENOTYPE_LENGTH)
    shifts = rng.integers(1, 3, size=len(RANGE_GENES))

    genes[_CONTINUOUS & hit] += noise[_CONTINUOUS & hit]
    for shift, index in zip(shifts, RANGE_GENES):
        if hit[index]:
            genes[index] = (int(genes[index]) + int(shift)) % 3
    return Genotype(clamp_genes(genes))


def random_population(size: int, rng: np.random.Generator) -> np.ndarray:
    population = rng.random((size, GENOTYPE_LENGTH))
    population[:, list(RANGE_GENES)] = rng.integers(0, 3, size=(size, len(RANGE_GENES)))
    return population


def next_generation(population: np.ndarray, values: np.ndarray, cfg: EvolutionConfig,
                    rng: np.random.Generator) -> np.ndarray:
    parents = population[roulette_select(values, len(population), rng)]
    offspring = []
    for i in range(0, len(parents), 2):
        a, b = parents[i], parents[i + 1]
        if rng.random() < cfg.crossover_probability:
            a, b = one_point_crossover(a, b, int(rng.integers(1, GENOTYPE_LENGTH)))
        offspring.append(mutate(a, cfg, rng).genes)
        offspring.append(mutate(b, cfg, rng).genes)
    return np.stack(offspring)


def evolve(model: Predictor, level: Union[Level, np.ndarray], target: DesiredOutcome,
           cfg: EvolutionConfig = None,
           on_generation: Optional[Callable[[GenerationStats], None]] = None) -> RunResult:
    """Run the GA for one level and target; deterministic per cfg.seed"""
    cfg = cfg or EvolutionConfig()
    channels = encode_level(level) if isinstance(level, Level) else np.asarray(level)
    rng = np.random.default_rng(cfg.seed)

    population = random_population(cfg.population, rng)
    best_genes, best_value = None, np.inf
    trace: List[GenerationStats] = []

    for generation in range(cfg.generations + 1):
        if generation:
            population = next_generation(population, values, cfg, rng)
        values = evaluate_population(model, channels, population, target)
        leader = int(np.argmin(values))
        if values[leader] < best_value:
            best_value, best_genes = float(values[leader]), population[leader].copy()
        stats = GenerationStats(generation, float(values[leader]), float(values.mean()), best_value)
        trace.append(stats)
        logger.debug("generation %d: best %.4f mean %.4f best-ever %.4f",
                     generation, stats.best, stats.mean, best_value)
        if on_generation is not None:
            on_generation(stats)

    return RunResult(Genotype(best_genes), best_value, tuple(trace))
