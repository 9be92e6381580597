"""
Training corpus: (level, class pair) -> (score, normalized duration).

Each configuration i gets its own generated level and random class pair and
is simulated twice, once with the roles swapped. Matches that hit the time
limit are dropped and counted.
"""

import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from classes import ClassPair, ParamRanges, random_pair
from config import CORPUS_SETTINGS, derive_seed
from level import N_CHANNELS, SIZE, decode_level, encode_level, render_level
from level_generator import GeneratorConfig, LevelGenerationError, generate_level
from simulator import Arena, MatchConfig, simulate_match

logger = logging.getLogger(__name__)

MAGIC = b"CFC1"
HEADER = struct.Struct("<II16s")  # sample count, dropped count, config digest
PLANE_BYTES = SIZE * SIZE // 8
N_PARAMS = 16
HISTOGRAM_BINS = 20

SAMPLE_DTYPE = np.dtype([
    ("planes", "u1", (N_CHANNELS, PLANE_BYTES)),
    ("params", "<f4", (N_PARAMS,)),
    ("score", "<f4"),
    ("duration", "<f4"),
    ("seeds", "<u8", (3,)),
])


class CorpusBuildError(RuntimeError):
    """A configuration failed while building the corpus"""

    def __init__(self, config_index: int, reason: str):
        self.config_index = config_index
        self.reason = reason
        super().__init__(f"corpus configuration {config_index} failed: {reason}")

    def __reduce__(self):
        return (self.__class__, (self.config_index, self.reason))


class CorpusFormatError(ValueError):
    """Raised for unreadable corpus files"""


def normalize_duration(seconds: float, low: float = CORPUS_SETTINGS["duration_min"],
                       high: float = CORPUS_SETTINGS["duration_max"]) -> float:
    """Min-max normalize a match duration into [0,1], clamping outside the band"""
    return float(np.clip((seconds - low) / (high - low), 0.0, 1.0))


def denormalize_duration(value: float, low: float = CORPUS_SETTINGS["duration_min"],
                         high: float = CORPUS_SETTINGS["duration_max"]) -> float:
    return low + value * (high - low)


@dataclass(frozen=True, eq=False)
class Sample:
    channels: np.ndarray
    params: np.ndarray
    score: float
    duration_norm: float
    level_seed: int
    class_seed: int
    sim_seed: int


@dataclass(eq=False)
class Corpus:
    """Column-oriented sample store; row i of every array is sample i"""

    channels: np.ndarray = field(default_factory=lambda: np.zeros((0, N_CHANNELS, SIZE, SIZE), np.uint8))
    params: np.ndarray = field(default_factory=lambda: np.zeros((0, N_PARAMS), np.float32))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))
    durations: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))
    seeds: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.uint64))
    dropped: int = 0
    digest: bytes = bytes(16)

    def __post_init__(self):
        n = len(self.channels)
        for name in ("params", "scores", "durations", "seeds"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"corpus column {name} has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self) -> int:
        return len(self.channels)

    def __getitem__(self, i: int) -> Sample:
        level_seed, class_seed, sim_seed = (int(s) for s in self.seeds[i])
        return Sample(self.channels[i], self.params[i], float(self.scores[i]),
                      float(self.durations[i]), level_seed, class_seed, sim_seed)

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def targets(self) -> np.ndarray:
        """(N,2) array in output order [score, duration]"""
        return np.stack([self.scores, self.durations], axis=1)

    def subset(self, indices: Sequence[int]) -> "Corpus":
        idx = np.asarray(indices, dtype=np.int64)
        return Corpus(self.channels[idx], self.params[idx], self.scores[idx],
                      self.durations[idx], self.seeds[idx], 0, self.digest)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dropped: int = 0, digest: bytes = bytes(16)) -> "Corpus":
        if not samples:
            return cls(dropped=dropped, digest=digest)
        return cls(
            channels=np.stack([s.channels for s in samples]).astype(np.uint8),
            params=np.stack([s.params for s in samples]).astype(np.float32),
            scores=np.array([s.score for s in samples], dtype=np.float32),
            durations=np.array([s.duration_norm for s in samples], dtype=np.float32),
            seeds=np.array([[s.level_seed, s.class_seed, s.sim_seed] for s in samples], dtype=np.uint64),
            dropped=dropped,
            digest=digest,
        )


# -------------------------
# BUILDING
# -------------------------

@dataclass(frozen=True)
class CorpusSettings:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ranges: ParamRanges = field(default_factory=ParamRanges.from_dict)
    match: MatchConfig = field(default_factory=MatchConfig)
    duration_min: float = CORPUS_SETTINGS["duration_min"]
    duration_max: float = CORPUS_SETTINGS["duration_max"]

    def __post_init__(self):
        if not self.duration_min < self.duration_max:
            raise ValueError("duration_min must be below duration_max")


def simulate_config(index: int, master_seed: int, settings: CorpusSettings,
                    pair: Optional[ClassPair] = None) -> Tuple[List[Sample], int]:
    """Simulate configuration `index` in both role assignments.

    Returns the samples of completed matches and the number dropped.
    """
    level_seed = derive_seed(master_seed, "level", index)
    class_seed = derive_seed(master_seed, "classes", index)
    level = generate_level(level_seed, settings.generator)
    if pair is None:
        pair = random_pair(np.random.default_rng(class_seed))
    channels = encode_level(level)
    arena = Arena(level)

    samples, dropped = [], 0
    for role, assignment in enumerate((pair, pair.swapped())):
        sim_seed = derive_seed(master_seed, "match", 2 * index + role)
        outcome = simulate_match(level, assignment, sim_seed, settings.match, settings.ranges, arena)
        if not outcome.completed:
            dropped += 1
            continue
        samples.append(Sample(
            channels=channels,
            params=assignment.to_params().astype(np.float32),
            score=outcome.score,
            duration_norm=normalize_duration(outcome.duration, settings.duration_min, settings.duration_max),
            level_seed=level_seed,
            class_seed=class_seed,
            sim_seed=sim_seed,
        ))
    return samples, dropped


def _simulate_config_job(job: Tuple[int, int, CorpusSettings]) -> Tuple[List[Sample], int]:
    index, master_seed, settings = job
    try:
        return simulate_config(index, master_seed, settings)
    except (LevelGenerationError, ValueError) as e:
        raise CorpusBuildError(index, str(e)) from e


def build_corpus(n_configs: int, master_seed: int, settings: CorpusSettings = None,
                 jobs: int = 1, digest: bytes = bytes(16)) -> Corpus:
    """Build a corpus of up to 2*n_configs samples, deterministic per master seed.

    Results are merged in configuration order whatever the number of jobs.
    """
    if n_configs < 1:
        raise ValueError("n_configs must be at least 1")
    settings = settings or CorpusSettings()
    work = [(i, master_seed, settings) for i in range(n_configs)]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_config_job, work, chunksize=max(1, n_configs // (4 * jobs))))
    else:
        results = []
        for job in work:
            results.append(_simulate_config_job(job))
            if (job[0] + 1) % 100 == 0:
                logger.info("simulated %d/%d configurations", job[0] + 1, n_configs)

    samples = [s for batch, _ in results for s in batch]
    dropped = sum(d for _, d in results)
    logger.info("corpus: %d samples, %d incomplete matches dropped", len(samples), dropped)
    return Corpus.from_samples(samples, dropped, digest)


def split(corpus: Corpus, fraction: float = 0.1, seed: int = 0) -> Tuple[Corpus, Corpus]:
    """Seeded shuffle into (train, validation); validation holds round(fraction*N) samples"""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_val = int(round(len(corpus) * fraction))
    return corpus.subset(np.sort(order[n_val:])), corpus.subset(np.sort(order[:n_val]))


# -------------------------
# REPORTS
# -------------------------

@dataclass(frozen=True)
class DistributionReport:
    bin_edges: np.ndarray
    score_counts: np.ndarray
    duration_counts: np.ndarray
    duration_mean_s: float  # of durations clamped to the normalization band
    duration_std_s: float
    samples: int
    dropped: int
    at_floor: int = 0
    at_cap: int = 0
    band: tuple = (CORPUS_SETTINGS["duration_min"], CORPUS_SETTINGS["duration_max"])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_low": self.bin_edges[:-1],
            "bin_high": self.bin_edges[1:],
            "score_count": self.score_counts,
            "duration_count": self.duration_counts,
        })

    def summary(self) -> str:
        return (f"samples: {self.samples} (dropped incomplete: {self.dropped})\n"
                f"duration mean (clamped to {self.band[0]:.0f}-{self.band[1]:.0f} s): {self.duration_mean_s:.1f} s, "
                f"std: {self.duration_std_s:.1f} s\n"
                f"clamped samples: {self.at_floor} at the floor, {self.at_cap} at the cap\n")


def distribution_report(corpus: Corpus, duration_min: float = CORPUS_SETTINGS["duration_min"],
                        duration_max: float = CORPUS_SETTINGS["duration_max"]) -> DistributionReport:
    """Fixed 20-bin histograms of score and normalized duration, plus duration moments in seconds.

    Stored durations are normalized and clamped, so the moments are of clamped
    seconds; at_floor and at_cap count the samples sitting on either band edge.
    """
    if len(corpus) == 0:
        raise ValueError("cannot report on an empty corpus")
    score_counts, edges = np.histogram(corpus.scores, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    duration_counts, _ = np.histogram(corpus.durations, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    raw = denormalize_duration(corpus.durations.astype(np.float64), duration_min, duration_max)
    return DistributionReport(edges, score_counts, duration_counts, float(np.mean(raw)),
                              float(np.std(raw)), len(corpus), corpus.dropped,
                              at_floor=int(np.sum(corpus.durations <= 0.0)),
                              at_cap=int(np.sum(corpus.durations >= 1.0)),
                              band=(float(duration_min), float(duration_max)))


# -------------------------
# FILES
# -------------------------

def save_corpus(corpus: Corpus, path: str) -> None:
    records = np.zeros(len(corpus), dtype=SAMPLE_DTYPE)
    if len(corpus):
        flat = corpus.channels.reshape(len(corpus), N_CHANNELS, SIZE * SIZE)
        records["planes"] = np.packbits(flat, axis=-1)
        records["params"] = corpus.params
        records["score"] = corpus.scores
        records["duration"] = corpus.durations
        records["seeds"] = corpus.seeds
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(HEADER.pack(len(corpus), corpus.dropped, corpus.digest))
        handle.write(records.tobytes())


def load_corpus(path: str) -> Corpus:
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:len(MAGIC)] != MAGIC:
        raise CorpusFormatError(f"{path}: not a corpus file (bad magic)")
    offset = len(MAGIC) + HEADER.size
    if len(data) < offset:
        raise CorpusFormatError(f"{path}: truncated header")
    count, dropped, digest = HEADER.unpack_from(data, len(MAGIC))
    expected = offset + count * SAMPLE_DTYPE.itemsize
    if len(data) != expected:
        raise CorpusFormatError(f"{path}: expected {expected} bytes for {count} samples, found {len(data)}")

    records = np.frombuffer(data, dtype=SAMPLE_DTYPE, count=count, offset=offset)
    bits = np.unpackbits(records["planes"], axis=-1, count=SIZE * SIZE)
    channels = bits.reshape(count, N_CHANNELS, SIZE, SIZE).astype(np.uint8)
    if count and not np.all(channels[:, :3].sum(axis=1) == 1):
        raise CorpusFormatError(f"{path}: sample with an invalid elevation encoding")
    return Corpus(channels, records["params"].copy(), records["score"].copy(),
                  records["duration"].copy(), records["seeds"].copy(), dropped, digest)


def export_jsonl(corpus: Corpus, path: str) -> None:
    """Human-readable export: one record per sample, level in the text format"""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for sample in corpus:
            record = {
                "level": render_level(decode_level(sample.channels)).splitlines(),
                "params": [round(float(p), 6) for p in sample.params],
                "score": round(sample.score, 6),
                "duration_norm": round(sample.duration_norm, 6),
                "level_seed": sample.level_seed,
                "class_seed": sample.class_seed,
                "sim_seed": sample.sim_seed,
            }
            handle.write(json.dumps(record) + "\n")
