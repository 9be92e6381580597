# Configuration settings for Class Pair Maker
import copy
import datetime
import hashlib
import json
import os
from typing import Any, Dict

# Level generator settings
GENERATOR_SETTINGS = {
    "stairs_probability": 0.2,
    "powerup_probability": 0.33,
    "toward_target_probability": 0.7,
    "ca_iterations": 3,
    "ca_wall_threshold": 5,        # >= this many wall neighbours -> wall
    "ca_floor_threshold": 2,       # <= this many wall neighbours -> first floor
    "ca_flip_probability": 0.8,
    "max_attempts": 20,
}

# Physical ranges behind the [0,1] class parameters (TF2-flavoured estimates)
PARAM_RANGES = {
    "hit_points": [100.0, 300.0],
    "speed": [2.0, 6.0],             # tiles per second
    "damage": [5.0, 60.0],           # per bullet
    "accuracy": [0.1, 1.0],          # hit probability scale
    "rate_of_fire": [1.0, 10.0],     # shots per second
    "clip_size": [5.0, 50.0],
    "bullets_per_shot": [1.0, 10.0],
    "weapon_range": {"short": 4.0, "medium": 8.0, "long": 16.0},  # tiles
}

# Match simulation settings
MATCH_SETTINGS = {
    "kill_limit": 20,
    "time_limit": 600.0,
    "tick": 0.1,
    "respawn_delay": 3.0,
    "powerup_respawn": {"healing": 15.0, "armor": 20.0, "double_damage": 30.0},
    "perception_radius": 10.0,
    "heal_seek_threshold": 0.35,
    "double_damage_duration": 10.0,
    "reload_time": 2.0,
    "heal_amount": 100.0,
    "armor_amount": 50.0,
}

# Surrogate training settings
TRAIN_SETTINGS = {
    "max_epochs": 100,
    "patience": 5,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "validation_fraction": 0.1,
}

# Genetic algorithm settings
EVOLUTION_SETTINGS = {
    "population": 100,
    "generations": 100,
    "crossover_probability": 0.2,
    "mutation_probability": 0.1,
    "mutation_sigma": 0.1,
}

# Corpus settings (desk scale; raise n_configs for a full 1e5-configuration run)
CORPUS_SETTINGS = {
    "n_configs": 2500,
    "jobs": 1,
    "duration_min": 150.0,
    "duration_max": 600.0,
}

# Evaluation settings
EVALUATION_SETTINGS = {
    "ground_truth_runs": 10,
    "generated_levels": 5,
    "confidence": 0.95,
}

# Normalized target durations (200 s, 300 s, 600 s)
DURATION_PRESETS = {
    "short": 0.11,
    "medium": 0.33,
    "long": 1.00,
}
DEFAULT_BALANCE = 0.5

# Reference classes: hp, speed, damage, accuracy, rof, clip, bullets, range.
# Estimated, not measured from the game.
TF2_REFERENCES = {
    "scout": [0.1, 1.0, 0.5, 0.6, 0.3, 0.1, 0.6, "medium"],
    "soldier": [0.6, 0.4, 0.9, 0.7, 0.1, 0.05, 0.1, "long"],
    "pyro": [0.55, 0.5, 0.25, 0.2, 0.9, 0.8, 1.0, "short"],
    "heavy": [1.0, 0.2, 0.35, 0.3, 1.0, 1.0, 0.3, "short"],
    "sniper": [0.3, 0.5, 1.0, 1.0, 0.05, 0.0, 0.0, "long"],
}
TF2_THRESHOLD = 1.5

DEFAULT_MASTER_SEED = 20180807

DESIGNED_LEVELS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "levels", "designed")

SECTIONS = (
    "generator",
    "param_ranges",
    "match",
    "train",
    "evolution",
    "corpus",
    "evaluation",
    "tf2_references",
    "master_seed",
)


class ConfigError(ValueError):
    """Raised for malformed experiment configuration files"""


def default_sections() -> Dict[str, Any]:
    """Return a fresh copy of every default section"""
    return copy.deepcopy({
        "generator": GENERATOR_SETTINGS,
        "param_ranges": PARAM_RANGES,
        "match": MATCH_SETTINGS,
        "train": TRAIN_SETTINGS,
        "evolution": EVOLUTION_SETTINGS,
        "corpus": CORPUS_SETTINGS,
        "evaluation": EVALUATION_SETTINGS,
        "tf2_references": TF2_REFERENCES,
        "master_seed": DEFAULT_MASTER_SEED,
    })


def _merge(base: Dict[str, Any], override: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if isinstance(value, dict) and isinstance(base.get(key), dict) and key != "tf2_references":
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


def load_config_file(path: str = None) -> Dict[str, Any]:
    """Load a JSON experiment config and merge it over the defaults"""
    sections = default_sections()
    if not path:
        return sections
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e

    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"{path}: unknown sections {', '.join(unknown)}")
    return _merge(sections, data)


def derive_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """Derive an auditable 64-bit stage seed from the master seed"""
    digest = hashlib.sha256(f"{master_seed}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def config_digest(sections: Dict[str, Any]) -> bytes:
    """16-byte digest of a config, stored in corpus headers"""
    canonical = json.dumps(sections, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).digest()[:16]


# Output settings
def get_timestamped_filename(base_name: str = "experiment", extension: str = ""):
    """Generate a timestamped filename"""
    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    return f"{base_name}_{timestamp}{extension}"
