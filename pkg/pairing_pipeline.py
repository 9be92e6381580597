import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from analysis import EvaluationRun, accuracy_table, ground_truth, parameter_correlations, write_reports
from classes import (
    ClassPair,
    ParamRanges,
    TF2Reference,
    encode_genotype,
    load_classes,
    load_pair,
    load_tf2_references,
    save_pair,
)
from config import (
    DESIGNED_LEVELS_DIR,
    DURATION_PRESETS,
    TF2_THRESHOLD,
    ConfigError,
    config_digest,
    default_sections,
    derive_seed,
    get_timestamped_filename,
    load_config_file,
)
from corpus import CorpusSettings, build_corpus, distribution_report, export_jsonl, load_corpus, save_corpus, split
from evolve import DesiredOutcome, EvolutionConfig, evolve, predict_population
from level import Level, encode_level, load_level, render_level, save_level
from level_generator import GeneratorConfig, generate_level
from report_deck import build_evaluation_deck
from simulator import MatchConfig, simulate_match
from surrogate import MODEL_KINDS, build_model, load_model, save_model
from training import TrainConfig, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a merged configuration (see config.py for the sections)"""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ranges: ParamRanges = field(default_factory=ParamRanges.from_dict)
    match: MatchConfig = field(default_factory=MatchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    tf2_references: Tuple[TF2Reference, ...] = field(default_factory=lambda: tuple(load_tf2_references()))
    master_seed: int = 0
    n_configs: int = 2500
    jobs: int = 1
    duration_min: float = 150.0
    duration_max: float = 600.0
    ground_truth_runs: int = 10
    generated_levels: int = 5
    digest: bytes = bytes(16)

    @classmethod
    def from_sections(cls, sections: Dict) -> "ExperimentConfig":
        defaults = default_sections()
        for name, value in sections.items():
            if isinstance(defaults.get(name), dict) and name not in ("tf2_references", "param_ranges"):
                unknown = sorted(set(value) - set(defaults[name]))
                if unknown:
                    raise ConfigError(f"section {name}: unknown keys {', '.join(unknown)}")
        try:
            corpus, evaluation = sections["corpus"], sections["evaluation"]
            return cls(
                generator=GeneratorConfig.from_dict(sections["generator"]),
                ranges=ParamRanges.from_dict(sections["param_ranges"]),
                match=MatchConfig.from_dict(sections["match"]),
                train=TrainConfig.from_dict(sections["train"]),
                evolution=EvolutionConfig.from_dict(sections["evolution"]),
                tf2_references=tuple(load_tf2_references(sections["tf2_references"])),
                master_seed=int(sections["master_seed"]),
                n_configs=int(corpus["n_configs"]),
                jobs=int(corpus["jobs"]),
                duration_min=float(corpus["duration_min"]),
                duration_max=float(corpus["duration_max"]),
                ground_truth_runs=int(evaluation["ground_truth_runs"]),
                generated_levels=int(evaluation["generated_levels"]),
                digest=config_digest(sections),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e

    @classmethod
    def load(cls, path: str = None, master_seed: int = None) -> "ExperimentConfig":
        sections = load_config_file(path)
        if master_seed is not None:
            sections["master_seed"] = master_seed
        return cls.from_sections(sections)

    @property
    def corpus_settings(self) -> CorpusSettings:
        return CorpusSettings(self.generator, self.ranges, self.match, self.duration_min, self.duration_max)


def _ground_truth_job(job) -> object:
    pair, level, n, cfg, ranges, base_seed, low, high = job
    return ground_truth(pair, level, n, cfg=cfg, ranges=ranges, base_seed=base_seed,
                        duration_min=low, duration_max=high)


@dataclass(frozen=True)
class EvaluationLevel:
    level_id: str
    origin: str
    level: Level


class PairingPipeline:
    """Runs each stage of the class-pair workflow; every command returns True on success"""

    def __init__(self, config: ExperimentConfig = None, jobs: int = None):
        self.config = config or ExperimentConfig.from_sections(default_sections())
        self.jobs = jobs if jobs is not None else self.config.jobs

    # -- levels --

    def generate_levels(self, output: str, count: int = 1, seed: int = None) -> bool:
        """Write one level to `output`, or `count` levels as <stem>_<i>.txt with derived seeds"""
        try:
            if count < 1:
                raise ValueError("count must be at least 1")
            seed = self.config.master_seed if seed is None else seed
            if count == 1:
                targets = [(seed, output)]
            else:
                stem, ext = os.path.splitext(output)
                targets = [(derive_seed(seed, "level", i), f"{stem}_{i}{ext or '.txt'}") for i in range(count)]

            for level_seed, path in targets:
                level = generate_level(level_seed, self.config.generator)
                save_level(level, path)
                print(f"✅ Level (seed {level_seed}) written to {path}")
            return True
        except Exception as e:
            print(f"❌ Error generating level: {e}")
            return False

    def show_level(self, path: str) -> bool:
        try:
            level = load_level(path)
            print(render_level(level), end="")
            channels = encode_level(level)
            names = ("stairs", "double damage", "healing", "armor")
            counts = ", ".join(f"{name} {int(channels[3 + i].sum())}" for i, name in enumerate(names))
            print(f"walkable tiles {int((channels[0] + channels[1]).sum())}, walls {int(channels[2].sum())}; {counts}")
            print("✅ Level is valid")
            return True
        except Exception as e:
            print(f"❌ Invalid level {path}: {e}")
            return False

    # -- simulation --

    def simulate(self, level_path: str, class1_path: str, class2_path: str, seed: int = None,
                 event_log: str = None) -> bool:
        try:
            level = load_level(level_path)
            pair = ClassPair(self._first_class(class1_path), self._first_class(class2_path))
            seed = self.config.master_seed if seed is None else seed

            events: List[str] = []
            outcome = simulate_match(level, pair, seed, self.config.match, self.config.ranges,
                                     on_event=events.append if event_log else None)
            if event_log:
                with open(event_log, "w", encoding="utf-8") as handle:
                    handle.write("\n".join(events) + "\n")
                print(f"📁 Event log: {event_log}")
            print(json.dumps(outcome.to_record(), sort_keys=True))
            return True
        except Exception as e:
            print(f"❌ Error simulating match: {e}")
            return False

    @staticmethod
    def _first_class(path: str):
        classes = load_classes(path)
        if not classes:
            raise ValueError(f"{path} holds no class")
        return classes[0]

    # -- corpus and training --

    def build_corpus(self, output: str, n_configs: int = None, export: str = None) -> bool:
        try:
            n_configs = n_configs or self.config.n_configs
            print(f"🚀 Simulating {n_configs} configurations ({2 * n_configs} matches, {self.jobs} jobs)...")
            corpus = build_corpus(n_configs, self.config.master_seed, self.config.corpus_settings,
                                  jobs=self.jobs, digest=self.config.digest)
            save_corpus(corpus, output)
            print(f"✅ Corpus written to {output}: {len(corpus)} samples, {corpus.dropped} incomplete dropped")

            stem = os.path.splitext(output)[0]
            if len(corpus):
                report = distribution_report(corpus, self.config.duration_min, self.config.duration_max)
                report.to_frame().to_csv(f"{stem}_distribution.csv", index=False)
                with open(f"{stem}_distribution.txt", "w", encoding="utf-8") as handle:
                    handle.write(report.summary())
                print(report.summary(), end="")
            if len(corpus) >= 3:
                parameter_correlations(corpus).to_csv(f"{stem}_correlations.csv", index=False, float_format="%.6f")
            if export:
                export_jsonl(corpus, export)
                print(f"📁 Text export: {export}")
            return True
        except Exception as e:
            print(f"❌ Error building corpus: {e}")
            return False

    def train(self, corpus_path: str, kind: str, output: str, max_epochs: int = None,
              patience: Optional[int] = -1) -> bool:
        """Train a model; patience -1 keeps the configured value, None disables early stopping"""
        try:
            if kind not in MODEL_KINDS:
                raise ValueError(f"unknown model kind {kind!r}")
            corpus = load_corpus(corpus_path)
            overrides = {"seed": derive_seed(self.config.master_seed, "train")}
            if max_epochs is not None:
                overrides["max_epochs"] = max_epochs
            if patience != -1:
                overrides["patience"] = patience
            cfg = TrainConfig.from_dict(vars(self.config.train), **overrides)

            train_set, val_set = split(corpus, cfg.validation_fraction, derive_seed(self.config.master_seed, "split"))
            print(f"🚀 Training {kind} on {len(train_set)} samples ({len(val_set)} for validation)...")
            model = build_model(kind, derive_seed(self.config.master_seed, "init", MODEL_KINDS.index(kind)))
            result = train(model, train_set, val_set, cfg)

            save_model(result.model, output)
            stem = os.path.splitext(output)[0]
            result.metrics.to_frame().to_csv(f"{stem}_metrics.csv", index=False, float_format="%.6f")
            result.log_frame().to_csv(f"{stem}_epochs.csv", index=False, float_format="%.6f")
            m = result.metrics
            print(f"✅ {kind}: MAE_t {m.mae_t:.4f}  MAE_s {m.mae_s:.4f}  R2_t {m.r2_t:.3f}  R2_s {m.r2_s:.3f} "
                  f"(best epoch {result.best_epoch} of {len(result.log)})")
            print(f"📁 Weights: {output}")
            return True
        except Exception as e:
            print(f"❌ Error training model: {e}")
            return False

    # -- evolution --

    def evolve(self, level_path: str, model_path: str, target: DesiredOutcome, output: str,
               seed: int = None, population: int = None, generations: int = None) -> bool:
        try:
            level = load_level(level_path)
            model = load_model(model_path)
            overrides = {"seed": derive_seed(self.config.master_seed, "evolve") if seed is None else seed}
            if population is not None:
                overrides["population"] = population
            if generations is not None:
                overrides["generations"] = generations
            cfg = EvolutionConfig.from_dict(vars(self.config.evolution), **overrides)

            print(f"🚀 Evolving class pairs for d_t={target.d_t:.2f}, d_s={target.d_s:.2f}...")
            result = evolve(model, level, target, cfg)
            save_pair(result.best_pair, output)
            trace_path = os.path.splitext(output)[0] + "_trace.csv"
            result.trace_frame().to_csv(trace_path, index=False, float_format="%.6f")

            t, s = predict_population(model, encode_level(level), result.best.genes)
            print(f"✅ Best fitness {result.best_fitness:.4f}: predicted t={t[0]:.3f}, s={s[0]:.3f}")
            print(f"📁 Class pair: {output}")
            print(f"📁 Trace: {trace_path}")
            return True
        except Exception as e:
            print(f"❌ Error evolving class pair: {e}")
            return False

    # -- evaluation --

    def collect_levels(self, level_paths: Sequence[str] = (), designed_paths: Sequence[str] = (),
                       generate: int = None) -> List[EvaluationLevel]:
        """Evaluation levels; with no input, the configured generated levels plus every designed level"""
        levels = [EvaluationLevel(_stem(p), "generated", load_level(p)) for p in level_paths]
        levels += [EvaluationLevel(_stem(p), "designed", load_level(p)) for p in designed_paths]
        if generate is None and not levels:
            generate = self.config.generated_levels
            if os.path.isdir(DESIGNED_LEVELS_DIR):
                for name in sorted(os.listdir(DESIGNED_LEVELS_DIR)):
                    if name.endswith(".txt"):
                        path = os.path.join(DESIGNED_LEVELS_DIR, name)
                        levels.append(EvaluationLevel(_stem(path), "designed", load_level(path)))
        for i in range(generate or 0):
            seed = derive_seed(self.config.master_seed, "evaluation_level", i)
            levels.append(EvaluationLevel(f"generated_{i}", "generated", generate_level(seed, self.config.generator)))
        return levels

    def _evolve_runs(self, model, model_label: str, levels: Sequence[EvaluationLevel],
                     out_dir: str, pairs_dir: str = None) -> List[Tuple]:
        pending = []
        pair_dir = os.path.join(out_dir, f"pairs_{model_label}")
        os.makedirs(pair_dir, exist_ok=True)
        for li, entry in enumerate(levels):
            channels = encode_level(entry.level)
            for pi, preset in enumerate(DURATION_PRESETS):
                target = DesiredOutcome.from_preset(preset)
                name = f"{entry.level_id}_{preset}.classes"
                supplied = os.path.join(pairs_dir, name) if pairs_dir else None
                index = li * len(DURATION_PRESETS) + pi
                if supplied and os.path.exists(supplied):
                    pair, best_fitness = load_pair(supplied), float("nan")
                else:
                    cfg = EvolutionConfig.from_dict(vars(self.config.evolution),
                                                    seed=derive_seed(self.config.master_seed, "evolve", index))
                    result = evolve(model, channels, target, cfg)
                    pair, best_fitness = result.best_pair, result.best_fitness
                save_pair(pair, os.path.join(pair_dir, name))
                t, s = predict_population(model, channels, encode_genotype(pair).genes)
                pending.append((entry, preset, target, pair, float(t[0]), float(s[0]), best_fitness, index))
                print(f"  {entry.level_id} / {preset}: predicted t={t[0]:.3f} s={s[0]:.3f}")
        return pending

    def _ground_truth_runs(self, pending: Sequence[Tuple], model_label: str) -> List[EvaluationRun]:
        cfg = self.config
        jobs = [(pair, entry.level, cfg.ground_truth_runs, cfg.match, cfg.ranges,
                 derive_seed(cfg.master_seed, "ground_truth", index), cfg.duration_min, cfg.duration_max)
                for entry, _, _, pair, _, _, _, index in pending]
        if self.jobs > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                stats = list(pool.map(_ground_truth_job, jobs))
        else:
            stats = [_ground_truth_job(job) for job in jobs]

        return [EvaluationRun(entry.level_id, entry.origin, preset, target.d_t, target.d_s, p_t, p_s,
                              pair, gt, best_fitness, model_label)
                for (entry, preset, target, pair, p_t, p_s, best_fitness, _), gt in zip(pending, stats)]

    def evaluate_model(self, model, model_label: str, levels: Sequence[EvaluationLevel], out_dir: str,
                       pairs_dir: str = None) -> List[EvaluationRun]:
        print(f"🚀 Evolving {len(levels) * len(DURATION_PRESETS)} class pairs with {model_label}...")
        pending = self._evolve_runs(model, model_label, levels, out_dir, pairs_dir)
        print(f"🚀 Ground truth: {self.config.ground_truth_runs} simulations per pair...")
        return self._ground_truth_runs(pending, model_label)

    def evaluate(self, model_path: str, out_dir: str, level_paths: Sequence[str] = (),
                 designed_paths: Sequence[str] = (), generate: int = None, pairs_dir: str = None,
                 compare_model: str = None, deck: str = None, experiment_id: str = None) -> bool:
        try:
            model = load_model(model_path)
            compare = load_model(compare_model) if compare_model else None
            levels = self.collect_levels(level_paths, designed_paths, generate)
            if not levels:
                raise ValueError("no evaluation levels")
            experiment_id = experiment_id or get_timestamped_filename("evaluation")
            os.makedirs(out_dir, exist_ok=True)
            refs = self.config.tf2_references

            runs = self.evaluate_model(model, model.kind, levels, out_dir, pairs_dir)
            paths = write_reports(runs, out_dir, experiment_id, refs, TF2_THRESHOLD)

            if compare is not None:
                label = compare.kind if compare.kind != model.kind else f"{compare.kind}_compare"
                compare_runs = self.evaluate_model(compare, label, levels, out_dir)
                write_reports(compare_runs, out_dir, f"{experiment_id}_{label}", refs, TF2_THRESHOLD)
                comparison = os.path.join(out_dir, f"{experiment_id}_model_comparison.csv")
                accuracy_table(runs + compare_runs).to_csv(comparison, index=False)
                paths["model_comparison"] = comparison

            if deck:
                if build_evaluation_deck(runs, deck, refs, subtitle=experiment_id):
                    print(f"📁 Deck: {deck}")
                else:
                    print("⚠️ Could not write the summary deck")

            with open(paths["summary"], "r", encoding="utf-8") as handle:
                print(handle.read(), end="")
            print(f"✅ Evaluation reports written to {os.path.abspath(out_dir)}")
            return True
        except Exception as e:
            print(f"❌ Error evaluating: {e}")
            return False


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]
