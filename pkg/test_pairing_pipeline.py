#!/usr/bin/env python3
"""
Tests for the experiment configuration and the pipeline stages
"""

import json
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from classes import load_pair, random_pair, save_classes, save_pair
from config import DESIGNED_LEVELS_DIR, ConfigError, default_sections
from corpus import Corpus, Sample, load_corpus, save_corpus
from evolve import DesiredOutcome
from level import encode_level, load_level, save_level
from level_generator import generate_level
from analysis import welch
from pairing_pipeline import ExperimentConfig, PairingPipeline
from surrogate import build_model, load_model, save_model

FULL_ACCEPTANCE = os.environ.get("CLASS_PAIR_FULL_ACCEPTANCE") == "1"

FAST_CONFIG = {
    "match": {"kill_limit": 2, "time_limit": 150.0},
    "train": {"max_epochs": 3, "patience": 2, "batch_size": 4, "validation_fraction": 0.2},
    "evolution": {"population": 4, "generations": 1},
    "corpus": {"n_configs": 2},
    "evaluation": {"ground_truth_runs": 2, "generated_levels": 1},
    "master_seed": 5,
}


def write_config(directory, data=None):
    path = os.path.join(directory, "config.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(FAST_CONFIG if data is None else data, handle)
    return path


class TestExperimentConfig(unittest.TestCase):
    """Test cases for ExperimentConfig"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        """No file gives the default sections"""
        config = ExperimentConfig.load()
        self.assertEqual(config.master_seed, default_sections()["master_seed"])
        self.assertEqual(config.match.kill_limit, 20)
        self.assertEqual(len(config.tf2_references), 5)

    def test_file_overrides(self):
        """File values are merged over the defaults"""
        config = ExperimentConfig.load(write_config(self.tmp.name))
        self.assertEqual(config.match.kill_limit, 2)
        self.assertEqual(config.match.tick, 0.1)
        self.assertEqual(config.evolution.population, 4)
        self.assertEqual(config.ground_truth_runs, 2)

    def test_master_seed_override(self):
        """An explicit master seed wins over the file"""
        config = ExperimentConfig.load(write_config(self.tmp.name), master_seed=99)
        self.assertEqual(config.master_seed, 99)

    def test_digest_follows_content(self):
        """Different settings give different digests"""
        a = ExperimentConfig.load()
        b = ExperimentConfig.load(write_config(self.tmp.name))
        self.assertNotEqual(a.digest, b.digest)
        self.assertEqual(a.digest, ExperimentConfig.load().digest)

    def test_unknown_section(self):
        """Unknown top-level sections are rejected"""
        with self.assertRaises(ConfigError):
            ExperimentConfig.load(write_config(self.tmp.name, {"matchh": {}}))

    def test_unknown_key(self):
        """Unknown keys inside a section are rejected"""
        with self.assertRaises(ConfigError):
            ExperimentConfig.load(write_config(self.tmp.name, {"match": {"kill_limt": 3}}))

    def test_invalid_value(self):
        """Values failing validation surface as ConfigError"""
        with self.assertRaises(ConfigError):
            ExperimentConfig.load(write_config(self.tmp.name, {"evolution": {"population": 7}}))

    def test_invalid_json(self):
        """Malformed JSON is a ConfigError"""
        path = os.path.join(self.tmp.name, "bad.json")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("{not json")
        with self.assertRaises(ConfigError):
            ExperimentConfig.load(path)


class PipelineTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        self.pipeline = PairingPipeline(ExperimentConfig.load(write_config(self.dir)))
        self.level_path = os.path.join(self.dir, "level.txt")
        save_level(generate_level(3), self.level_path)
        self.model_path = os.path.join(self.dir, "linear.cfw")
        save_model(build_model("linear", seed=1), self.model_path)

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)


class TestLevelStages(PipelineTestCase):
    """Test cases for generate_levels and show_level"""

    def test_generate_one(self):
        """One level goes to the given path"""
        self.assertTrue(self.pipeline.generate_levels(self.path("one.txt"), seed=11))
        self.assertEqual(load_level(self.path("one.txt")), generate_level(11))

    def test_generate_many(self):
        """Several levels get numbered files and distinct derived seeds"""
        self.assertTrue(self.pipeline.generate_levels(self.path("many.txt"), count=3, seed=1))
        levels = [load_level(self.path(f"many_{i}.txt")) for i in range(3)]
        self.assertNotEqual(levels[0], levels[1])

    def test_generate_zero(self):
        """A count below one fails"""
        self.assertFalse(self.pipeline.generate_levels(self.path("none.txt"), count=0))

    def test_show_level(self):
        """Valid files are accepted and broken ones rejected"""
        self.assertTrue(self.pipeline.show_level(self.level_path))
        with open(self.path("broken.txt"), "w", encoding="utf-8") as handle:
            handle.write("....\n")
        self.assertFalse(self.pipeline.show_level(self.path("broken.txt")))


class TestSimulateStage(PipelineTestCase):
    """Test cases for simulate"""

    def test_simulate_with_event_log(self):
        """A match runs and its events are written"""
        pair = random_pair(np.random.default_rng(2))
        save_classes([pair.player1], self.path("a.classes"))
        save_classes([pair.player2], self.path("b.classes"))
        log = self.path("events.log")
        self.assertTrue(self.pipeline.simulate(self.level_path, self.path("a.classes"), self.path("b.classes"),
                                               seed=4, event_log=log))
        self.assertTrue(os.path.exists(log))

    def test_missing_class_file(self):
        """Missing inputs fail cleanly"""
        self.assertFalse(self.pipeline.simulate(self.level_path, self.path("no.classes"), self.path("no.classes")))


class TestCorpusAndTraining(PipelineTestCase):
    """Test cases for build_corpus and train"""

    def test_build_corpus(self):
        """Corpus file and reports are written"""
        out = self.path("corpus.cfc")
        self.assertTrue(self.pipeline.build_corpus(out, export=self.path("corpus.jsonl")))
        corpus = load_corpus(out)
        self.assertEqual(len(corpus) + corpus.dropped, 4)
        self.assertEqual(corpus.digest, self.pipeline.config.digest)
        self.assertTrue(os.path.exists(self.path("corpus.jsonl")))
        if len(corpus):
            self.assertTrue(os.path.exists(self.path("corpus_distribution.csv")))

    def test_train(self):
        """Training writes weights, metrics and the epoch log"""
        rng = np.random.default_rng(0)
        channels = encode_level(generate_level(1))
        samples = [Sample(channels, rng.random(16).astype(np.float32), float(rng.random()), float(rng.random()),
                          i, i, i) for i in range(20)]
        save_corpus(Corpus.from_samples(samples), self.path("small.cfc"))
        out = self.path("model.cfw")
        self.assertTrue(self.pipeline.train(self.path("small.cfc"), "mlp16", out))
        self.assertEqual(load_model(out).kind, "mlp16")
        self.assertEqual(len(pd.read_csv(self.path("model_metrics.csv"))), 1)
        self.assertLessEqual(len(pd.read_csv(self.path("model_epochs.csv"))), 3)

    def test_train_unknown_kind(self):
        """Unknown model kinds fail"""
        self.assertFalse(self.pipeline.train(self.path("missing.cfc"), "resnet", self.path("x.cfw")))


class TestEvolveStage(PipelineTestCase):
    """Test cases for evolve"""

    def test_evolve(self):
        """A pair and its trace are written"""
        out = self.path("pair.classes")
        self.assertTrue(self.pipeline.evolve(self.level_path, self.model_path, DesiredOutcome(0.33), out, seed=3))
        load_pair(out)
        self.assertEqual(len(pd.read_csv(self.path("pair_trace.csv"))), 2)

    def test_bad_model_file(self):
        """A non-model file fails"""
        self.assertFalse(self.pipeline.evolve(self.level_path, self.level_path, DesiredOutcome(0.33),
                                              self.path("pair.classes")))


class TestEvaluateStage(PipelineTestCase):
    """Test cases for collect_levels and evaluate"""

    def test_collect_defaults(self):
        """Without inputs the configured generated levels and the designed levels are used"""
        levels = self.pipeline.collect_levels()
        designed = [name for name in os.listdir(DESIGNED_LEVELS_DIR) if name.endswith(".txt")]
        self.assertEqual(len(levels), 1 + len(designed))
        self.assertEqual(sum(1 for entry in levels if entry.origin == "designed"), len(designed))

    def test_collect_explicit(self):
        """Explicit files keep their origin and name"""
        levels = self.pipeline.collect_levels([self.level_path], [os.path.join(DESIGNED_LEVELS_DIR, "ring.txt")])
        self.assertEqual([(e.level_id, e.origin) for e in levels], [("level", "generated"), ("ring", "designed")])

    def test_evaluate_with_comparison_and_deck(self):
        """Reports, reused pairs, a comparison table and a deck are written"""
        pairs_dir = self.path("given")
        os.makedirs(pairs_dir)
        given = random_pair(np.random.default_rng(8))
        save_pair(given, os.path.join(pairs_dir, "level_short.classes"))
        out = self.path("reports")
        deck = self.path("deck.pptx")

        self.assertTrue(self.pipeline.evaluate(self.model_path, out, [self.level_path], pairs_dir=pairs_dir,
                                               compare_model=self.model_path, deck=deck, experiment_id="exp"))
        runs = pd.read_csv(os.path.join(out, "exp_runs.csv"))
        self.assertEqual(len(runs), 3)
        self.assertEqual(load_pair(os.path.join(out, "pairs_linear", "level_short.classes")), given)
        self.assertTrue(os.path.exists(os.path.join(out, "pairs_linear_compare", "level_long.classes")))
        comparison = pd.read_csv(os.path.join(out, "exp_model_comparison.csv"))
        self.assertEqual(set(comparison["model"]), {"linear", "linear_compare"})
        self.assertTrue(os.path.exists(deck))

    def test_evaluate_missing_model(self):
        """A missing model fails"""
        self.assertFalse(self.pipeline.evaluate(self.path("missing.cfw"), self.path("out"), [self.level_path]))


class TestEndToEnd(unittest.TestCase):
    """Desk-scale run from corpus to ground truth"""

    @unittest.skipUnless(FULL_ACCEPTANCE, "set CLASS_PAIR_FULL_ACCEPTANCE=1")
    def test_long_targets_play_longer_and_tankier(self):
        """Long targets simulate longer than short ones and hit points rise short to long"""
        with tempfile.TemporaryDirectory() as tmp:
            pipeline = PairingPipeline(ExperimentConfig.load(), jobs=os.cpu_count() or 1)
            corpus_path = os.path.join(tmp, "corpus.cfc")
            model_path = os.path.join(tmp, "cnn.cfw")
            self.assertTrue(pipeline.build_corpus(corpus_path))
            self.assertTrue(pipeline.train(corpus_path, "cnn", model_path))

            levels = pipeline.collect_levels()
            self.assertEqual(len(levels), 10)
            runs = pipeline.evaluate_model(load_model(model_path), "cnn", levels, os.path.join(tmp, "out"))
            self.assertEqual(len(runs), 30)

            def durations(preset):
                return [run.gt.a_t for run in runs if run.preset == preset]

            t, p = welch(durations("long"), durations("short"))
            self.assertGreater(t, 0.0)
            self.assertLess(p, 0.05)

            hit_points = [np.mean([(run.pair.player1.hit_points + run.pair.player2.hit_points) / 2
                                   for run in runs if run.preset == preset])
                          for preset in ("short", "medium", "long")]
            self.assertLess(hit_points[0], hit_points[1])
            self.assertLess(hit_points[1], hit_points[2])


def run_tests():

    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == "__main__":
    run_tests()
