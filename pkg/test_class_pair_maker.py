#!/usr/bin/env python3
"""
Tests for the command-line entry point
"""

import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stdout
from unittest.mock import patch

import numpy as np

from class_pair_maker import build_parser, main
from classes import random_pair, save_classes
from config import DESIGNED_LEVELS_DIR
from level import load_level
from level_generator import generate_level
from pairing_pipeline import PairingPipeline

FAST_CONFIG = {"match": {"kill_limit": 2, "time_limit": 150.0}, "master_seed": 5}


class TestParser(unittest.TestCase):
    """Test cases for argument parsing"""

    def setUp(self):
        self.parser = build_parser()

    def test_command_required(self):
        """A subcommand is required"""
        with self.assertRaises(SystemExit):
            self.parser.parse_args([])

    def test_unknown_kind(self):
        """Model kinds are restricted"""
        with self.assertRaises(SystemExit) as ctx:
            with redirect_stdout(io.StringIO()), patch("sys.stderr", io.StringIO()):
                self.parser.parse_args(["train", "corpus.cfc", "--kind", "resnet"])
        self.assertEqual(ctx.exception.code, 2)

    def test_defaults(self):
        """Global defaults"""
        args = self.parser.parse_args(["show-level", "level.txt"])
        self.assertEqual(args.experiment_dir, "experiments")
        self.assertIsNone(args.jobs)
        self.assertFalse(args.verbose)

    def test_evaluate_lists(self):
        """Level lists accept several files"""
        args = self.parser.parse_args(["evaluate", "m.cfw", "--levels", "a.txt", "b.txt", "--id", "x"])
        self.assertEqual(args.levels, ["a.txt", "b.txt"])
        self.assertEqual(args.experiment_id, "x")


class TestMain(unittest.TestCase):
    """Test cases for main()"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        self.config = os.path.join(self.dir, "config.json")
        with open(self.config, "w", encoding="utf-8") as handle:
            json.dump(FAST_CONFIG, handle)

    def tearDown(self):
        self.tmp.cleanup()

    def run_main(self, *argv):
        out = io.StringIO()
        with redirect_stdout(out):
            code = main(["-c", self.config, "-d", self.dir] + list(argv))
        return code, out.getvalue()

    def test_gen_level(self):
        """gen-level writes the seeded level"""
        path = os.path.join(self.dir, "level.txt")
        code, _ = self.run_main("gen-level", "--seed", "3", "-o", path)
        self.assertEqual(code, 0)
        self.assertEqual(load_level(path), generate_level(3))

    def test_gen_level_default_output(self):
        """Without -o the level lands in the experiment directory"""
        code, _ = self.run_main("gen-level")
        self.assertEqual(code, 0)
        self.assertTrue(any(name.startswith("level_") for name in os.listdir(self.dir)))

    def test_show_level(self):
        """show-level accepts a designed level and rejects a missing one"""
        self.assertEqual(self.run_main("show-level", os.path.join(DESIGNED_LEVELS_DIR, "towers.txt"))[0], 0)
        self.assertEqual(self.run_main("show-level", os.path.join(self.dir, "missing.txt"))[0], 1)

    def test_simulate_prints_record(self):
        """simulate prints the outcome as JSON"""
        level = os.path.join(DESIGNED_LEVELS_DIR, "crossroads.txt")
        pair = random_pair(np.random.default_rng(1))
        save_classes([pair.player1], os.path.join(self.dir, "a.classes"))
        save_classes([pair.player2], os.path.join(self.dir, "b.classes"))
        code, out = self.run_main("simulate", level, os.path.join(self.dir, "a.classes"),
                                  os.path.join(self.dir, "b.classes"), "--seed", "2")
        self.assertEqual(code, 0)
        record = json.loads(out.strip().splitlines()[-1])
        self.assertIn("score", record)

    def test_bad_config(self):
        """Configuration errors exit with 1"""
        with open(self.config, "w", encoding="utf-8") as handle:
            json.dump({"unknown": 1}, handle)
        self.assertEqual(self.run_main("show-level", "level.txt")[0], 1)

    def test_bad_jobs(self):
        """--jobs below 1 is a usage error"""
        with self.assertRaises(SystemExit) as ctx:
            with patch("sys.stderr", io.StringIO()):
                self.run_main("-j", "0", "show-level", "level.txt")
        self.assertEqual(ctx.exception.code, 2)

    def test_evolve_explicit_target(self):
        """--dt and --ds build the desired outcome"""
        with patch.object(PairingPipeline, "evolve", return_value=True) as evolve:
            code, _ = self.run_main("evolve", "l.txt", "m.cfw", "--dt", "0.5", "--ds", "0.4", "-o", "p.classes")
        self.assertEqual(code, 0)
        target = evolve.call_args[0][2]
        self.assertEqual((target.d_t, target.d_s), (0.5, 0.4))

    def test_evolve_preset(self):
        """Presets set the duration with a balanced score"""
        with patch.object(PairingPipeline, "evolve", return_value=True) as evolve:
            self.run_main("evolve", "l.txt", "m.cfw", "--preset", "long", "-o", "p.classes")
        target = evolve.call_args[0][2]
        self.assertEqual((target.d_t, target.d_s), (1.0, 0.5))

    def test_evolve_target_out_of_range(self):
        """Targets outside [0, 1] exit with 1"""
        self.assertEqual(self.run_main("evolve", "l.txt", "m.cfw", "--dt", "1.5")[0], 1)

    def test_train_without_early_stopping(self):
        """--no-early-stopping disables patience"""
        with patch.object(PairingPipeline, "train", return_value=True) as train:
            self.run_main("train", "c.cfc", "--kind", "perceptron", "--no-early-stopping", "-o", "m.cfw")
        self.assertEqual(train.call_args[0], ("c.cfc", "perceptron", "m.cfw", None, None))

    def test_evaluate_defaults_to_experiment_dir(self):
        """Reports default to the experiment directory"""
        with patch.object(PairingPipeline, "evaluate", return_value=False) as evaluate:
            code, _ = self.run_main("evaluate", "m.cfw", "--generate", "2")
        self.assertEqual(code, 1)
        args = evaluate.call_args[0]
        self.assertEqual(args[1], self.dir)
        self.assertEqual(args[4], 2)


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == "__main__":
    run_tests()
