#!/usr/bin/env python3

import argparse
import logging
import os
import sys

from config import DEFAULT_MASTER_SEED, DURATION_PRESETS, ConfigError, get_timestamped_filename
from evolve import DesiredOutcome
from pairing_pipeline import ExperimentConfig, PairingPipeline
from surrogate import MODEL_KINDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Generate levels, simulate matches, train surrogate models and evolve balanced class pairs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  %(prog)s gen-level --seed 7 -o level.txt
  %(prog)s gen-level --count 5 -o levels/eval.txt
  %(prog)s show-level level.txt
  %(prog)s simulate level.txt scout.classes heavy.classes --seed 3 --event-log match.log
  %(prog)s build-corpus -o corpus.cfc --jobs 4
  %(prog)s train corpus.cfc --kind cnn -o cnn.cfw
  %(prog)s evolve level.txt cnn.cfw --preset medium -o pair.classes
  %(prog)s evolve level.txt cnn.cfw --dt 0.5 --ds 0.4
  %(prog)s evaluate cnn.cfw --compare-model mlp16.cfw --deck evaluation.pptx

Duration presets: {', '.join(f'{k}={v}' for k, v in DURATION_PRESETS.items())}
        """
    )
    parser.add_argument(
        "-c", "--config",
        help="JSON experiment configuration merged over the defaults"
    )
    parser.add_argument(
        "--master-seed",
        type=int,
        default=None,
        help=f"Master seed every stage seed is derived from (default: config value, {DEFAULT_MASTER_SEED})"
    )
    parser.add_argument(
        "-d", "--experiment-dir",
        default="experiments",
        help="Directory for outputs written without an explicit path (default: experiments)"
    )
    parser.add_argument(
        "-j", "--jobs",
        type=int,
        default=None,
        help="Worker processes for simulation-heavy commands (default: config value)"
    )
    parser.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Enable verbose output"
    )

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    gen = commands.add_parser("gen-level", help="Generate level files")
    gen.add_argument("--seed", type=int, default=None, help="Level seed (default: master seed)")
    gen.add_argument("--count", type=int, default=1, help="Number of levels; more than one uses derived seeds")
    gen.add_argument("-o", "--output", help="Output level file")

    show = commands.add_parser("show-level", help="Validate and print a level file")
    show.add_argument("level", help="Level file")

    sim = commands.add_parser("simulate", help="Simulate one match between two classes")
    sim.add_argument("level", help="Level file")
    sim.add_argument("class1", help="Class file for player 1 (first class is used)")
    sim.add_argument("class2", help="Class file for player 2 (first class is used)")
    sim.add_argument("--seed", type=int, default=None, help="Match seed (default: master seed)")
    sim.add_argument("--event-log", help="Write the per-tick event log to this file")

    corpus = commands.add_parser("build-corpus", help="Simulate random configurations into a training corpus")
    corpus.add_argument("-o", "--output", help="Output corpus file")
    corpus.add_argument("-n", "--n-configs", type=int, default=None,
                        help="Level/class configurations to simulate, two matches each (default: config value)")
    corpus.add_argument("--export-jsonl", help="Also export the corpus as JSON lines")

    tr = commands.add_parser("train", help="Train a surrogate model on a corpus")
    tr.add_argument("corpus", help="Corpus file")
    tr.add_argument("--kind", choices=MODEL_KINDS, default="cnn", help="Model kind (default: cnn)")
    tr.add_argument("-o", "--output", help="Output weights file")
    tr.add_argument("--max-epochs", type=int, default=None, help="Override the configured epoch limit")
    tr.add_argument("--no-early-stopping", action="store_true", help="Train for every epoch")

    ev = commands.add_parser("evolve", help="Evolve a class pair for a level and target outcome")
    ev.add_argument("level", help="Level file")
    ev.add_argument("model", help="Surrogate weights file")
    ev.add_argument("--preset", choices=list(DURATION_PRESETS), default="medium",
                    help="Target duration preset (default: medium)")
    ev.add_argument("--dt", type=float, default=None, help="Explicit desired normalized duration")
    ev.add_argument("--ds", type=float, default=None, help="Explicit desired score (default: 0.5)")
    ev.add_argument("--seed", type=int, default=None, help="Evolution seed (default: derived from master seed)")
    ev.add_argument("--population", type=int, default=None, help="Override the population size")
    ev.add_argument("--generations", type=int, default=None, help="Override the number of generations")
    ev.add_argument("-o", "--output", help="Output class pair file")

    evaluate = commands.add_parser("evaluate", help="Evolve, simulate ground truth and write reports")
    evaluate.add_argument("model", help="Surrogate weights file")
    evaluate.add_argument("--levels", nargs="*", default=[], help="Generated level files")
    evaluate.add_argument("--designed-levels", nargs="*", default=[], help="Handcrafted level files")
    evaluate.add_argument("--generate", type=int, default=None,
                          help="Generate this many evaluation levels from the master seed")
    evaluate.add_argument("--pairs-dir", help="Reuse <level>_<preset>.classes pairs found here")
    evaluate.add_argument("--compare-model", help="Second weights file evaluated the same way")
    evaluate.add_argument("--deck", help="Also write a PowerPoint summary deck")
    evaluate.add_argument("--id", dest="experiment_id", help="Experiment id used as the report file prefix")
    evaluate.add_argument("-o", "--output", help="Report directory (default: the experiment directory)")
    return parser


def _default_output(args, base: str, extension: str) -> str:
    os.makedirs(args.experiment_dir, exist_ok=True)
    return os.path.join(args.experiment_dir, get_timestamped_filename(base, extension))


def run_command(pipeline: PairingPipeline, args) -> bool:
    if args.command == "gen-level":
        return pipeline.generate_levels(args.output or _default_output(args, "level", ".txt"), args.count, args.seed)
    if args.command == "show-level":
        return pipeline.show_level(args.level)
    if args.command == "simulate":
        return pipeline.simulate(args.level, args.class1, args.class2, args.seed, args.event_log)
    if args.command == "build-corpus":
        return pipeline.build_corpus(args.output or _default_output(args, "corpus", ".cfc"),
                                     args.n_configs, args.export_jsonl)
    if args.command == "train":
        patience = None if args.no_early_stopping else -1
        return pipeline.train(args.corpus, args.kind, args.output or _default_output(args, args.kind, ".cfw"),
                              args.max_epochs, patience)
    if args.command == "evolve":
        if args.dt is not None:
            target = DesiredOutcome(args.dt, 0.5 if args.ds is None else args.ds)
        else:
            preset = DesiredOutcome.from_preset(args.preset)
            target = DesiredOutcome(preset.d_t, preset.d_s if args.ds is None else args.ds)
        return pipeline.evolve(args.level, args.model, target, args.output or _default_output(args, "pair", ".classes"),
                               args.seed, args.population, args.generations)
    if args.command == "evaluate":
        return pipeline.evaluate(args.model, args.output or args.experiment_dir, args.levels, args.designed_levels,
                                 args.generate, args.pairs_dir, args.compare_model, args.deck, args.experiment_id)
    raise ValueError(f"unknown command {args.command}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = ExperimentConfig.load(args.config, args.master_seed)
    except (ConfigError, OSError) as e:
        print(f"❌ Error loading configuration: {e}")
        return 1

    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")

    pipeline = PairingPipeline(config, jobs=args.jobs)
    if args.verbose:
        print(f"🚀 {args.command} (master seed {config.master_seed}, {pipeline.jobs} jobs)")

    try:
        ok = run_command(pipeline, args)
    except ValueError as e:
        print(f"❌ Error: {e}")
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
