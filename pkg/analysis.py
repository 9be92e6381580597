"""
Ground-truth validation of evolved class pairs and the evaluation reports:
accuracy against confidence bounds, distance tables, parameter trends,
TF2 label distributions, correlations and significance tests.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from classes import PARAM_NAMES, TF2_LABEL_ORDER, UNDEFINED, ClassPair, ParamRanges, TF2Reference, match_tf2
from config import CORPUS_SETTINGS, DURATION_PRESETS, EVALUATION_SETTINGS, TF2_THRESHOLD, derive_seed
from corpus import Corpus, normalize_duration
from level import Level
from simulator import Arena, MatchConfig, MatchOutcome, simulate_match

logger = logging.getLogger(__name__)

PRESET_ORDER = tuple(DURATION_PRESETS)
ORIGIN_ORDER = ("designed", "generated")
PLAYERS = ("player1", "player2")
PARAM_COLUMNS = tuple(f"p1_{name}" for name in PARAM_NAMES) + tuple(f"p2_{name}" for name in PARAM_NAMES)
DISTANCE_COLUMNS = ("at_dt", "as_ds", "a_d_eucl", "at_pt", "as_ps", "a_p_eucl")


@dataclass(frozen=True)
class GroundTruthStats:
    a_t: float
    a_s: float
    ci_t: float
    ci_s: float
    n: int
    incomplete: int = 0

    def contains(self, t: float, s: float) -> Tuple[bool, bool]:
        return (self.a_t - self.ci_t <= t <= self.a_t + self.ci_t,
                self.a_s - self.ci_s <= s <= self.a_s + self.ci_s)


def confidence_half_width(values: Sequence[float], confidence: float = EVALUATION_SETTINGS["confidence"]) -> float:
    """t-distribution half-width of the mean's confidence interval"""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n < 2:
        return math.nan
    critical = stats.t.ppf((1.0 + confidence) / 2.0, n - 1)
    return float(critical * np.std(values, ddof=1) / math.sqrt(n))


def summarize_outcomes(outcomes: Sequence[MatchOutcome], duration_min: float = CORPUS_SETTINGS["duration_min"],
                       duration_max: float = CORPUS_SETTINGS["duration_max"],
                       confidence: float = EVALUATION_SETTINGS["confidence"]) -> GroundTruthStats:
    """Mean and CI of normalized duration and score; incomplete matches count at the time limit"""
    if len(outcomes) < 2:
        raise ValueError("ground truth needs at least 2 simulations")
    durations = [normalize_duration(o.duration, duration_min, duration_max) for o in outcomes]
    scores = [o.score for o in outcomes]
    return GroundTruthStats(
        a_t=float(np.mean(durations)),
        a_s=float(np.mean(scores)),
        ci_t=confidence_half_width(durations, confidence),
        ci_s=confidence_half_width(scores, confidence),
        n=len(outcomes),
        incomplete=sum(1 for o in outcomes if not o.completed),
    )


def ground_truth(pair: ClassPair, level: Level, n: int = EVALUATION_SETTINGS["ground_truth_runs"],
                 seeds: Optional[Sequence[int]] = None, cfg: MatchConfig = None, ranges: ParamRanges = None,
                 base_seed: int = 0, duration_min: float = CORPUS_SETTINGS["duration_min"],
                 duration_max: float = CORPUS_SETTINGS["duration_max"]) -> GroundTruthStats:
    """Simulate `pair` n times on `level` and summarize"""
    if n < 2:
        raise ValueError("ground truth needs n >= 2")
    if seeds is None:
        seeds = [derive_seed(base_seed, "ground_truth", i) for i in range(n)]
    elif len(seeds) != n:
        raise ValueError(f"expected {n} seeds, got {len(seeds)}")
    arena = Arena(level)
    outcomes = [simulate_match(level, pair, seed, cfg, ranges, arena) for seed in seeds]
    return summarize_outcomes(outcomes, duration_min, duration_max)


def accuracy(prediction: Tuple[float, float], gt: GroundTruthStats) -> Tuple[bool, bool]:
    """(duration_accurate, score_accurate) for a (p_t, p_s) prediction: closed-interval containment"""
    return gt.contains(*prediction)


# -------------------------
# RUN RECORDS
# -------------------------

@dataclass(frozen=True)
class EvaluationRun:
    """One evolved pair on one level for one target, with its ground truth"""

    level_id: str
    origin: str
    preset: str
    d_t: float
    d_s: float
    p_t: float
    p_s: float
    pair: ClassPair
    gt: GroundTruthStats
    best_fitness: float = math.nan
    model: str = "cnn"

    @property
    def duration_accurate(self) -> bool:
        return accuracy((self.p_t, self.p_s), self.gt)[0]

    @property
    def score_accurate(self) -> bool:
        return accuracy((self.p_t, self.p_s), self.gt)[1]

    def distances(self) -> Dict[str, float]:
        gt = self.gt
        return {
            "at_dt": abs(gt.a_t - self.d_t),
            "as_ds": abs(gt.a_s - self.d_s),
            "a_d_eucl": math.hypot(gt.a_t - self.d_t, gt.a_s - self.d_s),
            "at_pt": abs(gt.a_t - self.p_t),
            "as_ps": abs(gt.a_s - self.p_s),
            "a_p_eucl": math.hypot(gt.a_t - self.p_t, gt.a_s - self.p_s),
        }

    def desired_within_ci(self) -> Tuple[bool, bool]:
        return self.gt.contains(self.d_t, self.d_s)


@dataclass(frozen=True)
class AccuracyRecord:
    level_id: str
    preset: str
    origin: str
    duration_accurate: bool
    score_accurate: bool
    distances: Dict[str, float] = field(default_factory=dict)


def accuracy_record(run: EvaluationRun) -> AccuracyRecord:
    return AccuracyRecord(run.level_id, run.preset, run.origin, run.duration_accurate,
                          run.score_accurate, run.distances())


def runs_frame(runs: Iterable[EvaluationRun]) -> pd.DataFrame:
    """One row per run: identifiers, targets, prediction, ground truth, distances and parameters"""
    rows = []
    for run in runs:
        row = {
            "model": run.model, "level_id": run.level_id, "origin": run.origin, "preset": run.preset,
            "d_t": run.d_t, "d_s": run.d_s, "p_t": run.p_t, "p_s": run.p_s,
            "a_t": run.gt.a_t, "a_s": run.gt.a_s, "ci_t": run.gt.ci_t, "ci_s": run.gt.ci_s,
            "gt_n": run.gt.n, "gt_incomplete": run.gt.incomplete, "best_fitness": run.best_fitness,
            "duration_accurate": run.duration_accurate, "score_accurate": run.score_accurate,
        }
        row.update(run.distances())
        row.update(zip(PARAM_COLUMNS, (float(v) for v in run.pair.to_params())))
        rows.append(row)
    return pd.DataFrame(rows)


def _ordered(groups: Iterable[Tuple[str, str]]) -> List[Tuple[str, str]]:
    def rank(value, order):
        return order.index(value) if value in order else len(order)
    return sorted(groups, key=lambda g: (rank(g[0], PRESET_ORDER), g[0], rank(g[1], ORIGIN_ORDER), g[1]))


def accuracy_table(runs: Sequence[EvaluationRun]) -> pd.DataFrame:
    """Accurate-prediction counts per (preset, origin), including desired-within-CI counts"""
    frame = runs_frame(runs)
    rows = []
    if frame.empty:
        return pd.DataFrame(columns=["model", "preset", "origin", "runs", "duration_accurate", "score_accurate",
                                     "desired_t_in_ci", "desired_s_in_ci", "gt_incomplete"])
    for model in sorted(frame["model"].unique()):
        subset = frame[frame["model"] == model]
        for preset, origin in _ordered(set(zip(subset["preset"], subset["origin"]))):
            group = [r for r in runs if r.model == model and r.preset == preset and r.origin == origin]
            desired = [r.desired_within_ci() for r in group]
            rows.append({
                "model": model,
                "preset": preset,
                "origin": origin,
                "runs": len(group),
                "duration_accurate": sum(r.duration_accurate for r in group),
                "score_accurate": sum(r.score_accurate for r in group),
                "desired_t_in_ci": sum(d[0] for d in desired),
                "desired_s_in_ci": sum(d[1] for d in desired),
                "gt_incomplete": sum(r.gt.incomplete for r in group),
            })
    return pd.DataFrame(rows)


def distance_report(runs: Sequence[EvaluationRun]) -> pd.DataFrame:
    """Mean and standard deviation of each distance per (preset, origin) group"""
    rows = []
    groups = _ordered({(r.preset, r.origin) for r in runs})
    for preset, origin in groups:
        group = [r.distances() for r in runs if r.preset == preset and r.origin == origin]
        row = {"preset": preset, "origin": origin, "runs": len(group)}
        for column in DISTANCE_COLUMNS:
            values = np.array([d[column] for d in group])
            row[f"{column}_mean"] = float(values.mean())
            row[f"{column}_std"] = float(values.std())
        rows.append(row)
    for preset in PRESET_ORDER:
        for origin in ORIGIN_ORDER:
            if runs and (preset, origin) not in groups:
                logger.info("distance report: no runs for %s/%s", preset, origin)
    columns = ["preset", "origin", "runs"] + [f"{c}_{s}" for c in DISTANCE_COLUMNS for s in ("mean", "std")]
    return pd.DataFrame(rows, columns=columns)


# -------------------------
# STATISTICS
# -------------------------

def pearson_test(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Pearson coefficient and two-sided p-value; NaN when either input is constant"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("pearson needs two sequences of equal length >= 3")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        logger.warning("Pearson correlation undefined: zero variance input")
        return math.nan, math.nan
    result = stats.pearsonr(x, y)
    return float(result[0]), float(result[1])


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson_test(x, y)[0]


def welch(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Welch two-sample t statistic and two-sided p-value; NaN with fewer than 2 values per side"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        return math.nan, math.nan
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return (0.0, 1.0) if a[0] == b[0] else (math.copysign(math.inf, a[0] - b[0]), 0.0)
    result = stats.ttest_ind(a, b, equal_var=False)
    return float(result[0]), float(result[1])


def _significant(p: float, confidence: float) -> bool:
    return bool(not math.isnan(p) and p < 1.0 - confidence)


def parameter_correlations(corpus: Corpus, confidence: float = EVALUATION_SETTINGS["confidence"]) -> pd.DataFrame:
    """Pearson correlation of every class parameter with score and with normalized duration"""
    rows = []
    for i, name in enumerate(PARAM_COLUMNS):
        column = corpus.params[:, i]
        r_s, p_s = pearson_test(column, corpus.scores)
        r_t, p_t = pearson_test(column, corpus.durations)
        rows.append({"parameter": name, "r_score": r_s, "p_score": p_s,
                     "significant_score": _significant(p_s, confidence),
                     "r_duration": r_t, "p_duration": p_t,
                     "significant_duration": _significant(p_t, confidence)})
    return pd.DataFrame(rows)


def target_correlations(runs: Sequence[EvaluationRun],
                        confidence: float = EVALUATION_SETTINGS["confidence"]) -> pd.DataFrame:
    """Pearson of each evolved parameter with the desired duration and with the GT duration"""
    frame = runs_frame(runs)
    rows = []
    for name in PARAM_COLUMNS:
        r_d, p_d = pearson_test(frame[name], frame["d_t"])
        r_a, p_a = pearson_test(frame[name], frame["a_t"])
        rows.append({"parameter": name, "r_desired": r_d, "p_desired": p_d,
                     "significant_desired": _significant(p_d, confidence),
                     "r_ground_truth": r_a, "p_ground_truth": p_a,
                     "significant_ground_truth": _significant(p_a, confidence)})
    return pd.DataFrame(rows)


def trend_report(runs: Sequence[EvaluationRun],
                 confidence: float = EVALUATION_SETTINGS["confidence"]) -> pd.DataFrame:
    """Mean and CI half-width of every parameter per (preset, player); range embedded 0/0.5/1"""
    frame = runs_frame(runs)
    rows = []
    presets = [p for p in PRESET_ORDER if not frame.empty and p in set(frame["preset"])]
    for preset in presets:
        group = frame[frame["preset"] == preset]
        for player, prefix in zip(PLAYERS, ("p1_", "p2_")):
            for name in PARAM_NAMES:
                values = group[prefix + name].to_numpy()
                rows.append({"preset": preset, "player": player, "parameter": name, "n": len(values),
                             "mean": float(values.mean()), "ci": confidence_half_width(values, confidence)})
    return pd.DataFrame(rows, columns=["preset", "player", "parameter", "n", "mean", "ci"])


def trend_significance(runs: Sequence[EvaluationRun],
                       confidence: float = EVALUATION_SETTINGS["confidence"]) -> pd.DataFrame:
    """Welch test per parameter and player between consecutive duration presets"""
    frame = runs_frame(runs)
    rows = []
    present = [p for p in PRESET_ORDER if not frame.empty and p in set(frame["preset"])]
    for low, high in zip(present, present[1:]):
        a, b = frame[frame["preset"] == low], frame[frame["preset"] == high]
        for player, prefix in zip(PLAYERS, ("p1_", "p2_")):
            for name in PARAM_NAMES:
                t, p = welch(a[prefix + name], b[prefix + name])
                rows.append({"from": low, "to": high, "player": player, "parameter": name,
                             "t": t, "p": p, "significant": _significant(p, confidence)})
    return pd.DataFrame(rows, columns=["from", "to", "player", "parameter", "t", "p", "significant"])


def compare_presets(runs: Sequence[EvaluationRun],
                    confidence: float = EVALUATION_SETTINGS["confidence"]) -> pd.DataFrame:
    """Welch tests of GT duration and GT score between every pair of presets"""
    frame = runs_frame(runs)
    rows = []
    present = [p for p in PRESET_ORDER if not frame.empty and p in set(frame["preset"])]
    for i, first in enumerate(present):
        for second in present[i + 1:]:
            a, b = frame[frame["preset"] == first], frame[frame["preset"] == second]
            for metric in ("a_t", "a_s"):
                t, p = welch(a[metric], b[metric])
                rows.append({"first": first, "second": second, "metric": metric,
                             "mean_first": float(a[metric].mean()), "mean_second": float(b[metric].mean()),
                             "t": t, "p": p, "significant": _significant(p, confidence)})
    return pd.DataFrame(rows, columns=["first", "second", "metric", "mean_first", "mean_second",
                                       "t", "p", "significant"])


# -------------------------
# TF2 LABELS
# -------------------------

def tf2_labels(pair: ClassPair, refs: Sequence[TF2Reference], threshold: float = TF2_THRESHOLD) -> Tuple[str, str]:
    return match_tf2(pair.player1, refs, threshold), match_tf2(pair.player2, refs, threshold)


def tf2_report(runs: Sequence[EvaluationRun], refs: Sequence[TF2Reference],
               threshold: float = TF2_THRESHOLD) -> pd.DataFrame:
    """Label counts per (preset, player), plus the across-players distribution and opponent diversity"""
    labels = [r.label for r in refs]
    columns = [l for l in TF2_LABEL_ORDER if l in labels] + sorted(set(labels) - set(TF2_LABEL_ORDER)) + [UNDEFINED]
    rows = []
    for preset in [p for p in PRESET_ORDER if any(r.preset == p for r in runs)]:
        pairs = [tf2_labels(r.pair, refs, threshold) for r in runs if r.preset == preset]
        for player, picked in (("player1", [p[0] for p in pairs]),
                               ("player2", [p[1] for p in pairs]),
                               ("all", [l for p in pairs for l in p])):
            row = {"preset": preset, "player": player}
            row.update({label: picked.count(label) for label in columns})
            row["total"] = len(picked)
            row["distinct_opponents"] = sum(1 for a, b in pairs if a != b) / len(pairs)
            rows.append(row)
    return pd.DataFrame(rows, columns=["preset", "player"] + columns + ["total", "distinct_opponents"])


# -------------------------
# REPORT FILES
# -------------------------

def summary_text(runs: Sequence[EvaluationRun], refs: Sequence[TF2Reference] = (),
                 threshold: float = TF2_THRESHOLD) -> str:
    """Human-readable digest of the evaluation"""
    lines = [f"Evaluation runs: {len(runs)}"]
    table = accuracy_table(runs)
    for row in table.itertuples(index=False):
        lines.append(f"  [{row.model}] {row.preset:<6} {row.origin:<9} runs={row.runs} "
                     f"duration accurate={row.duration_accurate} score accurate={row.score_accurate} "
                     f"desired in CI (t/s)={row.desired_t_in_ci}/{row.desired_s_in_ci} "
                     f"incomplete GT matches={row.gt_incomplete}")

    comparisons = compare_presets(runs)
    for row in comparisons.itertuples(index=False):
        verdict = "significantly different" if row.significant else "not significantly different"
        lines.append(f"  {row.metric} {row.first} vs {row.second}: {row.mean_first:.3f} vs "
                     f"{row.mean_second:.3f}, Welch t={row.t:.2f} p={row.p:.4f} ({verdict})")

    trends = trend_report(runs)
    hp = trends[trends["parameter"] == "hit_points"]
    for player in PLAYERS:
        means = hp[hp["player"] == player].set_index("preset")["mean"]
        if len(means):
            path = " -> ".join(f"{preset} {value:.3f}" for preset, value in means.items())
            lines.append(f"  mean hit points ({player}): {path}")

    if refs:
        labels = tf2_report(runs, refs, threshold)
        for row in labels[labels["player"] == "all"].itertuples(index=False):
            lines.append(f"  TF2 labels {row.preset}: distinct opponents {row.distinct_opponents:.0%}")
    return "\n".join(lines) + "\n"


def write_reports(runs: Sequence[EvaluationRun], out_dir: str, experiment_id: str,
                  refs: Sequence[TF2Reference] = (), threshold: float = TF2_THRESHOLD) -> Dict[str, str]:
    """Write every report as CSV plus a text summary; returns name -> path"""
    os.makedirs(out_dir, exist_ok=True)
    tables = {
        "runs": runs_frame(runs),
        "accuracy": accuracy_table(runs),
        "distances": distance_report(runs),
        "trends": trend_report(runs),
        "trend_significance": trend_significance(runs),
        "preset_comparison": compare_presets(runs),
    }
    if len(runs) >= 3:
        tables["target_correlations"] = target_correlations(runs)
    if refs:
        tables["tf2"] = tf2_report(runs, refs, threshold)

    paths = {}
    for name, table in tables.items():
        path = os.path.join(out_dir, f"{experiment_id}_{name}.csv")
        table.to_csv(path, index=False, float_format="%.6f")
        paths[name] = path
    summary = os.path.join(out_dir, f"{experiment_id}_summary.txt")
    with open(summary, "w", encoding="utf-8") as handle:
        handle.write(summary_text(runs, refs, threshold))
    paths["summary"] = summary
    return paths
