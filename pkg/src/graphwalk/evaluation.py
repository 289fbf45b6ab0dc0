"""Metrics and significance tests: Spearman, non-NIL accuracy, Fisher z,
paired bootstrap; dataset loaders and report emission."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from . import ned as ned_mod
from . import relatedness as rel_mod
from .errors import DataError
from .graph import NodeTable, TypedGraph
from .ppr import PprParams

DEFAULT_RESAMPLES = 10_000
SIGNIFICANCE_LEVEL = 0.05


def spearman(gold, pred) -> float:
    """Rank correlation: Pearson over average-rank vectors (ties averaged)."""
    gold = np.asarray(gold, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gold.shape != pred.shape:
        raise ValueError("gold and pred must have the same length")
    if len(gold) < 2:
        raise ValueError("need at least 2 pairs")
    rg = rankdata(gold)
    rp = rankdata(pred)
    if np.all(rg == rg[0]) or np.all(rp == rp[0]):
        raise ValueError("rank correlation undefined: zero variance in ranks")
    rg -= rg.mean()
    rp -= rp.mean()
    return float(np.dot(rg, rp) / math.sqrt(np.dot(rg, rg) * np.dot(rp, rp)))


class AccuracyResult(NamedTuple):
    value: float
    n: int                 # instances with a non-NIL gold entity
    correct: tuple[bool, ...]  # per such instance, in input order


def _is_nil(title: str | None) -> bool:
    return title is None or title == "" or title.upper() == "NIL"


def _map_title(title: str, redirects: dict[str, str] | None) -> str:
    if not redirects:
        return title
    seen = {title}
    for _ in range(16):
        nxt = redirects.get(title)
        if nxt is None or nxt in seen:
            return title
        seen.add(nxt)
        title = nxt
    return title


def accuracy(preds: list, gold: dict[str, str | None], nodes: NodeTable,
             redirects: dict[str, str] | None = None) -> AccuracyResult:
    """Non-NIL accuracy over NED predictions.

    The denominator counts only instances whose gold answer is a knowledge
    base entity; predicted titles are redirect-mapped before comparison, and
    a NIL prediction against a non-NIL gold counts as wrong.
    """
    pred_ids = {p.query_id for p in preds}
    if pred_ids != set(gold):
        missing = set(gold) ^ pred_ids
        raise DataError(f"query id mismatch between predictions and gold: {sorted(missing)[:5]}")
    correct: list[bool] = []
    for p in preds:
        gold_title = gold[p.query_id]
        if _is_nil(gold_title):
            continue
        if p.predicted is None:
            correct.append(False)
            continue
        title = _map_title(nodes.title_of(p.predicted), redirects)
        correct.append(title == gold_title)
    if not correct:
        raise DataError("no instance has a gold entity in the knowledge base")
    return AccuracyResult(sum(correct) / len(correct), len(correct), tuple(correct))


def fisher_z_test(r1: float, r2: float, n1: int, n2: int) -> float:
    """Two-sided p-value for the difference of two correlations.

    z = (atanh r1 - atanh r2) / sqrt(1/(n1-3) + 1/(n2-3)), compared against
    the standard normal.
    """
    if n1 < 4 or n2 < 4:
        raise ValueError("fisher z test needs n >= 4 on both sides")
    if abs(r1) > 1.0 or abs(r2) > 1.0:
        raise ValueError("correlations must lie in [-1, 1]")
    if abs(r1) == 1.0 or abs(r2) == 1.0:
        warnings.warn("|r| = 1 clamped for the z transform", stacklevel=2)
        r1 = math.copysign(min(abs(r1), 1.0 - 1e-12), r1)
        r2 = math.copysign(min(abs(r2), 1.0 - 1e-12), r2)
    z = (math.atanh(r1) - math.atanh(r2)) / math.sqrt(1.0 / (n1 - 3) + 1.0 / (n2 - 3))
    return math.erfc(abs(z) / math.sqrt(2.0))


def paired_bootstrap(goldmatch_a, goldmatch_b, resamples: int = DEFAULT_RESAMPLES,
                     seed: int = 0) -> float:
    """One-sided paired bootstrap on the observed winner.

    Resamples instance indices with replacement; p is the fraction of
    resamples where the accuracy difference is zero or has the opposite sign
    to the full-sample difference. Identical systems give exactly 1.0, and
    the p-value is deterministic for a given seed.
    """
    a = np.asarray(goldmatch_a, dtype=np.float64)
    b = np.asarray(goldmatch_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired bootstrap needs equal-length outcome lists")
    if len(a) < 1:
        raise ValueError("paired bootstrap needs at least one instance")
    if resamples < 1000:
        raise ValueError("resamples must be >= 1000")
    delta = a - b
    observed = float(delta.mean())
    if observed == 0.0:
        return 1.0
    n = len(delta)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < resamples:
        chunk = min(1000, resamples - done)
        idx = rng.integers(0, n, size=(chunk, n))
        diffs = delta[idx].mean(axis=1)
        hits += int((diffs <= 0.0).sum() if observed > 0 else (diffs >= 0.0).sum())
        done += chunk
    return hits / resamples


def load_relatedness_pairs(path: str):
    """Read term1 <tab> term2 [<tab> gold_score] rows."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 columns")
            gold = None
            if len(cols) == 3 and cols[2] != "":
                try:
                    gold = float(cols[2])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad gold score {cols[2]!r}") from None
            pairs.append((cols[0], cols[1], gold))
    return pairs


def load_redirect_map(path: str) -> dict[str, str]:
    """Read old_title <tab> new_title version-mapping rows."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns")
            out[cols[0]] = cols[1]
    return out


def load_rel_predictions(path: str) -> dict[tuple[str, str], float]:
    """Scores from an emitted relatedness prediction file, keyed by pair."""
    out: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns")
            if cols[3] == "NA":
                continue
            out[(cols[0], cols[1])] = float(cols[3])
    return out


def load_ned_predictions(path: str) -> dict[str, str]:
    """Predicted titles from an emitted NED prediction file, keyed by query id."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise DataError(f"{path}:{lineno}: expected 4 columns")
            out[cols[0]] = cols[1]
    return out


@dataclass
class EvalReport:
    dataset: str
    metric: str                      # "spearman" or "accuracy"
    value: float
    n: int
    config: dict
    significance: list[dict] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "metric": self.metric,
            "value": self.value,
            "n": self.n,
            "config": self.config,
            "significance": self.significance,
            "extras": self.extras,
        }

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _rel_metric(rows):
    gold = [g for _, _, g, s in rows if s is not None]
    pred = [s for _, _, g, s in rows if s is not None]
    if any(g is None for g in gold):
        raise DataError("relatedness dataset is missing gold scores")
    return spearman(gold, pred), len(gold)


def run_eval(task: str, system: str, dataset_paths: list[str], *,
             graph: TypedGraph, store, nodes: NodeTable,
             params: PprParams | None = None, config: dict | None = None,
             baseline_paths: list[str] | None = None,
             redirects: dict[str, str] | None = None,
             resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
             on_unknown: str = "skip", workers: int = 1,
             include_target: bool = True, dataset_name: str | None = None):
    """Run one system over one or more datasets (pooled) and score it.

    Returns (EvalReport, predictions). Multiple dataset paths are
    concatenated before the metric and the significance test, so pooled
    comparisons use a single test over all instances.
    """
    params = params or PprParams()
    name = dataset_name or "+".join(dataset_paths)
    config = dict(config or {})
    config.setdefault("system", system)
    config.setdefault("task", task)

    if task == "rel":
        pairs = []
        for path in dataset_paths:
            pairs.extend(load_relatedness_pairs(path))
        rows = rel_mod.score_pairs(pairs, graph, store, params, system, on_unknown)
        value, n = _rel_metric(rows)
        report = EvalReport(name, "spearman", value, n, config)
        report.extras["skipped_pairs"] = sum(1 for r in rows if r[3] is None)
        for base in baseline_paths or []:
            base_scores = load_rel_predictions(base)
            joint = [(g, s, base_scores[(t1, t2)]) for t1, t2, g, s in rows
                     if s is not None and (t1, t2) in base_scores]
            if len(joint) < 4:
                raise DataError(f"baseline {base} shares too few scored pairs")
            r2 = spearman([g for g, _, _ in joint], [b for _, _, b in joint])
            p = fisher_z_test(value, r2, n, len(joint))
            report.significance.append({
                "baseline": base, "baseline_value": r2, "p_value": p,
                "significant": p < SIGNIFICANCE_LEVEL,
                "test": "fisher-z-two-sided",
            })
        return report, rows

    if task != "ned":
        raise ValueError(f"unknown task {task!r}")

    queries = []
    for path in dataset_paths:
        queries.extend(ned_mod.load_queries(path))
    preds = ned_mod.run_batch(queries, graph, store, params, system,
                              workers=workers, nodes=nodes,
                              include_target=include_target)
    gold = {q.query_id: q.gold_title for q in queries}
    acc = accuracy(preds, gold, nodes, redirects)
    report = EvalReport(name, "accuracy", acc.value, acc.n, config)
    report.extras["fallback_count"] = sum(1 for p in preds if p.fallback_used)
    report.extras["fallback_rate"] = report.extras["fallback_count"] / len(preds)
    report.extras["nil_predictions"] = sum(1 for p in preds if p.predicted is None)
    for base in baseline_paths or []:
        base_titles = load_ned_predictions(base)
        ours, theirs = [], []
        for p in preds:
            if _is_nil(gold[p.query_id]):
                continue
            if p.query_id not in base_titles:
                raise DataError(f"baseline {base} is missing query {p.query_id}")
            mine = (nodes.title_of(p.predicted) if p.predicted is not None else "NIL")
            ours.append(_map_title(mine, redirects) == gold[p.query_id])
            theirs.append(_map_title(base_titles[p.query_id], redirects) == gold[p.query_id])
        p_val = paired_bootstrap(ours, theirs, resamples, seed)
        report.significance.append({
            "baseline": base,
            "baseline_value": sum(theirs) / len(theirs),
            "p_value": p_val,
            "significant": p_val < SIGNIFICANCE_LEVEL,
            "test": "paired-bootstrap-one-sided",
            "resamples": resamples, "seed": seed,
        })
    return report, preds


def compare_prediction_files(task: str, dataset_paths: list[str],
                             pred_paths: list[str],
                             baseline_paths: list[str] | None = None, *,
                             redirects: dict[str, str] | None = None,
                             resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                             config: dict | None = None,
                             dataset_name: str | None = None) -> EvalReport:
    """Score already-emitted predictions against gold, pooling datasets."""
    name = dataset_name or "+".join(dataset_paths)
    config = dict(config or {})
    config.setdefault("task", task)

    if task == "rel":
        pairs = []
        for path in dataset_paths:
            pairs.extend(load_relatedness_pairs(path))
        scores: dict[tuple[str, str], float] = {}
        for path in pred_paths:
            scores.update(load_rel_predictions(path))
        joint = [(g, scores[(t1, t2)]) for t1, t2, g in pairs
                 if g is not None and (t1, t2) in scores]
        if len(joint) < 2:
            raise DataError("no scored pairs shared between dataset and predictions")
        value = spearman([g for g, _ in joint], [s for _, s in joint])
        report = EvalReport(name, "spearman", value, len(joint), config)
        for base in baseline_paths or []:
            base_scores = load_rel_predictions(base)
            bj = [(g, base_scores[(t1, t2)]) for t1, t2, g in pairs
                  if g is not None and (t1, t2) in base_scores]
            r2 = spearman([g for g, _ in bj], [s for _, s in bj])
            p = fisher_z_test(value, r2, len(joint), len(bj))
            report.significance.append({
                "baseline": base, "baseline_value": r2, "p_value": p,
                "significant": p < SIGNIFICANCE_LEVEL,
                "test": "fisher-z-two-sided",
            })
        return report

    if task != "ned":
        raise ValueError(f"unknown task {task!r}")

    queries = []
    for path in dataset_paths:
        queries.extend(ned_mod.load_queries(path))
    titles: dict[str, str] = {}
    for path in pred_paths:
        titles.update(load_ned_predictions(path))
    kb_queries, ours = [], []
    for q in queries:
        if _is_nil(q.gold_title):
            continue
        if q.query_id not in titles:
            raise DataError(f"predictions are missing query {q.query_id}")
        ours.append(_map_title(titles[q.query_id], redirects) == q.gold_title)
        kb_queries.append(q)
    if not ours:
        raise DataError("no instance has a gold entity in the knowledge base")
    report = EvalReport(name, "accuracy", sum(ours) / len(ours), len(ours), config)
    for base in baseline_paths or []:
        base_titles = load_ned_predictions(base)
        theirs = []
        for q in kb_queries:
            if q.query_id not in base_titles:
                raise DataError(f"baseline {base} is missing query {q.query_id}")
            theirs.append(_map_title(base_titles[q.query_id], redirects) == q.gold_title)
        p_val = paired_bootstrap(ours, theirs, resamples, seed)
        report.significance.append({
            "baseline": base,
            "baseline_value": sum(theirs) / len(theirs),
            "p_value": p_val,
            "significant": p_val < SIGNIFICANCE_LEVEL,
            "test": "paired-bootstrap-one-sided",
            "resamples": resamples, "seed": seed,
        })
    return report
