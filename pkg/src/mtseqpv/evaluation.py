"""Precision/recall/F1 for classification and approximate span matching,
plus prediction and attention-heatmap export."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CLASS_LABELS, TAG_ALPHABETS, spans_from_tags
from .decoder import run_labeling
from .model import TASK_KIND, MultiTaskModel
from .numerics import ArgumentError, no_grad


@dataclass
class TaskMetrics:
    precision: float
    recall: float
    f1: float
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, **self.counts}


def _prf(p_num: int, p_den: int, r_num: int, r_den: int):
    p = round(100.0 * p_num / p_den, 2) if p_den else 0.0
    r = round(100.0 * r_num / r_den, 2) if r_den else 0.0
    # F1 from the reported (rounded) P and R so the report is self-consistent
    f1 = round(2 * p * r / (p + r), 2) if p + r > 0 else 0.0
    return p, r, f1


def classification_metrics(predictions, golds, positive: str = "ADR") -> TaskMetrics:
    if len(predictions) != len(golds):
        raise ArgumentError(f"{len(predictions)} predictions for {len(golds)} gold labels")
    tp = sum(p == positive and g == positive for p, g in zip(predictions, golds))
    fp = sum(p == positive and g != positive for p, g in zip(predictions, golds))
    fn = sum(p != positive and g == positive for p, g in zip(predictions, golds))
    p, r, f1 = _prf(tp, tp + fp, tp, tp + fn)
    return TaskMetrics(p, r, f1, {"tp": tp, "fp": fp, "fn": fn})


@dataclass
class SpanMatchResult:
    gold_spans: list
    predicted_spans: list
    gold_hit: list
    predicted_hit: list


def match_spans(predicted_tags, gold_tags) -> SpanMatchResult:
    """A gold span is hit when any of its tokens is predicted positive; a
    predicted span is hit when it overlaps some gold span."""
    if len(predicted_tags) != len(gold_tags):
        raise ArgumentError(f"{len(predicted_tags)} predicted tags for {len(gold_tags)} tokens")
    gold = spans_from_tags(gold_tags)
    pred = spans_from_tags(predicted_tags)
    positive = np.array([t != "O" for t in predicted_tags], dtype=bool)
    gold_mask = np.zeros(len(gold_tags), dtype=bool)
    for s in gold:
        gold_mask[s.start:s.end] = True
    return SpanMatchResult(gold, pred,
                           [bool(positive[s.start:s.end].any()) for s in gold],
                           [bool(gold_mask[s.start:s.end].any()) for s in pred])


def span_counts(predicted_seqs, gold_seqs) -> dict:
    counts = {"gold_spans": 0, "gold_spans_hit": 0, "predicted_spans": 0, "predicted_spans_hit": 0}
    for pred, gold in _zip_equal(predicted_seqs, gold_seqs):
        m = match_spans(pred, gold)
        counts["gold_spans"] += len(m.gold_spans)
        counts["gold_spans_hit"] += sum(m.gold_hit)
        counts["predicted_spans"] += len(m.predicted_spans)
        counts["predicted_spans_hit"] += sum(m.predicted_hit)
    return counts


def _zip_equal(a, b):
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise ArgumentError(f"{len(a)} predicted sequences for {len(b)} gold sequences")
    return zip(a, b)


def approximate_match_metrics(predicted_seqs, gold_examples, kind: str = "ADR") -> TaskMetrics:
    """Micro-averaged approximate-match P/R/F1 over a corpus.

    ``gold_examples`` may be TaggingExamples or plain tag lists.
    """
    alphabet = TAG_ALPHABETS[kind]
    gold_seqs = [getattr(g, "tags", g) for g in gold_examples]
    predicted_seqs = [list(p) for p in predicted_seqs]
    for seq in predicted_seqs + gold_seqs:
        bad = [t for t in seq if t not in alphabet]
        if bad:
            raise ArgumentError(f"tag {bad[0]!r} not in {alphabet}")
    c = span_counts(predicted_seqs, gold_seqs)
    p, r, f1 = _prf(c["predicted_spans_hit"], c["predicted_spans"],
                    c["gold_spans_hit"], c["gold_spans"])
    return TaskMetrics(p, r, f1, c)


def brute_force_span_oracle(predicted_tags, gold_tags) -> dict:
    """Span counts by exhaustive enumeration; an independent check on
    :func:`span_counts`, not used by the model code."""
    n = len(gold_tags)

    def maximal_runs(tags):
        runs = []
        for i in range(n):
            for j in range(i + 1, n + 1):
                inside = all(tags[k] != "O" for k in range(i, j))
                left_closed = i == 0 or tags[i - 1] == "O"
                right_closed = j == n or tags[j] == "O"
                if inside and left_closed and right_closed:
                    runs.append((i, j))
        return runs

    gold = maximal_runs(gold_tags)
    pred = maximal_runs(predicted_tags)
    gold_hit = 0
    for (gs, ge) in gold:
        hit = False
        for k in range(gs, ge):
            if predicted_tags[k] != "O":
                hit = True
        gold_hit += hit
    pred_hit = 0
    for (ps, pe) in pred:
        hit = False
        for (gs, ge) in gold:
            for k in range(ps, pe):
                if gs <= k < ge:
                    hit = True
        pred_hit += hit
    return {"gold_spans": len(gold), "gold_spans_hit": gold_hit,
            "predicted_spans": len(pred), "predicted_spans_hit": pred_hit}


# ---------------------------------------------------------------------------
# model-facing helpers


def predict_tags(model: MultiTaskModel, task: str, tokens) -> list:
    with no_grad():
        H = model.encode(tokens)
        _, _, preds = run_labeling(model.decoders[task], H)
    return [model.decoders[task].tags[i] for i in preds]


def predict_class(model: MultiTaskModel, tokens):
    """Return ``(label, p_adr)``."""
    with no_grad():
        dist, _ = model.class_distribution(tokens)
    probs = dist.value
    return CLASS_LABELS[int(np.argmax(probs))], float(probs[CLASS_LABELS.index("ADR")])


def evaluate_model(model: MultiTaskModel, datasets: dict, tasks=None) -> dict:
    """TaskMetrics per task over the given datasets."""
    report = {}
    for task in tasks or datasets:
        exs = datasets.get(task) or []
        if task == "classification":
            preds = [predict_class(model, ex.tokens)[0] for ex in exs]
            report[task] = classification_metrics(preds, [ex.label for ex in exs])
        else:
            preds = [predict_tags(model, task, ex.tokens) for ex in exs]
            report[task] = approximate_match_metrics(preds, exs, TASK_KIND[task])
    return report


def report_document(report: dict) -> str:
    """Render a metrics report as an indented JSON document."""
    return json.dumps({task: m.to_dict() for task, m in report.items()}, indent=2) + "\n"


# ---------------------------------------------------------------------------
# attention heatmaps


def _safe_name(ex_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", ex_id) or "example"


def attention_rows(model: MultiTaskModel, task: str, tokens):
    """Decode one example; return ``(rows, predicted)`` where each row is
    ``(step, target, weights)``."""
    with no_grad():
        H = model.encode(tokens)
        if task == "classification":
            dist, steps = model.class_distribution(tokens, H=H)
            label = CLASS_LABELS[int(np.argmax(dist.value))]
            return [(0, "<post>", steps[0].weights.value)], [label]
        decoder = model.decoders[task]
        _, steps, preds = run_labeling(decoder, H)
    return ([(t, tokens[t], s.weights.value) for t, s in enumerate(steps)],
            [decoder.tags[i] for i in preds])


def fixed_point_row(weights, decimals: int = 6) -> list:
    """Round a distribution to ``decimals`` places so the printed values still
    sum to exactly one (largest-remainder rounding; each value moves < 1 ulp
    of the last place)."""
    unit = 10 ** decimals
    scaled = np.asarray(weights, dtype=np.float64) * unit
    units = np.floor(scaled).astype(np.int64)
    short = unit - int(units.sum())
    if 0 < short <= len(units):
        # stable order keeps ties deterministic
        units[np.argsort(-(scaled - units), kind="stable")[:short]] += 1
    return [f"{u // unit}.{u % unit:0{decimals}d}" for u in units]


def write_heatmap(path, tokens, rows, predicted) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["step", "target"] + list(tokens) + ["predicted"]) + "\n")
        for (step, target, weights), pred in zip(rows, predicted):
            vals = fixed_point_row(weights)
            fh.write("\t".join([str(step), target] + vals + [pred]) + "\n")


def export_attention(model: MultiTaskModel, task: str, examples, out_dir) -> list:
    """One TSV heatmap per example; file names derive from example ids."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    used, paths = set(), []
    for ex in examples:
        base = _safe_name(ex.id)
        name, k = base, 1
        while name in used:
            k += 1
            name = f"{base}-{k}"
        used.add(name)
        rows, predicted = attention_rows(model, task, ex.tokens)
        path = out_dir / f"{name}.{task}.tsv"
        write_heatmap(path, ex.tokens, rows, predicted)
        paths.append(path)
    return paths
