"""Metrics, ensemble arbitration and the multi-run evaluation report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, LengthMismatch, ShapeMismatch
from .model import LABEL_NAMES, NOT, OFF, predict_proba

APPROACHES = ("non-fused", "fused", "fused+FT", "ensemble")
RESULTS_FORMAT = "fedfuse-results/1"


# -- metrics --------------------------------------------------------------------

def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_report(gold, pred) -> dict:
    """Per-class precision/recall/F1 over {NOT, OFF} plus their unweighted mean F1.

    Any ratio with a zero denominator is defined as 0.
    """
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold labels vs {len(pred)} predictions")
    if not gold:
        raise EmptyInput("macro_f1 of an empty sample")
    per_class = {}
    for c in (NOT, OFF):
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        per_class[LABEL_NAMES[c]] = {
            "precision": precision,
            "recall": recall,
            "f1": _safe_div(2 * precision * recall, precision + recall),
        }
    macro = (per_class["NOT"]["f1"] + per_class["OFF"]["f1"]) / 2
    return {"macro_f1": macro, "per_class": per_class}


def macro_f1(gold, pred) -> float:
    return f1_report(gold, pred)["macro_f1"]


def aggregate_runs(scores) -> tuple[float, float | None]:
    """Mean and population standard deviation; std is None for a single run."""
    scores = [float(s) for s in scores]
    if not scores:
        raise EmptyInput("aggregate_runs needs at least one score")
    mean = math.fsum(scores) / len(scores)
    if len(scores) < 2:
        return mean, None
    var = math.fsum((s - mean) ** 2 for s in scores) / len(scores)
    return mean, math.sqrt(var)


def format_score(mean: float, std: float | None) -> str:
    """Render as the result tables do: three-decimal mean, two-decimal std."""
    return f"{mean:.3f}" if std is None else f"{mean:.3f}±{std:.2f}"


# -- ensemble ----------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str
    probabilities: tuple[tuple[float, float], ...]
    label: int
    winning_model: int
    winning_probability: float

    def to_json(self) -> dict:
        return {"id": self.instance_id, "probabilities": [list(p) for p in self.probabilities],
                "label": LABEL_NAMES[self.label], "winning_model": self.winning_model,
                "winning_probability": self.winning_probability}


def arbitrate(probs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Max-probability arbitration over a (models, instances, 2) array.

    Each instance takes the class holding the single highest probability
    among all (model, class) pairs. Ties go to the lowest model index and
    then to NOT. Returns (labels, winning model, winning probability).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 3 or probs.shape[2] != 2 or probs.shape[0] < 1:
        raise ShapeMismatch(f"expected (models, instances, 2) probabilities, got {probs.shape}")
    flat = probs.transpose(1, 0, 2).reshape(probs.shape[1], -1)
    winner = flat.argmax(axis=1)  # first maximum = lowest model, then NOT
    return winner % 2, winner // 2, flat[np.arange(len(flat)), winner]


def ensemble_predict(models, seq, instance_id: str = "") -> PredictionRecord:
    if not models:
        raise EmptyInput("ensemble needs at least one model")
    arch = models[0].arch
    if any(m.arch != arch for m in models):
        raise ShapeMismatch("ensemble members must share an architecture")
    probs = np.stack([predict_proba(m, [seq]) for m in models])
    labels, win_model, win_p = arbitrate(probs)
    return PredictionRecord(instance_id, tuple(tuple(float(v) for v in p[0]) for p in probs),
                            int(labels[0]), int(win_model[0]), float(win_p[0]))


# -- report ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RowKey:
    approach: str
    models: tuple[str, ...]
    finetune: str | None
    test: str

    def sort_key(self):
        return (APPROACHES.index(self.approach) if self.approach in APPROACHES else 99,
                len(self.models), self.models, self.finetune or "", self.test)


@dataclass
class RowResult:
    scores: list = field(default_factory=list)
    per_class: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return aggregate_runs(self.scores)[0]

    @property
    def std(self) -> float | None:
        return aggregate_runs(self.scores)[1]

    def per_class_mean(self) -> dict:
        out = {}
        for label in ("NOT", "OFF"):
            out[label] = {m: aggregate_runs([r[label][m] for r in self.per_class])[0]
                          for m in ("precision", "recall", "f1")}
        return out


@dataclass
class EvaluationReport:
    datasets: list = field(default_factory=list)
    runs: int = 0
    notes: list = field(default_factory=list)
    rows: dict = field(default_factory=dict)

    def add(self, key: RowKey, gold, pred) -> float:
        rep = f1_report(gold, pred)
        row = self.rows.setdefault(key, RowResult())
        row.scores.append(rep["macro_f1"])
        row.per_class.append(rep["per_class"])
        return rep["macro_f1"]

    def sorted_rows(self):
        return sorted(self.rows.items(), key=lambda kv: kv[0].sort_key())

    def get(self, approach, models, test, finetune=None) -> RowResult | None:
        return self.rows.get(RowKey(approach, tuple(models), finetune, test))

    def to_json(self) -> dict:
        rows = []
        for key, row in self.sorted_rows():
            mean, std = aggregate_runs(row.scores)
            rows.append({
                "approach": key.approach, "models": list(key.models), "finetune": key.finetune,
                "test": key.test, "run_count": len(row.scores), "scores": row.scores,
                "macro_f1_mean": mean, "macro_f1_std": std, "per_class": row.per_class_mean(),
            })
        return {"format": RESULTS_FORMAT, "datasets": list(self.datasets), "runs": self.runs,
                "std": "population", "notes": list(self.notes), "rows": rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def from_json(cls, data) -> "EvaluationReport":
        rep = cls(list(data.get("datasets", [])), int(data.get("runs", 0)), list(data.get("notes", [])))
        for r in data.get("rows", []):
            key = RowKey(r["approach"], tuple(r["models"]), r.get("finetune"), r["test"])
            pc = r.get("per_class") or {}
            rep.rows[key] = RowResult(list(r["scores"]), [pc] * len(r["scores"]))
        return rep

    @classmethod
    def read(cls, path) -> "EvaluationReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
