"""Per-dimension weighted-F1 scoring, reports, and the ablation grid."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Sequence

from credi.corpus.types import Dimension, RelationInstance, RelationLabel
from credi.errors import LengthMismatch, MissingGold, MissingPrediction, UnknownLabel

logger = logging.getLogger(__name__)

# reserved prediction for unparseable output; never a gold class
UNPARSED = "<unparsed>"
REPORT_SCHEMA = "credi-eval-report/1"
ABLATION_SCHEMA = "credi-ablation/1"


def _check_inputs(gold: Sequence, pred: Sequence, classes: Sequence) -> None:
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    if not gold:
        raise LengthMismatch("empty label sequences")
    allowed = set(classes)
    for g in gold:
        if g not in allowed:
            raise UnknownLabel(f"gold label {g!r} not among classes")
    for p in pred:
        if p not in allowed and p != UNPARSED:
            raise UnknownLabel(f"predicted label {p!r} not among classes")


def per_class_scores(gold: Sequence[Hashable], pred: Sequence[Hashable],
                     classes: Sequence[Hashable]) -> dict:
    """Precision, recall, F1 and support for each class; 0 wherever a ratio is 0/0."""
    _check_inputs(gold, pred, classes)
    tp = {c: 0 for c in classes}
    pred_n = {c: 0 for c in classes}
    gold_n = {c: 0 for c in classes}
    for g, p in zip(gold, pred):
        gold_n[g] += 1
        if p in pred_n:
            pred_n[p] += 1
        if g == p:
            tp[g] += 1
    out = {}
    for c in classes:
        precision = tp[c] / pred_n[c] if pred_n[c] else 0.0
        recall = tp[c] / gold_n[c] if gold_n[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[c] = {"precision": precision, "recall": recall, "f1": f1, "support": gold_n[c]}
    return out


def weighted_f1(gold: Sequence[Hashable], pred: Sequence[Hashable], classes: Sequence[Hashable]) -> float:
    """Support-weighted mean of per-class F1.

    ``pred`` may contain :data:`UNPARSED`, which counts as wrong everywhere.
    """
    scores = per_class_scores(gold, pred, classes)
    # divide once at the end so a perfect run is exactly 1.0
    return sum(s["support"] * s["f1"] for s in scores.values()) / len(gold)


@dataclass
class DimensionReport:
    weighted_f1: float
    per_class: dict[str, dict]
    confusion: dict[str, dict[str, int]]  # gold -> predicted -> count
    parse_failure_count: int

    def to_dict(self) -> dict:
        return {
            "weighted_f1": self.weighted_f1,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "parse_failure_count": self.parse_failure_count,
        }


@dataclass
class EvalReport:
    per_dimension: dict[Dimension, DimensionReport]
    instance_count: int

    def f1(self, dim: Dimension) -> float:
        return self.per_dimension[dim].weighted_f1

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "instance_count": self.instance_count,
            "per_dimension": {d.value: self.per_dimension[d].to_dict()
                              for d in Dimension if d in self.per_dimension},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        dims = {Dimension(k): DimensionReport(**v) for k, v in data["per_dimension"].items()}
        return cls(dims, data["instance_count"])

    def format_table(self) -> str:
        return format_score_table([("CREDI", {d: r.weighted_f1 for d, r in self.per_dimension.items()})])


def evaluate(instances: Sequence[RelationInstance], records, dimensions: Sequence[Dimension] | None = None) -> EvalReport:
    """Score prediction records against gold labels, one report per dimension.

    A record that failed to parse (or never got a response) predicts
    :data:`UNPARSED` for each dimension it covers.
    """
    dims = tuple(dimensions) if dimensions else tuple(Dimension)
    coverage: dict[tuple[str, Dimension], object] = {}
    failures: set[tuple[str, Dimension]] = set()
    for rec in records:
        for d in rec.dimensions:
            if d not in dims:
                continue
            if rec.parsed is not None and d in rec.parsed:
                coverage[(rec.instance_id, d)] = rec.parsed[d]
            else:
                coverage[(rec.instance_id, d)] = UNPARSED
                failures.add((rec.instance_id, d))

    per_dim = {}
    for d in dims:
        gold, pred = [], []
        for inst in instances:
            if inst.gold is None:
                raise MissingGold(inst.id)
            if (inst.id, d) not in coverage:
                raise MissingPrediction(inst.id)
            gold.append(inst.gold[d].value)
            p = coverage[(inst.id, d)]
            pred.append(p.value if isinstance(p, RelationLabel) else p)
        classes = [lab.value for lab in d.labels]
        if not gold:
            per_dim[d] = DimensionReport(0.0, {}, {}, 0)
            continue
        confusion = {c: {col: 0 for col in classes + [UNPARSED]} for c in classes}
        for g, p in zip(gold, pred):
            confusion[g][p] += 1
        per_dim[d] = DimensionReport(
            weighted_f1=weighted_f1(gold, pred, classes),
            per_class=per_class_scores(gold, pred, classes),
            confusion=confusion,
            parse_failure_count=sum(1 for inst in instances if (inst.id, d) in failures),
        )
    return EvalReport(per_dim, len(instances))


def format_score_table(rows: Sequence[tuple[str, dict]]) -> str:
    """Fixed-width table: one row per configuration, one column per dimension."""
    width = max([len("Model")] + [len(name) for name, _ in rows]) + 2
    head = "Model".ljust(width) + "".join(d.title.rjust(26) for d in Dimension)
    lines = [head, "-" * len(head)]
    for name, scores in rows:
        cells = []
        for d in Dimension:
            v = scores.get(d)
            cells.append(("-" if v is None else f"{v:.2f}").rjust(26))
        lines.append(name.ljust(width) + "".join(cells))
    return "\n".join(lines)


@dataclass(frozen=True)
class AblationConfig:
    modes: tuple[str, ...] = ("joint", "per_dimension")
    variants: tuple[str, ...] = ("expanded", "basic")
    shots: tuple[int, ...] = (3,)

    def __post_init__(self):
        if not (self.modes and self.variants and self.shots):
            raise ValueError("ablation grid must be non-empty on every axis")
        for m in self.modes:
            if m not in ("joint", "per_dimension"):
                raise ValueError(f"unknown ablation mode {m!r}")
        for v in self.variants:
            if v not in ("expanded", "basic"):
                raise ValueError(f"unknown dialogue variant {v!r}")

    def cells(self) -> list[tuple[str, str, int]]:
        return list(itertools.product(self.modes, self.variants, self.shots))


def cell_name(mode: str, variant: str, k: int) -> str:
    return f"{mode}/{variant}/k={k}"


@dataclass
class AblationTable:
    cells: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema": ABLATION_SCHEMA, "cells": self.cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "AblationTable":
        if data.get("schema") != ABLATION_SCHEMA:
            raise ValueError(f"unsupported ablation schema {data.get('schema')!r}")
        return cls(list(data["cells"]))

    @classmethod
    def load(cls, path: str | Path) -> "AblationTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def reports(self) -> dict[str, EvalReport | None]:
        return {c["name"]: EvalReport.from_dict(c["report"]) if c["report"] else None for c in self.cells}

    def format_table(self) -> str:
        rows = []
        for c in self.cells:
            if c["status"] != "ok":
                rows.append((f"{c['name']} (failed)", {}))
                continue
            per = c["report"]["per_dimension"]
            rows.append((c["name"], {Dimension(k): v["weighted_f1"] for k, v in per.items()}))
        return format_score_table(rows)


def run_ablation(cfg: AblationConfig, run_cell: Callable[[str, str, int], EvalReport]) -> AblationTable:
    """Evaluate every grid cell; a failing cell is marked, not fatal.

    ``run_cell(mode, variant, k)`` runs prediction for one configuration and
    returns its report.
    """
    table = AblationTable()
    for mode, variant, k in cfg.cells():
        name = cell_name(mode, variant, k)
        entry = {"name": name, "mode": mode, "dialogue_variant": variant, "shots": k}
        try:
            report = run_cell(mode, variant, k)
            entry.update(status="ok", error=None, report=report.to_dict())
        except Exception as exc:
            logger.error("ablation cell %s failed: %s", name, exc)
            entry.update(status="failed", error=f"{exc.__class__.__name__}: {exc}", report=None)
        table.cells.append(entry)
    return table
