"""JSON Lines corpus reader/writer.

One dialogue unit per line, relation instances embedded::

    {"id": "u1", "novel_id": "n1", "context": "...",
     "quotes": [{"speaker": "A", "addressee": "B", "utterance": "...", "span": [s, e]}],
     "instances": [{"id": "i1", "subject": "A", "object": "B",
                    "gold": {"polarity": "negative", "rel_type": "affiliative",
                             "hierarchy": "senior"}}]}

``gold`` and ``predicted`` are optional per instance; when present they must
carry all three dimensions. Spans are character offsets into ``context``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from credi.corpus.types import (
    Dataset,
    DialogueUnit,
    Dimension,
    LabelMap,
    Quote,
    RelationInstance,
    RelationLabel,
)
from credi.errors import DanglingReference, SchemaError

_UNIT_KEYS = {"id", "novel_id", "context", "quotes", "instances"}
_QUOTE_KEYS = {"speaker", "addressee", "utterance", "span"}
_INSTANCE_KEYS = {"id", "unit_id", "subject", "object", "gold", "predicted"}


def _require(obj: dict, key: str, kind: type, line: int, where: str):
    if key not in obj:
        raise SchemaError(line, f"{where}{key}", "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(line, f"{where}{key}", f"expected {kind.__name__}")
    return value


def _check_keys(obj: dict, allowed: set, line: int, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(line, f"{where}{sorted(unknown)[0]}", "unknown field")


def _parse_labels(raw: Any, line: int, where: str) -> dict[Dimension, RelationLabel]:
    if not isinstance(raw, dict):
        raise SchemaError(line, where, "expected object")
    labels = {}
    for dim in Dimension:
        if dim.value not in raw:
            raise SchemaError(line, f"{where}.{dim.value}", "missing dimension")
        token = raw[dim.value]
        try:
            labels[dim] = RelationLabel.parse(dim, str(token))
        except ValueError as exc:
            raise SchemaError(line, f"{where}.{dim.value}", str(exc)) from None
    extra = set(raw) - {d.value for d in Dimension}
    if extra:
        raise SchemaError(line, f"{where}.{sorted(extra)[0]}", "unknown dimension")
    return labels


def parse_unit_record(record: Any, line: int = 0) -> tuple[DialogueUnit, list[RelationInstance]]:
    """Validate one decoded JSON record, raising SchemaError on the first fault."""
    if not isinstance(record, dict):
        raise SchemaError(line, "<record>", "expected object")
    _check_keys(record, _UNIT_KEYS, line, "")
    uid = _require(record, "id", str, line, "")
    novel_id = _require(record, "novel_id", str, line, "")
    context = _require(record, "context", str, line, "")
    raw_quotes = _require(record, "quotes", list, line, "")
    quotes = []
    for qi, rq in enumerate(raw_quotes):
        where = f"quotes[{qi}]."
        if not isinstance(rq, dict):
            raise SchemaError(line, where.rstrip("."), "expected object")
        _check_keys(rq, _QUOTE_KEYS, line, where)
        speaker = _require(rq, "speaker", str, line, where)
        utterance = _require(rq, "utterance", str, line, where)
        span = _require(rq, "span", list, line, where)
        addressee = rq.get("addressee")
        if addressee is not None and not isinstance(addressee, str):
            raise SchemaError(line, f"{where}addressee", "expected string or null")
        if len(span) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in span):
            raise SchemaError(line, f"{where}span", "expected [start, end] integers")
        if not 0 <= span[0] < span[1] <= len(context):
            raise SchemaError(line, f"{where}span", f"{span} outside context of length {len(context)}")
        try:
            quotes.append(Quote(speaker, utterance, (span[0], span[1]), addressee or None))
        except ValueError as exc:
            raise SchemaError(line, where.rstrip("."), str(exc)) from None
    try:
        unit = DialogueUnit(uid, novel_id, context, tuple(quotes))
    except ValueError as exc:
        raise SchemaError(line, "quotes", str(exc)) from None

    instances = []
    for ii, ri in enumerate(record.get("instances", [])):
        where = f"instances[{ii}]."
        if not isinstance(ri, dict):
            raise SchemaError(line, where.rstrip("."), "expected object")
        _check_keys(ri, _INSTANCE_KEYS, line, where)
        iid = _require(ri, "id", str, line, where)
        unit_ref = ri.get("unit_id", uid)
        if unit_ref != uid:
            raise DanglingReference(f"line {line}: instance {iid!r} embedded in unit {uid!r} "
                                    f"but references {unit_ref!r}")
        subject = _require(ri, "subject", str, line, where)
        obj = _require(ri, "object", str, line, where)
        gold = _parse_labels(ri["gold"], line, f"{where}gold") if ri.get("gold") is not None else None
        pred = (_parse_labels(ri["predicted"], line, f"{where}predicted")
                if ri.get("predicted") is not None else None)
        try:
            instances.append(RelationInstance(iid, uid, subject, obj, gold, pred))
        except ValueError as exc:
            raise SchemaError(line, where.rstrip("."), str(exc)) from None
    return unit, instances


def load_dataset(path: str | Path) -> Dataset:
    """Read a corpus file; malformed records raise instead of being skipped."""
    path = Path(path)
    units, instances = [], []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, "<json>", exc.msg) from None
            unit, unit_instances = parse_unit_record(record, lineno)
            units.append(unit)
            instances.extend(unit_instances)
    try:
        return Dataset.build(units, instances)
    except ValueError as exc:
        raise SchemaError(0, "<dataset>", str(exc)) from None


def labels_to_json(labels: LabelMap | None) -> dict[str, str] | None:
    if labels is None:
        return None
    return {dim.value: labels[dim].value for dim in Dimension}


def unit_record(unit: DialogueUnit, instances: Iterable[RelationInstance]) -> dict:
    record: dict[str, Any] = {
        "id": unit.id,
        "novel_id": unit.novel_id,
        "context": unit.context,
        "quotes": [
            {"speaker": q.speaker, "addressee": q.addressee, "utterance": q.utterance,
             "span": [q.span[0], q.span[1]]}
            for q in unit.quotes
        ],
        "instances": [],
    }
    for inst in instances:
        entry: dict[str, Any] = {"id": inst.id, "subject": inst.subject, "object": inst.object}
        if inst.gold is not None:
            entry["gold"] = labels_to_json(inst.gold)
        if inst.predicted is not None:
            entry["predicted"] = labels_to_json(inst.predicted)
        record["instances"].append(entry)
    return record


def save_dataset(ds: Dataset, path: str | Path) -> int:
    """Write ``ds`` in corpus format; returns the number of unit lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grouped: dict[str, list[RelationInstance]] = {uid: [] for uid in ds.units}
    for inst in ds.instances:
        grouped[inst.unit_id].append(inst)
    with path.open("w", encoding="utf-8") as fh:
        for uid, unit in ds.units.items():
            fh.write(json.dumps(unit_record(unit, grouped[uid]), ensure_ascii=False) + "\n")
    return len(ds.units)
