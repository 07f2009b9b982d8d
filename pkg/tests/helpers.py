from __future__ import annotations

from credi.corpus import Dataset, DialogueUnit, Dimension, Quote, RelationInstance, RelationLabel


def labels(polarity: str, rel_type: str = "other", hierarchy: str = "peer") -> dict:
    return {
        Dimension.POLARITY: RelationLabel(polarity),
        Dimension.REL_TYPE: RelationLabel(rel_type),
        Dimension.HIERARCHY: RelationLabel(hierarchy),
    }


def make_unit(uid: str, turns: list[tuple[str, str | None, str]], novel: str = "n1",
              narration: str = "") -> DialogueUnit:
    """Unit from (speaker, addressee, utterance) turns rendered as ``A对B说：“U”`` lines."""
    context = narration
    quotes = []
    for speaker, addressee, utterance in turns:
        if context:
            context += "\n"
        lead = f"{speaker}对{addressee}说：“" if addressee else f"{speaker}说：“"
        start = len(context) + len(lead)
        context += lead + utterance + "”"
        quotes.append(Quote(speaker, utterance, (start, start + len(utterance)), addressee))
    return DialogueUnit(uid, novel, context, tuple(quotes))


def make_dataset(rows: list[tuple[str, str, dict | None]], roster=None) -> Dataset:
    """One unit per (subject, object, gold) row."""
    units, instances = [], []
    for i, (s, o, gold) in enumerate(rows):
        unit = make_unit(f"u{i:04d}", [(s, o, f"第{i}句话。")])
        units.append(unit)
        instances.append(RelationInstance(f"i{i:04d}", unit.id, s, o, gold))
    return Dataset.build(units, instances, roster)
