"""Dataset-level operations: statistics, splitting, anonymization, balancing, export."""
from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from credi.corpus.types import (
    Dataset,
    DialogueUnit,
    Dimension,
    Quote,
    RelationInstance,
    RelationLabel,
    SplitSpec,
)
from credi.errors import AllClassesFiltered, CodeCollision, EmptyDataset, MissingGold

if TYPE_CHECKING:
    from credi.prompting import PromptConfig


@dataclass(frozen=True)
class StatsReport:
    unit_count: int
    instance_count: int
    character_count: int
    gold_label_count: int
    counts: dict[Dimension, dict[RelationLabel, int]]
    # None when no instance carries gold labels
    percentages: dict[Dimension, dict[RelationLabel, float | None]]

    def to_dict(self) -> dict:
        return {
            "unit_count": self.unit_count,
            "instance_count": self.instance_count,
            "character_count": self.character_count,
            "gold_label_count": self.gold_label_count,
            "counts": {d.value: {lab.value: n for lab, n in c.items()} for d, c in self.counts.items()},
            "percentages": {d.value: {lab.value: p for lab, p in c.items()}
                            for d, c in self.percentages.items()},
        }

    def format_table(self) -> str:
        lines = [
            f"units: {self.unit_count}  instances: {self.instance_count}  "
            f"characters: {self.character_count}  gold labels: {self.gold_label_count}",
        ]
        for dim in Dimension:
            cells = []
            for lab in dim.labels:
                pct = self.percentages[dim][lab]
                shown = "n/a" if pct is None else f"{pct:.2f}%"
                cells.append(f"{lab.value}={self.counts[dim][lab]} ({shown})")
            lines.append(f"{dim.title:<24} " + "  ".join(cells))
        return "\n".join(lines)


def dataset_stats(ds: Dataset) -> StatsReport:
    counts = {dim: {lab: 0 for lab in dim.labels} for dim in Dimension}
    labelled = 0
    for inst in ds.instances:
        if inst.gold is None:
            continue
        labelled += 1
        for dim, lab in inst.gold.items():
            counts[dim][lab] += 1
    percentages = {
        dim: {lab: (100.0 * n / labelled if labelled else None) for lab, n in per.items()}
        for dim, per in counts.items()
    }
    return StatsReport(
        unit_count=len(ds.units),
        instance_count=len(ds.instances),
        character_count=len(ds.character_roster),
        gold_label_count=ds.gold_label_count(),
        counts=counts,
        percentages=percentages,
    )


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_train = math.floor(n * spec.train_frac)
    n_val = math.floor(n * spec.val_frac)
    return n_train, n_val, n - n_train - n_val


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded instance-level split; each part keeps the original instance order."""
    n = len(ds.instances)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    order = list(range(n))
    random.Random(spec.seed).shuffle(order)
    n_train, n_val, _ = split_sizes(n, spec)
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(ds.subset(ds.instances[i] for i in sorted(idx)) for idx in parts)


def _name_pattern(names, whole_token: bool = True) -> re.Pattern | None:
    # longest first so a name that contains another wins the match;
    # word-boundary guards only apply to names with Latin/digit edges
    alternatives = []
    for name in sorted(names, key=lambda s: (-len(s), s)):
        pat = re.escape(name)
        if not whole_token:
            alternatives.append(pat)
            continue
        if name[0].isascii() and (name[0].isalnum() or name[0] == "_"):
            pat = r"(?<![A-Za-z0-9_])" + pat
        if name[-1].isascii() and (name[-1].isalnum() or name[-1] == "_"):
            pat = pat + r"(?![A-Za-z0-9_])"
        alternatives.append(pat)
    if not alternatives:
        return None
    return re.compile("|".join(alternatives))


def _rewrite_unit(unit: DialogueUnit, mapping: Mapping[str, str], pattern: re.Pattern | None) -> DialogueUnit:
    """Substitute names in a unit, recomputing quote spans so they stay exact."""
    if pattern is None:
        return unit

    def sub(text: str) -> str:
        return pattern.sub(lambda m: mapping[m.group(0)], text)

    cuts = sorted({0, len(unit.context)} | {p for q in unit.quotes for p in q.span})
    new_offsets = {0: 0}
    pieces = []
    pos = 0
    for a, b in zip(cuts, cuts[1:]):
        piece = sub(unit.context[a:b])
        pieces.append(piece)
        pos += len(piece)
        new_offsets[b] = pos
    context = "".join(pieces)
    quotes = []
    for q in unit.quotes:
        s, e = new_offsets[q.span[0]], new_offsets[q.span[1]]
        quotes.append(Quote(
            speaker=mapping.get(q.speaker, q.speaker),
            utterance=context[s:e],
            span=(s, e),
            addressee=mapping.get(q.addressee, q.addressee) if q.addressee else None,
        ))
    return DialogueUnit(unit.id, unit.novel_id, context, tuple(quotes))


def rename_characters(ds: Dataset, mapping: Mapping[str, str], whole_token: bool = True) -> Dataset:
    """Apply a name substitution to every name-bearing field and to free text.

    Pass ``whole_token=False`` when undoing an anonymization, since codes may
    have been glued to neighbouring letters or digits.
    """
    pattern = _name_pattern(mapping, whole_token)
    units = {uid: _rewrite_unit(u, mapping, pattern) for uid, u in ds.units.items()}
    instances = tuple(
        replace(inst, subject=mapping.get(inst.subject, inst.subject),
                object=mapping.get(inst.object, inst.object))
        for inst in ds.instances
    )
    roster = frozenset(mapping.get(n, n) for n in ds.character_roster)
    out = Dataset(units, instances, roster)
    out.validate()
    return out


def anonymize_names(ds: Dataset, seed: int) -> tuple[Dataset, dict[str, str]]:
    """Replace every roster name with a unique code such as ``C007``.

    Codes are assigned to the sorted roster in a seed-shuffled order. The
    returned map is a bijection; inverting it and passing it to
    :func:`rename_characters` with ``whole_token=False`` restores the
    original text.
    """
    names = sorted(ds.character_roster)
    if not names:
        return ds, {}
    width = max(3, len(str(len(names))))
    codes = [f"C{i:0{width}d}" for i in range(1, len(names) + 1)]
    random.Random(seed).shuffle(codes)
    name_map = dict(zip(names, codes))
    if len(set(name_map.values())) != len(name_map):
        raise CodeCollision("duplicate anonymization code")
    return rename_characters(ds, name_map), name_map


def balance_labels(ds: Dataset, dimension: Dimension, min_count: int = 10,
                   max_count: int | None = None, seed: int = 0) -> Dataset:
    """Drop rare classes and down-sample frequent ones along one dimension.

    Classes with fewer than ``min_count`` instances are removed; classes with
    more than ``max_count`` are sampled to exactly ``max_count``. ``None``
    means no upper limit. Surviving instances keep their relative order.
    """
    if min_count < 0:
        raise ValueError("min_count must be >= 0")
    if max_count is not None and max_count < min_count:
        raise ValueError("max_count must be >= min_count")
    by_label: dict[RelationLabel, list[int]] = {lab: [] for lab in dimension.labels}
    for i, inst in enumerate(ds.instances):
        if inst.gold is None:
            raise MissingGold(inst.id)
        by_label[inst.gold[dimension]].append(i)

    rng = random.Random(seed)
    keep: list[int] = []
    for lab in dimension.labels:
        members = by_label[lab]
        if len(members) < min_count:
            continue
        if max_count is not None and len(members) > max_count:
            members = rng.sample(members, max_count)
        keep.extend(members)
    if not keep:
        raise AllClassesFiltered(f"no {dimension.value} class survived filtering")
    return ds.subset(ds.instances[i] for i in sorted(keep))


def export_finetune_file(ds: Dataset, prompt_cfg: "PromptConfig", path: str | Path) -> int:
    """Write instruction-tuning records ``{instruction, input, output}``, one per instance."""
    from credi.prompting import build_prompt, render_answer, render_sections

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    zero_shot = replace(prompt_cfg, exemplar_count=0)
    records = []
    for inst in ds.instances:
        if inst.gold is None:
            raise MissingGold(inst.id)
        spec = build_prompt(inst, ds.unit_of(inst), zero_shot, [])
        instruction, body = render_sections(spec)
        records.append({
            "instruction": instruction,
            "input": body,
            "output": render_answer(inst.gold, prompt_cfg.dimensions),
        })
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return len(records)


def label_distribution(instances, dimension: Dimension) -> Counter:
    return Counter(inst.gold[dimension] for inst in instances if inst.gold is not None)
