"""Data model for dialogue-anchored, three-dimension relation annotations."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

from credi.errors import DanglingReference


class Dimension(str, Enum):
    POLARITY = "polarity"
    REL_TYPE = "rel_type"
    HIERARCHY = "hierarchy"

    @property
    def title(self) -> str:
        return _DIMENSION_TITLES[self]

    @property
    def labels(self) -> tuple["RelationLabel", ...]:
        return LABELS_BY_DIMENSION[self]


_DIMENSION_TITLES = {
    Dimension.POLARITY: "Relationship Polarity",
    Dimension.REL_TYPE: "Relationship Type",
    Dimension.HIERARCHY: "Generational Hierarchy",
}


class RelationLabel(str, Enum):
    """The nine canonical label tokens; each belongs to exactly one dimension."""

    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"
    KINSHIP = "kinship"
    AFFILIATIVE = "affiliative"
    OTHER = "other"
    SENIOR = "senior"
    PEER = "peer"
    JUNIOR = "junior"

    @property
    def dimension(self) -> Dimension:
        return _DIMENSION_OF[self]

    @classmethod
    def parse(cls, dimension: Dimension, token: str) -> "RelationLabel":
        """Look up ``token`` within ``dimension``; raises ValueError otherwise."""
        try:
            label = cls(token.strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {token!r}") from None
        if label.dimension is not dimension:
            raise ValueError(f"label {token!r} does not belong to {dimension.value}")
        return label


LABELS_BY_DIMENSION: dict[Dimension, tuple[RelationLabel, ...]] = {
    Dimension.POLARITY: (RelationLabel.POSITIVE, RelationLabel.NEUTRAL, RelationLabel.NEGATIVE),
    Dimension.REL_TYPE: (RelationLabel.KINSHIP, RelationLabel.AFFILIATIVE, RelationLabel.OTHER),
    Dimension.HIERARCHY: (RelationLabel.SENIOR, RelationLabel.PEER, RelationLabel.JUNIOR),
}
_DIMENSION_OF = {lab: dim for dim, labs in LABELS_BY_DIMENSION.items() for lab in labs}

LabelMap = Mapping[Dimension, RelationLabel]


def check_label_map(labels: LabelMap, dimensions: Iterable[Dimension] = tuple(Dimension)) -> None:
    """Raise ValueError unless ``labels`` has exactly one fitting label per dimension."""
    wanted = set(dimensions)
    if set(labels) != wanted:
        missing = sorted(d.value for d in wanted - set(labels))
        extra = sorted(d.value for d in set(labels) - wanted)
        raise ValueError(f"label map mismatch (missing={missing}, extra={extra})")
    for dim, lab in labels.items():
        if lab.dimension is not dim:
            raise ValueError(f"{lab.value!r} is not a {dim.value} label")


@dataclass(frozen=True)
class Quote:
    speaker: str
    utterance: str
    span: tuple[int, int]
    addressee: str | None = None

    def __post_init__(self):
        if not self.speaker:
            raise ValueError("quote speaker must be non-empty")
        if not self.utterance:
            raise ValueError("quote utterance must be non-empty")
        start, end = self.span
        if not 0 <= start < end:
            raise ValueError(f"invalid span {self.span}")


@dataclass(frozen=True)
class DialogueUnit:
    id: str
    novel_id: str
    context: str
    quotes: tuple[Quote, ...]

    def __post_init__(self):
        if not self.quotes:
            raise ValueError(f"unit {self.id!r} has no quotes")
        starts = [q.span[0] for q in self.quotes]
        if starts != sorted(starts):
            raise ValueError(f"unit {self.id!r}: quotes not ordered by span start")
        for q in self.quotes:
            if q.span[1] > len(self.context):
                raise ValueError(f"unit {self.id!r}: span {q.span} outside context")
            if self.context[q.span[0]:q.span[1]] != q.utterance:
                raise ValueError(f"unit {self.id!r}: span {q.span} does not slice out the utterance")

    @property
    def speakers(self) -> list[str]:
        return [q.speaker for q in self.quotes]

    def names(self) -> set[str]:
        out = set()
        for q in self.quotes:
            out.add(q.speaker)
            if q.addressee:
                out.add(q.addressee)
        return out


@dataclass(frozen=True)
class RelationInstance:
    id: str
    unit_id: str
    subject: str
    object: str
    gold: Mapping[Dimension, RelationLabel] | None = None
    predicted: Mapping[Dimension, RelationLabel] | None = None

    def __post_init__(self):
        if not self.subject or not self.object:
            raise ValueError(f"instance {self.id!r}: empty subject or object")
        if self.subject == self.object:
            raise ValueError(f"instance {self.id!r}: subject equals object")
        for labels in (self.gold, self.predicted):
            if labels is not None:
                check_label_map(labels)

    @property
    def target_pair(self) -> str:
        return f"{self.subject} -> {self.object}"


@dataclass(frozen=True)
class Dataset:
    units: Mapping[str, DialogueUnit]
    instances: tuple[RelationInstance, ...]
    character_roster: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def build(cls, units: Iterable[DialogueUnit], instances: Iterable[RelationInstance],
              roster: Iterable[str] | None = None) -> "Dataset":
        """Assemble and validate; the roster defaults to every name mentioned."""
        unit_map: dict[str, DialogueUnit] = {}
        for u in units:
            if u.id in unit_map:
                raise ValueError(f"duplicate unit id {u.id!r}")
            unit_map[u.id] = u
        instances = tuple(instances)
        if roster is None:
            names: set[str] = set()
            for u in unit_map.values():
                names |= u.names()
            for inst in instances:
                names.update((inst.subject, inst.object))
            roster = names
        ds = cls(unit_map, instances, frozenset(roster))
        ds.validate()
        return ds

    def validate(self) -> None:
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)
            if inst.unit_id not in self.units:
                raise DanglingReference(f"instance {inst.id!r} references unknown unit {inst.unit_id!r}")
            for name in (inst.subject, inst.object):
                if name not in self.character_roster:
                    raise ValueError(f"instance {inst.id!r}: {name!r} not in roster")

    def __len__(self) -> int:
        return len(self.instances)

    def unit_of(self, inst: RelationInstance) -> DialogueUnit:
        return self.units[inst.unit_id]

    @cached_property
    def _by_id(self) -> dict[str, RelationInstance]:
        return {inst.id: inst for inst in self.instances}

    def instance(self, instance_id: str) -> RelationInstance:
        return self._by_id[instance_id]

    def gold_label_count(self) -> int:
        return sum(len(inst.gold) for inst in self.instances if inst.gold is not None)

    def subset(self, instances: Iterable[RelationInstance]) -> "Dataset":
        """Keep ``instances`` and only the units they reference (in original order)."""
        instances = tuple(instances)
        used = {inst.unit_id for inst in instances}
        units = {uid: u for uid, u in self.units.items() if uid in used}
        return Dataset(units, instances, self.character_roster)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: Fraction = Fraction(8, 10)
    val_frac: Fraction = Fraction(1, 10)
    test_frac: Fraction = Fraction(1, 10)
    seed: int = 0

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac"):
            object.__setattr__(self, name, Fraction(getattr(self, name)).limit_denominator(10**9))
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if sum(fracs) != 1:
            raise ValueError(f"split fractions sum to {sum(fracs)}, not 1")
        if not -(2**63) <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
