"""Structured prompts: building, deterministic rendering, and answer parsing.

Answers use a fixed ``key=value`` line, e.g.
``polarity=negative; rel_type=affiliative; hierarchy=senior``, so the prompt
language can change without touching the label schema.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from credi.corpus.types import (
    DialogueUnit,
    Dimension,
    LabelMap,
    RelationInstance,
    RelationLabel,
)
from credi.dialogue import Locale, dialogue_text
from credi.errors import ParseError, UnitMismatch

REQUIRED_PLACEHOLDERS = ("{TARGET_PAIR}", "{CANDIDATE_LABELS}", "{DIALOGUE}")
TEMPLATE_SEPARATOR = "\n---\n"
MAX_EXEMPLARS = 16
JOINT = "joint"
PER_DIMENSION = "per_dimension"
VARIANTS = ("expanded", "basic")


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text plus the block repeated for each exemplar and the query.

    In a template file the two parts are separated by a line holding ``---``.
    """

    instruction: str
    block: str

    def __post_init__(self):
        combined = self.instruction + self.block
        missing = [p for p in REQUIRED_PLACEHOLDERS if p not in combined]
        if missing:
            raise ValueError(f"template lacks placeholders {missing}")
        if "{DIALOGUE}" not in self.block or "{TARGET_PAIR}" not in self.block:
            raise ValueError("the block part must carry {DIALOGUE} and {TARGET_PAIR}")

    @classmethod
    def parse(cls, text: str) -> "PromptTemplate":
        text = text.replace("\r\n", "\n")
        if TEMPLATE_SEPARATOR not in text:
            raise ValueError("template needs a '---' line between instruction and block")
        instruction, block = text.split(TEMPLATE_SEPARATOR, 1)
        return cls(instruction.strip("\n"), block.strip("\n"))

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls, locale: str, mode: str) -> "PromptTemplate":
        name = f"{Locale(locale).value}_{mode}.txt"
        return cls.parse(resources.files("credi").joinpath("templates", name).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class PromptConfig:
    mode: str = JOINT
    dimension: Dimension | None = None  # required when mode is per_dimension
    dialogue_variant: str = "expanded"
    exemplar_count: int = 3
    locale: str = "zh"
    templates: Mapping[str, PromptTemplate] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (JOINT, PER_DIMENSION):
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if self.mode == PER_DIMENSION:
            if self.dimension is None:
                raise ValueError("per_dimension mode needs a dimension")
            object.__setattr__(self, "dimension", Dimension(self.dimension))
        elif self.dimension is not None:
            raise ValueError("joint mode takes no dimension")
        if self.dialogue_variant not in VARIANTS:
            raise ValueError(f"unknown dialogue variant {self.dialogue_variant!r}")
        if not 0 <= self.exemplar_count <= MAX_EXEMPLARS:
            raise ValueError(f"exemplar_count must be within 0..{MAX_EXEMPLARS}")
        Locale(self.locale)

    @property
    def dimensions(self) -> tuple[Dimension, ...]:
        return tuple(Dimension) if self.mode == JOINT else (self.dimension,)

    def template(self) -> PromptTemplate:
        return self.templates.get(self.mode) or PromptTemplate.default(self.locale, self.mode)


@dataclass(frozen=True)
class Exemplar:
    instance_id: str
    dialogue: str
    target_pair: str
    gold: LabelMap

    @property
    def answer(self) -> str:
        return render_answer(self.gold)


@dataclass(frozen=True)
class PromptSpec:
    instruction: str
    block: str
    exemplars: tuple[tuple[str, str, str], ...]  # (dialogue, target pair, answer line)
    query: tuple[str, str]
    candidate_labels: Mapping[Dimension, tuple[RelationLabel, ...]]


def render_answer(labels: LabelMap, dimensions: Iterable[Dimension] | None = None) -> str:
    dims = tuple(Dimension) if dimensions is None else tuple(dimensions)
    return "; ".join(f"{d.value}={labels[d].value}" for d in dims)


def _candidate_text(dims: Sequence[Dimension]) -> str:
    return "\n".join(f"{d.value}: " + " | ".join(lab.value for lab in d.labels) for d in dims)


def _answer_format(dims: Sequence[Dimension]) -> str:
    return "; ".join(f"{d.value}=<{d.value}>" for d in dims)


def build_prompt(instance: RelationInstance, unit: DialogueUnit, cfg: PromptConfig,
                 exemplars: Sequence[Exemplar]) -> PromptSpec:
    """Assemble the structured prompt for one relation instance.

    ``exemplars`` are already retrieved; at most ``cfg.exemplar_count`` of them
    are used, and their answers only cover the dimensions in scope.
    """
    if instance.unit_id != unit.id:
        raise UnitMismatch(f"instance {instance.id!r} belongs to {instance.unit_id!r}, not {unit.id!r}")
    dims = cfg.dimensions
    template = cfg.template()
    instruction = (template.instruction
                   .replace("{CANDIDATE_LABELS}", _candidate_text(dims))
                   .replace("{ANSWER_FORMAT}", _answer_format(dims)))
    shots = tuple(
        (ex.dialogue, ex.target_pair, render_answer(ex.gold, dims))
        for ex in list(exemplars)[:cfg.exemplar_count]
    )
    query = (dialogue_text(unit, cfg.dialogue_variant, cfg.locale), instance.target_pair)
    return PromptSpec(
        instruction=instruction,
        block=template.block,
        exemplars=shots,
        query=query,
        candidate_labels={d: d.labels for d in dims},
    )


def _fill_block(block: str, dialogue: str, target: str) -> str:
    # target first: dialogue text may itself contain brace sequences
    return block.replace("{TARGET_PAIR}", target).replace("{DIALOGUE}", dialogue)


def render_sections(spec: PromptSpec) -> tuple[str, str]:
    """The instruction and the remaining body (exemplar blocks then query)."""
    blocks = [f"{_fill_block(spec.block, d, t)}\nANSWER: {a}" for d, t, a in spec.exemplars]
    blocks.append(f"{_fill_block(spec.block, *spec.query)}\nANSWER:")
    return spec.instruction, "\n\n".join(blocks)


def render_prompt(spec: PromptSpec) -> str:
    instruction, body = render_sections(spec)
    return f"{instruction}\n\n{body}"


_KEY_ALIASES = {
    "polarity": Dimension.POLARITY,
    "rel_type": Dimension.REL_TYPE,
    "reltype": Dimension.REL_TYPE,
    "rel-type": Dimension.REL_TYPE,
    "rel type": Dimension.REL_TYPE,
    "hierarchy": Dimension.HIERARCHY,
}
_PAIR_RE = re.compile(r"(?<![A-Za-z_])(polarity|rel[_\- ]?type|hierarchy)\s*=\s*([A-Za-z_]+)", re.IGNORECASE)


def scope_dimensions(scope) -> tuple[Dimension, ...]:
    """Normalize a parse scope: ``None``/``"joint"``, a Dimension, or a PromptConfig."""
    if scope is None or scope == JOINT:
        return tuple(Dimension)
    if isinstance(scope, PromptConfig):
        return scope.dimensions
    if isinstance(scope, (Dimension, str)):
        return (Dimension(scope),)
    return tuple(Dimension(d) for d in scope)


def parse_response(text: str, scope=None) -> dict[Dimension, RelationLabel]:
    """Extract ``key=value`` labels from free model output.

    Keys outside ``scope`` are ignored. Repeating a key with the same value is
    tolerated; different values raise ``ParseError("ConflictingValues")``.
    """
    dims = scope_dimensions(scope)
    found: dict[Dimension, RelationLabel] = {}
    for m in _PAIR_RE.finditer(text or ""):
        dim = _KEY_ALIASES[m.group(1).lower()]
        if dim not in dims:
            continue
        try:
            label = RelationLabel.parse(dim, m.group(2))
        except ValueError:
            raise ParseError("UnknownLabel", f"{dim.value}={m.group(2)}") from None
        if dim in found and found[dim] is not label:
            raise ParseError("ConflictingValues", f"{dim.value}: {found[dim].value} vs {label.value}")
        found[dim] = label
    missing = [d.value for d in dims if d not in found]
    if missing:
        raise ParseError("MissingDimension", ", ".join(missing))
    return {d: found[d] for d in dims}
