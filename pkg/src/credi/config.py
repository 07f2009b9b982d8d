"""Pipeline configuration: one YAML file, every key mirrored by a CLI flag.

Key ``section.field`` maps to flag ``--section-field`` (underscores become
hyphens); flags override the file. List values are written comma-separated
on the command line.
"""
from __future__ import annotations

import argparse
import dataclasses
import typing
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import yaml

from credi.corpus.types import Dimension, SplitSpec
from credi.dialogue import DEFAULT_DELIMITERS, DEFAULT_VERBS, SegmenterConfig
from credi.errors import ConfigError
from credi.evaluation import AblationConfig
from credi.inference import BackendConfig
from credi.prompting import JOINT, PromptConfig, PromptTemplate
from credi.retrieval import EmbedderSpec


@dataclass
class PathsSection:
    corpus: str = "data/corpus.jsonl"
    novels: str = "data/novels"
    roster: str | None = None
    workdir: str = "out"
    index: str | None = None  # defaults to <workdir>/index.json
    predictions: str | None = None  # defaults to <workdir>/predictions.jsonl
    lookup: str | None = None  # JSON {instance_id: completion} for mock_lookup
    roles: str | None = None
    quote_counts: str | None = None
    network: str | None = None  # defaults to <workdir>/network
    finetune: str | None = None  # defaults to <workdir>/finetune.jsonl


@dataclass
class SegmenterSection:
    quote_delimiters: list[str] = field(default_factory=lambda: list(DEFAULT_DELIMITERS))
    attribution_verbs: list[str] = field(default_factory=lambda: list(DEFAULT_VERBS))
    max_gap_paragraphs: int = 2
    chapter_pattern: str | None = None


@dataclass
class PromptSection:
    mode: str = JOINT
    dimension: str | None = None
    dialogue_variant: str = "expanded"
    locale: str = "zh"
    template_dir: str | None = None  # holds <locale>_<mode>.txt overrides


@dataclass
class BackendSection:
    kind: str = "mock_lookup"
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    parallelism: int = 4
    backoff_base: float = 1.0
    rule_answer: str = "polarity=neutral; rel_type=other; hierarchy=peer"


@dataclass
class SplitSection:
    train: str = "8/10"
    val: str = "1/10"
    test: str = "1/10"
    seed: int | None = None


@dataclass
class RetrievalSection:
    k: int = 3
    embedder: str = "hash"
    dim: int = 256
    endpoint: str | None = None
    exclude_self: bool = True


@dataclass
class BalanceSection:
    enabled: bool = False
    dimension: str = "polarity"
    min_count: int = 10
    max_count: int | None = None
    seed: int | None = None


@dataclass
class AnonymizeSection:
    enabled: bool = False
    seed: int | None = None


@dataclass
class AblationSection:
    modes: list[str] = field(default_factory=lambda: ["joint", "per_dimension"])
    variants: list[str] = field(default_factory=lambda: ["expanded", "basic"])
    shots: list[int] = field(default_factory=lambda: [3])


@dataclass
class NetworkSection:
    formats: list[str] = field(default_factory=lambda: ["graphml", "dot", "json"])
    source: str = "gold"


@dataclass
class PipelineConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    segmenter: SegmenterSection = field(default_factory=SegmenterSection)
    prompt: PromptSection = field(default_factory=PromptSection)
    backend: BackendSection = field(default_factory=BackendSection)
    split: SplitSection = field(default_factory=SplitSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    balance: BalanceSection = field(default_factory=BalanceSection)
    anonymize: AnonymizeSection = field(default_factory=AnonymizeSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    network: NetworkSection = field(default_factory=NetworkSection)

    # -- serialization --

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        cfg = cls()
        for sec_name, sec_type in _sections():
            raw = data.get(sec_name) or {}
            if not isinstance(raw, dict):
                raise ConfigError(f"section {sec_name!r} must be a mapping")
            known = {f.name for f in fields(sec_type)}
            bad = set(raw) - known
            if bad:
                raise ConfigError(f"unknown key(s) in {sec_name}: {sorted(bad)}")
            section = getattr(cfg, sec_name)
            for key, value in raw.items():
                setattr(section, key, _coerce(value, _hint(sec_type, key), f"{sec_name}.{key}"))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), allow_unicode=True, sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")

    # -- typed views --

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)

    def path(self, key: str, default_name: str) -> Path:
        value = getattr(self.paths, key)
        return Path(value) if value else self.workdir / default_name

    def segmenter_config(self) -> SegmenterConfig:
        s = self.segmenter
        try:
            return SegmenterConfig(tuple(s.quote_delimiters), tuple(s.attribution_verbs),
                                   s.max_gap_paragraphs, s.chapter_pattern)
        except ValueError as exc:
            raise ConfigError(f"segmenter: {exc}") from None

    def templates(self, locale: str | None = None) -> dict[str, PromptTemplate]:
        if not self.prompt.template_dir:
            return {}
        locale = locale or self.prompt.locale
        out = {}
        for mode in ("joint", "per_dimension"):
            candidate = Path(self.prompt.template_dir) / f"{locale}_{mode}.txt"
            if candidate.exists():
                try:
                    out[mode] = PromptTemplate.from_file(candidate)
                except ValueError as exc:
                    raise ConfigError(f"{candidate}: {exc}") from None
        return out

    def prompt_config(self) -> PromptConfig:
        p = self.prompt
        try:
            return PromptConfig(mode=p.mode, dimension=Dimension(p.dimension) if p.dimension else None,
                                dialogue_variant=p.dialogue_variant, exemplar_count=self.retrieval.k,
                                locale=p.locale, templates=self.templates())
        except ValueError as exc:
            raise ConfigError(f"prompt: {exc}") from None

    def backend_config(self) -> BackendConfig:
        b = self.backend
        return BackendConfig(kind=b.kind, endpoint=b.endpoint, model=b.model, temperature=b.temperature,
                             max_retries=b.max_retries, timeout=b.timeout, parallelism=b.parallelism,
                             backoff_base=b.backoff_base, rule_answer=b.rule_answer)

    def split_spec(self) -> SplitSpec:
        s = self.split
        seed = self.require_seed("split")
        try:
            return SplitSpec(Fraction(s.train), Fraction(s.val), Fraction(s.test), seed)
        except ValueError as exc:
            raise ConfigError(f"split: {exc}") from None

    def embedder_spec(self) -> EmbedderSpec:
        r = self.retrieval
        return EmbedderSpec(r.embedder, r.dim, r.endpoint)

    def ablation_config(self) -> AblationConfig:
        a = self.ablation
        try:
            return AblationConfig(tuple(a.modes), tuple(a.variants), tuple(int(k) for k in a.shots))
        except ValueError as exc:
            raise ConfigError(f"ablation: {exc}") from None

    def require_seed(self, section: str) -> int:
        seed = getattr(self, section).seed
        if seed is None:
            raise ConfigError(f"{section}.seed must be set (config file or --{section}-seed)")
        return seed


def _sections():
    hints = typing.get_type_hints(PipelineConfig)
    return [(f.name, hints[f.name]) for f in fields(PipelineConfig)]


def _hint(section_type, key: str):
    return typing.get_type_hints(section_type)[key]


def _base_type(hint):
    """(base type, is_list, optional) for the small set of hints used above."""
    optional = False
    args = typing.get_args(hint)
    if typing.get_origin(hint) in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        non_none = [a for a in args if a is not type(None)]
        optional = len(non_none) != len(args)
        hint = non_none[0]
    if typing.get_origin(hint) is list:
        return typing.get_args(hint)[0], True, optional
    return hint, False, optional


def _coerce(value, hint, where: str):
    base, is_list, optional = _base_type(hint)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where} may not be null")
    try:
        if is_list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v != ""]
            if not isinstance(value, list):
                raise ConfigError(f"{where} must be a list")
            return [base(v) for v in value]
        if base is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "yes", "1", "false", "no", "0"):
                return value.lower() in ("true", "yes", "1")
            raise ConfigError(f"{where} must be a boolean")
        if base is int and isinstance(value, bool):
            raise ConfigError(f"{where} must be an integer")
        return base(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot interpret {value!r} as {base.__name__}") from None


def flag_name(section: str, key: str) -> str:
    return f"--{section}-{key}".replace("_", "-")


def config_keys() -> list[str]:
    return [f"{sec}.{f.name}" for sec, sec_type in _sections() for f in fields(sec_type)]


def add_config_flags(parser: argparse.ArgumentParser, aliases: dict[str, list[str]] | None = None) -> None:
    """Add ``--config`` plus one override flag per config key.

    ``aliases`` maps a key such as ``network.formats`` to extra spellings of
    the same flag; they share its destination, so keys and flags stay 1:1.
    """
    aliases = aliases or {}
    parser.add_argument("--config", help="YAML pipeline configuration file")
    for sec_name, sec_type in _sections():
        group = parser.add_argument_group(f"{sec_name} overrides")
        for f in fields(sec_type):
            base, is_list, _ = _base_type(_hint(sec_type, f.name))
            dest = f"cfg__{sec_name}__{f.name}"
            flags = [flag_name(sec_name, f.name), *aliases.get(f"{sec_name}.{f.name}", [])]
            if base is bool and not is_list:
                group.add_argument(*flags, dest=dest, action=argparse.BooleanOptionalAction, default=None,
                                   help=f"config key {sec_name}.{f.name}")
            else:
                metavar = "A,B,..." if is_list else base.__name__.upper()
                group.add_argument(*flags, dest=dest, default=None, metavar=metavar,
                                   help=f"config key {sec_name}.{f.name}")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    for sec_name, sec_type in _sections():
        section = getattr(cfg, sec_name)
        for f in fields(sec_type):
            value = getattr(args, f"cfg__{sec_name}__{f.name}", None)
            if value is None:
                continue
            if isinstance(value, str) and value.lower() in ("none", "null"):
                value = None
            setattr(section, f.name, _coerce(value, _hint(sec_type, f.name), f"{sec_name}.{f.name}"))
    return cfg


EXAMPLE_CONFIG = """\
# credi pipeline configuration. Every key can be overridden on the command
# line as --<section>-<key>, e.g. --split-seed 7 or --backend-kind mock_rule.
paths:
  corpus: data/corpus.jsonl        # corpus JSONL (input of run/stats/split/...)
  novels: data/novels              # directory of UTF-8 .txt files for ingest
  roster: data/roster.txt          # one character name per line
  workdir: out                     # all run artifacts land here
  index: null                      # default <workdir>/index.json
  predictions: null                # default <workdir>/predictions.jsonl
  lookup: null                     # mock_lookup table; default: gold answers
  roles: null                      # JSON {name: protagonist|antagonist}
  quote_counts: null               # JSON {name: count}; default: speaker counts
  network: null                    # default <workdir>/network
  finetune: null                   # default <workdir>/finetune.jsonl
segmenter:
  quote_delimiters: ["“”", "「」"]
  attribution_verbs: ["道", "说道", "说", "喝道", "叫道"]
  max_gap_paragraphs: 2
  chapter_pattern: "^第.+[章回]"
prompt:
  mode: joint                      # joint | per_dimension
  dimension: null                  # only for per_dimension export/prompting
  dialogue_variant: expanded       # expanded | basic
  locale: zh                       # zh | en
  template_dir: null
backend:
  kind: mock_lookup                # remote_chat | mock_lookup | mock_rule
  endpoint: null                   # e.g. http://localhost:8000/v1
  model: null
  temperature: 0.0
  max_retries: 3
  timeout: 60.0
  parallelism: 4
  backoff_base: 1.0
  rule_answer: "polarity=neutral; rel_type=other; hierarchy=peer"
split:
  train: "8/10"
  val: "1/10"
  test: "1/10"
  seed: 42
retrieval:
  k: 3
  embedder: hash                   # hash | http
  dim: 256
  endpoint: null
  exclude_self: true
balance:
  enabled: false
  dimension: polarity
  min_count: 10
  max_count: null
  seed: 42
anonymize:
  enabled: true
  seed: 42
ablation:
  modes: [joint, per_dimension]
  variants: [expanded, basic]
  shots: [3]
network:
  formats: [graphml, dot, json]
  source: gold                     # gold | predicted
"""
