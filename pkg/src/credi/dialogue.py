"""Rule-based dialogue chain segmentation and dialogue text rendering.

Quotes are found by delimiter matching inside each paragraph, attributed to a
roster name that sits next to an attribution verb, and grouped into chains of
quoted paragraphs separated by at most ``max_gap_paragraphs`` narration
paragraphs. Attribution is heuristic: no coreference or pronoun resolution is
attempted.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from credi.corpus.types import DialogueUnit, Quote

DEFAULT_DELIMITERS = ("“”", "「」")
DEFAULT_VERBS = ("道", "说道", "说", "喝道", "叫道")
# characters allowed between a verb and the quote it introduces
_LEAD_PUNCT = " \t　：:，,"
_SENTENCE_END = "。！？!?.；;\n"
# a name right after one of these is being spoken to, not speaking
_ADDRESSEE_CUES = "对向朝冲"


class Locale(str, Enum):
    ZH = "zh"
    EN = "en"


@dataclass(frozen=True)
class SegmenterConfig:
    quote_delimiters: tuple[str, ...] = DEFAULT_DELIMITERS
    attribution_verbs: tuple[str, ...] = DEFAULT_VERBS
    max_gap_paragraphs: int = 2
    chapter_pattern: str | None = None

    def __post_init__(self):
        pairs = tuple(self.quote_delimiters)
        for pair in pairs:
            if len(pair) != 2:
                raise ValueError(f"delimiter pair must be two characters, got {pair!r}")
        if len(set(pairs)) != len(pairs):
            raise ValueError("delimiter pairs must be distinct")
        if self.max_gap_paragraphs < 1:
            raise ValueError("max_gap_paragraphs must be >= 1")
        object.__setattr__(self, "quote_delimiters", pairs)
        object.__setattr__(self, "attribution_verbs", tuple(self.attribution_verbs))


@dataclass(frozen=True)
class SegmentWarning:
    kind: str
    position: int
    detail: str = ""


@dataclass
class SegmentationResult:
    units: list[DialogueUnit]
    warnings: list[SegmentWarning] = field(default_factory=list)

    def __iter__(self):
        return iter(self.units)

    def __len__(self):
        return len(self.units)


@dataclass
class _RawQuote:
    start: int  # absolute offset of the utterance (inside the delimiters)
    end: int
    open_pos: int  # absolute offset of the opening delimiter
    close_pos: int  # absolute offset just past the closing delimiter
    paragraph: int
    speaker: str | None = None
    addressee: str | None = None


def _paragraphs(text: str) -> list[tuple[int, int]]:
    """Non-blank lines as (start, end) offsets, surrounding whitespace trimmed."""
    out = []
    for m in re.finditer(r"[^\n]+", text):
        line = m.group(0)
        stripped = line.strip()
        if not stripped:
            continue
        lead = len(line) - len(line.lstrip())
        start = m.start() + lead
        out.append((start, start + len(stripped)))
    return out


def _find_quotes(text: str, para: tuple[int, int], pidx: int, cfg: SegmenterConfig,
                 warnings: list[SegmentWarning]) -> list[_RawQuote]:
    opens = {p[0]: p[1] for p in cfg.quote_delimiters}
    closes = {p[1] for p in cfg.quote_delimiters}
    stack: list[tuple[str, int]] = []
    found = []
    for pos in range(para[0], para[1]):
        ch = text[pos]
        if stack and ch == stack[-1][0]:
            closer, opened_at = stack.pop()
            if not stack and pos > opened_at + 1:
                found.append(_RawQuote(opened_at + 1, pos, opened_at, pos + 1, pidx))
            continue
        if ch in opens:
            stack.append((opens[ch], pos))
        elif ch in closes:
            warnings.append(SegmentWarning("UnbalancedQuotes", pos, f"stray closing {ch!r}"))
    for _, opened_at in stack:
        warnings.append(SegmentWarning("UnbalancedQuotes", opened_at, "unclosed quote"))
    return found


class _NameFinder:
    def __init__(self, roster):
        names = sorted({n for n in roster if n}, key=lambda s: (-len(s), s))
        self.pattern = re.compile("|".join(re.escape(n) for n in names)) if names else None

    def find(self, text: str, start: int, end: int) -> list[tuple[int, int, str]]:
        if self.pattern is None or start >= end:
            return []
        return [(m.start(), m.end(), m.group(0)) for m in self.pattern.finditer(text, start, end)]


def _verb_matches(text: str, start: int, end: int, verbs: tuple[str, ...]) -> list[tuple[int, int]]:
    """All verb occurrences in [start, end), preferring the longest verb at a position."""
    out = []
    ordered = sorted(verbs, key=len, reverse=True)
    pos = start
    while pos < end:
        for v in ordered:
            if text.startswith(v, pos) and pos + len(v) <= end:
                out.append((pos, pos + len(v)))
                pos += len(v)
                break
        else:
            pos += 1
    return out


def _attribute_before(text: str, seg_start: int, seg_end: int, para_start: int,
                      quote_spans: list[_RawQuote], names: _NameFinder,
                      verbs: tuple[str, ...]) -> tuple[str | None, str | None]:
    """(speaker, addressee) named before a verb that directly introduces the quote."""
    tail = seg_end
    while tail > seg_start and text[tail - 1] in _LEAD_PUNCT:
        tail -= 1
    hits = _verb_matches(text, seg_start, tail, verbs)
    if not hits or hits[-1][1] != tail:
        return None, None
    verb_start = hits[-1][0]
    # roster names before the verb, in narration of this paragraph only
    candidates = [
        (s, n) for s, _, n in names.find(text, para_start, verb_start)
        if not any(q.open_pos <= s < q.close_pos for q in quote_spans)
    ]
    speaker = addressee = None
    for s, n in reversed(candidates):
        if s > 0 and text[s - 1] in _ADDRESSEE_CUES:
            if addressee is None and speaker is None:
                addressee = n
            continue
        speaker = n
        break
    if speaker is None or speaker == addressee:
        return speaker, None
    return speaker, addressee


def _attribute_after(text: str, seg_start: int, seg_end: int, names: _NameFinder,
                     verbs: tuple[str, ...], introduces_next: bool) -> str | None:
    """Speaker named in the clause right after the quote (``”郭靖道。`` / ``" said Tom.``)."""
    stop = seg_start
    while stop < seg_end and text[stop] not in _SENTENCE_END:
        stop += 1
    found = names.find(text, seg_start, stop)
    hits = _verb_matches(text, seg_start, stop, verbs)
    if not found or not hits:
        return None
    if introduces_next and not text[hits[-1][1]:seg_end].strip(_LEAD_PUNCT):
        # the only verb opens the following quote
        hits = hits[:-1]
        if not hits:
            return None
    vs = hits[0][0]
    return min(found, key=lambda f: (abs(f[0] - vs), f[0]))[2]


def _attribute(text: str, paragraphs: list[tuple[int, int]], chain: list[_RawQuote],
               names: _NameFinder, verbs: tuple[str, ...]) -> None:
    by_para: dict[int, list[_RawQuote]] = {}
    for q in chain:
        by_para.setdefault(q.paragraph, []).append(q)
    for pidx, quotes in by_para.items():
        p_start, p_end = paragraphs[pidx]
        for i, q in enumerate(quotes):
            before_start = quotes[i - 1].close_pos if i else p_start
            q.speaker, q.addressee = _attribute_before(
                text, before_start, q.open_pos, p_start, quotes, names, verbs)
            if q.speaker is None:
                after_end = quotes[i + 1].open_pos if i + 1 < len(quotes) else p_end
                q.speaker = _attribute_after(text, q.close_pos, after_end, names, verbs,
                                             introduces_next=i + 1 < len(quotes))

    parties = sorted({q.speaker for q in chain if q.speaker})
    if len(parties) == 2:
        # alternate turns for the unattributed quotes of a two-party exchange
        for i, q in enumerate(chain):
            if q.speaker is not None:
                continue
            prev = next((c.speaker for c in reversed(chain[:i]) if c.speaker), None)
            if prev is not None:
                q.speaker = parties[1] if prev == parties[0] else parties[0]
            else:
                nxt = next(c.speaker for c in chain[i + 1:] if c.speaker)
                q.speaker = parties[1] if nxt == parties[0] else parties[0]


def _chains(quotes: list[_RawQuote], paragraph_chapter: list[int], max_gap: int) -> list[list[_RawQuote]]:
    chains: list[list[_RawQuote]] = []
    for q in quotes:
        if chains:
            last = chains[-1][-1]
            narration_between = q.paragraph - last.paragraph - 1
            same_chapter = paragraph_chapter[q.paragraph] == paragraph_chapter[last.paragraph]
            if narration_between <= max_gap and same_chapter:
                chains[-1].append(q)
                continue
        chains.append([q])
    return chains


def segment_dialogue_chains(text: str, roster, cfg: SegmenterConfig | None = None,
                            novel_id: str = "novel") -> SegmentationResult:
    """Split ``text`` into dialogue units of attributed quotes.

    Unit contexts are exact slices of ``text`` from the first to the last
    quoted paragraph of a chain, and quote spans index into that context.
    Quotes whose speaker cannot be determined are dropped with an
    ``UnattributedQuote`` warning.
    """
    cfg = cfg or SegmenterConfig()
    roster = [n for n in roster if n]
    if not text.strip():
        raise ValueError("text must be non-empty")
    if not roster:
        raise ValueError("roster must be non-empty")
    names = _NameFinder(roster)
    warnings: list[SegmentWarning] = []
    paragraphs = _paragraphs(text)

    chapter_of = []
    chapter = 0
    chapter_re = re.compile(cfg.chapter_pattern, re.MULTILINE) if cfg.chapter_pattern else None
    for start, end in paragraphs:
        if chapter_re is not None and chapter_re.match(text, start, end):
            chapter += 1
        chapter_of.append(chapter)

    raw: list[_RawQuote] = []
    for pidx, para in enumerate(paragraphs):
        raw.extend(_find_quotes(text, para, pidx, cfg, warnings))

    units = []
    for chain in _chains(raw, chapter_of, cfg.max_gap_paragraphs):
        _attribute(text, paragraphs, chain, names, cfg.attribution_verbs)
        kept = []
        for q in chain:
            if q.speaker is None:
                warnings.append(SegmentWarning("UnattributedQuote", q.open_pos))
            else:
                kept.append(q)
        if not kept:
            continue
        ctx_start = paragraphs[chain[0].paragraph][0]
        ctx_end = paragraphs[chain[-1].paragraph][1]
        parties = sorted({q.speaker for q in kept})
        quotes = []
        for q in kept:
            addressee = q.addressee
            if addressee is None and len(parties) == 2:
                addressee = parties[1] if q.speaker == parties[0] else parties[0]
            quotes.append(Quote(q.speaker, text[q.start:q.end],
                                (q.start - ctx_start, q.end - ctx_start), addressee))
        uid = f"{novel_id}-u{len(units) + 1:05d}"
        units.append(DialogueUnit(uid, novel_id, text[ctx_start:ctx_end], tuple(quotes)))
    return SegmentationResult(units, warnings)


@dataclass(frozen=True)
class DialogueLine:
    kind: str  # "narration" or "quote"
    text: str
    speaker: str | None = None
    addressee: str | None = None

    def render(self, locale: Locale | str = Locale.ZH) -> str:
        if self.kind == "narration":
            return self.text
        if Locale(locale) is Locale.ZH:
            if self.addressee:
                return f"{self.speaker}对{self.addressee}说：“{self.text}”"
            return f"{self.speaker}说：“{self.text}”"
        if self.addressee:
            return f'{self.speaker} said to {self.addressee}: "{self.text}"'
        return f'{self.speaker} said: "{self.text}"'


@dataclass(frozen=True)
class ExpandedDialogue:
    lines: tuple[DialogueLine, ...]

    def render(self, locale: Locale | str = Locale.ZH) -> str:
        return "\n".join(line.render(locale) for line in self.lines)


_QUOTE_MARKS = "“”「」\"'‘’『』"
_TAG_ENDINGS = ("道", "说", "问", "答", "曰")


def _is_tag(clause: str, speaker: str) -> bool:
    """True for an attribution clause such as ``林远低头道`` or ``赵长老说道``."""
    clause = clause.strip(_LEAD_PUNCT + _SENTENCE_END)
    return bool(clause) and speaker in clause and clause.endswith(_TAG_ENDINGS) and len(clause) <= 24


def _drop_tags(narration: str, before: Quote | None, after: Quote | None) -> str:
    """Remove attribution clauses that the "A said to B" line already expresses."""
    if after is not None:
        cut = -1
        for i in range(len(narration) - 1, -1, -1):
            if narration[i] in _SENTENCE_END:
                cut = i
                break
        head, tail = narration[:cut + 1], narration[cut + 1:]
        if _is_tag(tail, after.speaker):
            # keep an action that precedes the tag: "A走到门口，对B道" -> "A走到门口"
            comma = max(tail.rfind("，"), tail.rfind(","))
            narration = head + (tail[:comma] if comma > 0 else "")
    if before is not None:
        for i, ch in enumerate(narration):
            if ch in _SENTENCE_END:
                if _is_tag(narration[:i], before.speaker):
                    narration = narration[i + 1:]
                break
    return narration


def build_expanded_dialogue(unit: DialogueUnit) -> ExpandedDialogue:
    """Rewrite a unit as narration lines interleaved with "A said to B" lines.

    Narration is the context outside quote spans, minus quote marks, lead-in
    punctuation and the speech tags (``X道``) that the rewritten lines make
    redundant; empty stretches are dropped.
    """
    lines = []
    pos = 0
    prev = None
    strip = _QUOTE_MARKS + _LEAD_PUNCT + "\n"
    for q in unit.quotes:
        narration = _drop_tags(unit.context[pos:q.span[0]].strip(strip), prev, q).strip(strip)
        if narration:
            lines.append(DialogueLine("narration", narration))
        lines.append(DialogueLine("quote", q.utterance, q.speaker, q.addressee))
        pos = q.span[1]
        prev = q
    tail = _drop_tags(unit.context[pos:].strip(strip), prev, None).strip(strip)
    if tail:
        lines.append(DialogueLine("narration", tail))
    return ExpandedDialogue(tuple(lines))


def build_basic_dialogue(unit: DialogueUnit) -> str:
    """The unit's raw context: quotes appear verbatim, with no attribution added."""
    return unit.context


def dialogue_text(unit: DialogueUnit, variant: str, locale: Locale | str = Locale.ZH) -> str:
    if variant == "expanded":
        return build_expanded_dialogue(unit).render(locale)
    if variant == "basic":
        return build_basic_dialogue(unit)
    raise ValueError(f"unknown dialogue variant {variant!r}")


def speaker_counts(units) -> dict[str, int]:
    """Direct-quotation frequency per speaker across ``units``."""
    counts: dict[str, int] = {}
    for unit in units:
        for q in unit.quotes:
            counts[q.speaker] = counts.get(q.speaker, 0) + 1
    return counts
