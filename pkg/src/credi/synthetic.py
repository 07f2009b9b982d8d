"""Deterministic synthetic corpora in the corpus-file format.

Used as stand-ins when real annotated novels are not at hand: label counts
are fixed exactly, everything else (names, quotes, pairings) follows a
seeded RNG, so the same arguments always give the same bytes on disk.
"""
from __future__ import annotations

import random
from typing import Mapping

from credi.corpus.types import Dataset, DialogueUnit, Dimension, Quote, RelationInstance, RelationLabel

_SURNAMES = "赵钱孙李周吴郑王冯陈"
_GIVEN = "云风月山河海天星雪霜"
_UTTERANCES = (
    "今日之事，你可还记得", "我早就料到会有这一天", "此事不必再提", "多谢你一路相助",
    "你若再敢如此，休怪我无情", "师父的话，我一直记在心里", "这件事我自有分寸", "快随我走",
    "你我之间，何须多言", "此去凶险，千万小心", "我不信你会背叛我们", "且慢，听我一言",
)
_NARRATION = ("两人相视片刻。", "屋外风声渐紧。", "众人一时无语。", "灯火忽明忽暗。")

# NCRE-shaped counts: 100 characters, 1,109 units, 3,591 relation instances.
NCRE_LIKE_CHARACTERS = 100
NCRE_LIKE_UNITS = 1109
NCRE_LIKE_COUNTS: dict[Dimension, dict[RelationLabel, int]] = {
    Dimension.POLARITY: {RelationLabel.POSITIVE: 2087, RelationLabel.NEUTRAL: 361, RelationLabel.NEGATIVE: 1143},
    Dimension.REL_TYPE: {RelationLabel.KINSHIP: 902, RelationLabel.AFFILIATIVE: 1988, RelationLabel.OTHER: 701},
    Dimension.HIERARCHY: {RelationLabel.SENIOR: 947, RelationLabel.PEER: 1698, RelationLabel.JUNIOR: 946},
}

# directed pairs over three participants, in the order instances are created
_PAIR_ORDER = ((0, 1), (1, 0), (2, 0), (0, 2), (1, 2), (2, 1))


def character_names(n: int) -> list[str]:
    """``n`` distinct two-character names; surname and given-name sets are disjoint."""
    if not 3 <= n <= len(_SURNAMES) * len(_GIVEN):
        raise ValueError(f"n must be within 3..{len(_SURNAMES) * len(_GIVEN)}")
    # walk the grid diagonally so small rosters still mix surnames
    return [_SURNAMES[i % 10] + _GIVEN[(i % 10 + i // 10) % 10] for i in range(n)]


def _label_columns(counts: Mapping[Dimension, Mapping[RelationLabel, int]], rng: random.Random) -> dict:
    totals = {d: sum(c.values()) for d, c in counts.items()}
    if set(counts) != set(Dimension) or len(set(totals.values())) != 1:
        raise ValueError("counts must cover all three dimensions with equal totals")
    columns = {}
    for dim in Dimension:
        col = [lab for lab in dim.labels for _ in range(counts[dim].get(lab, 0))]
        if len(col) != totals[dim]:
            raise ValueError(f"counts for {dim.value} use labels of another dimension")
        rng.shuffle(col)
        columns[dim] = col
    return columns


def generate_corpus(n_characters: int, n_units: int,
                    counts: Mapping[Dimension, Mapping[RelationLabel, int]],
                    seed: int = 0, novel_count: int = 4, prefix: str = "syn") -> Dataset:
    """Build a dataset whose gold label counts equal ``counts`` exactly.

    Each unit has three participants and between two and six instances.
    """
    rng = random.Random(seed)
    columns = _label_columns(counts, rng)
    n_instances = len(columns[Dimension.POLARITY])
    base, extra = divmod(n_instances, n_units)
    if not (2 <= base and base + (1 if extra else 0) <= len(_PAIR_ORDER)):
        raise ValueError("need between 2 and 6 instances per unit")
    names = character_names(n_characters)
    units, instances = [], []
    cursor = 0
    for u in range(n_units):
        m = base + (1 if u < extra else 0)
        cast = rng.sample(names, 3)
        uid = f"{prefix}-u{u + 1:05d}"
        context = ""
        quotes = []
        for j, (a, b) in enumerate(_PAIR_ORDER[:m], start=1):
            if j > 1 and rng.random() < 0.3:
                context += rng.choice(_NARRATION) + "\n"
            lead = f"{cast[a]}对{cast[b]}说：“"
            utterance = rng.choice(_UTTERANCES) + "。"
            start = len(context) + len(lead)
            context += lead + utterance + "”\n"
            quotes.append(Quote(cast[a], utterance, (start, start + len(utterance)), cast[b]))
            labels = {d: columns[d][cursor] for d in Dimension}
            instances.append(RelationInstance(f"{uid}-r{j}", uid, cast[a], cast[b], labels))
            cursor += 1
        novel = f"{prefix}-n{u % novel_count + 1:02d}"
        units.append(DialogueUnit(uid, novel, context.rstrip("\n"), tuple(quotes)))
    return Dataset.build(units, instances, names)


def ncre_like_corpus(seed: int = 0) -> Dataset:
    """Synthetic corpus with NCRE's published shape and label distribution."""
    return generate_corpus(NCRE_LIKE_CHARACTERS, NCRE_LIKE_UNITS, NCRE_LIKE_COUNTS, seed, novel_count=9,
                           prefix="ncre")


def fixture50(seed: int = 0) -> Dataset:
    """Small corpus of 50 labelled instances covering every label of every dimension."""
    counts = {
        Dimension.POLARITY: {RelationLabel.POSITIVE: 24, RelationLabel.NEUTRAL: 10, RelationLabel.NEGATIVE: 16},
        Dimension.REL_TYPE: {RelationLabel.KINSHIP: 14, RelationLabel.AFFILIATIVE: 22, RelationLabel.OTHER: 14},
        Dimension.HIERARCHY: {RelationLabel.SENIOR: 15, RelationLabel.PEER: 22, RelationLabel.JUNIOR: 13},
    }
    return generate_corpus(10, 16, counts, seed, novel_count=2, prefix="fx")
