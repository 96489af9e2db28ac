"""Answer grading: extract mentioned entities from free text, score verdicts.

Extraction is title-substring based: the grader folds case and diacritics on
both the answer text and the known entity titles, then finds every
non-overlapping occurrence of each title.  Matches resolve against the
retrieval set (the entities the model was shown); an optional wider catalog
flags names the model produced from outside that set.

The verdict rubric:

* **Correct** — no violating entity is named, and the answer covers the whole
  truth set (or at least 10 entities when more than 10 qualify).  Repeated
  mentions of the same entity downgrade to Partial as a formatting defect.
* **Partial** — violating names stay under 10% of the distinct answers, and
  the answer still covers at least 5 truth entities (or at least half of the
  truth set when fewer than 10 qualify).
* **Incorrect** — everything else.  An empty truth set is only answered
  correctly by an explicit can't-find reply naming nothing.
"""

from __future__ import annotations

import enum
import statistics
import unicodedata
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .entities import Entity

CANT_FIND_MARKERS = (
    "can't find",
    "cannot find",
    "could not find",
    "couldn't find",
    "can not find",
    "no matching",
    "nothing matching",
    "nothing that matches",
)


class AmbiguousTitle(ValueError):
    """Two different titles overlap on the same span of answer text."""


class EmptySamples(ValueError):
    """Latency statistics need at least one sample."""


def fold_text(text: str) -> str:
    """Casefold and strip diacritics so 'Botín' matches 'botin'."""
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return stripped.casefold()


class VerdictValue(enum.Enum):
    CORRECT = "Correct"
    PARTIAL = "Partial"
    INCORRECT = "Incorrect"

    @property
    def symbol(self) -> str:
        return {"Correct": "✓", "Partial": "≈", "Incorrect": "✗"}[self.value]


@dataclass(frozen=True)
class Verdict:
    value: VerdictValue
    truth_count: int
    answered_count: int  # mentions, duplicates included
    distinct_count: int  # distinct entities named (in or out of truth)
    violations_count: int
    omissions_count: int

    @property
    def symbol(self) -> str:
        return self.value.symbol


@dataclass(frozen=True)
class AnswerSet:
    """Entities recognised in an answer, in order of first appearance.

    ``mentions`` lists one entity id per occurrence (so duplicates repeat);
    ``out_of_context`` holds distinct folded names matched only against the
    wider catalog, i.e. entities the model was never shown.
    """

    mentions: tuple
    out_of_context: tuple
    cant_find: bool
    extraction: str = "title-substring"

    @property
    def distinct_ids(self) -> tuple:
        seen = []
        for entity_id in self.mentions:
            if entity_id not in seen:
                seen.append(entity_id)
        return tuple(seen)

    @property
    def answered_count(self) -> int:
        return len(self.mentions) + len(self.out_of_context)

    @property
    def has_duplicates(self) -> bool:
        return len(self.mentions) > len(self.distinct_ids)


def _title_of(entity: Entity) -> Optional[str]:
    value = entity.property_value("title")
    return value if isinstance(value, str) and value.strip() else None


def _occurrences(haystack: str, needle: str) -> List[Tuple[int, int]]:
    spans = []
    start = 0
    while True:
        index = haystack.find(needle, start)
        if index < 0:
            return spans
        spans.append((index, index + len(needle)))
        start = index + len(needle)


def extract_answer_set(answer_text: str, universe: Sequence[Entity],
                       *, catalog: Sequence[Entity] = (),
                       markers: Sequence[str] = CANT_FIND_MARKERS) -> AnswerSet:
    """Find which known entities an answer names.

    ``universe`` is the retrieval set; titles inside it must be unique after
    folding.  ``catalog`` may hold the full store so hallucinated-but-real
    names are flagged rather than silently ignored.  Raises
    :class:`AmbiguousTitle` when two different titles claim overlapping text.
    """
    folded_text = fold_text(answer_text)

    titles: dict = {}
    for entity in universe:
        title = _title_of(entity)
        if title is None:
            continue
        folded = fold_text(title)
        if folded in titles and titles[folded] != entity.id:
            raise ValueError(f"universe titles collide after folding: {title!r}")
        titles[folded] = entity.id

    spans: List[Tuple[int, int, str, str]] = []
    for folded_title, entity_id in titles.items():
        for start, end in _occurrences(folded_text, folded_title):
            spans.append((start, end, entity_id, folded_title))

    # a longer title may legitimately contain a shorter one ("Restaurante
    # Botín" contains "Botín"); keep the longest span and drop the contained
    # ones, but overlapping spans of unrelated titles are ambiguous
    spans.sort(key=lambda s: (s[0], -(s[1] - s[0])))
    kept: List[Tuple[int, int, str, str]] = []
    for start, end, entity_id, folded_title in spans:
        if kept:
            k_start, k_end, k_id, k_title = kept[-1]
            if start < k_end:
                if end <= k_end and folded_title in k_title:
                    continue  # nested inside the kept span
                raise AmbiguousTitle(
                    f"titles {k_title!r} and {folded_title!r} overlap at {start}"
                )
        kept.append((start, end, entity_id, folded_title))

    mentions = tuple(entity_id for _, _, entity_id, _ in kept)

    out_of_context: List[str] = []
    universe_folded = set(titles)
    for entity in catalog:
        title = _title_of(entity)
        if title is None:
            continue
        folded = fold_text(title)
        if folded in universe_folded or folded in out_of_context:
            continue
        if folded in folded_text:
            # skip names nested inside an already-matched universe title
            if any(folded in kept_title for _, _, _, kept_title in kept):
                continue
            out_of_context.append(folded)

    cant_find = any(marker in folded_text for marker in markers)
    return AnswerSet(mentions=mentions, out_of_context=tuple(out_of_context), cant_find=cant_find)


def grade(answer: AnswerSet, truth: Sequence[Entity]) -> Verdict:
    """Score one answer against the ground-truth entity list."""
    truth_ids = [entity.id for entity in truth]
    truth_set = set(truth_ids)
    distinct = list(answer.distinct_ids)
    hits = [entity_id for entity_id in distinct if entity_id in truth_set]
    violations = len([entity_id for entity_id in distinct if entity_id not in truth_set])
    violations += len(answer.out_of_context)
    answered_distinct = len(distinct) + len(answer.out_of_context)
    omissions = len(truth_set - set(distinct))

    counts = dict(
        truth_count=len(truth_ids),
        answered_count=answer.answered_count,
        distinct_count=answered_distinct,
        violations_count=violations,
        omissions_count=omissions,
    )

    if not truth_ids:
        value = (
            VerdictValue.CORRECT
            if answer.cant_find and answered_distinct == 0
            else VerdictValue.INCORRECT
        )
        return Verdict(value=value, **counts)

    covered = omissions == 0 or (len(truth_ids) > 10 and len(hits) >= 10)
    if violations == 0 and covered:
        value = VerdictValue.PARTIAL if answer.has_duplicates else VerdictValue.CORRECT
        return Verdict(value=value, **counts)

    small_truth_ok = len(truth_ids) < 10 and len(hits) * 2 >= len(truth_ids) and len(hits) > 0
    enough_hits = len(hits) >= 5 or small_truth_ok
    tolerable = answered_distinct > 0 and violations * 10 < answered_distinct
    if tolerable and enough_hits:
        return Verdict(value=VerdictValue.PARTIAL, **counts)
    return Verdict(value=VerdictValue.INCORRECT, **counts)


def grade_top_k(answer: AnswerSet, tier: Sequence[Entity], k: int = 5) -> Verdict:
    """Score a "top k" answer: up to ``k`` names, all from the best tier.

    Correct needs 1..k distinct names, every one inside the tier, no repeats
    and nothing out of context.  Partial tolerates violations under 10% of
    the distinct answers as long as at least one tier entity is named.
    """
    tier_ids = set(entity.id for entity in tier)
    distinct = list(answer.distinct_ids)
    hits = [entity_id for entity_id in distinct if entity_id in tier_ids]
    violations = len(distinct) - len(hits) + len(answer.out_of_context)
    answered_distinct = len(distinct) + len(answer.out_of_context)

    counts = dict(
        truth_count=len(tier_ids),
        answered_count=answer.answered_count,
        distinct_count=answered_distinct,
        violations_count=violations,
        omissions_count=0,
    )

    if not tier_ids:
        value = (
            VerdictValue.CORRECT
            if answer.cant_find and answered_distinct == 0
            else VerdictValue.INCORRECT
        )
        return Verdict(value=value, **counts)

    if violations == 0 and 1 <= len(distinct) <= k and not answer.has_duplicates:
        return Verdict(value=VerdictValue.CORRECT, **counts)
    if answered_distinct > 0 and violations * 10 < answered_distinct and hits:
        return Verdict(value=VerdictValue.PARTIAL, **counts)
    return Verdict(value=VerdictValue.INCORRECT, **counts)


@dataclass(frozen=True)
class LatencyStats:
    """Median/min/max over a latency sample series, in milliseconds.

    The median is the lower middle of the sorted series (no interpolation),
    so it is always a value that actually occurred.
    """

    median: float
    min: float
    max: float
    count: int


def latency_stats(samples: Sequence[float]) -> LatencyStats:
    if not samples:
        raise EmptySamples("no latency samples")
    ordered = sorted(float(s) for s in samples)
    return LatencyStats(
        median=statistics.median_low(ordered),
        min=ordered[0],
        max=ordered[-1],
        count=len(ordered),
    )
