"""Benchmark question banks and their ground-truth predicates.

Two suites share the retrieval pipeline:

* the latency suite (``QL1``..``QL7``) only times the components, so its
  cases carry no truth predicate;
* the correctness suite (``QE1``..``QE12``) pairs each question with a
  machine predicate over the retrieval set, which makes grading independent
  of any model.

Truth predicates evaluate against the entities actually retrieved for the
run (region + limit), never against the full store: the assistant is graded
on what it was shown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

from .entities import Entity
from .grading import fold_text
from .qfilter import evaluate, parse_q


class UnknownCase(KeyError):
    """No ground-truth predicate exists for this case."""


@dataclass(frozen=True)
class AllEntities:
    """Everything retrieved qualifies (broad "what can I visit" questions)."""


@dataclass(frozen=True)
class QPredicate:
    """Truth = entities matching an attribute filter expression."""

    q_text: str


@dataclass(frozen=True)
class TopRelevanceTier:
    """Truth = entities sharing the best (numerically lowest) relevance.

    Relevance is rank-like: 1 marks the most relevant tier.  Entities without
    a numeric relevance never qualify.
    """


@dataclass(frozen=True)
class CategoryTag:
    """Truth = entities whose category list carries the tag (case-folded)."""

    tag: str


@dataclass(frozen=True)
class NamedEntity:
    """Truth = the single entity with this exact title (diacritics folded)."""

    title: str


@dataclass(frozen=True)
class EvalCase:
    id: str
    question: str
    kind: str  # "latency" | "correctness"
    truth: Optional[object] = None
    top_k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("latency", "correctness"):
            raise ValueError(f"unknown case kind {self.kind!r}")
        if self.kind == "correctness" and self.truth is None:
            raise ValueError(f"{self.id}: correctness cases need a truth predicate")


QL_CASES = (
    EvalCase("QL1", "What can I visit today in Madrid?", "latency"),
    EvalCase(
        "QL2",
        "I want to recommend to tourists some places that have a high number of attendance?",
        "latency",
    ),
    EvalCase("QL3", "What can I visit today in Madrid that costs between 10 and 20€?", "latency"),
    EvalCase(
        "QL4",
        "What can I visit today in Madrid that is free of charge and has a ratio of occupancy"
        " of less than 10%?",
        "latency",
    ),
    EvalCase(
        "QL5",
        "What can I visit today in Madrid that is free of charge and has a ratio of occupancy"
        " of less than 10%? You will know the occupancy percentage with the ration between the"
        " occupancy over the capacity of the PoI.",
        "latency",
    ),
    EvalCase("QL6", "Do you know if I can visit Museo del Prado?", "latency"),
    EvalCase("QL7", "Do you know if I can visit the Eiffel Tower in Madrid?", "latency"),
)

QE_CASES = (
    EvalCase(
        "QE1",
        "Could you please recommend the most interesting landmarks or places in Madrid to me?",
        "correctness",
        AllEntities(),
    ),
    EvalCase(
        "QE2",
        "Please, show me a list of the top 5 most relevant sites in Madrid",
        "correctness",
        TopRelevanceTier(),
        top_k=5,
    ),
    EvalCase(
        "QE3",
        "Please, inform me of all the places I can visit in Madrid today that have a cost"
        " between 10€ and 20€",
        "correctness",
        QPredicate("price>=10;price<=20"),
    ),
    EvalCase(
        "QE4",
        "Please, show me some landmarks that are free of charge",
        "correctness",
        QPredicate("price==0"),
    ),
    EvalCase(
        "QE5",
        "Please, list some places that are related to sports",
        "correctness",
        CategoryTag("sports"),
    ),
    EvalCase(
        "QE6",
        "Do you know the Museo del Prado?",
        "correctness",
        NamedEntity("Museo del Prado"),
    ),
    EvalCase(
        "QE7",
        "Could you please let me know if the Museo del Prado is free of charge to enter?",
        "correctness",
        NamedEntity("Museo del Prado"),
    ),
    EvalCase(
        "QE8",
        "Please tell me if the Museo del Prado is currently crowded?",
        "correctness",
        NamedEntity("Museo del Prado"),
    ),
    EvalCase(
        "QE9",
        "Could you please show me places with an occupancy of less than 50 people and a"
        " relevance of 1?",
        "correctness",
        QPredicate("occupancy<50;relevance==1"),
    ),
    EvalCase(
        "QE10",
        "Could you please show me places that have an occupancy of not less than 50 people"
        " and a relevance that is not 1?",
        "correctness",
        QPredicate("occupancy>=50;relevance!=1"),
    ),
    EvalCase(
        "QE11",
        "Could you please show me places with an occupancy of less than 50 people or a"
        " relevance of 1?",
        "correctness",
        QPredicate("occupancy<50|relevance==1"),
    ),
    EvalCase(
        "QE12",
        "Could you please show me places that are occupied by not fewer than 50 people or"
        " have a relevance not equal to 1?",
        "correctness",
        QPredicate("occupancy>=50|relevance!=1"),
    ),
)

CASES_BY_ID = {case.id: case for case in QL_CASES + QE_CASES}


def _normalize_question(text: str) -> str:
    return " ".join(fold_text(text).split())


_CASES_BY_QUESTION = {_normalize_question(case.question): case for case in QL_CASES + QE_CASES}


def find_case_for_question(question: str) -> Optional[EvalCase]:
    """Look a question text up in the banks (whitespace/case-insensitive)."""
    return _CASES_BY_QUESTION.get(_normalize_question(question))


def _numeric_relevance(entity: Entity):
    value = entity.property_value("relevance")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    return value


def _has_tag(entity: Entity, tag: str) -> bool:
    value = entity.property_value("category")
    folded = fold_text(tag)
    if isinstance(value, str):
        return fold_text(value) == folded
    if isinstance(value, tuple):
        return any(isinstance(item, str) and fold_text(item) == folded for item in value)
    return False


def ground_truth(case: EvalCase, entities: Sequence[Entity]) -> List[Entity]:
    """Entities from ``entities`` that truly answer the case, input order kept."""
    if case.kind != "correctness" or case.truth is None:
        raise UnknownCase(f"{case.id} has no ground-truth predicate")
    truth = case.truth
    if isinstance(truth, AllEntities):
        return list(entities)
    if isinstance(truth, QPredicate):
        expr = parse_q(truth.q_text)
        return [entity for entity in entities if evaluate(expr, entity)]
    if isinstance(truth, TopRelevanceTier):
        scores = [(_numeric_relevance(entity), entity) for entity in entities]
        ranked = [value for value, _ in scores if value is not None]
        if not ranked:
            return []
        best = min(ranked)
        return [entity for value, entity in scores if value == best]
    if isinstance(truth, CategoryTag):
        return [entity for entity in entities if _has_tag(entity, truth.tag)]
    if isinstance(truth, NamedEntity):
        wanted = fold_text(truth.title)
        return [
            entity
            for entity in entities
            if isinstance(entity.property_value("title"), str)
            and fold_text(entity.property_value("title")) == wanted
        ]
    raise UnknownCase(f"{case.id}: unhandled truth predicate {type(truth).__name__}")
