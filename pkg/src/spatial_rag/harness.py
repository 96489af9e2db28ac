"""Benchmark harness: timed runs and graded runs over the question banks.

The latency suite asks every ``QL`` question at every configured limit,
``repetitions`` times, recording broker and model latency per sample.  The
correctness suite asks every ``QE`` question once per limit, computes the
ground truth over the same retrieval set, and grades the answer.

Two timing modes:

* ``measured`` — wall-clock per stage, the mode for real latency claims
  (pair it with a sleeping mock or a remote backend);
* ``reported`` — the model column takes the backend's own reported delay and
  the broker column is pinned to zero, so a seeded run emits byte-identical
  reports; this is the mode for reproducibility checks.

Failed backend calls are kept as error samples and excluded from statistics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

from .backends import BackendError, ChatBackend
from .broker import ContextBroker, Rectangle
from .cases import QE_CASES, QL_CASES, EvalCase, ground_truth
from .datasets import MADRID_REGION
from .grading import LatencyStats, Verdict, extract_answer_set, grade, grade_top_k, latency_stats
from .rag import RagRequest, ask

TIMING_MODES = ("measured", "reported")


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark run depends on besides broker contents."""

    limits: tuple = (10, 100, 650)
    repetitions: int = 10
    seed: int = 7
    region: Rectangle = MADRID_REGION
    timing: str = "measured"
    model: str = "gpt-4.1-2025-04-14"

    def __post_init__(self):
        limits = tuple(self.limits)
        if not limits or any(
            isinstance(l, bool) or not isinstance(l, int) or l < 1 for l in limits
        ):
            raise ValueError(f"limits must be positive integers, got {self.limits!r}")
        object.__setattr__(self, "limits", limits)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.timing not in TIMING_MODES:
            raise ValueError(f"timing must be one of {TIMING_MODES}, got {self.timing!r}")
        if not isinstance(self.region, Rectangle):
            raise ValueError("region must be a Rectangle")

    def snapshot(self) -> dict:
        return {
            "limits": list(self.limits),
            "repetitions": self.repetitions,
            "seed": self.seed,
            "region": self.region.as_bbox(),
            "timing": self.timing,
            "model": self.model,
        }


@dataclass(frozen=True)
class LatencySample:
    case_id: str
    limit: int
    rep: int
    broker_ms: Optional[float]
    llm_ms: Optional[float]
    error: str = ""


@dataclass(frozen=True)
class LatencyCell:
    """Aggregates for one (question, limit) pair."""

    case_id: str
    limit: int
    broker: Optional[LatencyStats]
    llm: Optional[LatencyStats]
    errors: int


@dataclass
class LatencyReport:
    config: dict
    samples: List[LatencySample] = field(default_factory=list)
    cells: List[LatencyCell] = field(default_factory=list)


@dataclass(frozen=True)
class CorrectnessRow:
    case_id: str
    limit: int
    question: str
    entity_count: int
    truth_ids: tuple
    mention_ids: tuple
    out_of_context: tuple
    cant_find: bool
    verdict: Verdict
    answer_text: str


@dataclass
class CorrectnessReport:
    config: dict
    rows: List[CorrectnessRow] = field(default_factory=list)


def _build_cells(samples: List[LatencySample]) -> List[LatencyCell]:
    cells = []
    keys = sorted({(s.case_id, s.limit) for s in samples}, key=lambda k: (k[0], k[1]))
    for case_id, limit in keys:
        bucket = [s for s in samples if s.case_id == case_id and s.limit == limit]
        good = [s for s in bucket if not s.error]
        cells.append(
            LatencyCell(
                case_id=case_id,
                limit=limit,
                broker=latency_stats([s.broker_ms for s in good]) if good else None,
                llm=latency_stats([s.llm_ms for s in good]) if good else None,
                errors=len(bucket) - len(good),
            )
        )
    return cells


def run_latency_suite(config: RunConfig, broker: ContextBroker,
                      backend: ChatBackend) -> LatencyReport:
    """Time every QL question at every limit, ``repetitions`` times."""
    report = LatencyReport(config=config.snapshot())
    for case in QL_CASES:
        for limit in config.limits:
            request = RagRequest(question=case.question, region=config.region, limit=limit)
            for rep in range(config.repetitions):
                try:
                    response = ask(request, broker, backend,
                                   model=config.model, temperature=0.0)
                except BackendError as exc:
                    report.samples.append(
                        LatencySample(case.id, limit, rep, None, None, error=str(exc))
                    )
                    continue
                if config.timing == "measured":
                    broker_ms = response.timings.broker_ms
                    llm_ms = response.timings.llm_ms
                else:
                    broker_ms = 0.0
                    llm_ms = response.llm_reported_ms
                report.samples.append(
                    LatencySample(case.id, limit, rep, broker_ms, llm_ms)
                )
    report.cells = _build_cells(report.samples)
    return report


def _grade_case(case: EvalCase, answer_text: str, retrieved, catalog) -> CorrectnessRow:
    truth = ground_truth(case, retrieved)
    answer = extract_answer_set(answer_text, retrieved, catalog=catalog)
    if case.top_k:
        verdict = grade_top_k(answer, truth, case.top_k)
    else:
        verdict = grade(answer, truth)
    return CorrectnessRow(
        case_id=case.id,
        limit=0,  # filled by caller
        question=case.question,
        entity_count=len(retrieved),
        truth_ids=tuple(entity.id for entity in truth),
        mention_ids=answer.mentions,
        out_of_context=answer.out_of_context,
        cant_find=answer.cant_find,
        verdict=verdict,
        answer_text=answer_text,
    )


def run_correctness_suite(config: RunConfig, broker: ContextBroker,
                          backend: ChatBackend) -> CorrectnessReport:
    """Ask and grade every QE question once per limit.

    Grading runs against the retrieval set of the very same request the
    answer came from; the full store is only consulted to flag answers that
    name entities the model was never shown.
    """
    report = CorrectnessReport(config=config.snapshot())
    catalog = broker.entities_snapshot()
    for case in QE_CASES:
        for limit in config.limits:
            request = RagRequest(question=case.question, region=config.region, limit=limit)
            response = ask(request, broker, backend, model=config.model, temperature=0.0)
            row = _grade_case(case, response.answer_text, list(response.retrieval.entities),
                              catalog)
            report.rows.append(dataclasses.replace(row, limit=limit))
    return report
