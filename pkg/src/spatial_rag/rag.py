"""Retrieval-augmented answering over the live entity store.

The flow per question: geo-query the broker for the viewport rectangle,
serialize the retrieved entities under the instruction block, call the chat
backend, and return the answer together with per-stage timings.  The model
never sees anything but the retrieved entities, so its answers stay grounded
in the current broker state.

:class:`LiveContextCache` is an optional read path: it mirrors the entities
of one region by subscribing to the change feed, so repeated questions skip
the broker query.  It bypasses itself for any other region and reseeds when
the feed reports dropped notifications.
"""

from __future__ import annotations

import importlib.resources
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List, Optional, Sequence

from .backends import ChatBackend, LlmResponse, PromptBundle, DEFAULT_MODEL
from .broker import ContextBroker, GeoQuery, Rectangle
from .entities import Entity, serialize_entity
from .subscriptions import CallbackSink, Notification, Subscription, SubscriptionManager


class PromptBudgetExceeded(ValueError):
    """The serialized context would blow the prompt token budget."""


class CacheBypass(LookupError):
    """The cache does not cover the requested region."""


def _load_system_prompt() -> str:
    resource = importlib.resources.files("spatial_rag").joinpath("resources/system_prompt.txt")
    return resource.read_text(encoding="utf-8")


SYSTEM_PROMPT = _load_system_prompt()


@dataclass(frozen=True)
class RagRequest:
    """One question over one viewport rectangle."""

    question: str
    region: Rectangle
    limit: int = 100
    form: str = "normalized"

    def __post_init__(self):
        if not isinstance(self.question, str) or not self.question.strip():
            raise ValueError("question must be non-empty")
        if not isinstance(self.region, Rectangle):
            raise ValueError("region must be a Rectangle")
        if isinstance(self.limit, bool) or not isinstance(self.limit, int) or self.limit < 1:
            raise ValueError(f"limit must be a positive integer, got {self.limit!r}")
        if self.form not in ("normalized", "keyValues"):
            raise ValueError(f"unknown serialization form {self.form!r}")


@dataclass(frozen=True)
class RetrievalResult:
    entities: tuple
    broker_ms: float
    from_cache: bool
    retrieved_at: datetime


@dataclass(frozen=True)
class Timings:
    """Wall-clock milliseconds per stage; total covers the whole ask."""

    broker_ms: float
    llm_ms: float
    total_ms: float


@dataclass(frozen=True)
class AssistantResponse:
    answer_text: str
    entity_count: int
    timings: Timings
    retrieval: RetrievalResult
    #: delay the backend itself reported (mock injection or measured remote)
    llm_reported_ms: float
    token_usage: Optional[dict] = None


def retrieve(request: RagRequest, broker: ContextBroker,
             cache: Optional["LiveContextCache"] = None) -> RetrievalResult:
    """Fetch the entities for a request, timing the lookup."""
    started = time.perf_counter()
    from_cache = False
    if cache is not None:
        try:
            entities: Sequence[Entity] = cache.serve(request)
            from_cache = True
        except CacheBypass:
            entities = broker.geo_query(GeoQuery(region=request.region, limit=request.limit))
    else:
        entities = broker.geo_query(GeoQuery(region=request.region, limit=request.limit))
    broker_ms = (time.perf_counter() - started) * 1000.0
    return RetrievalResult(
        entities=tuple(entities),
        broker_ms=broker_ms,
        from_cache=from_cache,
        retrieved_at=datetime.now(timezone.utc),
    )


def estimate_tokens(bundle: PromptBundle) -> int:
    """Crude size estimate (4 characters per token) for budget checks."""
    return (len(bundle.system_text) + len(bundle.user_text)) // 4


def build_prompt(request: RagRequest, retrieval: RetrievalResult, *,
                 model: str = DEFAULT_MODEL, temperature: float = 0.0,
                 token_budget: Optional[int] = None) -> PromptBundle:
    """Assemble instructions + serialized entities + question.

    The entity block keeps retrieval order, one JSON line per entity, in the
    request's serialization form.
    """
    lines = [serialize_entity(entity, request.form) for entity in retrieval.entities]
    system_text = SYSTEM_PROMPT + "\n" + "\n".join(lines)
    bundle = PromptBundle(
        system_text=system_text,
        user_text=request.question,
        model=model,
        temperature=temperature,
    )
    if token_budget is not None:
        estimated = estimate_tokens(bundle)
        if estimated > token_budget:
            raise PromptBudgetExceeded(
                f"prompt holds ~{estimated} tokens, budget is {token_budget};"
                f" lower the limit ({len(retrieval.entities)} entities serialized)"
            )
    return bundle


def ask(request: RagRequest, broker: ContextBroker, backend: ChatBackend, *,
        cache: Optional["LiveContextCache"] = None,
        model: str = DEFAULT_MODEL, temperature: float = 0.0,
        token_budget: Optional[int] = None) -> AssistantResponse:
    """Answer one question end to end, timing each stage."""
    started = time.perf_counter()
    retrieval = retrieve(request, broker, cache)
    bundle = build_prompt(request, retrieval, model=model, temperature=temperature,
                          token_budget=token_budget)
    llm_started = time.perf_counter()
    response: LlmResponse = backend.call(bundle)
    llm_ms = (time.perf_counter() - llm_started) * 1000.0
    total_ms = (time.perf_counter() - started) * 1000.0
    return AssistantResponse(
        answer_text=response.answer_text,
        entity_count=len(retrieval.entities),
        timings=Timings(broker_ms=retrieval.broker_ms, llm_ms=llm_ms, total_ms=total_ms),
        retrieval=retrieval,
        llm_reported_ms=response.llm_latency_ms,
        token_usage=response.token_usage,
    )


class LiveContextCache:
    """Region mirror fed by the change feed instead of per-question queries.

    Seeded with one geo query, then kept current by a subscription covering
    all changes: each notified entity is re-read from the broker and stored
    or evicted depending on whether it (still) sits inside the region.
    Deletions arrive through the broker's delete hook.  If the notification
    queue ever drops records the next read reseeds before serving.
    """

    def __init__(self, broker: ContextBroker, manager: SubscriptionManager,
                 region: Rectangle):
        self._broker = broker
        self._manager = manager
        self.region = region
        self._lock = threading.RLock()
        self._by_id: dict = {}
        self._seen_drops = manager.dropped_count
        self._subscription_id = manager.subscribe(
            Subscription(sink=CallbackSink(self._on_notification))
        )
        broker.add_delete_listener(self._on_delete)
        self._reseed()

    def _reseed(self) -> None:
        entities = self._broker.geo_query(GeoQuery(region=self.region, limit=10 ** 9))
        with self._lock:
            self._by_id = {entity.id: entity for entity in entities}
            self._seen_drops = self._manager.dropped_count

    def _on_notification(self, notification: Notification) -> None:
        for snapshot in notification.entities:
            entity_id = snapshot.get("id")
            if not entity_id:
                continue
            entity = self._broker.get_entity(entity_id)
            with self._lock:
                if entity is None:
                    self._by_id.pop(entity_id, None)
                elif self.region.contains(entity.location):
                    self._by_id[entity_id] = entity
                else:
                    self._by_id.pop(entity_id, None)

    def _on_delete(self, entity_id: str) -> None:
        with self._lock:
            self._by_id.pop(entity_id, None)

    def __len__(self):
        with self._lock:
            return len(self._by_id)

    def serve(self, request: RagRequest) -> List[Entity]:
        """Serve a request from the mirror; raises CacheBypass off-region."""
        if request.region != self.region:
            raise CacheBypass(f"cache covers {self.region}, not {request.region}")
        if self._manager.dropped_count != self._seen_drops:
            self._reseed()
        with self._lock:
            ordered = sorted(self._by_id)
            return [self._by_id[entity_id] for entity_id in ordered[: request.limit]]

    def close(self) -> None:
        self._manager.unsubscribe(self._subscription_id)
