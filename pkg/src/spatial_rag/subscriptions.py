"""Subscriptions: matching change records to interested parties and fan-out.

The broker's change listeners only enqueue records onto a bounded queue; a
single dispatcher thread pops them, matches against the registered
subscriptions, and delivers notifications through sinks.  That keeps write
latency flat no matter how many subscriptions exist.

Subscriptions only see changes committed after they were registered (the
queue carries a sequence number; each subscription remembers the last
sequence at registration time).  When the queue overflows the oldest record
is dropped and ``dropped_count`` grows, so consumers that need a complete
picture can detect the gap and reseed.
"""

from __future__ import annotations

import itertools
import json
import logging
import queue
import threading
import time
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, List, Optional

import httpx

from .broker import ChangeRecord, ContextBroker, Rectangle, point_in_rectangle
from .qfilter import QFilterExpr, TypeMismatch, evaluate

logger = logging.getLogger(__name__)


class InvalidSink(ValueError):
    """The sink target is unusable (bad URL, empty topic, wrong type)."""


class DeliveryFailed(RuntimeError):
    """A sink could not deliver after exhausting its retries."""


@dataclass(frozen=True)
class Notification:
    """What a subscriber receives: entity snapshots plus what changed.

    ``entities`` holds keyValues snapshots (JSON-ready dicts) and
    ``changed_attributes`` the matching tuple of changed-name tuples,
    aligned index by index.
    """

    subscription_id: str
    emitted_at: datetime
    entities: tuple
    changed_attributes: tuple

    def items(self):
        return list(zip(self.entities, self.changed_attributes))

    def to_json(self) -> dict:
        return {
            "subscriptionId": self.subscription_id,
            "emittedAt": self.emitted_at.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z",
            "entities": list(self.entities),
            "changedAttributes": [list(names) for names in self.changed_attributes],
        }


class Sink(ABC):
    """Delivery channel for notifications."""

    @abstractmethod
    def deliver(self, notification: Notification) -> None:
        """Deliver one notification; raise DeliveryFailed when undeliverable."""

    def describe(self) -> str:
        return type(self).__name__


class CallbackSink(Sink):
    """Invoke a plain callable with each notification (in-process consumers)."""

    def __init__(self, fn: Callable[[Notification], None]):
        if not callable(fn):
            raise InvalidSink("callback sink needs a callable")
        self._fn = fn

    def deliver(self, notification: Notification) -> None:
        self._fn(notification)


class CollectorSink(Sink):
    """Thread-safe collector used by tests and the live-context cache."""

    def __init__(self):
        self._items: List[Notification] = []
        self._cond = threading.Condition()

    def deliver(self, notification: Notification) -> None:
        with self._cond:
            self._items.append(notification)
            self._cond.notify_all()

    @property
    def notifications(self) -> List[Notification]:
        with self._cond:
            return list(self._items)

    def wait_for(self, count: int, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        with self._cond:
            while len(self._items) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
            return True

    def clear(self) -> None:
        with self._cond:
            self._items.clear()


class HttpCallbackSink(Sink):
    """POST the notification JSON to an HTTP endpoint with retries."""

    def __init__(self, url: str, *, retries: int = 3, backoff_s: float = 0.2,
                 timeout_s: float = 10.0, client: Optional[httpx.Client] = None):
        if not isinstance(url, str) or not url.startswith(("http://", "https://")):
            raise InvalidSink(f"not an http(s) URL: {url!r}")
        self.url = url
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._client = client

    def describe(self) -> str:
        return f"http:{self.url}"

    def deliver(self, notification: Notification) -> None:
        payload = notification.to_json()
        last_error: Optional[Exception] = None
        for attempt in range(self.retries):
            try:
                if self._client is not None:
                    response = self._client.post(self.url, json=payload, timeout=self.timeout_s)
                else:
                    response = httpx.post(self.url, json=payload, timeout=self.timeout_s)
                if response.status_code < 300:
                    return
                last_error = DeliveryFailed(f"{self.url} answered {response.status_code}")
            except httpx.HTTPError as exc:
                last_error = exc
            if attempt + 1 < self.retries:
                time.sleep(self.backoff_s * (2 ** attempt))
        raise DeliveryFailed(f"giving up on {self.url} after {self.retries} attempts") from last_error


class TopicBus:
    """Tiny in-process topic bus; each subscriber gets its own queue."""

    def __init__(self):
        self._lock = threading.Lock()
        self._topics: dict = {}

    def attach(self, topic: str, maxsize: int = 256) -> "queue.Queue":
        q: queue.Queue = queue.Queue(maxsize=maxsize)
        with self._lock:
            self._topics.setdefault(topic, []).append(q)
        return q

    def detach(self, topic: str, q: "queue.Queue") -> None:
        with self._lock:
            listeners = self._topics.get(topic, [])
            if q in listeners:
                listeners.remove(q)
            if not listeners and topic in self._topics:
                del self._topics[topic]

    def publish(self, topic: str, item) -> None:
        with self._lock:
            listeners = list(self._topics.get(topic, ()))
        for q in listeners:
            try:
                q.put_nowait(item)
            except queue.Full:
                # a stalled consumer loses events rather than blocking the bus
                logger.warning("topic %s: subscriber queue full, dropping event", topic)


class EventStreamSink(Sink):
    """Publish notifications onto a topic bus (feeds the SSE endpoint)."""

    def __init__(self, bus: TopicBus, topic: str):
        if not isinstance(topic, str) or not topic.strip():
            raise InvalidSink("topic must be a non-empty string")
        self.bus = bus
        self.topic = topic

    def describe(self) -> str:
        return f"topic:{self.topic}"

    def deliver(self, notification: Notification) -> None:
        self.bus.publish(self.topic, notification)


@dataclass
class Subscription:
    """Interest declaration: which changes to hear about and where to send them.

    All criteria are optional and conjunctive; an empty subscription hears
    every change.  ``throttle_seconds`` > 0 coalesces bursts per entity: at
    most one notification per window, carrying the latest snapshot and the
    union of changed attribute names.
    """

    sink: Sink
    id: str = ""
    entity_type: Optional[str] = None
    watched_attributes: tuple = ()
    region: Optional[Rectangle] = None
    q: Optional[QFilterExpr] = None
    throttle_seconds: float = 0.0

    def __post_init__(self):
        if not isinstance(self.sink, Sink):
            raise InvalidSink("sink must be a Sink instance")
        if self.throttle_seconds < 0:
            raise ValueError("throttle_seconds must be >= 0")
        self.watched_attributes = tuple(self.watched_attributes)
        if self.region is not None and not isinstance(self.region, Rectangle):
            raise ValueError("region must be a Rectangle")


def match_subscription(subscription: Subscription, record: ChangeRecord) -> bool:
    """Pure predicate: does this change interest this subscription?

    A filter that raises :class:`TypeMismatch` against some entity simply
    does not match it; one subscriber's bad filter must not poison the feed.
    """
    if subscription.entity_type is not None and record.entity_type != subscription.entity_type:
        return False
    if subscription.watched_attributes:
        if not set(subscription.watched_attributes) & set(record.changed):
            return False
    if subscription.region is not None:
        if not point_in_rectangle(record.entity.location, subscription.region):
            return False
    if subscription.q is not None:
        try:
            if not evaluate(subscription.q, record.entity):
                return False
        except TypeMismatch:
            return False
    return True


class _Pending:
    """Per-subscription coalescing state while a throttle window is open."""

    __slots__ = ("due_at", "snapshots", "changed")

    def __init__(self, due_at: float):
        self.due_at = due_at
        self.snapshots: dict = {}
        self.changed: dict = {}

    def absorb(self, record: ChangeRecord) -> None:
        self.snapshots[record.entity_id] = record.entity
        names = self.changed.setdefault(record.entity_id, set())
        names.update(record.changed)


class SubscriptionManager:
    """Owns the subscription table and the dispatcher thread."""

    def __init__(self, broker: ContextBroker, *, queue_size: int = 4096):
        self._broker = broker
        self._subs: dict = {}
        self._reg_seq: dict = {}
        self._sub_lock = threading.Lock()
        self._ids = itertools.count(1)

        self._queue: deque = deque()
        self._queue_size = queue_size
        self._qcond = threading.Condition()
        self._last_seq = 0
        self._dropped = 0
        self._failures = 0
        self._stop = False

        self._pending: dict = {}
        self._last_emit: dict = {}

        broker.add_change_listener(self._on_change)
        self._thread = threading.Thread(target=self._run, name="subscription-dispatcher", daemon=True)
        self._thread.start()

    # -- registration -----------------------------------------------------

    def subscribe(self, subscription: Subscription) -> str:
        """Register; returns the subscription id (assigned when blank)."""
        if not isinstance(subscription, Subscription):
            raise InvalidSink("subscribe takes a Subscription")
        with self._qcond:
            reg_seq = self._last_seq
        with self._sub_lock:
            if not subscription.id:
                subscription.id = f"urn:sub:{next(self._ids)}"
            if subscription.id in self._subs:
                raise ValueError(f"duplicate subscription id {subscription.id!r}")
            self._subs[subscription.id] = subscription
            self._reg_seq[subscription.id] = reg_seq
        return subscription.id

    def unsubscribe(self, subscription_id: str) -> bool:
        """Deregister; no notifications are delivered afterwards."""
        with self._sub_lock:
            existed = self._subs.pop(subscription_id, None) is not None
            self._reg_seq.pop(subscription_id, None)
        with self._qcond:
            self._pending.pop(subscription_id, None)
            self._last_emit.pop(subscription_id, None)
        return existed

    def get(self, subscription_id: str) -> Optional[Subscription]:
        with self._sub_lock:
            return self._subs.get(subscription_id)

    def list_ids(self) -> List[str]:
        with self._sub_lock:
            return sorted(self._subs)

    @property
    def dropped_count(self) -> int:
        with self._qcond:
            return self._dropped

    @property
    def delivery_failures(self) -> int:
        with self._qcond:
            return self._failures

    # -- queueing (runs on writer threads, under the broker lock) ----------

    def _on_change(self, record: ChangeRecord) -> None:
        with self._qcond:
            if len(self._queue) >= self._queue_size:
                self._queue.popleft()
                self._dropped += 1
            self._queue.append(record)
            self._last_seq = record.seq
            self._qcond.notify()

    # -- dispatch (single thread) ------------------------------------------

    def _next_due(self) -> Optional[float]:
        if not self._pending:
            return None
        return min(p.due_at for p in self._pending.values())

    def _run(self) -> None:
        while True:
            with self._qcond:
                while not self._queue and not self._stop:
                    due = self._next_due()
                    timeout = None if due is None else max(0.0, due - time.monotonic())
                    if due is not None and timeout == 0.0:
                        break
                    self._qcond.wait(timeout)
                if self._stop and not self._queue:
                    return
                record = self._queue.popleft() if self._queue else None
            if record is not None:
                self._dispatch(record)
            self._flush_due()

    def _dispatch(self, record: ChangeRecord) -> None:
        with self._sub_lock:
            table = [(s, self._reg_seq.get(s.id, 0)) for s in self._subs.values()]
        now = time.monotonic()
        for subscription, reg_seq in table:
            if record.seq <= reg_seq:
                continue  # committed before this subscription existed
            if not match_subscription(subscription, record):
                continue
            if subscription.throttle_seconds > 0:
                self._coalesce(subscription, record, now)
            else:
                self._deliver(subscription, [(record.entity, tuple(sorted(record.changed)))])

    def _coalesce(self, subscription: Subscription, record: ChangeRecord, now: float) -> None:
        with self._qcond:
            pending = self._pending.get(subscription.id)
            if pending is None:
                last = self._last_emit.get(subscription.id)
                if last is None or now - last >= subscription.throttle_seconds:
                    due_at = now  # window closed: flush immediately
                else:
                    due_at = last + subscription.throttle_seconds
                pending = _Pending(due_at)
                self._pending[subscription.id] = pending
            pending.absorb(record)

    def _flush_due(self) -> None:
        now = time.monotonic()
        ready = []
        with self._qcond:
            for sub_id, pending in list(self._pending.items()):
                if pending.due_at <= now:
                    ready.append((sub_id, pending))
                    del self._pending[sub_id]
        for sub_id, pending in ready:
            subscription = self.get(sub_id)
            if subscription is None:
                continue
            entries = [
                (pending.snapshots[eid], tuple(sorted(pending.changed[eid])))
                for eid in sorted(pending.snapshots)
            ]
            with self._qcond:
                self._last_emit[sub_id] = time.monotonic()
            self._deliver(subscription, entries)

    def _deliver(self, subscription: Subscription, entries) -> None:
        notification = Notification(
            subscription_id=subscription.id,
            emitted_at=datetime.now(timezone.utc),
            entities=tuple(entity.key_values() for entity, _ in entries),
            changed_attributes=tuple(names for _, names in entries),
        )
        try:
            subscription.sink.deliver(notification)
        except Exception:
            logger.exception(
                "delivery to %s (%s) failed; dropping notification",
                subscription.id, subscription.sink.describe(),
            )
            with self._qcond:
                self._failures += 1

    # -- lifecycle ----------------------------------------------------------

    def drain(self, timeout: float = 5.0) -> bool:
        """Block until the queue and all throttle windows are empty."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._qcond:
                idle = not self._queue and not self._pending
            if idle:
                return True
            time.sleep(0.005)
        return False

    def close(self) -> None:
        with self._qcond:
            self._stop = True
            self._qcond.notify_all()
        self._thread.join(timeout=5.0)
