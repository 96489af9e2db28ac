"""In-memory context broker: entity store, rectangular geo queries, change feed.

The broker holds immutable entity snapshots behind one lock.  Writes diff the
old and new snapshots into a :class:`ChangeRecord` and hand it to registered
change listeners while still holding the lock; listeners are expected to do
nothing more than enqueue (the subscription dispatcher does matching and
delivery on its own thread, off the write path).

Geo queries snapshot candidate entities under the lock, then filter and sort
outside it.  A sparse uniform grid narrows candidates once the store outgrows
a plain linear scan.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, List, Optional

from .entities import Entity, GeoPoint, canonical_instant, parse_instant, serialize_entity
from .qfilter import QFilterExpr, evaluate


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned lon/lat rectangle with inclusive bounds."""

    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        for name in ("min_lon", "min_lat", "max_lon", "max_lat"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(float(value)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, float(value))
        if not (-180.0 <= self.min_lon <= self.max_lon <= 180.0):
            raise ValueError(f"bad longitude bounds [{self.min_lon}, {self.max_lon}]")
        if not (-90.0 <= self.min_lat <= self.max_lat <= 90.0):
            raise ValueError(f"bad latitude bounds [{self.min_lat}, {self.max_lat}]")

    def contains(self, point: GeoPoint) -> bool:
        return point_in_rectangle(point, self)

    def as_bbox(self) -> list:
        return [self.min_lon, self.min_lat, self.max_lon, self.max_lat]


def point_in_rectangle(point: GeoPoint, rectangle: Rectangle) -> bool:
    """Inclusive containment test; boundary points are inside."""
    return (
        rectangle.min_lon <= point.longitude <= rectangle.max_lon
        and rectangle.min_lat <= point.latitude <= rectangle.max_lat
    )


@dataclass(frozen=True)
class GeoQuery:
    """One retrieval request: region, result cap, optional filters.

    ``order`` is ``"id"`` (default) or a property name; ordering by property
    puts numeric values first, then strings, then booleans, then entities
    missing the property, with the entity id as the final tiebreak.
    ``observed_between`` keeps only entities with at least one property
    observed inside the closed instant window.
    """

    region: Rectangle
    limit: int
    type_filter: Optional[str] = None
    q: Optional[QFilterExpr] = None
    observed_between: Optional[tuple] = None
    order: str = "id"

    def __post_init__(self):
        if not isinstance(self.region, Rectangle):
            raise ValueError("region must be a Rectangle")
        if isinstance(self.limit, bool) or not isinstance(self.limit, int) or self.limit < 1:
            raise ValueError(f"limit must be a positive integer, got {self.limit!r}")
        if self.observed_between is not None:
            start, end = self.observed_between
            start, end = canonical_instant(start), canonical_instant(end)
            if parse_instant(start) > parse_instant(end):
                raise ValueError("observed_between start is after end")
            object.__setattr__(self, "observed_between", (start, end))
        if not isinstance(self.order, str) or not self.order:
            raise ValueError(f"order must be an attribute name or 'id', got {self.order!r}")


@dataclass(frozen=True)
class ChangeRecord:
    """One committed write: which attributes changed and the new snapshot.

    ``changed`` maps attribute name to an ``(old, new)`` pair of bare values
    (``None`` marks absence).  Creation lists every attribute plus
    ``location``.  An upsert that changes nothing yields an empty ``changed``
    and is not fanned out to listeners.
    """

    seq: int
    entity_id: str
    entity_type: str
    created: bool
    changed: dict
    entity: Entity
    instant: datetime


@dataclass(frozen=True)
class StoreStats:
    entity_count: int
    last_write: Optional[datetime]
    index_cells: int
    writes: int


class GridIndex:
    """Sparse uniform grid over points; cells are ``cell_deg`` degrees wide."""

    def __init__(self, cell_deg: float = 0.05):
        if cell_deg <= 0:
            raise ValueError("cell_deg must be positive")
        self.cell_deg = float(cell_deg)
        self._cells: dict = {}

    def _key(self, point: GeoPoint) -> tuple:
        return (
            math.floor(point.longitude / self.cell_deg),
            math.floor(point.latitude / self.cell_deg),
        )

    def insert(self, entity_id: str, point: GeoPoint) -> None:
        self._cells.setdefault(self._key(point), set()).add(entity_id)

    def remove(self, entity_id: str, point: GeoPoint) -> None:
        key = self._key(point)
        members = self._cells.get(key)
        if members is None:
            return
        members.discard(entity_id)
        if not members:
            del self._cells[key]

    def __len__(self):
        return len(self._cells)

    def candidates(self, region: Rectangle) -> set:
        """Ids in every cell the rectangle touches (superset of exact hits)."""
        x0 = math.floor(region.min_lon / self.cell_deg)
        x1 = math.floor(region.max_lon / self.cell_deg)
        y0 = math.floor(region.min_lat / self.cell_deg)
        y1 = math.floor(region.max_lat / self.cell_deg)
        span = (x1 - x0 + 1) * (y1 - y0 + 1)
        found: set = set()
        if span > len(self._cells):
            for (cx, cy), members in self._cells.items():
                if x0 <= cx <= x1 and y0 <= cy <= y1:
                    found.update(members)
        else:
            for cx in range(x0, x1 + 1):
                for cy in range(y0, y1 + 1):
                    members = self._cells.get((cx, cy))
                    if members:
                        found.update(members)
        return found


def _diff(old: Optional[Entity], new: Entity) -> dict:
    changed: dict = {}
    old_props = old.properties if old else {}
    for name in set(old_props) | set(new.properties):
        before = old_props.get(name)
        after = new.properties.get(name)
        if before != after:
            changed[name] = (
                None if before is None else before.plain_value(),
                None if after is None else after.plain_value(),
            )
    old_rels = old.relationships if old else {}
    for name in set(old_rels) | set(new.relationships):
        if old_rels.get(name) != new.relationships.get(name):
            changed[name] = (old_rels.get(name), new.relationships.get(name))
    if old is None or old.location != new.location:
        changed["location"] = (
            None if old is None else [old.location.longitude, old.location.latitude],
            [new.location.longitude, new.location.latitude],
        )
    if old is not None and old.type != new.type:
        changed["type"] = (old.type, new.type)
    return changed


def _order_key(entity: Entity, order: str):
    if order == "id":
        return ((0, 0.0, ""), entity.id)
    value = entity.property_value(order)
    if isinstance(value, bool):
        rank = (2, float(value), "")
    elif isinstance(value, (int, float)):
        rank = (0, float(value), "")
    elif isinstance(value, str):
        rank = (1, 0.0, value)
    else:  # missing or list-valued: sort last
        rank = (3, 0.0, "")
    return (rank, entity.id)


def _observed_in_window(entity: Entity, window: tuple) -> bool:
    start, end = parse_instant(window[0]), parse_instant(window[1])
    for pv in entity.properties.values():
        if pv.observed_at is None:
            continue
        stamp = parse_instant(pv.observed_at)
        if start <= stamp <= end:
            return True
    return False


class ContextBroker:
    """Thread-safe entity store with rectangular geo queries and a change feed."""

    #: below this size a linear scan beats the grid, skip the index
    LINEAR_SCAN_MAX = 256

    def __init__(self, *, grid_cell_deg: float = 0.05):
        self._entities: dict = {}
        self._index = GridIndex(grid_cell_deg)
        self._lock = threading.RLock()
        self._seq = 0
        self._writes = 0
        self._last_write: Optional[datetime] = None
        self._change_listeners: List[Callable[[ChangeRecord], None]] = []
        self._delete_listeners: List[Callable[[str], None]] = []

    def add_change_listener(self, listener: Callable[[ChangeRecord], None]) -> None:
        """Register a callback invoked under the broker lock for every
        effective write; it must only enqueue, never block."""
        with self._lock:
            self._change_listeners.append(listener)

    def add_delete_listener(self, listener: Callable[[str], None]) -> None:
        with self._lock:
            self._delete_listeners.append(listener)

    def upsert(self, entity: Entity) -> ChangeRecord:
        """Insert or replace an entity; returns the resulting change record."""
        if not isinstance(entity, Entity):
            raise TypeError("upsert takes an Entity")
        with self._lock:
            old = self._entities.get(entity.id)
            changed = _diff(old, entity)
            self._seq += 1
            self._writes += 1
            now = datetime.now(timezone.utc)
            self._last_write = now
            record = ChangeRecord(
                seq=self._seq,
                entity_id=entity.id,
                entity_type=entity.type,
                created=old is None,
                changed=changed,
                entity=entity,
                instant=now,
            )
            if changed:
                self._entities[entity.id] = entity
                if old is not None and old.location != entity.location:
                    self._index.remove(entity.id, old.location)
                    self._index.insert(entity.id, entity.location)
                elif old is None:
                    self._index.insert(entity.id, entity.location)
                for listener in self._change_listeners:
                    listener(record)
            return record

    def delete(self, entity_id: str) -> bool:
        """Remove an entity; True when it existed."""
        with self._lock:
            old = self._entities.pop(entity_id, None)
            if old is None:
                return False
            self._index.remove(entity_id, old.location)
            self._seq += 1
            self._writes += 1
            self._last_write = datetime.now(timezone.utc)
            for listener in self._delete_listeners:
                listener(entity_id)
            return True

    def get_entity(self, entity_id: str) -> Optional[Entity]:
        with self._lock:
            return self._entities.get(entity_id)

    def count(self) -> int:
        with self._lock:
            return len(self._entities)

    def stats(self) -> StoreStats:
        with self._lock:
            return StoreStats(
                entity_count=len(self._entities),
                last_write=self._last_write,
                index_cells=len(self._index),
                writes=self._writes,
            )

    def entities_snapshot(self) -> List[Entity]:
        """All entities ordered by id (a stable full-store view)."""
        with self._lock:
            return [self._entities[i] for i in sorted(self._entities)]

    def geo_query(self, query: GeoQuery) -> List[Entity]:
        """Entities inside the rectangle passing all filters, ordered, capped.

        Filtering and sorting run on an immutable snapshot taken under the
        lock, so concurrent writes never corrupt a result set.
        """
        if not isinstance(query, GeoQuery):
            raise TypeError("geo_query takes a GeoQuery")
        with self._lock:
            if len(self._entities) <= self.LINEAR_SCAN_MAX:
                candidates = list(self._entities.values())
            else:
                ids = self._index.candidates(query.region)
                candidates = [self._entities[i] for i in ids if i in self._entities]
        matched = []
        for entity in candidates:
            if not point_in_rectangle(entity.location, query.region):
                continue
            if query.type_filter is not None and entity.type != query.type_filter:
                continue
            if query.q is not None and not evaluate(query.q, entity):
                continue
            if query.observed_between is not None and not _observed_in_window(
                entity, query.observed_between
            ):
                continue
            matched.append(entity)
        matched.sort(key=lambda e: _order_key(e, query.order))
        return matched[: query.limit]

    def state_digest(self) -> str:
        """SHA-256 over the sorted normalized serialization of every entity.

        Two brokers holding the same logical state produce the same digest
        regardless of write order.
        """
        digest = hashlib.sha256()
        for entity in self.entities_snapshot():
            digest.update(serialize_entity(entity, "normalized").encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()
