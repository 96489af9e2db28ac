"""Scripted live-update simulation against a broker.

A script declares mutations (glob pattern over entity ids, target attribute,
value source) plus a seed, tick interval, and tick count.  Each tick the
simulator draws new values and writes them through the broker, stamping
``observedAt`` from a virtual clock (epoch + tick * interval) so runs are
reproducible: same dataset + script + seed means identical mutation logs and
an identical final broker digest.

Two write modes: ``push`` upserts each mutation the moment it is drawn;
``poll`` batches a tick's mutations and writes them together at tick end,
coalescing same entity+attribute draws to the last value (mirroring an
upstream system that is only sampled once per interval).
"""

from __future__ import annotations

import fnmatch
import json
import random
import time
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import List, Optional

from .broker import ContextBroker
from .entities import Entity, PropertyValue

VIRTUAL_EPOCH = datetime(2025, 4, 10, 12, 0, 0, tzinfo=timezone.utc)


class UnknownEntityPatternWarning(UserWarning):
    """A mutation pattern matched no entity in the broker."""


@dataclass(frozen=True)
class Mutation:
    """One mutation rule: which entities, which attribute, which values.

    Exactly one of ``sequence`` (explicit per-tick values, cycled) or
    ``distribution`` (a dict like ``{"kind": "uniform_int", "low": 0,
    "high": 500}``, ``{"kind": "uniform", ...}`` or ``{"kind": "choice",
    "values": [...]}``) must be given.
    """

    pattern: str
    attribute: str
    sequence: Optional[tuple] = None
    distribution: Optional[dict] = None

    def __post_init__(self):
        if not self.pattern or not self.attribute:
            raise ValueError("mutation needs a pattern and an attribute")
        if (self.sequence is None) == (self.distribution is None):
            raise ValueError("exactly one of sequence/distribution must be set")
        if self.sequence is not None:
            object.__setattr__(self, "sequence", tuple(self.sequence))
            if not self.sequence:
                raise ValueError("sequence must not be empty")
        if self.distribution is not None:
            kind = self.distribution.get("kind")
            if kind not in ("uniform_int", "uniform", "choice"):
                raise ValueError(f"unknown distribution kind {kind!r}")
            if kind == "choice" and not self.distribution.get("values"):
                raise ValueError("choice distribution needs values")

    def draw(self, tick: int, rng: random.Random):
        if self.sequence is not None:
            return self.sequence[tick % len(self.sequence)]
        kind = self.distribution["kind"]
        if kind == "uniform_int":
            return rng.randint(self.distribution["low"], self.distribution["high"])
        if kind == "uniform":
            return rng.uniform(self.distribution["low"], self.distribution["high"])
        return rng.choice(list(self.distribution["values"]))


@dataclass(frozen=True)
class SimulationScript:
    seed: int
    tick_interval_s: float
    ticks: int
    mutations: tuple
    mode: str = "push"

    def __post_init__(self):
        if self.tick_interval_s <= 0:
            raise ValueError("tick_interval_s must be positive")
        if self.ticks < 1:
            raise ValueError("ticks must be >= 1")
        if self.mode not in ("push", "poll"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "mutations", tuple(self.mutations))
        if not self.mutations:
            raise ValueError("script needs at least one mutation")

    @classmethod
    def from_file(cls, path: Path) -> "SimulationScript":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        mutations = [
            Mutation(
                pattern=m["pattern"],
                attribute=m["attribute"],
                sequence=tuple(m["sequence"]) if "sequence" in m else None,
                distribution=m.get("distribution"),
            )
            for m in raw.get("mutations", [])
        ]
        return cls(
            seed=raw.get("seed", 0),
            tick_interval_s=raw.get("tick_interval_s", 1.0),
            ticks=raw.get("ticks", 1),
            mutations=tuple(mutations),
            mode=raw.get("mode", "push"),
        )


@dataclass(frozen=True)
class MutationEvent:
    """One applied mutation, enough to replay it exactly."""

    tick: int
    entity_id: str
    attribute: str
    old: object
    new: object
    observed_at: str

    def to_json(self) -> dict:
        return {
            "tick": self.tick,
            "entity_id": self.entity_id,
            "attribute": self.attribute,
            "old": self.old,
            "new": self.new,
            "observed_at": self.observed_at,
        }


def _tick_instant(tick: int, interval_s: float) -> str:
    stamp = VIRTUAL_EPOCH + timedelta(seconds=tick * interval_s)
    base = stamp.strftime("%Y-%m-%dT%H:%M:%S")
    if stamp.microsecond:
        return f"{base}.{stamp.microsecond:06d}Z"
    return base + "Z"


def _clamped(attribute: str, value, entity: Entity):
    # occupancy can never exceed capacity or go negative
    if attribute == "occupancy" and isinstance(value, (int, float)) and not isinstance(value, bool):
        capacity = entity.property_value("capacity")
        upper = capacity if isinstance(capacity, (int, float)) and not isinstance(capacity, bool) else None
        value = max(0, value)
        if upper is not None:
            value = min(value, upper)
    return value


def _apply(broker: ContextBroker, entity_id: str, attribute: str, value, observed_at: str):
    """Write one attribute; returns ``(old_value, applied_value)``."""
    entity = broker.get_entity(entity_id)
    if entity is None:
        return None, None
    old_pv = entity.properties.get(attribute)
    value = _clamped(attribute, value, entity)
    new_pv = PropertyValue(
        value=value,
        observed_at=observed_at,
        unit_code=old_pv.unit_code if old_pv else None,
    )
    properties = dict(entity.properties)
    properties[attribute] = new_pv
    broker.upsert(
        Entity(
            id=entity.id,
            type=entity.type,
            location=entity.location,
            properties=properties,
            relationships=dict(entity.relationships),
            context=entity.context,
        )
    )
    return (None if old_pv is None else old_pv.plain_value()), new_pv.plain_value()


def run_simulation(script: SimulationScript, broker: ContextBroker,
                   *, realtime: bool = False) -> List[MutationEvent]:
    """Run the script; returns the mutation log (one event per applied write).

    ``realtime=True`` sleeps ``tick_interval_s`` between ticks; the default
    runs the virtual clock as fast as possible.
    """
    rng = random.Random(script.seed)
    ids = [entity.id for entity in broker.entities_snapshot()]
    log: List[MutationEvent] = []
    warned: set = set()

    for tick in range(script.ticks):
        observed_at = _tick_instant(tick, script.tick_interval_s)
        batch: dict = {}
        for mutation in script.mutations:
            matched = [eid for eid in ids if fnmatch.fnmatchcase(eid, mutation.pattern)]
            if not matched:
                if mutation.pattern not in warned:
                    warnings.warn(
                        f"pattern {mutation.pattern!r} matched no entity",
                        UnknownEntityPatternWarning,
                        stacklevel=2,
                    )
                    warned.add(mutation.pattern)
                continue
            for entity_id in matched:
                value = mutation.draw(tick, rng)
                if script.mode == "push":
                    old, applied = _apply(broker, entity_id, mutation.attribute, value, observed_at)
                    log.append(MutationEvent(tick, entity_id, mutation.attribute, old, applied, observed_at))
                else:
                    batch[(entity_id, mutation.attribute)] = value
        if script.mode == "poll":
            for (entity_id, attribute), value in sorted(batch.items()):
                old, applied = _apply(broker, entity_id, attribute, value, observed_at)
                log.append(MutationEvent(tick, entity_id, attribute, old, applied, observed_at))
        if realtime and tick + 1 < script.ticks:
            time.sleep(script.tick_interval_s)
    return log


def replay_log(events: List[MutationEvent], broker: ContextBroker) -> int:
    """Re-apply a mutation log; returns the number of applied events.

    Replaying a log against a broker seeded with the same initial dataset
    reproduces the original final state digest.
    """
    applied = 0
    for event in events:
        entity = broker.get_entity(event.entity_id)
        if entity is None:
            continue
        _apply(broker, event.entity_id, event.attribute, event.new, event.observed_at)
        applied += 1
    return applied


def write_log(events: List[MutationEvent], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(event.to_json(), ensure_ascii=False, separators=(",", ":")) for event in events]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8", newline="\n")
    return path


def read_log(path: Path) -> List[MutationEvent]:
    events = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        events.append(
            MutationEvent(
                tick=raw["tick"],
                entity_id=raw["entity_id"],
                attribute=raw["attribute"],
                old=raw.get("old"),
                new=raw["new"],
                observed_at=raw["observed_at"],
            )
        )
    return events
