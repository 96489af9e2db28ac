"""Dataset loading and deterministic synthetic corpus generation.

Two on-disk formats load into a broker:

* ``entity-records``: NDJSON, one normalized entity document per line;
* ``tabular``: CSV with a JSON sidecar mapping columns to attributes.

Loading is tolerant per record: a broken line is collected with its line
number and the rest of the file still loads.  An expected-count mismatch
raises :class:`CountMismatch` after loading whatever was loadable.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

from .broker import ContextBroker, Rectangle
from .entities import (
    Entity,
    GeoPoint,
    MalformedDocument,
    PropertyValue,
    RangeViolation,
    SchemaViolation,
    parse_entity,
    serialize_entity,
)

# the metropolitan rectangle every benchmark run retrieves against
MADRID_REGION = Rectangle(-3.80, 40.35, -3.60, 40.50)


class CountMismatch(RuntimeError):
    """The dataset did not hold the expected number of loadable records."""


@dataclass(frozen=True)
class DatasetDescriptor:
    """Where a dataset lives and how to read it."""

    path: Path
    format: str = "entity-records"
    expected_count: Optional[int] = None
    mapping_path: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.format not in ("entity-records", "tabular"):
            raise ValueError(f"unknown dataset format {self.format!r}")
        if self.format == "tabular" and self.mapping_path is None:
            raise ValueError("tabular datasets need a mapping_path")
        if self.mapping_path is not None:
            object.__setattr__(self, "mapping_path", Path(self.mapping_path))


@dataclass
class LoadResult:
    loaded: int = 0
    record_errors: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.record_errors


def iter_entity_records(path: Path):
    """Yield ``(line_number, entity_or_error)`` for each non-blank NDJSON line."""
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, parse_entity(line)
            except (MalformedDocument, SchemaViolation, RangeViolation) as exc:
                yield lineno, exc


def _tabular_entities(path: Path, mapping_path: Path):
    mapping = json.loads(Path(mapping_path).read_text(encoding="utf-8"))
    entity_type = mapping.get("type", "PointOfInterest")
    id_column = mapping["id_column"]
    id_prefix = mapping.get("id_prefix", "")
    lon_column = mapping["longitude_column"]
    lat_column = mapping["latitude_column"]
    columns = mapping.get("columns", {})

    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        for lineno, row in enumerate(reader, start=2):  # header is line 1
            try:
                properties = {}
                for column, spec in columns.items():
                    raw = row.get(column)
                    if raw is None or raw == "":
                        continue
                    kind = spec.get("kind", "string")
                    if kind == "number":
                        value = float(raw) if "." in raw else int(raw)
                    elif kind == "list":
                        value = [part.strip() for part in raw.split(";") if part.strip()]
                    else:
                        value = raw
                    properties[spec["property"]] = PropertyValue(
                        value=value,
                        observed_at=spec.get("observed_at"),
                        unit_code=spec.get("unit_code"),
                    )
                entity = Entity(
                    id=id_prefix + row[id_column],
                    type=entity_type,
                    location=GeoPoint(float(row[lon_column]), float(row[lat_column])),
                    properties=properties,
                )
                yield lineno, entity
            except (KeyError, ValueError, SchemaViolation, RangeViolation) as exc:
                yield lineno, SchemaViolation(f"row {lineno}: {exc}")


def load_dataset(descriptor: DatasetDescriptor, broker: ContextBroker) -> LoadResult:
    """Load a dataset into the broker, reporting per-record failures."""
    result = LoadResult()
    if descriptor.format == "entity-records":
        records = iter_entity_records(descriptor.path)
    else:
        records = _tabular_entities(descriptor.path, descriptor.mapping_path)
    for lineno, item in records:
        if isinstance(item, Exception):
            result.record_errors.append((lineno, str(item)))
            continue
        broker.upsert(item)
        result.loaded += 1
    if descriptor.expected_count is not None and result.loaded != descriptor.expected_count:
        raise CountMismatch(
            f"{descriptor.path}: expected {descriptor.expected_count} records, "
            f"loaded {result.loaded} ({len(result.record_errors)} bad)"
        )
    return result


_CATEGORIES = ("museum", "restaurant", "park", "viewpoint", "church", "market")
_HOURS = ("09:00-18:00", "10:00-20:00", "08:00-22:00", "24h")

#: two well-known venues planted at fixed positions so name-lookup questions
#: have a live answer once the corpus is at least city-sized
_LANDMARK_SLOTS = {37: ("Museo del Prado", "museum"), 64: ("Estadio Santiago Bernabéu", "sports")}
_LANDMARK_MIN_COUNT = 100


def synthetic_entities(count: int, seed: int, region: Rectangle = MADRID_REGION,
                       *, include_landmarks: bool = True) -> List[Entity]:
    """Deterministic synthetic PoI corpus.

    Same ``(count, seed, region)`` always yields the same entities.  Draw
    order per entity is fixed (position, relevance, capacity, occupancy,
    price branch, category branch, hours, observation offset) so adding new
    attributes later cannot silently reshuffle existing corpora.

    Distributions: relevance 1/2/3 with weights .35/.40/.25 (1 is the top
    tier); capacity uniform 50..2000; occupancy uniform 0..capacity; price 0
    with probability .90, an integer 1..100 with .07, else a free-text range
    like ``"60-80€"``; one category, with a rare standalone ``sports`` tag.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    width = max(4, len(str(count)))
    entities = []
    for index in range(count):
        lon = rng.uniform(region.min_lon, region.max_lon)
        lat = rng.uniform(region.min_lat, region.max_lat)
        roll = rng.random()
        relevance = 1 if roll < 0.35 else (2 if roll < 0.75 else 3)
        capacity = rng.randint(50, 2000)
        occupancy = rng.randint(0, capacity)
        price_roll = rng.random()
        if price_roll < 0.90:
            price: object = 0
        elif price_roll < 0.97:
            price = rng.randint(1, 100)
        else:
            low = rng.randrange(20, 80, 10)
            price = f"{low}-{low + 20}€"
        category_roll = rng.random()
        category = "sports" if category_roll < 0.004 else rng.choice(_CATEGORIES)
        hours = rng.choice(_HOURS)
        observed_offset = rng.randint(0, 3600)

        number = index + 1
        title = f"Synthetic PoI {number:0{width}d}"
        if include_landmarks and count >= _LANDMARK_MIN_COUNT and index in _LANDMARK_SLOTS:
            title, category = _LANDMARK_SLOTS[index]

        hour = 8 + observed_offset // 3600
        minute = (observed_offset % 3600) // 60
        second = observed_offset % 60
        observed_at = f"2025-04-10T{hour:02d}:{minute:02d}:{second:02d}Z"

        properties = {
            "title": PropertyValue(value=title),
            "description": PropertyValue(
                value=f"A synthetic {category} point of interest for benchmark runs."
            ),
            "category": PropertyValue(value=[category]),
            "relevance": PropertyValue(value=relevance),
            "capacity": PropertyValue(value=capacity),
            "occupancy": PropertyValue(value=occupancy, observed_at=observed_at),
            "openingHours": PropertyValue(value=hours),
        }
        if isinstance(price, str):
            properties["price"] = PropertyValue(value=price)
        else:
            properties["price"] = PropertyValue(value=price, unit_code="EUR")

        entities.append(
            Entity(
                id=f"urn:ngsi-ld:PoI:{1000 + index}",
                type="PointOfInterest",
                location=GeoPoint(lon, lat),
                properties=properties,
            )
        )
    return entities


def generate_synthetic(count: int, seed: int, out_path: Path,
                       region: Rectangle = MADRID_REGION,
                       *, include_landmarks: bool = True) -> Path:
    """Write a synthetic corpus as NDJSON; byte-identical for equal inputs."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        serialize_entity(entity, "normalized")
        for entity in synthetic_entities(count, seed, region, include_landmarks=include_landmarks)
    ]
    payload = "\n".join(lines) + ("\n" if lines else "")
    out_path.write_text(payload, encoding="utf-8", newline="\n")
    return out_path
