"""Entity model: validation, parsing, and the two serialization forms.

An entity document is one JSON object in the normalized NGSI-LD style: every
property is an object carrying ``"type": "Property"``, a ``value`` and
optional ``observedAt`` / ``unitCode`` metadata; relationships carry
``"type": "Relationship"`` and an ``object`` target; the location is a
GeoProperty holding a GeoJSON Point.  Bulk files are NDJSON streams of such
records, one per line.  The keyValues form flattens each attribute to its
bare value.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Union

DEFAULT_CONTEXT = "https://uri.etsi.org/ngsi-ld/v1/ngsi-ld-core-context.jsonld"

# properties that count things or money; negative values are always a data error
NON_NEGATIVE_PROPERTIES = frozenset({"price", "capacity", "occupancy", "relevance"})

# top-level members of an entity document that can never be attribute names
RESERVED_NAMES = frozenset({"id", "type", "@context", "location"})

URN_PATTERN = re.compile(r"^urn:[A-Za-z0-9][A-Za-z0-9-]{0,31}:\S+$")

Scalar = Union[int, float, str, bool]


class MalformedDocument(ValueError):
    """The document is not parseable JSON or not a JSON object."""


class SchemaViolation(ValueError):
    """The document parses but violates the entity schema."""


class RangeViolation(ValueError):
    """A value parses but falls outside its legal range."""


_FRACTION_RE = re.compile(r"\.(\d+)")


def parse_instant(text: str) -> datetime:
    """Parse an RFC 3339 instant into an aware UTC datetime.

    Accepts a trailing ``Z`` or an explicit offset; naive timestamps are
    taken as UTC.  Fractional seconds of any width are accepted (padded or
    truncated to microseconds).
    """
    if not isinstance(text, str) or not text.strip():
        raise SchemaViolation(f"not a timestamp: {text!r}")
    normalized = text.strip()
    if normalized.endswith(("Z", "z")):
        normalized = normalized[:-1] + "+00:00"
    normalized = _FRACTION_RE.sub(lambda m: "." + m.group(1)[:6].ljust(6, "0"), normalized, count=1)
    try:
        stamp = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise SchemaViolation(f"invalid instant {text!r}: {exc}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def canonical_instant(text: str) -> str:
    """Normalize an instant to UTC ``YYYY-MM-DDTHH:MM:SS[.ffffff]Z`` form.

    Canonicalizing is idempotent, so values survive a parse/serialize round
    trip unchanged.
    """
    stamp = parse_instant(text)
    base = stamp.strftime("%Y-%m-%dT%H:%M:%S")
    if stamp.microsecond:
        return f"{base}.{stamp.microsecond:06d}Z"
    return base + "Z"


def _check_scalar(value, where: str) -> None:
    if isinstance(value, bool):
        return
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            raise RangeViolation(f"{where}: non-finite number {value!r}")
        return
    if isinstance(value, str):
        return
    raise SchemaViolation(f"{where}: unsupported value type {type(value).__name__}")


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 point. Longitude in [-180, 180], latitude in [-90, 90]."""

    longitude: float
    latitude: float

    def __post_init__(self):
        for name, bound in (("longitude", 180.0), ("latitude", 90.0)):
            raw = getattr(self, name)
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise RangeViolation(f"{name} must be a number, got {raw!r}")
            value = float(raw)
            if not math.isfinite(value) or not -bound <= value <= bound:
                raise RangeViolation(f"{name} out of range: {raw!r}")
            object.__setattr__(self, name, value)

    def as_geojson(self) -> dict:
        return {"type": "Point", "coordinates": [self.longitude, self.latitude]}


@dataclass(frozen=True)
class PropertyValue:
    """One property: a scalar or list-of-scalars value plus optional metadata."""

    value: Union[Scalar, tuple]
    observed_at: Optional[str] = None
    unit_code: Optional[str] = None

    def __post_init__(self):
        value = self.value
        if isinstance(value, list):
            value = tuple(value)
            object.__setattr__(self, "value", value)
        if isinstance(value, tuple):
            for item in value:
                _check_scalar(item, "list element")
        else:
            _check_scalar(value, "value")
        if self.observed_at is not None:
            object.__setattr__(self, "observed_at", canonical_instant(self.observed_at))
        if self.unit_code is not None and (
            not isinstance(self.unit_code, str) or not self.unit_code
        ):
            raise SchemaViolation(f"unitCode must be a non-empty string, got {self.unit_code!r}")

    def plain_value(self):
        """The bare value with tuples restored to lists (for JSON output)."""
        if isinstance(self.value, tuple):
            return list(self.value)
        return self.value


def _check_non_negative(name: str, pv: PropertyValue) -> None:
    values = pv.value if isinstance(pv.value, tuple) else (pv.value,)
    for item in values:
        if isinstance(item, bool):
            continue
        if isinstance(item, (int, float)) and item < 0:
            raise RangeViolation(f"{name} must be non-negative, got {item!r}")


@dataclass(frozen=True)
class Entity:
    """An immutable entity snapshot.

    ``properties`` maps attribute name to :class:`PropertyValue`;
    ``relationships`` maps attribute name to a target entity URN.  Instances
    are value objects: updating an entity means building a new one.
    """

    id: str
    type: str
    location: GeoPoint
    properties: dict = field(default_factory=dict)
    relationships: dict = field(default_factory=dict)
    context: str = DEFAULT_CONTEXT

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise SchemaViolation("entity id must be a non-empty string")
        if not isinstance(self.type, str) or not self.type.strip():
            raise SchemaViolation("entity type must be a non-empty string")
        if not isinstance(self.location, GeoPoint):
            raise SchemaViolation("location must be a GeoPoint")
        if not isinstance(self.context, str) or not self.context:
            raise SchemaViolation("@context must be a non-empty string")
        seen = set()
        for name, pv in self.properties.items():
            if not isinstance(name, str) or not name:
                raise SchemaViolation(f"bad property name {name!r}")
            if name in RESERVED_NAMES:
                raise SchemaViolation(f"property name {name!r} is reserved")
            if not isinstance(pv, PropertyValue):
                raise SchemaViolation(f"property {name!r} must be a PropertyValue")
            if name in NON_NEGATIVE_PROPERTIES:
                _check_non_negative(name, pv)
            seen.add(name)
        for name, target in self.relationships.items():
            if not isinstance(name, str) or not name:
                raise SchemaViolation(f"bad relationship name {name!r}")
            if name in RESERVED_NAMES:
                raise SchemaViolation(f"relationship name {name!r} is reserved")
            if name in seen:
                raise SchemaViolation(f"attribute {name!r} is both property and relationship")
            if not isinstance(target, str) or not URN_PATTERN.match(target):
                raise SchemaViolation(f"relationship {name!r} target is not a URN: {target!r}")

    def property_value(self, name: str):
        """Bare value of a property, or None when absent."""
        pv = self.properties.get(name)
        return None if pv is None else pv.value

    def key_values(self) -> dict:
        """The flattened keyValues representation as a JSON-ready dict."""
        doc = {
            "id": self.id,
            "type": self.type,
            "@context": self.context,
            "location": self.location.as_geojson(),
        }
        for name in sorted(self.properties):
            doc[name] = self.properties[name].plain_value()
        for name in sorted(self.relationships):
            doc[name] = self.relationships[name]
        return doc

    def normalized(self) -> dict:
        """The normalized representation as a JSON-ready dict."""
        doc = {
            "id": self.id,
            "type": self.type,
            "@context": self.context,
            "location": {"type": "GeoProperty", "value": self.location.as_geojson()},
        }
        for name in sorted(self.properties):
            pv = self.properties[name]
            member = {"type": "Property", "value": pv.plain_value()}
            if pv.observed_at is not None:
                member["observedAt"] = pv.observed_at
            if pv.unit_code is not None:
                member["unitCode"] = pv.unit_code
            doc[name] = member
        for name in sorted(self.relationships):
            doc[name] = {"type": "Relationship", "object": self.relationships[name]}
        return doc


def _parse_location(member) -> GeoPoint:
    if not isinstance(member, dict):
        raise SchemaViolation("location must be a GeoProperty object")
    value = member.get("value", member)  # tolerate a bare GeoJSON point
    if not isinstance(value, dict) or value.get("type") != "Point":
        raise SchemaViolation("location value must be a GeoJSON Point")
    coords = value.get("coordinates")
    if not isinstance(coords, list) or len(coords) != 2:
        raise RangeViolation(f"Point coordinates must be [lon, lat], got {coords!r}")
    return GeoPoint(coords[0], coords[1])


def parse_entity(document: Union[str, bytes, dict]) -> Entity:
    """Parse one entity document (JSON text or an already-decoded dict).

    Raises :class:`MalformedDocument` for syntax problems,
    :class:`SchemaViolation` for structural ones, and
    :class:`RangeViolation` for out-of-range values.
    """
    if isinstance(document, (str, bytes)):
        try:
            raw = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}") from None
    else:
        raw = document
    if not isinstance(raw, dict):
        raise MalformedDocument(f"entity document must be a JSON object, got {type(raw).__name__}")

    entity_id = raw.get("id")
    entity_type = raw.get("type")
    if not isinstance(entity_id, str) or not entity_id:
        raise SchemaViolation("missing or invalid 'id'")
    if not isinstance(entity_type, str) or not entity_type:
        raise SchemaViolation("missing or invalid 'type'")
    if "location" not in raw:
        raise SchemaViolation(f"{entity_id}: missing 'location'")
    location = _parse_location(raw["location"])

    context = raw.get("@context", DEFAULT_CONTEXT)
    if isinstance(context, list):
        strings = [c for c in context if isinstance(c, str)]
        if not strings:
            raise SchemaViolation("@context list holds no context URL")
        context = strings[0]

    properties: dict = {}
    relationships: dict = {}
    for name, member in raw.items():
        if name in RESERVED_NAMES:
            continue
        if not isinstance(member, dict):
            # keyValues-style member: accept the bare value
            if isinstance(member, list) or isinstance(member, (str, int, float, bool)):
                properties[name] = PropertyValue(value=member)
                continue
            raise SchemaViolation(f"{entity_id}: attribute {name!r} has no recognisable shape")
        kind = member.get("type")
        if kind == "Property":
            if "value" not in member:
                raise SchemaViolation(f"{entity_id}: property {name!r} has no value")
            properties[name] = PropertyValue(
                value=member["value"],
                observed_at=member.get("observedAt"),
                unit_code=member.get("unitCode"),
            )
        elif kind == "Relationship":
            target = member.get("object")
            if not isinstance(target, str):
                raise SchemaViolation(f"{entity_id}: relationship {name!r} has no object")
            relationships[name] = target
        elif kind == "GeoProperty":
            raise SchemaViolation(f"{entity_id}: only 'location' may be a GeoProperty")
        else:
            raise SchemaViolation(f"{entity_id}: attribute {name!r} has unknown type {kind!r}")

    return Entity(
        id=entity_id,
        type=entity_type,
        location=location,
        properties=properties,
        relationships=relationships,
        context=context,
    )


def serialize_entity(entity: Entity, form: str = "normalized") -> str:
    """Serialize an entity to a single JSON line.

    Output is deterministic: fixed top-level member order, attributes sorted
    by name, compact separators. ``form`` is ``"normalized"`` or
    ``"keyValues"``.
    """
    if form == "normalized":
        doc = entity.normalized()
    elif form == "keyValues":
        doc = entity.key_values()
    else:
        raise ValueError(f"unknown serialization form {form!r}")
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"), allow_nan=False)
