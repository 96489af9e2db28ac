import json
import math
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_rag.entities import (
    DEFAULT_CONTEXT,
    Entity,
    GeoPoint,
    MalformedDocument,
    PropertyValue,
    RangeViolation,
    SchemaViolation,
    canonical_instant,
    parse_entity,
    parse_instant,
    serialize_entity,
)


def make_entity(**overrides) -> Entity:
    base = dict(
        id="urn:ngsi-ld:PoI:1",
        type="PointOfInterest",
        location=GeoPoint(-3.7, 40.4),
        properties={
            "title": PropertyValue(value="Plaza Mayor"),
            "occupancy": PropertyValue(value=12, observed_at="2025-04-10T09:00:00Z"),
            "price": PropertyValue(value=0, unit_code="EUR"),
        },
        relationships={"nearTo": "urn:ngsi-ld:PoI:2"},
    )
    base.update(overrides)
    return Entity(**base)


class TestGeoPoint:
    def test_rejects_out_of_range(self):
        with pytest.raises(RangeViolation):
            GeoPoint(181.0, 0.0)
        with pytest.raises(RangeViolation):
            GeoPoint(0.0, -90.5)
        with pytest.raises(RangeViolation):
            GeoPoint(float("nan"), 0.0)

    def test_accepts_boundaries(self):
        p = GeoPoint(-180, 90)
        assert p.longitude == -180.0 and p.latitude == 90.0


class TestInstants:
    def test_canonical_forms(self):
        assert canonical_instant("2025-04-10T09:00:00Z") == "2025-04-10T09:00:00Z"
        assert canonical_instant("2025-04-10T11:00:00+02:00") == "2025-04-10T09:00:00Z"
        assert canonical_instant("2025-04-10 09:00:00") == "2025-04-10T09:00:00Z"
        assert canonical_instant("2025-04-10T09:00:00.5Z") == "2025-04-10T09:00:00.500000Z"

    def test_canonicalization_is_idempotent(self):
        once = canonical_instant("2025-12-31T23:59:59.000001+01:00")
        assert canonical_instant(once) == once

    def test_rejects_garbage(self):
        with pytest.raises(SchemaViolation):
            canonical_instant("not a time")
        with pytest.raises(SchemaViolation):
            canonical_instant("")

    @given(
        st.datetimes(
            min_value=datetime(1971, 1, 1),
            max_value=datetime(2100, 1, 1),
            timezones=st.just(timezone.utc),
        )
    )
    def test_round_trip_preserves_instant(self, stamp):
        text = canonical_instant(stamp.isoformat())
        assert parse_instant(text) == stamp


class TestPropertyValue:
    def test_lists_become_tuples(self):
        pv = PropertyValue(value=["a", "b"])
        assert pv.value == ("a", "b")
        assert pv.plain_value() == ["a", "b"]

    def test_rejects_nested_structures(self):
        with pytest.raises(SchemaViolation):
            PropertyValue(value={"nested": 1})
        with pytest.raises(SchemaViolation):
            PropertyValue(value=[[1, 2]])

    def test_rejects_non_finite(self):
        with pytest.raises(RangeViolation):
            PropertyValue(value=float("inf"))

    def test_observed_at_normalized_at_construction(self):
        pv = PropertyValue(value=1, observed_at="2025-04-10T11:00:00+02:00")
        assert pv.observed_at == "2025-04-10T09:00:00Z"


class TestEntityValidation:
    def test_missing_id_or_type(self):
        with pytest.raises(SchemaViolation):
            make_entity(id="")
        with pytest.raises(SchemaViolation):
            make_entity(type=" ")

    def test_negative_counts_rejected(self):
        for name in ("price", "capacity", "occupancy", "relevance"):
            with pytest.raises(RangeViolation):
                make_entity(properties={name: PropertyValue(value=-1)})

    def test_negative_allowed_for_other_properties(self):
        entity = make_entity(properties={"temperature": PropertyValue(value=-4)})
        assert entity.property_value("temperature") == -4

    def test_reserved_attribute_names_rejected(self):
        with pytest.raises(SchemaViolation):
            make_entity(properties={"location": PropertyValue(value=1)})
        with pytest.raises(SchemaViolation):
            make_entity(relationships={"id": "urn:x:1"})

    def test_property_relationship_name_clash(self):
        with pytest.raises(SchemaViolation):
            make_entity(
                properties={"nearTo": PropertyValue(value="x")},
                relationships={"nearTo": "urn:x:1"},
            )

    def test_relationship_target_must_be_urn(self):
        with pytest.raises(SchemaViolation):
            make_entity(relationships={"nearTo": "not-a-urn"})


class TestParsing:
    def test_malformed_json(self):
        with pytest.raises(MalformedDocument):
            parse_entity("{nope")
        with pytest.raises(MalformedDocument):
            parse_entity("[1,2]")

    def test_missing_location(self):
        with pytest.raises(SchemaViolation):
            parse_entity(json.dumps({"id": "urn:x:1", "type": "T"}))

    def test_bad_coordinates_is_range_violation(self):
        doc = {
            "id": "urn:x:1",
            "type": "T",
            "location": {"type": "GeoProperty",
                         "value": {"type": "Point", "coordinates": [220.0, 0.0]}},
        }
        with pytest.raises(RangeViolation):
            parse_entity(json.dumps(doc))

    def test_unknown_attribute_type(self):
        doc = {
            "id": "urn:x:1",
            "type": "T",
            "location": {"type": "GeoProperty",
                         "value": {"type": "Point", "coordinates": [0.0, 0.0]}},
            "thing": {"type": "Widget", "value": 1},
        }
        with pytest.raises(SchemaViolation):
            parse_entity(json.dumps(doc))

    def test_accepts_bare_keyvalues_member(self):
        doc = {
            "id": "urn:x:1",
            "type": "T",
            "location": {"type": "Point", "coordinates": [1.0, 2.0]},
            "title": "Somewhere",
        }
        entity = parse_entity(json.dumps(doc))
        assert entity.property_value("title") == "Somewhere"
        assert entity.context == DEFAULT_CONTEXT

    def test_int_float_distinction_survives(self):
        entity = make_entity(properties={"a": PropertyValue(value=18),
                                         "b": PropertyValue(value=18.0)})
        again = parse_entity(serialize_entity(entity))
        assert isinstance(again.property_value("a"), int)
        assert isinstance(again.property_value("b"), float)


class TestSerialization:
    def test_normalized_round_trip_exact(self):
        entity = make_entity()
        line = serialize_entity(entity, "normalized")
        assert parse_entity(line) == entity
        # serialization is canonical: round-tripping the text is a fixpoint
        assert serialize_entity(parse_entity(line), "normalized") == line

    def test_key_values_flattens(self):
        doc = json.loads(serialize_entity(make_entity(), "keyValues"))
        assert doc["title"] == "Plaza Mayor"
        assert doc["occupancy"] == 12
        assert doc["nearTo"] == "urn:ngsi-ld:PoI:2"
        assert doc["location"] == {"type": "Point", "coordinates": [-3.7, 40.4]}

    def test_unknown_form_rejected(self):
        with pytest.raises(ValueError):
            serialize_entity(make_entity(), "fancy")

    def test_attribute_order_is_deterministic(self):
        a = make_entity()
        b = Entity(
            id=a.id, type=a.type, location=a.location,
            properties=dict(reversed(list(a.properties.items()))),
            relationships=dict(a.relationships),
        )
        assert serialize_entity(a) == serialize_entity(b)


_safe_names = st.sampled_from(["rating", "note", "level", "tag", "title", "a1", "zz"])
_scalars = st.one_of(
    st.integers(min_value=-10**9, max_value=10**9),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.text(max_size=20),
    st.booleans(),
)
_values = st.one_of(_scalars, st.lists(_scalars, max_size=4))
_instants = st.datetimes(
    min_value=datetime(1971, 1, 1),
    max_value=datetime(2100, 1, 1),
    timezones=st.just(timezone.utc),
).map(lambda d: d.isoformat())


@st.composite
def entities(draw):
    properties = {}
    for name in draw(st.lists(_safe_names, unique=True, max_size=5)):
        properties[name] = PropertyValue(
            value=draw(_values),
            observed_at=draw(st.none() | _instants),
            unit_code=draw(st.none() | st.sampled_from(["EUR", "PCT"])),
        )
    relationships = {}
    if draw(st.booleans()):
        relationships["nearTo"] = "urn:ngsi-ld:PoI:2"
    return Entity(
        id="urn:ngsi-ld:PoI:" + draw(st.text("abcdef123", min_size=1, max_size=6)),
        type=draw(st.sampled_from(["PointOfInterest", "Sensor"])),
        location=GeoPoint(
            draw(st.floats(min_value=-180, max_value=180, allow_nan=False)),
            draw(st.floats(min_value=-90, max_value=90, allow_nan=False)),
        ),
        properties=properties,
        relationships=relationships,
    )


class TestRoundTripProperty:
    @settings(max_examples=150, deadline=None)
    @given(entities())
    def test_parse_serialize_round_trip(self, entity):
        for form in ("normalized",):
            line = serialize_entity(entity, form)
            assert parse_entity(line) == entity

    @settings(max_examples=50, deadline=None)
    @given(entities())
    def test_key_values_holds_every_attribute(self, entity):
        doc = json.loads(serialize_entity(entity, "keyValues"))
        for name, pv in entity.properties.items():
            assert doc[name] == pv.plain_value()
        for name, target in entity.relationships.items():
            assert doc[name] == target
