#!/usr/bin/env python3
"""Rebuild the bundled 10-entity benchmark fixture from its source table.

Writes the same bytes to the external file (``fixtures/madrid_limit10``) and
the package resource copy, so the CLI works from an installed package without
the repo checkout.  Coordinates are plausible in-town positions inside the
default benchmark rectangle; the suites only depend on them being inside it.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from spatial_rag.entities import Entity, GeoPoint, PropertyValue, serialize_entity

OBSERVED_AT = "2025-04-10T09:00:00Z"

# id suffix, title, category, lon, lat, price, capacity, occupancy, hours, description
ROWS = [
    (23, "Hospital Clínico San Carlos", "hospital", -3.7176, 40.4406, 0, 1679, 1067,
     "24h", "Large public teaching hospital next to the university campus."),
    (170, "Restaurante StreetXO", "restaurant", -3.6867, 40.4252, "60-80€", 578, 523,
     "13:00-23:30", "Avant-garde street-food restaurant with a long queue at peak hours."),
    (213, "Iglesia de Santa María de La Almudena", "church", -3.7143, 40.4156, 0, 741, 707,
     "09:00-20:30", "Cathedral church beside the Royal Palace."),
    (230, "Juzgados de Plaza de Castilla", "public-building", -3.6882, 40.4662, 0, 1563, 1437,
     "08:00-15:00", "Courthouse complex at the north end of the Castellana axis."),
    (240, "Restaurante El Club Allard", "restaurant", -3.7146, 40.4254, 0, 702, 585,
     "13:30-22:30", "Tasting-menu restaurant inside a modernist building."),
    (246, "Restaurante Sobrino de Botín", "restaurant", -3.7076, 40.4142, 0, 702, 391,
     "13:00-23:00", "Historic wood-oven restaurant near Plaza Mayor."),
    (258, "Hospital Universitario 12 de Octubre", "hospital", -3.6950, 40.3757, 0, 1679, 393,
     "24h", "Major public hospital on the southern ring."),
    (287, "Universidad Politécnica de Madrid (UPM)", "university", -3.7186, 40.4416, 0, 1760, 398,
     "08:00-21:00", "Engineering university spread over the Moncloa campus."),
    (381, "Restaurante Botín", "restaurant", -3.7074, 40.4140, 18, 702, 507,
     "13:00-23:00", "Castilian roast house serving set menus."),
    (422, "El Retiro", "park", -3.6833, 40.4152, 0, 1568, 109,
     "06:00-24:00", "Central city park with a boating lake and rose garden."),
]

RELATIONSHIPS = {
    246: {"nearTo": "urn:ngsi-ld:PoI:381"},
    23: {"nearTo": "urn:ngsi-ld:PoI:287"},
}


def build_entities():
    entities = []
    for suffix, title, category, lon, lat, price, capacity, occupancy, hours, desc in ROWS:
        properties = {
            "title": PropertyValue(value=title),
            "description": PropertyValue(value=desc),
            "category": PropertyValue(value=[category]),
            "relevance": PropertyValue(value=1),
            "capacity": PropertyValue(value=capacity),
            "occupancy": PropertyValue(value=occupancy, observed_at=OBSERVED_AT),
            "openingHours": PropertyValue(value=hours),
        }
        if isinstance(price, str):
            properties["price"] = PropertyValue(value=price)
        else:
            properties["price"] = PropertyValue(value=price, unit_code="EUR")
        entities.append(
            Entity(
                id=f"urn:ngsi-ld:PoI:{suffix}",
                type="PointOfInterest",
                location=GeoPoint(lon, lat),
                properties=properties,
                relationships=dict(RELATIONSHIPS.get(suffix, {})),
            )
        )
    return entities


def main() -> int:
    lines = [serialize_entity(entity, "normalized") for entity in build_entities()]
    payload = "\n".join(lines) + "\n"
    targets = [
        REPO / "fixtures" / "madrid_limit10",
        REPO / "src" / "spatial_rag" / "resources" / "madrid_limit10.ndjson",
    ]
    for target in targets:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(payload, encoding="utf-8", newline="\n")
        print(f"wrote {len(lines)} entities to {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
