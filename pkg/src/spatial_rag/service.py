"""HTTP facade: entity CRUD + geo queries, subscriptions, /ask, and SSE.

Error bodies are uniform: ``{"error": CODE, "detail": text}`` with a stable
machine-readable code.  Query results and notification payloads reuse the
entity serialization forms, so whatever a client writes it can read back
losslessly.
"""

from __future__ import annotations

import asyncio
import json
import queue
from pathlib import Path
from typing import List, Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .backends import BackendError, BackendTimeout, ChatBackend
from .broker import ContextBroker, GeoQuery, Rectangle
from .config import ServiceConfig
from .datasets import DatasetDescriptor, load_dataset
from .entities import (
    MalformedDocument,
    RangeViolation,
    SchemaViolation,
    parse_entity,
)
from .qfilter import InvalidFilter, TypeMismatch, parse_q
from .rag import LiveContextCache, PromptBudgetExceeded, RagRequest, ask
from .subscriptions import (
    EventStreamSink,
    HttpCallbackSink,
    InvalidSink,
    Subscription,
    SubscriptionManager,
    TopicBus,
)

ENTITIES_PATH = "/ngsi-ld/v1/entities"
SUBSCRIPTIONS_PATH = "/ngsi-ld/v1/subscriptions"


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def _parse_rectangle_params(bbox: Optional[str], georel: Optional[str],
                            geometry: Optional[str], coordinates: Optional[str]) -> Rectangle:
    """Accept either ``bbox=minlon,minlat,maxlon,maxlat`` or the triple
    ``georel=within&geometry=Polygon&coordinates=[[...ring...]]`` where the
    ring must be a closed axis-aligned rectangle."""
    if bbox:
        parts = [p for p in bbox.split(",") if p.strip()]
        if len(parts) != 4:
            raise ValueError("bbox needs exactly 4 numbers")
        values = [float(p) for p in parts]
        return Rectangle(values[0], values[1], values[2], values[3])
    if georel is None and coordinates is None:
        raise LookupError("no spatial constraint")
    if georel != "within":
        raise ValueError(f"unsupported georel {georel!r}; only 'within' is available")
    if geometry not in (None, "Polygon"):
        raise ValueError(f"unsupported geometry {geometry!r}; only 'Polygon' is available")
    ring = json.loads(coordinates or "null")
    if isinstance(ring, list) and len(ring) == 1 and isinstance(ring[0], list) \
            and ring[0] and isinstance(ring[0][0], list):
        ring = ring[0]  # GeoJSON Polygon nesting: [[...ring...]]
    if not isinstance(ring, list) or len(ring) < 4:
        raise ValueError("coordinates must hold a closed rectangle ring")
    points = []
    for pair in ring:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValueError("each ring vertex must be [lon, lat]")
        points.append((float(pair[0]), float(pair[1])))
    if points[0] != points[-1]:
        raise ValueError("ring must be closed (first vertex == last)")
    lons = sorted({p[0] for p in points})
    lats = sorted({p[1] for p in points})
    if len(lons) != 2 or len(lats) != 2 or len(points) != 5:
        raise ValueError("ring must trace an axis-aligned rectangle (4 corners)")
    corners = {(lon, lat) for lon in lons for lat in lats}
    if set(points[:-1]) != corners:
        raise ValueError("ring vertices must be the 4 rectangle corners")
    return Rectangle(lons[0], lats[0], lons[1], lats[1])


class AskRequestWire(BaseModel):
    question: str = Field(default="")
    bbox: List[float] = Field(default_factory=list)
    limit: Optional[int] = None


class SubscriptionWire(BaseModel):
    id: Optional[str] = None
    type: Optional[str] = None
    entity_type: Optional[str] = None
    watchedAttributes: Optional[List[str]] = None
    q: Optional[str] = None
    bbox: Optional[List[float]] = None
    throttling: Optional[float] = None
    notification: Optional[dict] = None


def create_app(broker: ContextBroker, manager: SubscriptionManager,
               backend: ChatBackend, config: ServiceConfig, *,
               bus: Optional[TopicBus] = None,
               cache: Optional[LiveContextCache] = None) -> FastAPI:
    app = FastAPI(title="spatial-rag", docs_url=None, redoc_url=None)
    bus = bus if bus is not None else TopicBus()

    # every committed change is mirrored onto the event-stream topic
    manager.subscribe(
        Subscription(id="urn:sub:event-stream", sink=EventStreamSink(bus, config.events_topic))
    )

    app.state.broker = broker
    app.state.manager = manager
    app.state.backend = backend
    app.state.config = config
    app.state.bus = bus
    app.state.cache = cache

    # -- health ------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "entities": broker.count()}

    # -- entities ----------------------------------------------------------

    @app.post(ENTITIES_PATH)
    async def create_entity(request: Request):
        body = await request.body()
        try:
            entity = parse_entity(body.decode("utf-8"))
        except MalformedDocument as exc:
            return _error(400, "MalformedDocument", str(exc))
        except SchemaViolation as exc:
            return _error(400, "SchemaViolation", str(exc))
        except RangeViolation as exc:
            return _error(400, "RangeViolation", str(exc))
        except UnicodeDecodeError as exc:
            return _error(400, "MalformedDocument", f"body is not UTF-8: {exc}")
        existed = broker.get_entity(entity.id) is not None
        broker.upsert(entity)
        if existed:
            # replaying a create over an existing id acts as a full replace
            return Response(status_code=204)
        return Response(
            status_code=201,
            headers={"Location": f"{ENTITIES_PATH}/{entity.id}"},
        )

    @app.get(ENTITIES_PATH)
    def query_entities(
        bbox: Optional[str] = None,
        georel: Optional[str] = None,
        geometry: Optional[str] = None,
        coordinates: Optional[str] = None,
        type: Optional[str] = None,
        q: Optional[str] = None,
        limit: Optional[int] = None,
        options: Optional[str] = None,
        order: Optional[str] = None,
        timerel: Optional[str] = None,
        timeAt: Optional[str] = None,
        endTimeAt: Optional[str] = None,
    ):
        try:
            region = _parse_rectangle_params(bbox, georel, geometry, coordinates)
        except LookupError:
            region = Rectangle(-180.0, -90.0, 180.0, 90.0)
        except (ValueError, json.JSONDecodeError) as exc:
            code = "InvalidGeoRel" if "georel" in str(exc) or "geometry" in str(exc) \
                else "InvalidCoordinates"
            return _error(400, code, str(exc))
        try:
            expr = parse_q(q) if q else None
        except InvalidFilter as exc:
            return _error(400, "InvalidFilter", str(exc))
        effective_limit = config.default_limit if limit is None else limit
        if effective_limit < 1:
            return _error(400, "InvalidLimit", "limit must be >= 1")
        if effective_limit > config.max_limit:
            return _error(
                413, "LimitExceeded",
                f"limit {effective_limit} exceeds the maximum {config.max_limit}",
            )
        observed_between = None
        if timerel is not None or timeAt is not None or endTimeAt is not None:
            if timerel != "between" or not timeAt or not endTimeAt:
                return _error(
                    400, "InvalidTemporalQuery",
                    "temporal queries need timerel=between&timeAt=...&endTimeAt=...",
                )
            observed_between = (timeAt, endTimeAt)
        try:
            query = GeoQuery(
                region=region,
                limit=effective_limit,
                type_filter=type,
                q=expr,
                observed_between=observed_between,
                order=order or "id",
            )
        except (ValueError, SchemaViolation) as exc:
            return _error(400, "InvalidTemporalQuery", str(exc))
        try:
            matched = broker.geo_query(query)
        except TypeMismatch as exc:
            return _error(400, "TypeMismatch", str(exc))
        form = "keyValues" if options == "keyValues" else "normalized"
        docs = [entity.key_values() if form == "keyValues" else entity.normalized()
                for entity in matched]
        return JSONResponse(
            content=docs,
            headers={"NGSILD-Results-Count": str(len(docs))},
        )

    @app.get(ENTITIES_PATH + "/{entity_id:path}")
    def get_entity(entity_id: str, options: Optional[str] = None):
        entity = broker.get_entity(entity_id)
        if entity is None:
            return _error(404, "EntityNotFound", f"no entity {entity_id!r}")
        doc = entity.key_values() if options == "keyValues" else entity.normalized()
        return JSONResponse(content=doc)

    @app.delete(ENTITIES_PATH + "/{entity_id:path}")
    def delete_entity(entity_id: str):
        if not broker.delete(entity_id):
            return _error(404, "EntityNotFound", f"no entity {entity_id!r}")
        return Response(status_code=204)

    # -- subscriptions -------------------------------------------------------

    @app.post(SUBSCRIPTIONS_PATH)
    def create_subscription(wire: SubscriptionWire):
        try:
            expr = parse_q(wire.q) if wire.q else None
        except InvalidFilter as exc:
            return _error(400, "InvalidFilter", str(exc))
        region = None
        if wire.bbox:
            if len(wire.bbox) != 4:
                return _error(400, "InvalidCoordinates", "bbox needs exactly 4 numbers")
            try:
                region = Rectangle(wire.bbox[0], wire.bbox[1], wire.bbox[2], wire.bbox[3])
            except ValueError as exc:
                return _error(400, "InvalidCoordinates", str(exc))
        notification = wire.notification or {}
        try:
            endpoint = (notification.get("endpoint") or {}).get("uri")
            topic = notification.get("topic")
            if endpoint:
                sink = HttpCallbackSink(endpoint)
            elif topic:
                sink = EventStreamSink(bus, topic)
            else:
                sink = EventStreamSink(bus, config.events_topic)
            subscription = Subscription(
                sink=sink,
                id=wire.id or "",
                entity_type=wire.entity_type or (wire.type if wire.type != "Subscription" else None),
                watched_attributes=tuple(wire.watchedAttributes or ()),
                region=region,
                q=expr,
                throttle_seconds=wire.throttling or 0.0,
            )
            subscription_id = manager.subscribe(subscription)
        except (InvalidSink, ValueError) as exc:
            return _error(400, "InvalidSink", str(exc))
        return JSONResponse(status_code=201, content={"id": subscription_id})

    @app.delete(SUBSCRIPTIONS_PATH + "/{subscription_id:path}")
    def delete_subscription(subscription_id: str):
        if not manager.unsubscribe(subscription_id):
            return _error(404, "SubscriptionNotFound", f"no subscription {subscription_id!r}")
        return Response(status_code=204)

    @app.get(SUBSCRIPTIONS_PATH)
    def list_subscriptions():
        return {"subscriptions": manager.list_ids()}

    # -- ask ------------------------------------------------------------------

    @app.post("/ask")
    def ask_question(wire: AskRequestWire):
        if not wire.question or not wire.question.strip():
            return _error(400, "EmptyQuestion", "question must be non-empty")
        if len(wire.bbox) != 4:
            return _error(400, "InvalidCoordinates",
                          "bbox must be [min_lon, min_lat, max_lon, max_lat]")
        try:
            region = Rectangle(wire.bbox[0], wire.bbox[1], wire.bbox[2], wire.bbox[3])
        except ValueError as exc:
            return _error(400, "InvalidCoordinates", str(exc))
        limit = config.default_limit if wire.limit is None else wire.limit
        if limit < 1:
            return _error(400, "InvalidLimit", "limit must be >= 1")
        if limit > config.max_limit:
            return _error(413, "LimitExceeded",
                          f"limit {limit} exceeds the maximum {config.max_limit}")
        request = RagRequest(question=wire.question, region=region, limit=limit)
        try:
            response = ask(request, broker, backend, cache=cache,
                           model=config.model, token_budget=config.token_budget)
        except PromptBudgetExceeded as exc:
            return _error(413, "PromptBudgetExceeded", str(exc))
        except BackendTimeout as exc:
            return _error(504, "BackendTimeout", str(exc))
        except BackendError as exc:
            return _error(502, "BackendError", str(exc))
        return {
            "answer": response.answer_text,
            "entity_count": response.entity_count,
            "from_cache": response.retrieval.from_cache,
            "timings": {
                "broker_ms": response.timings.broker_ms,
                "llm_ms": response.timings.llm_ms,
                "total_ms": response.timings.total_ms,
            },
        }

    # -- events (SSE) ---------------------------------------------------------

    @app.get("/events")
    async def events(request: Request, topic: Optional[str] = None):
        stream_topic = topic or config.events_topic
        subscriber = bus.attach(stream_topic)

        async def generate():
            try:
                yield "event: hello\ndata: {}\n\n"
                while True:
                    if await request.is_disconnected():
                        return
                    try:
                        item = await asyncio.to_thread(
                            subscriber.get, True, config.heartbeat_s
                        )
                    except queue.Empty:
                        yield "event: heartbeat\ndata: {}\n\n"
                        continue
                    payload = json.dumps(item.to_json(), ensure_ascii=False,
                                         separators=(",", ":"))
                    yield f"event: notification\ndata: {payload}\n\n"
            finally:
                bus.detach(stream_topic, subscriber)

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    # -- static UI -------------------------------------------------------------

    if config.ui_dir and Path(config.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def build_default_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    """Assemble broker, subscriptions, backend, optional dataset and cache."""
    from .config import build_backend, load_config

    config = config if config is not None else load_config()
    broker = ContextBroker()
    manager = SubscriptionManager(broker)
    if config.dataset_path:
        load_dataset(
            DatasetDescriptor(
                path=Path(config.dataset_path),
                format=config.dataset_format,
                expected_count=config.dataset_expected,
            ),
            broker,
        )
    cache = None
    if config.cache_bbox is not None:
        region = Rectangle(*config.cache_bbox)
        cache = LiveContextCache(broker, manager, region)
    backend = build_backend(config)
    return create_app(broker, manager, backend, config, cache=cache)
