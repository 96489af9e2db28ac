/** Shared value types for the map-chat client. */

/** Axis-aligned geographic box, always kept in min<=max order on both axes. */
export interface Bbox {
  minLon: number;
  minLat: number;
  maxLon: number;
  maxLat: number;
}

/** Returns a copy with the axes swapped into min<=max order. */
export function normalizedBbox(b: Bbox): Bbox {
  return {
    minLon: Math.min(b.minLon, b.maxLon),
    minLat: Math.min(b.minLat, b.maxLat),
    maxLon: Math.max(b.minLon, b.maxLon),
    maxLat: Math.max(b.minLat, b.maxLat),
  };
}

export function bboxEquals(a: Bbox, b: Bbox): boolean {
  return (
    a.minLon === b.minLon &&
    a.minLat === b.minLat &&
    a.maxLon === b.maxLon &&
    a.maxLat === b.maxLat
  );
}

/** Serializes a box as the comma-separated query-parameter form the API expects. */
export function bboxParam(b: Bbox): string {
  return [b.minLon, b.minLat, b.maxLon, b.maxLat].join(",");
}

/** Wire form used in the /ask request body. */
export function bboxArray(b: Bbox): [number, number, number, number] {
  return [b.minLon, b.minLat, b.maxLon, b.maxLat];
}

/** One point of interest as shown on the map. */
export interface Poi {
  id: string;
  title: string;
  lon: number;
  lat: number;
  price: number | string | null;
  occupancy: number | null;
  capacity: number | null;
  relevance: number | null;
}

/**
 * Builds a Poi from one simplified (key-values) entity document as returned by
 * `GET /ngsi-ld/v1/entities?options=keyValues`. Returns null when the document
 * lacks an id or a point location.
 */
export function poiFromKeyValues(doc: Record<string, unknown>): Poi | null {
  const id = doc["id"];
  if (typeof id !== "string" || id.length === 0) {
    return null;
  }
  const location = doc["location"] as
    | { type?: unknown; coordinates?: unknown }
    | undefined;
  if (
    location === undefined ||
    location === null ||
    location.type !== "Point" ||
    !Array.isArray(location.coordinates) ||
    location.coordinates.length < 2
  ) {
    return null;
  }
  const [lon, lat] = location.coordinates;
  if (typeof lon !== "number" || typeof lat !== "number") {
    return null;
  }
  const title = doc["title"];
  return {
    id,
    title: typeof title === "string" ? title : id,
    lon,
    lat,
    price: asNumberOrString(doc["price"]),
    occupancy: asNumber(doc["occupancy"]),
    capacity: asNumber(doc["capacity"]),
    relevance: asNumber(doc["relevance"]),
  };
}

function asNumber(value: unknown): number | null {
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}

function asNumberOrString(value: unknown): number | string | null {
  if (typeof value === "number" && Number.isFinite(value)) {
    return value;
  }
  if (typeof value === "string") {
    return value;
  }
  return null;
}

/** Per-stage timings reported by POST /ask. */
export interface AskTimings {
  broker_ms: number;
  llm_ms: number;
  total_ms: number;
}

/** Response body of POST /ask. */
export interface AskResponse {
  answer: string;
  entity_count: number;
  from_cache: boolean;
  timings: AskTimings;
}

/** Payload of one `notification` event on the live stream. */
export interface NotificationPayload {
  subscriptionId: string;
  emittedAt: string;
  entities: Record<string, unknown>[];
  changedAttributes: string[][];
}

export type ConnectionStatus = "connecting" | "live" | "offline";
