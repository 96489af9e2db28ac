import { Poi, poiFromKeyValues } from "./types.js";

/**
 * Holds exactly the points currently rendered on the map. The set is replaced
 * wholesale on every viewport refresh; live events may update members in
 * place but never add or remove them (membership is decided by the server
 * query, not by the client).
 */
export class MarkerStore {
  private byId: Map<string, Poi> = new Map();
  private listeners: Array<(poi: Poi) => void> = [];

  /** Replaces the rendered set with the latest query result. */
  replaceAll(pois: Poi[]): void {
    this.byId = new Map(pois.map((p) => [p.id, p]));
  }

  get(id: string): Poi | undefined {
    return this.byId.get(id);
  }

  all(): Poi[] {
    return [...this.byId.values()];
  }

  get size(): number {
    return this.byId.size;
  }

  /**
   * Applies one entity snapshot from a live notification. Snapshots for
   * entities that are not currently rendered are ignored: they are outside
   * the viewport (or beyond the limit) and must not become visible until the
   * next refresh brings them in.
   */
  applyChange(doc: Record<string, unknown>): "updated" | "ignored" {
    const poi = poiFromKeyValues(doc);
    if (poi === null || !this.byId.has(poi.id)) {
      return "ignored";
    }
    this.byId.set(poi.id, poi);
    for (const listener of this.listeners) {
      listener(poi);
    }
    return "updated";
  }

  /** Registers a callback fired whenever a rendered marker changes in place. */
  onChange(listener: (poi: Poi) => void): void {
    this.listeners.push(listener);
  }
}

/** Text shown in a marker popup: title, price, occupancy over capacity, relevance. */
export function popupText(poi: Poi): string {
  const parts: string[] = [poi.title];
  if (poi.price !== null) {
    parts.push(`price: ${poi.price}`);
  }
  if (poi.occupancy !== null && poi.capacity !== null && poi.capacity > 0) {
    const pct = Math.round((poi.occupancy / poi.capacity) * 100);
    parts.push(`occupancy: ${poi.occupancy}/${poi.capacity} (${pct}%)`);
  } else if (poi.occupancy !== null) {
    parts.push(`occupancy: ${poi.occupancy}`);
  }
  if (poi.relevance !== null) {
    parts.push(`relevance: ${poi.relevance}`);
  }
  return parts.join(" · ");
}
