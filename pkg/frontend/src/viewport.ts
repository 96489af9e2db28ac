import {
  Bbox,
  ConnectionStatus,
  normalizedBbox,
} from "./types.js";

/** Result-size presets offered in the toolbar. */
export const LIMIT_PRESETS: readonly number[] = [10, 100, 650];

/**
 * The single source of truth for what the map shows: the current box, the
 * result limit, and the liveness of the event stream. The stored box is
 * always valid (min <= max on both axes) and the limit is always >= 1.
 */
export class ViewportState {
  private _bbox: Bbox;
  private _limit: number;
  private _connection: ConnectionStatus = "connecting";
  private listeners: Array<(status: ConnectionStatus) => void> = [];

  constructor(initial: Bbox, limit = 100) {
    this._bbox = normalizedBbox(initial);
    this._limit = ViewportState.checkLimit(limit);
  }

  private static checkLimit(limit: number): number {
    if (!Number.isInteger(limit) || limit < 1) {
      throw new RangeError(`limit must be an integer >= 1, got ${limit}`);
    }
    return limit;
  }

  get bbox(): Bbox {
    return { ...this._bbox };
  }

  setBbox(b: Bbox): void {
    this._bbox = normalizedBbox(b);
  }

  get limit(): number {
    return this._limit;
  }

  setLimit(limit: number): void {
    this._limit = ViewportState.checkLimit(limit);
  }

  /** Shifts the box by a fraction of its own span (drag-style panning). */
  panBy(dLon: number, dLat: number): void {
    const b = this._bbox;
    this._bbox = {
      minLon: b.minLon + dLon,
      minLat: b.minLat + dLat,
      maxLon: b.maxLon + dLon,
      maxLat: b.maxLat + dLat,
    };
  }

  /** Scales the box around its center; factor < 1 zooms in, > 1 zooms out. */
  zoom(factor: number): void {
    if (!(factor > 0)) {
      throw new RangeError(`zoom factor must be > 0, got ${factor}`);
    }
    const b = this._bbox;
    const cLon = (b.minLon + b.maxLon) / 2;
    const cLat = (b.minLat + b.maxLat) / 2;
    const halfW = ((b.maxLon - b.minLon) / 2) * factor;
    const halfH = ((b.maxLat - b.minLat) / 2) * factor;
    this._bbox = {
      minLon: cLon - halfW,
      minLat: cLat - halfH,
      maxLon: cLon + halfW,
      maxLat: cLat + halfH,
    };
  }

  get connection(): ConnectionStatus {
    return this._connection;
  }

  setConnection(status: ConnectionStatus): void {
    if (status === this._connection) {
      return;
    }
    this._connection = status;
    for (const listener of this.listeners) {
      listener(status);
    }
  }

  onConnectionChange(listener: (status: ConnectionStatus) => void): void {
    this.listeners.push(listener);
  }
}
