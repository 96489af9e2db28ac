import { ConnectionStatus, NotificationPayload } from "./types.js";

/** Minimal slice of the EventSource surface, injectable for tests. */
export interface EventSourceLike {
  addEventListener(type: string, listener: (event: { data: string }) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface LiveEventsOptions {
  /** Delay before the first reconnect attempt after a drop. */
  baseBackoffMs?: number;
  /** Upper bound for the doubling backoff. */
  maxBackoffMs?: number;
}

/**
 * Wraps the server's event stream (named events `hello`, `heartbeat`,
 * `notification`) and re-establishes the connection with doubling backoff
 * whenever it drops. A successful reconnect (hello received) resets the
 * backoff to its base value.
 */
export class LiveEvents {
  private readonly url: string;
  private readonly factory: EventSourceFactory;
  private readonly baseBackoffMs: number;
  private readonly maxBackoffMs: number;

  private source: EventSourceLike | null = null;
  private backoffMs: number;
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  private notificationHandlers: Array<(payload: NotificationPayload) => void> = [];
  private statusHandlers: Array<(status: ConnectionStatus) => void> = [];

  constructor(url: string, factory: EventSourceFactory, options: LiveEventsOptions = {}) {
    this.url = url;
    this.factory = factory;
    this.baseBackoffMs = options.baseBackoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 10_000;
    if (!(this.baseBackoffMs > 0) || this.maxBackoffMs < this.baseBackoffMs) {
      throw new RangeError("backoff bounds must satisfy 0 < base <= max");
    }
    this.backoffMs = this.baseBackoffMs;
  }

  onNotification(handler: (payload: NotificationPayload) => void): void {
    this.notificationHandlers.push(handler);
  }

  onStatus(handler: (status: ConnectionStatus) => void): void {
    this.statusHandlers.push(handler);
  }

  connect(): void {
    if (this.closed || this.source !== null) {
      return;
    }
    this.emitStatus("connecting");
    const source = this.factory(this.url);
    this.source = source;
    source.addEventListener("hello", () => {
      this.backoffMs = this.baseBackoffMs;
      this.emitStatus("live");
    });
    source.addEventListener("heartbeat", () => {
      this.emitStatus("live");
    });
    source.addEventListener("notification", (event) => {
      let payload: NotificationPayload;
      try {
        payload = JSON.parse(event.data) as NotificationPayload;
      } catch {
        return; // Malformed frame; skip rather than kill the stream.
      }
      for (const handler of this.notificationHandlers) {
        handler(payload);
      }
    });
    source.addEventListener("error", () => {
      this.scheduleReconnect();
    });
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) {
      return;
    }
    if (this.source !== null) {
      this.source.close();
      this.source = null;
    }
    this.emitStatus("offline");
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    if (this.source !== null) {
      this.source.close();
      this.source = null;
    }
  }

  private emitStatus(status: ConnectionStatus): void {
    for (const handler of this.statusHandlers) {
      handler(status);
    }
  }
}
