import { ResponseLike } from "../src/api.js";
import { EventSourceLike } from "../src/events.js";
import { AskResponse } from "../src/types.js";

export function jsonResponse(body: unknown, status = 200): ResponseLike {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  };
}

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (error: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

/** Records every request made through it and answers via the given handler. */
export function fetchSpy(
  handler: (
    url: string,
    init?: { method?: string; body?: string },
  ) => ResponseLike | Promise<ResponseLike>,
): {
  calls: Array<{ url: string; init?: { method?: string; body?: string } }>;
  fn: (
    url: string,
    init?: { method?: string; body?: string },
  ) => Promise<ResponseLike>;
} {
  const calls: Array<{ url: string; init?: { method?: string; body?: string } }> = [];
  const fn = async (
    url: string,
    init?: { method?: string; body?: string },
  ): Promise<ResponseLike> => {
    calls.push({ url, init });
    return handler(url, init);
  };
  return { calls, fn };
}

/** Simplified entity document as served with options=keyValues. */
export function poiDoc(
  id: string,
  title: string,
  lon: number,
  lat: number,
  extra: Record<string, unknown> = {},
): Record<string, unknown> {
  return {
    id,
    type: "PointOfInterest",
    title,
    location: { type: "Point", coordinates: [lon, lat] },
    ...extra,
  };
}

export function askBody(
  answer: string,
  brokerMs: number,
  llmMs: number,
  totalMs: number,
  entityCount: number,
): AskResponse {
  return {
    answer,
    entity_count: entityCount,
    from_cache: false,
    timings: { broker_ms: brokerMs, llm_ms: llmMs, total_ms: totalMs },
  };
}

/** Scriptable stand-in for the browser EventSource. */
export class FakeEventSource implements EventSourceLike {
  readonly url: string;
  closed = false;
  private listeners = new Map<string, Array<(event: { data: string }) => void>>();

  constructor(url: string) {
    this.url = url;
  }

  addEventListener(type: string, listener: (event: { data: string }) => void): void {
    const bucket = this.listeners.get(type) ?? [];
    bucket.push(listener);
    this.listeners.set(type, bucket);
  }

  emit(type: string, data = ""): void {
    for (const listener of this.listeners.get(type) ?? []) {
      listener({ data });
    }
  }

  close(): void {
    this.closed = true;
  }
}

/** Factory that keeps every source it created, for reconnect assertions. */
export function sourceFactory(): {
  created: FakeEventSource[];
  factory: (url: string) => FakeEventSource;
} {
  const created: FakeEventSource[] = [];
  const factory = (url: string): FakeEventSource => {
    const source = new FakeEventSource(url);
    created.push(source);
    return source;
  };
  return { created, factory };
}
