import {
  AskResponse,
  Bbox,
  bboxArray,
  bboxParam,
  Poi,
  poiFromKeyValues,
} from "./types.js";

/** Minimal slice of the fetch Response surface the client relies on. */
export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<ResponseLike>;

/** Error raised for non-2xx API responses, carrying the service's error code. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, detail: string) {
    super(`${code} (${status}): ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

async function errorFromResponse(response: ResponseLike): Promise<ApiError> {
  let code = "UnknownError";
  let detail = "";
  try {
    const body = (await response.json()) as Record<string, unknown>;
    if (typeof body["error"] === "string") {
      code = body["error"];
    }
    if (typeof body["detail"] === "string") {
      detail = body["detail"];
    }
  } catch {
    // Non-JSON error body; keep the defaults.
  }
  return new ApiError(response.status, code, detail);
}

/**
 * Thin HTTP client for the context service. All methods reject with
 * ApiError on non-2xx responses and pass through network failures from the
 * underlying fetch implementation.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    const impl = fetchFn ?? (globalThis.fetch as unknown as FetchLike);
    if (impl === undefined) {
      throw new Error("no fetch implementation available");
    }
    this.fetchFn = impl;
  }

  /** GET /ngsi-ld/v1/entities restricted to `bbox`, in simplified form. */
  async queryEntities(bbox: Bbox, limit: number): Promise<Poi[]> {
    const params = new URLSearchParams({
      bbox: bboxParam(bbox),
      limit: String(limit),
      options: "keyValues",
    });
    const response = await this.fetchFn(
      `${this.baseUrl}/ngsi-ld/v1/entities?${params.toString()}`,
    );
    if (!response.ok) {
      throw await errorFromResponse(response);
    }
    const docs = (await response.json()) as Record<string, unknown>[];
    const pois: Poi[] = [];
    for (const doc of docs) {
      const poi = poiFromKeyValues(doc);
      if (poi !== null) {
        pois.push(poi);
      }
    }
    return pois;
  }

  /** POST /ask with the question plus the box and limit used for retrieval. */
  async ask(question: string, bbox: Bbox, limit: number): Promise<AskResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/ask`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        question,
        bbox: bboxArray(bbox),
        limit,
      }),
    });
    if (!response.ok) {
      throw await errorFromResponse(response);
    }
    return (await response.json()) as AskResponse;
  }

  /** Absolute URL of the live event stream. */
  eventsUrl(): string {
    return `${this.baseUrl}/events`;
  }
}
