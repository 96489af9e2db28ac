/**
 * Full-loop integration test against a live service instance.
 *
 * Drives the complete client logic (controller, stores, API client, event
 * stream) over real HTTP and a real server-sent-event connection. The only
 * part not exercised is pixel rendering: the DOM layer is replaced by a
 * recording view. Run with UI_E2E_BASE_URL pointing at a service seeded with
 * the ten-place snapshot, e.g. via the acceptance suite of the backend repo.
 */
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient, FetchLike, ResponseLike } from "../src/api.js";
import { MapChatController, ControllerView } from "../src/controller.js";
import { EventSourceLike, LiveEvents } from "../src/events.js";
import { MarkerStore } from "../src/markers.js";
import { Transcript, timingBadges } from "../src/transcript.js";
import { ViewportState } from "../src/viewport.js";
import { AskResponse, Bbox, ConnectionStatus, Poi } from "../src/types.js";

const BASE_URL = process.env["UI_E2E_BASE_URL"];
if (!BASE_URL) {
  throw new Error("UI_E2E_BASE_URL must point at a running service instance");
}

const FIXTURE_BBOX: Bbox = { minLon: -3.8, minLat: 40.35, maxLon: -3.6, maxLat: 40.5 };
const EMPTY_BBOX: Bbox = { minLon: 10.0, minLat: 50.0, maxLon: 11.0, maxLat: 51.0 };

async function until(
  predicate: () => boolean,
  timeoutMs: number,
  label: string,
): Promise<void> {
  const start = Date.now();
  while (!predicate()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out after ${timeoutMs} ms waiting for ${label}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

/** EventSource stand-in for Node: parses the SSE byte stream over fetch. */
function nodeEventSource(url: string): EventSourceLike {
  const listeners = new Map<string, Array<(event: { data: string }) => void>>();
  const aborter = new AbortController();

  const dispatch = (type: string, data: string): void => {
    for (const listener of listeners.get(type) ?? []) {
      listener({ data });
    }
  };

  void (async () => {
    try {
      const response = await fetch(url, {
        signal: aborter.signal,
        headers: { accept: "text/event-stream" },
      });
      const reader = response.body!.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) {
          break;
        }
        buffer += decoder.decode(value, { stream: true });
        let boundary;
        while ((boundary = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, boundary);
          buffer = buffer.slice(boundary + 2);
          let eventType = "message";
          const dataLines: string[] = [];
          for (const line of frame.split("\n")) {
            if (line.startsWith("event:")) {
              eventType = line.slice("event:".length).trim();
            } else if (line.startsWith("data:")) {
              dataLines.push(line.slice("data:".length).trimStart());
            }
          }
          dispatch(eventType, dataLines.join("\n"));
        }
      }
      dispatch("error", "");
    } catch {
      // Aborted by close(), or the connection dropped; either way: silent.
    }
  })();

  return {
    addEventListener(type, listener): void {
      const bucket = listeners.get(type) ?? [];
      bucket.push(listener);
      listeners.set(type, bucket);
    },
    close(): void {
      aborter.abort();
    },
  };
}

interface Recorded {
  markerRenders: Poi[][];
  popupRenders: Poi[];
  banners: Array<string | null>;
}

function recordingView(record: Recorded): ControllerView {
  return {
    renderMarkers: (pois) => record.markerRenders.push(pois.map((p) => ({ ...p }))),
    renderPopup: (poi) => record.popupRenders.push({ ...poi }),
    renderTranscript: () => undefined,
    setBanner: (text) => record.banners.push(text),
  };
}

describe("full loop against the live service", () => {
  const record: Recorded = { markerRenders: [], popupRenders: [], banners: [] };
  const askBodies: AskResponse[] = [];

  // Wrap the real fetch so the raw /ask response bodies can be compared
  // against what the transcript renders.
  const recordingFetch: FetchLike = async (url, init) => {
    const response = await fetch(url, init as RequestInit);
    const wrapped: ResponseLike = {
      ok: response.ok,
      status: response.status,
      json: async () => {
        const body = await response.json();
        if (new URL(url).pathname === "/ask" && response.ok) {
          askBodies.push(body as AskResponse);
        }
        return body;
      },
    };
    return wrapped;
  };

  const api = new ApiClient(BASE_URL!, recordingFetch);
  const viewport = new ViewportState(EMPTY_BBOX, 10);
  const markers = new MarkerStore();
  const transcript = new Transcript();
  const controller = new MapChatController(
    api,
    viewport,
    markers,
    transcript,
    recordingView(record),
  );

  const statuses: ConnectionStatus[] = [];
  const live = new LiveEvents(api.eventsUrl(), nodeEventSource);

  beforeAll(async () => {
    live.onNotification((payload) => controller.handleNotification(payload));
    live.onStatus((status) => statuses.push(status));
    live.connect();
    await until(() => statuses.includes("live"), 10_000, "event stream hello");
  });

  afterAll(() => {
    live.close();
    controller.dispose();
  });

  it("pan: the marker refresh uses the new box", async () => {
    await controller.refreshNow();
    expect(record.markerRenders.at(-1)).toEqual([]); // nothing out at sea

    const renders = record.markerRenders.length;
    controller.onViewportChange(FIXTURE_BBOX); // pan to the seeded region
    await until(
      () => record.markerRenders.length > renders,
      5_000,
      "debounced refresh after pan",
    );
    const rendered = record.markerRenders.at(-1)!;
    expect(rendered).toHaveLength(10);
    expect(controller.lastRenderedBbox).toEqual(FIXTURE_BBOX);
    expect(markers.get(rendered[0]!.id)).toBeDefined();
  });

  it("ask: the transcript renders the answer with the body's timing badges", async () => {
    const accepted = await controller.submitQuestion("what can I visit around here?");
    expect(accepted).toBe(true);

    const turn = transcript.turns().at(-1)!;
    expect(turn.status).toBe("answered");
    expect(turn.answer!.length).toBeGreaterThan(0);

    const body = askBodies.at(-1)!;
    expect(turn.answer).toBe(body.answer);
    expect(turn.timings).toEqual(body.timings);
    expect(turn.entityCount).toBe(body.entity_count);
    expect(timingBadges(turn.timings!)).toEqual([
      `broker ${body.timings.broker_ms} ms`,
      `llm ${body.timings.llm_ms} ms`,
      `total ${body.timings.total_ms} ms`,
    ]);
    expect(body.timings.total_ms).toBeGreaterThanOrEqual(0);
  });

  it("live update: an occupancy change reaches the popup within a second", async () => {
    const target = markers.all()[0]!;
    const newOccupancy = (target.occupancy ?? 0) + 17;

    // Replace the entity over plain HTTP with a bumped occupancy, as the
    // simulator would.
    const current = await fetch(
      `${BASE_URL}/ngsi-ld/v1/entities/${encodeURIComponent(target.id)}`,
    );
    expect(current.ok).toBe(true);
    const doc = (await current.json()) as Record<string, any>;
    doc["occupancy"]["value"] = newOccupancy;
    const popupsBefore = record.popupRenders.length;
    const replaced = await fetch(`${BASE_URL}/ngsi-ld/v1/entities`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    expect(replaced.status).toBe(204);

    const written = Date.now();
    await until(
      () => record.popupRenders.length > popupsBefore,
      5_000,
      "popup refresh from the event stream",
    );
    const elapsedMs = Date.now() - written;
    const popup = record.popupRenders.at(-1)!;
    expect(popup.id).toBe(target.id);
    expect(popup.occupancy).toBe(newOccupancy);
    expect(markers.get(target.id)?.occupancy).toBe(newOccupancy);
    expect(elapsedMs).toBeLessThan(1_000);
  });
});
