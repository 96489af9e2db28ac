import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiClient, ResponseLike } from "../src/api.js";
import { MapChatController, ControllerView } from "../src/controller.js";
import { LiveEvents } from "../src/events.js";
import { MarkerStore } from "../src/markers.js";
import { Transcript, Turn, timingBadges } from "../src/transcript.js";
import { ViewportState } from "../src/viewport.js";
import { Bbox, bboxParam, Poi } from "../src/types.js";
import {
  askBody,
  deferred,
  fetchSpy,
  jsonResponse,
  poiDoc,
  sourceFactory,
} from "./helpers.js";

const BOX_A: Bbox = { minLon: -3.8, minLat: 40.35, maxLon: -3.6, maxLat: 40.5 };
const BOX_B: Bbox = { minLon: -3.75, minLat: 40.4, maxLon: -3.65, maxLat: 40.48 };
const BOX_C: Bbox = { minLon: -3.7, minLat: 40.41, maxLon: -3.68, maxLat: 40.43 };

const DOCS = [
  poiDoc("urn:x:1", "El Retiro", -3.6834, 40.4153, {
    price: 0,
    occupancy: 10,
    capacity: 120,
    relevance: 1,
  }),
  poiDoc("urn:x:2", "Museo del Prado", -3.6921, 40.4138, {
    price: 15,
    occupancy: 60,
    capacity: 200,
    relevance: 1,
  }),
];

type Handler = (
  url: string,
  init?: { method?: string; body?: string },
) => ResponseLike | Promise<ResponseLike>;

function makeController(handler: Handler, debounceMs = 250) {
  const spy = fetchSpy(handler);
  const api = new ApiClient("http://svc:8000", spy.fn);
  const viewport = new ViewportState(BOX_A, 10);
  const markers = new MarkerStore();
  const transcript = new Transcript();
  const markerRenders: Poi[][] = [];
  const popupRenders: Poi[] = [];
  const banners: Array<string | null> = [];
  let transcriptRenders = 0;
  const view: ControllerView = {
    renderMarkers: (pois) => markerRenders.push(pois.map((p) => ({ ...p }))),
    renderPopup: (poi) => popupRenders.push({ ...poi }),
    renderTranscript: () => {
      transcriptRenders += 1;
    },
    setBanner: (text) => banners.push(text),
  };
  const controller = new MapChatController(
    api,
    viewport,
    markers,
    transcript,
    view,
    { debounceMs },
  );
  return {
    controller,
    spy,
    viewport,
    markers,
    transcript,
    markerRenders,
    popupRenders,
    banners,
    transcriptRenderCount: () => transcriptRenders,
  };
}

function entityCalls(spy: { calls: Array<{ url: string }> }): URL[] {
  return spy.calls
    .map((c) => new URL(c.url))
    .filter((u) => u.pathname === "/ngsi-ld/v1/entities");
}

function askCalls(
  spy: { calls: Array<{ url: string; init?: { body?: string } }> },
): Array<Record<string, unknown>> {
  return spy.calls
    .filter((c) => new URL(c.url).pathname === "/ask")
    .map((c) => JSON.parse(c.init!.body!) as Record<string, unknown>);
}

const serveDocs: Handler = (url) => {
  if (new URL(url).pathname === "/ask") {
    return jsonResponse(askBody("ok", 1, 2, 3, 2));
  }
  return jsonResponse(DOCS);
};

afterEach(() => {
  vi.useRealTimers();
});

describe("viewport refresh", () => {
  it("pan burst produces one request per quiet window, for the final box", async () => {
    vi.useFakeTimers();
    const { controller, spy, markerRenders } = makeController(serveDocs);

    controller.onViewportChange(BOX_A);
    controller.onViewportChange(BOX_B);
    controller.onViewportChange(BOX_C);
    await vi.advanceTimersByTimeAsync(249);
    expect(spy.calls).toHaveLength(0);

    await vi.advanceTimersByTimeAsync(1);
    const queries = entityCalls(spy);
    expect(queries).toHaveLength(1);
    expect(queries[0]!.searchParams.get("bbox")).toBe(bboxParam(BOX_C));
    expect(queries[0]!.searchParams.get("limit")).toBe("10");
    expect(markerRenders).toHaveLength(1);
    expect(markerRenders[0]!.map((p) => p.id)).toEqual(["urn:x:1", "urn:x:2"]);

    controller.onViewportChange(BOX_B);
    await vi.advanceTimersByTimeAsync(250);
    expect(entityCalls(spy)).toHaveLength(2);
    expect(entityCalls(spy)[1]!.searchParams.get("bbox")).toBe(bboxParam(BOX_B));
    controller.dispose();
  });

  it("enforces a quiet window of at least 250 ms even when configured lower", async () => {
    vi.useFakeTimers();
    const { controller, spy } = makeController(serveDocs, 50);
    controller.onViewportChange(BOX_B);
    await vi.advanceTimersByTimeAsync(249);
    expect(spy.calls).toHaveLength(0);
    await vi.advanceTimersByTimeAsync(1);
    expect(spy.calls).toHaveLength(1);
    controller.dispose();
  });

  it("a pan to an empty region renders zero markers", async () => {
    vi.useFakeTimers();
    const off = { minLon: 10, minLat: 50, maxLon: 11, maxLat: 51 };
    const { controller, markers, markerRenders } = makeController((url) =>
      new URL(url).searchParams.get("bbox") === bboxParam(off)
        ? jsonResponse([])
        : jsonResponse(DOCS),
    );
    await controller.refreshNow();
    expect(markerRenders.at(-1)).toHaveLength(2);

    controller.onViewportChange(off);
    await vi.advanceTimersByTimeAsync(250);
    expect(markerRenders.at(-1)).toEqual([]);
    expect(markers.size).toBe(0);
    controller.dispose();
  });

  it("changing the limit refreshes with the new limit", async () => {
    vi.useFakeTimers();
    const { controller, spy } = makeController(serveDocs);
    controller.onLimitChange(650);
    await vi.advanceTimersByTimeAsync(250);
    expect(entityCalls(spy)[0]!.searchParams.get("limit")).toBe("650");
    controller.dispose();
  });

  it("a failed refresh shows the offline banner and the next success clears it", async () => {
    let failing = true;
    const { controller, viewport, banners, markerRenders } = makeController(() => {
      if (failing) {
        throw new TypeError("fetch failed");
      }
      return jsonResponse(DOCS);
    });

    await controller.refreshNow();
    expect(banners.at(-1)).toBe("offline — the map could not be refreshed");
    expect(viewport.connection).toBe("offline");
    expect(markerRenders).toHaveLength(0);

    failing = false;
    await controller.refreshNow();
    expect(banners.at(-1)).toBeNull();
    expect(viewport.connection).toBe("live");
    expect(markerRenders).toHaveLength(1);
  });

  it("drops replies from superseded refreshes", async () => {
    const first = deferred<ResponseLike>();
    const second = deferred<ResponseLike>();
    const pending = [first, second];
    const { controller, markerRenders, markers } = makeController(
      () => pending.shift()!.promise,
    );

    const p1 = controller.refreshNow();
    const p2 = controller.refreshNow();
    second.resolve(jsonResponse([DOCS[1]!]));
    await p2;
    expect(markerRenders).toHaveLength(1);
    expect(markers.all().map((p) => p.id)).toEqual(["urn:x:2"]);

    first.resolve(jsonResponse([DOCS[0]!]));
    await p1;
    expect(markerRenders).toHaveLength(1); // stale reply was not rendered
    expect(markers.all().map((p) => p.id)).toEqual(["urn:x:2"]);
  });
});

describe("question flow", () => {
  it("renders the answer with timing badges equal to the response body", async () => {
    const body = askBody(
      "Here is what I found for you: El Retiro, Museo del Prado.",
      3.25,
      1421.75,
      1425.5,
      2,
    );
    const { controller, transcript, spy, transcriptRenderCount } = makeController(
      (url) =>
        new URL(url).pathname === "/ask" ? jsonResponse(body) : jsonResponse(DOCS),
    );
    await controller.refreshNow();

    const accepted = await controller.submitQuestion("what can I visit around here?");
    expect(accepted).toBe(true);

    const turns = transcript.turns();
    expect(turns).toHaveLength(1);
    const turn = turns[0]!;
    expect(turn.status).toBe("answered");
    expect(turn.answer).toBe(body.answer);
    expect(turn.entityCount).toBe(2);
    expect(turn.timings).toEqual(body.timings);
    expect(timingBadges(turn.timings!)).toEqual([
      "broker 3.25 ms",
      "llm 1421.75 ms",
      "total 1425.5 ms",
    ]);
    expect(transcriptRenderCount()).toBeGreaterThanOrEqual(2); // pending + answered

    const [request] = askCalls(spy);
    expect(request!["question"]).toBe("what can I visit around here?");
    expect(request!["limit"]).toBe(10);
  });

  it("sends the box that produced the markers currently on screen", async () => {
    vi.useFakeTimers();
    const { controller, spy } = makeController(serveDocs);
    await controller.refreshNow(); // renders BOX_A

    controller.onViewportChange(BOX_B); // refresh still pending
    await controller.submitQuestion("is it busy?");
    expect(askCalls(spy)[0]!["bbox"]).toEqual([-3.8, 40.35, -3.6, 40.5]);

    await vi.advanceTimersByTimeAsync(250); // BOX_B markers render now
    await controller.submitQuestion("and now?");
    expect(askCalls(spy)[1]!["bbox"]).toEqual([-3.75, 40.4, -3.65, 40.48]);
    controller.dispose();
  });

  it("blocks blank input client-side", async () => {
    const { controller, spy, transcript } = makeController(serveDocs);
    expect(await controller.submitQuestion("")).toBe(false);
    expect(await controller.submitQuestion("   \n")).toBe(false);
    expect(spy.calls).toHaveLength(0);
    expect(transcript.length).toBe(0);
  });

  it("allows at most one question in flight", async () => {
    const gate = deferred<ResponseLike>();
    const { controller, transcript } = makeController((url) =>
      new URL(url).pathname === "/ask" ? gate.promise : jsonResponse(DOCS),
    );
    const firstDone = controller.submitQuestion("first?");
    expect(controller.questionPending).toBe(true);
    expect(await controller.submitQuestion("second?")).toBe(false);
    expect(transcript.length).toBe(1);

    gate.resolve(jsonResponse(askBody("answered", 1, 2, 3, 0)));
    expect(await firstDone).toBe(true);
    expect(controller.questionPending).toBe(false);
    expect(await controller.submitQuestion("third?")).toBe(true);
    expect(transcript.length).toBe(2);
  });

  it("turns a 5xx into a failed turn that can be retried", async () => {
    let healthy = false;
    const { controller, transcript } = makeController((url) => {
      if (new URL(url).pathname !== "/ask") {
        return jsonResponse(DOCS);
      }
      if (!healthy) {
        return jsonResponse({ error: "BackendError", detail: "upstream 503" }, 502);
      }
      return jsonResponse(askBody("recovered", 1, 2, 3, 2));
    });
    await controller.refreshNow();

    await controller.submitQuestion("anything open?");
    const failed = transcript.turns()[0]!;
    expect(failed.status).toBe("failed");
    expect(failed.error).toContain("BackendError");

    healthy = true;
    expect(await controller.retryQuestion(failed.id)).toBe(true);
    const turns = transcript.turns();
    expect(turns).toHaveLength(2); // history is append-only
    expect(turns[0]!.status).toBe("failed");
    expect(turns[1]!.status).toBe("answered");
    expect(turns[1]!.question).toBe("anything open?");
    expect(turns[1]!.answer).toBe("recovered");
  });

  it("renders a can't-find answer verbatim", async () => {
    const text = "I'm sorry, but I cannot find that information in this area.";
    const { controller, transcript } = makeController((url) =>
      new URL(url).pathname === "/ask"
        ? jsonResponse(askBody(text, 1, 2, 3, 0))
        : jsonResponse(DOCS),
    );
    await controller.refreshNow();
    await controller.submitQuestion("where is the moon?");
    expect(transcript.turns()[0]!.answer).toBe(text);
  });
});

describe("live updates", () => {
  function wireLiveStream(controller: MapChatController) {
    const { created, factory } = sourceFactory();
    const live = new LiveEvents("http://svc:8000/events", factory);
    live.onNotification((payload) => controller.handleNotification(payload));
    live.connect();
    created[0]!.emit("hello", "{}");
    return { live, source: created[0]! };
  }

  it("an occupancy change reaches the popup through the event stream", async () => {
    vi.useFakeTimers();
    const { controller, markers, popupRenders } = makeController(serveDocs);
    await controller.refreshNow();
    expect(markers.get("urn:x:1")?.occupancy).toBe(10);

    const { live, source } = wireLiveStream(controller);
    const frame = {
      subscriptionId: "urn:sub:event-stream",
      emittedAt: "2025-04-10T09:30:00Z",
      entities: [
        poiDoc("urn:x:1", "El Retiro", -3.6834, 40.4153, {
          price: 0,
          occupancy: 55,
          capacity: 120,
          relevance: 1,
        }),
      ],
      changedAttributes: [["occupancy"]],
    };
    source.emit("notification", JSON.stringify(frame));
    // No timer advancement was needed: the update is applied synchronously,
    // comfortably inside a one-second budget.
    expect(markers.get("urn:x:1")?.occupancy).toBe(55);
    expect(popupRenders).toHaveLength(1);
    expect(popupRenders[0]!.id).toBe("urn:x:1");
    expect(popupRenders[0]!.occupancy).toBe(55);
    live.close();
    controller.dispose();
  });

  it("events for entities outside the viewport change nothing visible", async () => {
    const { controller, markers, popupRenders } = makeController(serveDocs);
    await controller.refreshNow();

    controller.handleNotification({
      subscriptionId: "urn:sub:event-stream",
      emittedAt: "2025-04-10T09:31:00Z",
      entities: [poiDoc("urn:x:999", "Far Away", 10.0, 50.0, { occupancy: 5 })],
      changedAttributes: [["occupancy"]],
    });
    expect(popupRenders).toHaveLength(0);
    expect(markers.size).toBe(2);
    expect(markers.get("urn:x:999")).toBeUndefined();
  });

  it("price changes update the stored marker as well", async () => {
    const { controller, markers, popupRenders } = makeController(serveDocs);
    await controller.refreshNow();
    controller.handleNotification({
      subscriptionId: "urn:sub:event-stream",
      emittedAt: "2025-04-10T09:32:00Z",
      entities: [
        poiDoc("urn:x:2", "Museo del Prado", -3.6921, 40.4138, {
          price: 18,
          occupancy: 60,
          capacity: 200,
          relevance: 1,
        }),
      ],
      changedAttributes: [["price"]],
    });
    expect(markers.get("urn:x:2")?.price).toBe(18);
    expect(popupRenders).toHaveLength(1);
    expect(popupRenders[0]!.price).toBe(18);
  });
});
