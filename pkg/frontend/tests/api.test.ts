import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import { askBody, fetchSpy, jsonResponse, poiDoc } from "./helpers.js";

const BOX = { minLon: -3.8, minLat: 40.35, maxLon: -3.6, maxLat: 40.5 };

describe("ApiClient.queryEntities", () => {
  it("requests the box in simplified form and parses the result", async () => {
    const spy = fetchSpy(() =>
      jsonResponse([
        poiDoc("urn:x:1", "A", -3.7, 40.4, { occupancy: 3 }),
        { id: "urn:x:2", title: "no location" },
        poiDoc("urn:x:3", "C", -3.65, 40.45),
      ]),
    );
    const api = new ApiClient("http://svc:8000/", spy.fn);
    const pois = await api.queryEntities(BOX, 100);

    expect(spy.calls).toHaveLength(1);
    const url = new URL(spy.calls[0]!.url);
    expect(url.origin).toBe("http://svc:8000");
    expect(url.pathname).toBe("/ngsi-ld/v1/entities");
    expect(url.searchParams.get("bbox")).toBe("-3.8,40.35,-3.6,40.5");
    expect(url.searchParams.get("limit")).toBe("100");
    expect(url.searchParams.get("options")).toBe("keyValues");

    expect(pois.map((p) => p.id)).toEqual(["urn:x:1", "urn:x:3"]);
    expect(pois[0]!.occupancy).toBe(3);
  });

  it("raises ApiError with the service's error code on 4xx", async () => {
    const spy = fetchSpy(() =>
      jsonResponse({ error: "InvalidLimit", detail: "limit must be >= 1" }, 400),
    );
    const api = new ApiClient("http://svc:8000", spy.fn);
    const err = await api.queryEntities(BOX, 100).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.code).toBe("InvalidLimit");
    expect(err.message).toContain("limit must be >= 1");
  });

  it("propagates network failures from fetch", async () => {
    const api = new ApiClient("http://svc:8000", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(api.queryEntities(BOX, 10)).rejects.toThrow("fetch failed");
  });
});

describe("ApiClient.ask", () => {
  it("posts the question with the box and limit and returns the body", async () => {
    const body = askBody("Here is what I found for you: A.", 2.5, 1400.25, 1403.5, 10);
    const spy = fetchSpy(() => jsonResponse(body));
    const api = new ApiClient("http://svc:8000", spy.fn);
    const response = await api.ask("what can I visit?", BOX, 10);

    expect(spy.calls).toHaveLength(1);
    const call = spy.calls[0]!;
    expect(call.url).toBe("http://svc:8000/ask");
    expect(call.init?.method).toBe("POST");
    expect(JSON.parse(call.init!.body!)).toEqual({
      question: "what can I visit?",
      bbox: [-3.8, 40.35, -3.6, 40.5],
      limit: 10,
    });
    expect(response).toEqual(body);
  });

  it("maps 5xx bodies to ApiError", async () => {
    const spy = fetchSpy(() =>
      jsonResponse({ error: "BackendError", detail: "upstream 503" }, 502),
    );
    const api = new ApiClient("http://svc:8000", spy.fn);
    const err = await api.ask("anything?", BOX, 10).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(502);
    expect(err.code).toBe("BackendError");
  });

  it("survives non-JSON error bodies", async () => {
    const api = new ApiClient("http://svc:8000", async () => ({
      ok: false,
      status: 500,
      json: async () => {
        throw new SyntaxError("not json");
      },
    }));
    const err = await api.ask("anything?", BOX, 10).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("UnknownError");
  });
});

describe("ApiClient.eventsUrl", () => {
  it("joins the stream path onto the trimmed base URL", () => {
    const api = new ApiClient("http://svc:8000///", async () => jsonResponse({}));
    expect(api.eventsUrl()).toBe("http://svc:8000/events");
  });
});
