import { ApiClient } from "./api.js";
import { MapChatController, ControllerView } from "./controller.js";
import { LiveEvents } from "./events.js";
import { MarkerStore, popupText } from "./markers.js";
import { Transcript, Turn, timingBadges } from "./transcript.js";
import { ViewportState, LIMIT_PRESETS } from "./viewport.js";
import { Bbox, Poi } from "./types.js";

/** Starting view: central Madrid. */
const INITIAL_BBOX: Bbox = {
  minLon: -3.7419,
  minLat: 40.3896,
  maxLon: -3.6534,
  maxLat: 40.4444,
};

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function main(): void {
  const baseUrl = resolveBaseUrl();
  const api = new ApiClient(baseUrl);
  const viewport = new ViewportState(INITIAL_BBOX, 100);
  const markers = new MarkerStore();
  const transcript = new Transcript();

  const mapHost = document.getElementById("map")!;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", "0 0 800 600");
  svg.classList.add("map-canvas");
  mapHost.appendChild(svg);

  const popup = el("div", "popup hidden");
  mapHost.appendChild(popup);
  let popupPoiId: string | null = null;

  const banner = document.getElementById("banner")!;
  const transcriptHost = document.getElementById("transcript")!;
  const statusDot = document.getElementById("status")!;

  function project(poi: Poi): { x: number; y: number } {
    const b = viewport.bbox;
    const x = ((poi.lon - b.minLon) / (b.maxLon - b.minLon || 1)) * 800;
    const y = (1 - (poi.lat - b.minLat) / (b.maxLat - b.minLat || 1)) * 600;
    return { x, y };
  }

  function showPopup(poi: Poi): void {
    popupPoiId = poi.id;
    const { x, y } = project(poi);
    popup.textContent = popupText(poi);
    popup.style.left = `${(x / 800) * 100}%`;
    popup.style.top = `${(y / 600) * 100}%`;
    popup.classList.remove("hidden");
  }

  const view: ControllerView = {
    renderMarkers(pois: Poi[]): void {
      svg.replaceChildren();
      const frame = document.createElementNS(SVG_NS, "rect");
      frame.setAttribute("x", "0");
      frame.setAttribute("y", "0");
      frame.setAttribute("width", "800");
      frame.setAttribute("height", "600");
      frame.setAttribute("class", "map-frame");
      svg.appendChild(frame);
      for (const poi of pois) {
        const { x, y } = project(poi);
        const dot = document.createElementNS(SVG_NS, "circle");
        dot.setAttribute("cx", String(x));
        dot.setAttribute("cy", String(y));
        dot.setAttribute("r", "6");
        dot.setAttribute("class", "poi-dot");
        dot.addEventListener("click", (event) => {
          event.stopPropagation();
          const current = markers.get(poi.id);
          if (current !== undefined) {
            showPopup(current);
          }
        });
        const label = document.createElementNS(SVG_NS, "title");
        label.textContent = poi.title;
        dot.appendChild(label);
        svg.appendChild(dot);
      }
      if (popupPoiId !== null && markers.get(popupPoiId) === undefined) {
        popup.classList.add("hidden");
        popupPoiId = null;
      }
      const counter = document.getElementById("marker-count")!;
      counter.textContent = `${pois.length} places`;
    },
    renderPopup(poi: Poi): void {
      if (popupPoiId === poi.id) {
        showPopup(poi);
      }
    },
    renderTranscript(turns: readonly Turn[]): void {
      transcriptHost.replaceChildren();
      for (const turn of turns) {
        const item = el("div", `turn turn-${turn.status}`);
        item.appendChild(el("div", "question", turn.question));
        if (turn.status === "answered") {
          item.appendChild(el("div", "answer", turn.answer ?? ""));
          const badges = el("div", "badges");
          for (const badge of timingBadges(turn.timings!)) {
            badges.appendChild(el("span", "badge", badge));
          }
          badges.appendChild(
            el("span", "badge", `${turn.entityCount ?? 0} places in view`),
          );
          item.appendChild(badges);
        } else if (turn.status === "failed") {
          item.appendChild(el("div", "answer error", turn.error ?? "request failed"));
          const retry = el("button", "retry", "retry");
          retry.addEventListener("click", () => {
            void controller.retryQuestion(turn.id);
          });
          item.appendChild(retry);
        } else {
          item.appendChild(el("div", "answer pending", "…"));
        }
        transcriptHost.appendChild(item);
      }
      transcriptHost.scrollTop = transcriptHost.scrollHeight;
    },
    setBanner(text: string | null): void {
      if (text === null) {
        banner.classList.add("hidden");
        banner.textContent = "";
      } else {
        banner.textContent = text;
        banner.classList.remove("hidden");
      }
    },
  };

  const controller = new MapChatController(api, viewport, markers, transcript, view);

  // -- map interactions -------------------------------------------------------

  svg.addEventListener("click", () => {
    popup.classList.add("hidden");
    popupPoiId = null;
  });

  let dragging: { x: number; y: number } | null = null;
  svg.addEventListener("mousedown", (event) => {
    dragging = { x: event.clientX, y: event.clientY };
  });
  window.addEventListener("mouseup", () => {
    dragging = null;
  });
  window.addEventListener("mousemove", (event) => {
    if (dragging === null) {
      return;
    }
    const b = viewport.bbox;
    const scale = svg.getBoundingClientRect();
    const dLon = (-(event.clientX - dragging.x) / (scale.width || 800)) *
      (b.maxLon - b.minLon);
    const dLat = ((event.clientY - dragging.y) / (scale.height || 600)) *
      (b.maxLat - b.minLat);
    dragging = { x: event.clientX, y: event.clientY };
    viewport.panBy(dLon, dLat);
    controller.onViewportChange(viewport.bbox);
  });

  document.getElementById("zoom-in")!.addEventListener("click", () => {
    viewport.zoom(0.5);
    controller.onViewportChange(viewport.bbox);
  });
  document.getElementById("zoom-out")!.addEventListener("click", () => {
    viewport.zoom(2.0);
    controller.onViewportChange(viewport.bbox);
  });

  const limitSelect = document.getElementById("limit") as HTMLSelectElement;
  for (const preset of LIMIT_PRESETS) {
    const option = el("option", undefined, String(preset));
    option.value = String(preset);
    limitSelect.appendChild(option);
  }
  limitSelect.value = String(viewport.limit);
  limitSelect.addEventListener("change", () => {
    controller.onLimitChange(Number(limitSelect.value));
  });

  // -- chat form ---------------------------------------------------------------

  const form = document.getElementById("chat-form") as HTMLFormElement;
  const input = document.getElementById("chat-input") as HTMLInputElement;
  const send = document.getElementById("chat-send") as HTMLButtonElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const question = input.value;
    if (question.trim().length === 0 || controller.questionPending) {
      return; // Blank input never leaves the client.
    }
    input.value = "";
    send.disabled = true;
    void controller.submitQuestion(question).finally(() => {
      send.disabled = false;
    });
  });

  // -- live events --------------------------------------------------------------

  viewport.onConnectionChange((status) => {
    statusDot.dataset["status"] = status;
    statusDot.textContent = status;
  });
  const live = new LiveEvents(api.eventsUrl(), (url) => new EventSource(url));
  live.onNotification((payload) => controller.handleNotification(payload));
  live.onStatus((status) => {
    if (status === "offline") {
      view.setBanner("live updates interrupted — reconnecting…");
    } else if (status === "live") {
      viewport.setConnection("live");
      view.setBanner(null);
    }
  });
  live.connect();

  void controller.refreshNow();
}

function resolveBaseUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("api");
  if (fromQuery !== null && fromQuery.length > 0) {
    return fromQuery;
  }
  const meta = document.querySelector('meta[name="api-base"]');
  const fromMeta = meta?.getAttribute("content");
  if (fromMeta !== null && fromMeta !== undefined && fromMeta.length > 0) {
    return fromMeta;
  }
  return window.location.origin;
}

main();
