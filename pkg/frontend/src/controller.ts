import { ApiClient } from "./api.js";
import { debounce, Debounced } from "./debounce.js";
import { MarkerStore } from "./markers.js";
import { Transcript, Turn } from "./transcript.js";
import { ViewportState } from "./viewport.js";
import { Bbox, NotificationPayload, Poi } from "./types.js";

/** Rendering surface the controller drives; the DOM layer implements it. */
export interface ControllerView {
  renderMarkers(pois: Poi[]): void;
  /** Re-render one marker's popup after a live update. */
  renderPopup(poi: Poi): void;
  renderTranscript(turns: readonly Turn[]): void;
  /** Shows the text as a banner, or hides the banner when null. */
  setBanner(text: string | null): void;
}

export interface ControllerOptions {
  /** Quiet window for viewport refreshes; clamped to at least 250 ms. */
  debounceMs?: number;
}

/** Minimum quiet window between a viewport change and the query it triggers. */
export const MIN_DEBOUNCE_MS = 250;

/**
 * Wires the viewport, marker store, transcript and API client together.
 *
 * Invariants enforced here:
 * - every /ask carries the box that produced the markers currently on
 *   screen, so answers always refer to what the user is looking at;
 * - the rendered marker set is exactly the server's reply: no client-side
 *   filtering, and stale replies from superseded refreshes are dropped;
 * - at most one /ask is in flight at a time;
 * - a failed refresh shows an offline banner that the next success clears.
 */
export class MapChatController {
  readonly viewport: ViewportState;
  readonly markers: MarkerStore;
  readonly transcript: Transcript;

  private readonly api: ApiClient;
  private readonly view: ControllerView;
  private readonly debouncedRefresh: Debounced<[]>;

  private refreshSeq = 0;
  private appliedSeq = 0;
  private renderedBbox: Bbox | null = null;
  private renderedLimit: number | null = null;
  private askInFlight = false;

  constructor(
    api: ApiClient,
    viewport: ViewportState,
    markers: MarkerStore,
    transcript: Transcript,
    view: ControllerView,
    options: ControllerOptions = {},
  ) {
    this.api = api;
    this.viewport = viewport;
    this.markers = markers;
    this.transcript = transcript;
    this.view = view;
    const wait = Math.max(MIN_DEBOUNCE_MS, options.debounceMs ?? MIN_DEBOUNCE_MS);
    this.debouncedRefresh = debounce(() => {
      void this.refreshNow();
    }, wait);
    this.transcript.onChange(() => {
      this.view.renderTranscript(this.transcript.turns());
    });
  }

  /** The box that produced the markers currently on screen, if any. */
  get lastRenderedBbox(): Bbox | null {
    return this.renderedBbox === null ? null : { ...this.renderedBbox };
  }

  /** True while a question is waiting on the service. */
  get questionPending(): boolean {
    return this.askInFlight;
  }

  /**
   * Records a viewport move and schedules a marker refresh after the quiet
   * window. Bursts of calls collapse into a single query for the final box.
   */
  onViewportChange(bbox: Bbox): void {
    this.viewport.setBbox(bbox);
    this.debouncedRefresh.call();
  }

  /** Changes the result limit and schedules a refresh. */
  onLimitChange(limit: number): void {
    this.viewport.setLimit(limit);
    this.debouncedRefresh.call();
  }

  /**
   * Queries the current box immediately and renders the reply. If another
   * refresh starts before this one resolves, the older reply is discarded.
   */
  async refreshNow(): Promise<void> {
    this.debouncedRefresh.cancel();
    const seq = ++this.refreshSeq;
    const bbox = this.viewport.bbox;
    const limit = this.viewport.limit;
    let pois: Poi[];
    try {
      pois = await this.api.queryEntities(bbox, limit);
    } catch {
      if (seq === this.refreshSeq) {
        this.viewport.setConnection("offline");
        this.view.setBanner("offline — the map could not be refreshed");
      }
      return;
    }
    if (seq < this.appliedSeq || seq < this.refreshSeq) {
      return; // Superseded by a newer refresh; drop this reply.
    }
    this.appliedSeq = seq;
    this.markers.replaceAll(pois);
    this.renderedBbox = bbox;
    this.renderedLimit = limit;
    this.viewport.setConnection("live");
    this.view.setBanner(null);
    this.view.renderMarkers(this.markers.all());
  }

  /**
   * Sends a question about the area currently on screen. Returns false when
   * the input is blank or another question is still in flight. The box and
   * limit sent are the ones that produced the rendered markers.
   */
  async submitQuestion(question: string): Promise<boolean> {
    if (question.trim().length === 0) {
      return false;
    }
    if (this.askInFlight) {
      return false;
    }
    const bbox = this.renderedBbox ?? this.viewport.bbox;
    const limit = this.renderedLimit ?? this.viewport.limit;
    const turnId = this.transcript.beginQuestion(question);
    this.askInFlight = true;
    try {
      const response = await this.api.ask(question.trim(), bbox, limit);
      this.transcript.attachAnswer(turnId, response);
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      this.transcript.attachError(turnId, message);
    } finally {
      this.askInFlight = false;
    }
    return true;
  }

  /** Re-sends a previously failed question. */
  async retryQuestion(turnId: number): Promise<boolean> {
    const turn = this.transcript.turns().find((t) => t.id === turnId);
    if (turn === undefined || turn.status !== "failed") {
      return false;
    }
    return this.submitQuestion(turn.question);
  }

  /**
   * Applies one live notification. Only entities currently rendered are
   * touched; their popups re-render with the new values. Entities outside
   * the viewport produce no visible change.
   */
  handleNotification(payload: NotificationPayload): void {
    for (const doc of payload.entities) {
      const before = typeof doc["id"] === "string"
        ? this.markers.get(doc["id"] as string)
        : undefined;
      if (before === undefined) {
        continue;
      }
      if (this.markers.applyChange(doc) === "updated") {
        const after = this.markers.get(before.id);
        if (after !== undefined) {
          this.view.renderPopup(after);
        }
      }
    }
  }

  /** Cancels any pending debounced refresh (used on teardown). */
  dispose(): void {
    this.debouncedRefresh.cancel();
  }
}
