import { AskResponse, AskTimings } from "./types.js";

/** One question/answer exchange in the chat panel. */
export interface Turn {
  readonly id: number;
  readonly question: string;
  readonly status: "pending" | "answered" | "failed";
  readonly answer?: string;
  readonly timings?: AskTimings;
  readonly entityCount?: number;
  readonly error?: string;
}

/**
 * Append-only chat history. Questions are appended as pending turns; each is
 * later resolved exactly once, either with the service's answer (including
 * its reported timings, rendered verbatim) or with an error that the user can
 * retry. Turns are never removed or reordered.
 */
export class Transcript {
  private entries: Turn[] = [];
  private nextId = 1;
  private listeners: Array<() => void> = [];

  /** Appends a pending turn and returns its id. Rejects blank questions. */
  beginQuestion(question: string): number {
    const trimmed = question.trim();
    if (trimmed.length === 0) {
      throw new RangeError("question must be non-empty");
    }
    const id = this.nextId++;
    this.entries.push({ id, question: trimmed, status: "pending" });
    this.emit();
    return id;
  }

  /** Resolves a pending turn with the service's answer. */
  attachAnswer(id: number, response: AskResponse): void {
    const index = this.indexOfPending(id);
    const turn = this.entries[index]!;
    this.entries[index] = {
      ...turn,
      status: "answered",
      answer: response.answer,
      timings: { ...response.timings },
      entityCount: response.entity_count,
    };
    this.emit();
  }

  /** Resolves a pending turn with a failure the user may retry. */
  attachError(id: number, message: string): void {
    const index = this.indexOfPending(id);
    const turn = this.entries[index]!;
    this.entries[index] = { ...turn, status: "failed", error: message };
    this.emit();
  }

  private indexOfPending(id: number): number {
    const index = this.entries.findIndex((t) => t.id === id);
    if (index < 0) {
      throw new RangeError(`no turn with id ${id}`);
    }
    if (this.entries[index]!.status !== "pending") {
      throw new RangeError(`turn ${id} is already resolved`);
    }
    return index;
  }

  /** Snapshot of all turns, oldest first. */
  turns(): readonly Turn[] {
    return this.entries.map((t) => ({ ...t }));
  }

  get length(): number {
    return this.entries.length;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }
}

/** Compact badge text for an answered turn, e.g. "broker 3.2 ms". */
export function timingBadges(timings: AskTimings): string[] {
  return [
    `broker ${timings.broker_ms} ms`,
    `llm ${timings.llm_ms} ms`,
    `total ${timings.total_ms} ms`,
  ];
}
