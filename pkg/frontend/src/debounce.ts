/** Trailing-edge debounce helper used to coalesce bursts of viewport changes. */

export interface Debounced<Args extends unknown[]> {
  /** Schedules a call; resets the pending timer if one is already running. */
  call(...args: Args): void;
  /** Drops any pending call. */
  cancel(): void;
  /** Runs the pending call immediately, if any. */
  flush(): void;
  /** True while a call is scheduled but has not fired yet. */
  pending(): boolean;
}

/**
 * Returns a wrapper that invokes `fn` with the most recent arguments once
 * `waitMs` has elapsed without another call. A burst of calls therefore
 * produces at most one invocation per quiet window.
 */
export function debounce<Args extends unknown[]>(
  fn: (...args: Args) => void,
  waitMs: number,
): Debounced<Args> {
  if (!(waitMs >= 0)) {
    throw new RangeError(`waitMs must be >= 0, got ${waitMs}`);
  }
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: Args | null = null;

  const fire = () => {
    timer = null;
    if (lastArgs !== null) {
      const args = lastArgs;
      lastArgs = null;
      fn(...args);
    }
  };

  return {
    call(...args: Args): void {
      lastArgs = args;
      if (timer !== null) {
        clearTimeout(timer);
      }
      timer = setTimeout(fire, waitMs);
    },
    cancel(): void {
      if (timer !== null) {
        clearTimeout(timer);
        timer = null;
      }
      lastArgs = null;
    },
    flush(): void {
      if (timer !== null) {
        clearTimeout(timer);
        fire();
      }
    },
    pending(): boolean {
      return timer !== null;
    },
  };
}
