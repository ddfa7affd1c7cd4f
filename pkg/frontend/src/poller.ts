/**
 * Fixed-interval polling with exponential backoff on failure.
 *
 * The bridge has no push channel; a 1 s poll is the transport. On network
 * errors the interval doubles (bounded) so a dead server is not hammered,
 * and the UI can show a retry indicator via onError.
 */

export interface PollerOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  onError?: (error: unknown, nextDelayMs: number) => void;
}

export interface Poller {
  stop(): void;
  /** Current delay; grows while the endpoint is failing. */
  currentDelayMs(): number;
}

const DEFAULT_INTERVAL_MS = 1000;
const DEFAULT_MAX_INTERVAL_MS = 15000;

export function startPolling(
  tick: () => Promise<void>,
  options: PollerOptions = {},
): Poller {
  const base = options.intervalMs ?? DEFAULT_INTERVAL_MS;
  const max = options.maxIntervalMs ?? DEFAULT_MAX_INTERVAL_MS;
  let delay = base;
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | undefined;

  const run = async () => {
    if (stopped) return;
    try {
      await tick();
      delay = base;
    } catch (error) {
      delay = Math.min(delay * 2, max);
      options.onError?.(error, delay);
    }
    if (!stopped) timer = setTimeout(run, delay);
  };

  timer = setTimeout(run, 0);
  return {
    stop() {
      stopped = true;
      if (timer !== undefined) clearTimeout(timer);
    },
    currentDelayMs() {
      return delay;
    },
  };
}
