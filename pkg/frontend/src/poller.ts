/**
 * setInterval-based polling that never overlaps fetches: a slow response
 * simply delays the next tick's work instead of stacking requests.
 */

export interface Poller {
  start(): void;
  stop(): void;
  /** Force an immediate fetch without waiting for the next tick. */
  fetchNow(): Promise<void>;
}

export function createPoller<T>(
  fetcher: () => Promise<T>,
  onData: (data: T) => void,
  onError: (err: unknown) => void,
  intervalMs: number,
): Poller {
  let timer: ReturnType<typeof setInterval> | null = null;
  let inFlight = false;

  async function tick(): Promise<void> {
    if (inFlight) return;
    inFlight = true;
    try {
      onData(await fetcher());
    } catch (err) {
      onError(err);
    } finally {
      inFlight = false;
    }
  }

  return {
    start() {
      if (timer === null) {
        void tick();
        timer = setInterval(() => void tick(), intervalMs);
      }
    },
    stop() {
      if (timer !== null) {
        clearInterval(timer);
        timer = null;
      }
    },
    fetchNow() {
      return tick();
    },
  };
}
