// Event polling: the UI's only liveness mechanism. Views re-fetch from the
// API whenever the head sequence number advances; there is no push channel
// and no optimistic state.

import { ApiClient } from "./api.js";

export interface EventLoop {
  stop(): void;
}

export function startEventLoop(
  client: ApiClient,
  onAdvance: (head: number) => void,
  intervalMs = 2000,
): EventLoop {
  let since = 0;
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | null = null;

  async function poll(): Promise<void> {
    if (stopped) return;
    try {
      const result = await client.events(since);
      if (result.head !== since) {
        since = result.head;
        onAdvance(result.head);
      }
    } catch {
      // transient errors: keep polling
    }
    if (!stopped) timer = setTimeout(poll, intervalMs);
  }

  void poll();
  return {
    stop() {
      stopped = true;
      if (timer !== null) clearTimeout(timer);
    },
  };
}
