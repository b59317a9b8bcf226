/** Console session state machine.
 *
 * Owns the timeline, the peer list, the re-pin dialog, and the reconnect
 * loop. Rendering is a subscriber; all mutations funnel through here so the
 * UI stays a pure function of this state.
 *
 * Timeline identity: confirmed messages key on direction:peer:seq, so
 * replays after a reconnect (the agent resends its whole timeline) and
 * optimistic-send echoes reconcile idempotently instead of duplicating.
 * The console never stores any key material; peers arrive as fingerprints
 * only, which is all the agent's API exposes.
 */

import { AgentApiContract, ApiError, EventStreamHandle } from "./api.js";
import type {
  AgentEvent,
  Identity,
  MismatchDetail,
  PeerView,
  Phase,
  TimelineEntry,
} from "./types.js";

export interface ConsoleState {
  phase: Phase;
  identity: Identity | null;
  peers: PeerView[];
  timeline: TimelineEntry[];
  repinDialog: MismatchDetail | null;
  lastError: string | null;
  agentOnline: boolean;
}

export interface StoreOptions {
  /** Injectable for tests: sleep between reconnect attempts. */
  sleep?: (ms: number) => Promise<void>;
  backoffBaseMs?: number;
  backoffCapMs?: number;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ConsoleStore {
  state: ConsoleState = {
    phase: "idle",
    identity: null,
    peers: [],
    timeline: [],
    repinDialog: null,
    lastError: null,
    agentOnline: true,
  };

  private api: AgentApiContract | null = null;
  private stream: EventStreamHandle | null = null;
  private listeners = new Set<(state: ConsoleState) => void>();
  private seen = new Set<string>();
  private localCounter = 0;
  private closed = false;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly backoffBaseMs: number;
  private readonly backoffCapMs: number;

  constructor(options: StoreOptions = {}) {
    this.sleep = options.sleep ?? defaultSleep;
    this.backoffBaseMs = options.backoffBaseMs ?? 500;
    this.backoffCapMs = options.backoffCapMs ?? 10_000;
  }

  subscribe(listener: (state: ConsoleState) => void): () => void {
    this.listeners.add(listener);
    listener(this.state);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private patch(partial: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...partial };
    this.notify();
  }

  // -- connection lifecycle -------------------------------------------------

  async connect(api: AgentApiContract): Promise<void> {
    this.api = api;
    this.closed = false;
    this.patch({ phase: "connecting", lastError: null });
    try {
      await this.openSession();
    } catch (error) {
      if (error instanceof ApiError && error.status === 401) {
        this.patch({ phase: "unauthorized", lastError: "bad or missing token" });
        return;
      }
      this.patch({ phase: "offline", lastError: String(error) });
      void this.reconnectLoop();
      return;
    }
    void this.watchStream();
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
    this.patch({ phase: "idle" });
  }

  private async openSession(): Promise<void> {
    if (!this.api) throw new Error("no api configured");
    const identity = await this.api.identity();
    const peers = await this.api.peers();
    // replay rebuilds the timeline: drop confirmed rows, keep local pending
    this.seen.clear();
    const pending = this.state.timeline.filter((entry) => entry.pending);
    this.state = {
      ...this.state,
      identity,
      peers,
      timeline: pending,
      phase: "online",
      lastError: null,
    };
    this.stream = await this.api.events((event) => this.handleEvent(event));
    this.notify();
  }

  private async watchStream(): Promise<void> {
    if (!this.stream) return;
    await this.stream.done;
    if (this.closed) return;
    this.patch({ phase: "offline" });
    void this.reconnectLoop();
  }

  private async reconnectLoop(): Promise<void> {
    let attempt = 0;
    while (!this.closed) {
      attempt += 1;
      const delay = Math.min(this.backoffCapMs, this.backoffBaseMs * 2 ** Math.min(attempt, 5));
      await this.sleep(delay);
      if (this.closed) return;
      try {
        await this.openSession();
        void this.watchStream();
        return;
      } catch (error) {
        if (error instanceof ApiError && error.status === 401) {
          this.patch({ phase: "unauthorized", lastError: "bad or missing token" });
          return;
        }
        this.patch({ phase: "offline", lastError: String(error) });
      }
    }
  }

  // -- events ----------------------------------------------------------------

  private entryKey(event: AgentEvent): string {
    if (event.direction && event.peer && event.seq != null) {
      return `${event.direction}:${event.peer}:${event.seq}`;
    }
    return `ordinal:${event.ordinal ?? `local-${this.localCounter++}`}`;
  }

  handleEvent(event: AgentEvent): void {
    if (event.kind === "status") {
      this.patch({ agentOnline: Boolean(event.online) });
      return;
    }
    if (event.kind !== "message" || !event.direction) return;
    const key = this.entryKey(event);
    if (this.seen.has(key)) return; // idempotent by (direction, peer, seq)
    this.seen.add(key);

    // reconcile an optimistic bubble: same direction/peer/seq, still pending
    const timeline = [...this.state.timeline];
    const optimistic = timeline.findIndex(
      (entry) =>
        entry.pending &&
        entry.direction === event.direction &&
        entry.peer === event.peer &&
        (entry.seq === event.seq || entry.seq === null),
    );
    const entry: TimelineEntry = {
      key,
      direction: event.direction,
      peer: event.peer ?? null,
      text: event.text ?? null,
      failure: event.failure ?? null,
      seq: event.seq ?? null,
      timestamp: event.timestamp,
      pending: false,
    };
    if (optimistic !== -1) {
      timeline[optimistic] = entry;
    } else {
      timeline.push(entry);
    }
    this.patch({ timeline });
  }

  // -- user actions ------------------------------------------------------------

  async send(peer: string, text: string): Promise<void> {
    if (!this.api) throw new Error("not connected");
    if (!text) return; // no empty messages from the UI
    const localKey = `local:${this.localCounter++}`;
    const bubble: TimelineEntry = {
      key: localKey,
      direction: "out",
      peer,
      text,
      failure: null,
      seq: null,
      timestamp: Date.now() / 1000,
      pending: true,
    };
    this.patch({ timeline: [...this.state.timeline, bubble] });
    try {
      const seq = await this.api.send(peer, text);
      // attach the authoritative seq; the echo event will swap it in place
      const timeline = this.state.timeline.map((entry) =>
        entry.key === localKey ? { ...entry, seq } : entry,
      );
      this.patch({ timeline });
    } catch (error) {
      const timeline = this.state.timeline.filter((entry) => entry.key !== localKey);
      if (error instanceof ApiError && error.mismatch) {
        this.patch({ timeline, repinDialog: error.mismatch });
        return;
      }
      const failureRow: TimelineEntry = {
        key: localKey,
        direction: "notice",
        peer,
        text: null,
        failure: `send failed: ${error instanceof Error ? error.message : String(error)}`,
        seq: null,
        timestamp: Date.now() / 1000,
        pending: false,
      };
      this.patch({ timeline: [...timeline, failureRow] });
    }
  }

  /** Explicit user confirmation of a changed peer key. */
  async confirmRepin(): Promise<void> {
    if (!this.api || !this.state.repinDialog) return;
    const peer = this.state.repinDialog.peer;
    try {
      await this.api.repin(peer);
      const peers = await this.api.peers();
      this.patch({ repinDialog: null, peers });
    } catch (error) {
      this.patch({ lastError: `re-pin failed: ${String(error)}` });
    }
  }

  cancelRepin(): void {
    this.patch({ repinDialog: null });
  }

  /** Conversation rows for one peer, ordered by seq within each direction
   * (stable across reconnects because keys and replay order are stable). */
  conversation(peer: string): TimelineEntry[] {
    return this.state.timeline.filter((entry) => entry.peer === peer);
  }
}

export function renderEventText(entry: TimelineEntry): string {
  if (entry.failure) {
    return `!! ${entry.failure}${entry.peer ? ` (peer ${entry.peer})` : ""}`;
  }
  if (entry.direction === "in") {
    return `[${entry.peer}] ${entry.text}`;
  }
  return `> ${entry.text}`;
}
