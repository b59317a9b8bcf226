/** Wire shapes of the agent's loopback console API. */

export interface Identity {
  name: string;
  fingerprint: string;
  fingerprint_display: string;
  online: boolean;
}

export interface PeerView {
  name: string;
  fingerprint: string;
  fingerprint_display: string;
  first_seen: number;
  pinned: boolean;
}

/** One server-pushed event: a message, a failure notice, or agent status. */
export interface AgentEvent {
  kind: "message" | "status";
  ordinal?: number;
  direction?: "in" | "out" | "notice";
  peer?: string | null;
  text?: string | null;
  failure?: string | null;
  seq?: number | null;
  timestamp: number;
  online?: boolean;
}

export interface MismatchDetail {
  error: "FINGERPRINT_MISMATCH";
  peer: string;
  pinned: string;
  fetched: string;
}

/** A row in the rendered conversation. */
export interface TimelineEntry {
  key: string;
  direction: "in" | "out" | "notice";
  peer: string | null;
  text: string | null;
  failure: string | null;
  seq: number | null;
  timestamp: number;
  pending: boolean;
}

export type Phase = "idle" | "connecting" | "online" | "offline" | "unauthorized";
