/** Typed client for the agent's loopback console API.
 *
 * Every request goes to the one configured base URL; the console makes no
 * network calls to any other origin. The push channel is an SSE stream
 * read through fetch so the bearer token can travel in the header.
 */

import { SseParser } from "./sse.js";
import type { AgentEvent, Identity, MismatchDetail, PeerView } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public mismatch: MismatchDetail | null = null,
  ) {
    super(message);
  }
}

export interface EventStreamHandle {
  close(): void;
  readonly done: Promise<void>;
}

/** The surface the console session consumes; AgentApi is the real one,
 * tests substitute fakes. */
export interface AgentApiContract {
  identity(): Promise<Identity>;
  peers(): Promise<PeerView[]>;
  send(peer: string, text: string): Promise<number>;
  repin(peer: string): Promise<PeerView>;
  events(onEvent: (event: AgentEvent) => void): Promise<EventStreamHandle>;
}

export class AgentApi implements AgentApiContract {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: typeof fetch = fetch.bind(globalThis),
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = { Authorization: `Bearer ${this.token}` };
    if (json) h["Content-Type"] = "application/json";
    return h;
  }

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async checked(response: Response): Promise<Response> {
    if (response.ok) return response;
    let detail: unknown = null;
    try {
      detail = (await response.json()).detail;
    } catch {
      /* non-JSON error body */
    }
    if (
      response.status === 409 &&
      detail !== null &&
      typeof detail === "object" &&
      (detail as MismatchDetail).error === "FINGERPRINT_MISMATCH"
    ) {
      throw new ApiError(409, "fingerprint mismatch", detail as MismatchDetail);
    }
    const message = typeof detail === "string" ? detail : `HTTP ${response.status}`;
    throw new ApiError(response.status, message);
  }

  async identity(): Promise<Identity> {
    const r = await this.checked(await this.fetchImpl(this.url("/identity"), { headers: this.headers() }));
    return (await r.json()) as Identity;
  }

  async peers(): Promise<PeerView[]> {
    const r = await this.checked(await this.fetchImpl(this.url("/peers"), { headers: this.headers() }));
    return (await r.json()) as PeerView[];
  }

  async send(peer: string, text: string): Promise<number> {
    const r = await this.checked(
      await this.fetchImpl(this.url("/send"), {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ peer, text }),
      }),
    );
    return ((await r.json()) as { seq: number }).seq;
  }

  async repin(peer: string): Promise<PeerView> {
    const r = await this.checked(
      await this.fetchImpl(this.url(`/peers/${encodeURIComponent(peer)}/repin`), {
        method: "POST",
        headers: this.headers(),
      }),
    );
    return (await r.json()) as PeerView;
  }

  /** Subscribe to the push channel; onEvent fires per parsed event. The
   * returned handle's `done` resolves when the stream ends (drop or close). */
  async events(onEvent: (event: AgentEvent) => void): Promise<EventStreamHandle> {
    const controller = new AbortController();
    const response = await this.fetchImpl(this.url("/events"), {
      headers: this.headers(),
      signal: controller.signal,
    });
    await this.checked(response);
    if (!response.body) throw new ApiError(0, "no response body for event stream");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();

    const done = (async () => {
      try {
        for (;;) {
          const { value, done: finished } = await reader.read();
          if (finished) break;
          for (const data of parser.push(decoder.decode(value, { stream: true }))) {
            try {
              onEvent(JSON.parse(data) as AgentEvent);
            } catch {
              /* skip undecodable event */
            }
          }
        }
      } catch {
        /* aborted or dropped: treated as stream end */
      }
    })();

    return { close: () => controller.abort(), done };
  }
}
