/** NDJSON consumer for GET /updates.
 *
 * Long-polls the endpoint, parses items line by line as chunks arrive,
 * and remembers the last seen seq so a reconnect resumes exactly where
 * the previous connection dropped (`since` query parameter). Connection
 * loss is surfaced through onStatus so the UI can show a stale banner.
 */
import type { FeedItem } from "./types.js";

export type StreamStatus = "connected" | "disconnected";

export interface StreamOptions {
  baseUrl?: string;
  sinceSeq?: number;
  waitSeconds?: number;
  maxItems?: number;
  reconnectDelayMs?: number;
  fetchFn?: typeof fetch;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class UpdatesStream {
  sinceSeq: number;
  private running = false;
  private readonly baseUrl: string;
  private readonly waitSeconds: number;
  private readonly maxItems: number;
  private readonly reconnectDelayMs: number;
  private readonly fetchFn: typeof fetch;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    private readonly onItem: (item: FeedItem) => void | Promise<void>,
    private readonly onStatus: (status: StreamStatus) => void = () => {},
    options: StreamOptions = {},
  ) {
    this.baseUrl = options.baseUrl ?? "";
    this.sinceSeq = options.sinceSeq ?? 0;
    this.waitSeconds = options.waitSeconds ?? 25;
    this.maxItems = options.maxItems ?? 500;
    this.reconnectDelayMs = options.reconnectDelayMs ?? 2000;
    this.fetchFn = options.fetchFn ?? fetch;
    this.sleep = options.sleep ?? defaultSleep;
  }

  /** Consume until stop() is called; reconnects forever on failure. */
  async run(): Promise<void> {
    this.running = true;
    while (this.running) {
      try {
        await this.consumeOnce();
        this.onStatus("connected");
      } catch {
        this.onStatus("disconnected");
        await this.sleep(this.reconnectDelayMs);
      }
    }
  }

  stop(): void {
    this.running = false;
  }

  /** One request/response cycle; exposed for tests. */
  async consumeOnce(): Promise<number> {
    const url =
      `${this.baseUrl}/updates?since=${this.sinceSeq}` +
      `&max=${this.maxItems}&wait_s=${this.waitSeconds}`;
    const resp = await this.fetchFn(url);
    if (!resp.ok || resp.body === null) {
      throw new Error(`stream request failed: HTTP ${resp.status}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    let delivered = 0;
    for (;;) {
      const { done, value } = await reader.read();
      if (value) buffer += decoder.decode(value, { stream: true });
      const lines = buffer.split("\n");
      buffer = lines.pop() ?? ""; // keep a possibly torn last line
      for (const line of lines) {
        if (!line.trim()) continue;
        const item = JSON.parse(line) as FeedItem;
        this.sinceSeq = item.seq;
        delivered += 1;
        await this.onItem(item);
      }
      if (done) return delivered;
    }
  }
}
