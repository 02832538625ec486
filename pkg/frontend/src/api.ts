/** Service client plus the debounced, stale-dropping feedback loop. */

import type { DragSpecDoc, EditSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseFor(resp: Response): Promise<never> {
  let code = `HTTP${resp.status}`;
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") {
      code = body.error;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(imageBytes: Uint8Array): Promise<string> {
    const resp = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      body: imageBytes as unknown as BodyInit,
      headers: { "content-type": "application/octet-stream" },
    });
    if (resp.status !== 201) await raiseFor(resp);
    return (await resp.json()).id;
  }

  async computeEdit(sessionId: string, doc: DragSpecDoc): Promise<EditSummary> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/edit`), {
      method: "POST",
      body: JSON.stringify(doc),
      headers: { "content-type": "application/json" },
    });
    if (!resp.ok) await raiseFor(resp);
    return (await resp.json()) as EditSummary;
  }

  async artifact(sessionId: string, kind: string): Promise<Uint8Array> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/artifacts/${kind}`));
    if (!resp.ok) await raiseFor(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(this.url("/healthz"));
      return resp.ok;
    } catch {
      return false;
    }
  }
}

export interface LiveFeedbackOptions<TDoc, TResult> {
  perform: (doc: TDoc) => Promise<TResult>;
  apply: (result: TResult, requestId: number) => void;
  onError?: (err: unknown) => void;
  debounceMs?: number;
}

/**
 * Debounces spec changes and discards stale responses: a result is applied
 * only if its monotonically increasing request id exceeds every id applied
 * so far, so the displayed overlay always corresponds to the newest answer.
 */
export class LiveFeedback<TDoc, TResult> {
  private nextId = 0;
  private lastApplied = -1;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pendingDoc: TDoc | null = null;
  private inFlight = 0;

  constructor(private opts: LiveFeedbackOptions<TDoc, TResult>) {}

  request(doc: TDoc): void {
    this.pendingDoc = doc;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => void this.fire(), this.opts.debounceMs ?? 250);
  }

  /** Send the pending document immediately (used on blur and in tests). */
  flush(): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    return this.fire();
  }

  get appliedId(): number {
    return this.lastApplied;
  }

  get busy(): boolean {
    return this.inFlight > 0 || this.timer !== null;
  }

  private async fire(): Promise<void> {
    if (this.pendingDoc === null) return;
    const doc = this.pendingDoc;
    this.pendingDoc = null;
    this.timer = null;
    const id = this.nextId++;
    this.inFlight++;
    try {
      const result = await this.opts.perform(doc);
      if (id > this.lastApplied) {
        this.lastApplied = id;
        this.opts.apply(result, id);
      }
    } catch (err) {
      this.opts.onError?.(err);
    } finally {
      this.inFlight--;
    }
  }
}
