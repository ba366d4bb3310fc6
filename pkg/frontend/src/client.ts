// Service client: manifest loading plus the stateful edit session stream.
//
// The session guarantees at most one in-flight solve: while a request is
// outstanding, newer edits overwrite a single pending slot (latest wins)
// and are sent once the acknowledgement arrives. Responses are applied in
// sequence order; a stale result (older seq than the last applied) is
// dropped, so the viewport always shows the most recent acknowledged
// solve.

import {
  Constraint,
  ModelManifest,
  RulesManifest,
  SessionMessage,
  SolveResult,
  SUPPORTED_PROTOCOL,
} from "./protocol.js";

export class VersionMismatchError extends Error {
  constructor(got: number) {
    super(`service protocol ${got} is not supported (client expects ${SUPPORTED_PROTOCOL})`);
  }
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

export interface EditRequest {
  graph: string;
  constraints: Constraint[];
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async loadManifest(): Promise<ModelManifest> {
    const res = await this.fetchFn(`${this.baseUrl}/model`);
    if (!res.ok) throw new Error(`GET /model failed: ${res.status}`);
    const manifest = (await res.json()) as ModelManifest;
    if (manifest.protocol !== SUPPORTED_PROTOCOL) {
      throw new VersionMismatchError(manifest.protocol);
    }
    return manifest;
  }

  async loadRules(): Promise<RulesManifest> {
    const res = await this.fetchFn(`${this.baseUrl}/rules`);
    if (!res.ok) throw new Error(`GET /rules failed: ${res.status}`);
    return (await res.json()) as RulesManifest;
  }

  async validateGraph(graph: string): Promise<{ ok: boolean; violations: string[] }> {
    const res = await this.fetchFn(`${this.baseUrl}/graph/validate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ graph }),
    });
    return (await res.json()) as { ok: boolean; violations: string[] };
  }
}

export class SessionStream {
  private socket: WebSocketLike | null = null;
  private seq = 0;
  private appliedSeq = 0;
  private inFlight = false;
  private pending: EditRequest | null = null;
  private lastAcknowledged: { request: EditRequest; result: SolveResult } | null = null;
  private idleResolvers: (() => void)[] = [];

  onResult: ((result: SolveResult) => void) | null = null;
  onError: ((seq: number, detail: string) => void) | null = null;
  onDrop: (() => void) | null = null;

  constructor(
    private readonly wsUrl: string,
    private readonly makeSocket: SocketFactory,
  ) {}

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.makeSocket(this.wsUrl);
      this.socket = socket;
      socket.onopen = () => resolve();
      socket.onerror = (err) => reject(err);
      socket.onmessage = (ev) => this.handleMessage(String(ev.data));
      socket.onclose = () => {
        this.socket = null;
        this.inFlight = false;
        if (this.onDrop) this.onDrop();
      };
    });
  }

  /** Reconnect and re-sync from the last acknowledged solve. */
  async reconnect(): Promise<void> {
    await this.connect();
    if (this.lastAcknowledged) {
      this.submit(this.lastAcknowledged.request);
    }
  }

  get inFlightCount(): number {
    return this.inFlight ? 1 : 0;
  }

  get lastResult(): SolveResult | null {
    return this.lastAcknowledged ? this.lastAcknowledged.result : null;
  }

  /** Queue an edit; rapid calls while a solve is in flight coalesce. */
  submit(request: EditRequest): void {
    if (!this.socket) throw new Error("session not connected");
    const snapshot: EditRequest = {
      graph: request.graph,
      constraints: request.constraints.map((c) => ({ ...c })),
    };
    if (this.inFlight) {
      this.pending = snapshot; // latest wins
      return;
    }
    this.send(snapshot);
  }

  /** Resolves once every queued edit has been acknowledged. */
  whenSettled(): Promise<void> {
    if (!this.inFlight && !this.pending) return Promise.resolve();
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }

  private send(request: EditRequest): void {
    this.seq += 1;
    this.inFlight = true;
    this.socket!.send(
      JSON.stringify({
        type: "solve",
        seq: this.seq,
        graph: request.graph,
        constraints: request.constraints,
      }),
    );
    this.lastSent = request;
  }

  private lastSent: EditRequest | null = null;

  private handleMessage(raw: string): void {
    const msg = JSON.parse(raw) as SessionMessage;
    this.inFlight = false;
    if (msg.type === "result") {
      if (msg.seq > this.appliedSeq) {
        this.appliedSeq = msg.seq;
        if (this.lastSent) {
          this.lastAcknowledged = { request: this.lastSent, result: msg };
        }
        if (this.onResult) this.onResult(msg);
      }
    } else if (this.onError) {
      this.onError(msg.seq, msg.detail);
    }
    if (this.pending) {
      const next = this.pending;
      this.pending = null;
      this.send(next);
    } else {
      const waiting = this.idleResolvers;
      this.idleResolvers = [];
      for (const resolve of waiting) resolve();
    }
  }

  close(): void {
    if (this.socket) this.socket.close();
  }
}
