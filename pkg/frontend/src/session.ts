// Editor session state: the current part graph, the constraint list, the
// last solved mesh, and the undo history. Every edit is validated
// client-side against the manifest before it is sent; rejected part swaps
// roll back and surface the violations.

import { ServiceClient, SessionStream } from "./client.js";
import {
  Constraint,
  Mesh,
  ModelManifest,
  RulesManifest,
  SolveResult,
  decodeMesh,
} from "./protocol.js";

export interface GraphNode {
  name: string;
  partType: number;
}

export interface GraphEdge {
  a: string;
  b: string;
  siteId: string;
}

export function graphText(nodes: GraphNode[], edges: GraphEdge[]): string {
  const lines: string[] = [];
  for (const n of [...nodes].sort((x, y) => x.name.localeCompare(y.name))) {
    lines.push(`node ${n.name} ${n.partType}`);
  }
  for (const e of edges) lines.push(`edge ${e.a} ${e.b} ${e.siteId}`);
  return lines.join("\n") + "\n";
}

interface Snapshot {
  nodes: GraphNode[];
  edges: GraphEdge[];
  constraints: Constraint[];
}

export class EditorSession {
  nodes: GraphNode[] = [];
  edges: GraphEdge[] = [];
  constraints: Constraint[] = [];
  mesh: Mesh | null = null;
  pendingEdit = false;
  violations: string[] = [];
  readonly visibleModes = 10;
  readonly sliderRangeSigmas = 3;

  private undoStack: Snapshot[] = [];
  private resolvers: ((mesh: Mesh) => void)[] = [];
  onApplied: (() => void) | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly stream: SessionStream,
    public manifest: ModelManifest,
    public rules: RulesManifest,
  ) {
    stream.onResult = (result) => this.applyResult(result);
    stream.onError = (_seq, detail) => {
      this.pendingEdit = false;
      this.violations = [detail];
    };
  }

  static async connect(
    client: ServiceClient,
    stream: SessionStream,
  ): Promise<EditorSession> {
    const manifest = await client.loadManifest(); // raises on version mismatch
    const rules = await client.loadRules();
    await stream.connect();
    return new EditorSession(client, stream, manifest, rules);
  }

  /** Sigma scale of one part type's mode (sliders operate in sigma units). */
  sigmaOf(partType: number, mode: number): number {
    const part = this.manifest.parts[String(partType)];
    return part && mode < part.sigmas.length ? part.sigmas[mode] : 0;
  }

  partTypeOf(node: string): number {
    const n = this.nodes.find((x) => x.name === node);
    if (!n) throw new Error(`unknown node ${node}`);
    return n.partType;
  }

  private snapshot(): Snapshot {
    return {
      nodes: this.nodes.map((n) => ({ ...n })),
      edges: this.edges.map((e) => ({ ...e })),
      constraints: this.constraints.map((c) => ({ ...c })),
    };
  }

  private pushUndo(): void {
    this.undoStack.push(this.snapshot());
  }

  private restore(s: Snapshot): void {
    this.nodes = s.nodes;
    this.edges = s.edges;
    this.constraints = s.constraints;
  }

  /** Promise resolving with the next applied mesh (tests await edits). */
  nextMesh(): Promise<Mesh> {
    return new Promise((resolve) => this.resolvers.push(resolve));
  }

  /** Resolves with the mesh of the fully drained edit queue. */
  async settled(): Promise<Mesh> {
    await this.stream.whenSettled();
    if (!this.mesh) throw new Error("no solve applied yet");
    return this.mesh;
  }

  private applyResult(result: SolveResult): void {
    this.mesh = decodeMesh(result);
    this.pendingEdit = false;
    if (this.onApplied) this.onApplied();
    const waiting = this.resolvers;
    this.resolvers = [];
    for (const r of waiting) r(this.mesh);
  }

  private submit(): void {
    this.pendingEdit = true;
    this.stream.submit({
      graph: graphText(this.nodes, this.edges),
      constraints: this.constraints,
    });
  }

  setGraph(nodes: GraphNode[], edges: GraphEdge[]): void {
    this.pushUndo();
    this.nodes = nodes;
    this.edges = edges;
    this.constraints = [];
    this.submit();
  }

  /** Drag a handle: rapid calls coalesce in the stream (latest wins). */
  dragHandle(node: string, vertex: number, target: [number, number, number]): void {
    const existing = this.constraints.find(
      (c) => c.kind === "pointHandle" && c.node === node && c.vertex === vertex,
    );
    if (!existing) {
      this.pushUndo();
      this.constraints.push({ kind: "pointHandle", node, vertex, target });
    } else if (existing.kind === "pointHandle") {
      existing.target = target;
    }
    this.submit();
  }

  releaseHandle(node: string, vertex: number): void {
    this.pushUndo();
    this.constraints = this.constraints.filter(
      (c) => !(c.kind === "pointHandle" && c.node === node && c.vertex === vertex),
    );
    this.submit();
  }

  /** Slider in sigma units: pins mode `index` to value * sigma. */
  setSlider(node: string, index: number, sigmaUnits: number): void {
    const clamped = Math.max(-this.sliderRangeSigmas,
                             Math.min(this.sliderRangeSigmas, sigmaUnits));
    const sigma = this.sigmaOf(this.partTypeOf(node), index);
    const value = clamped * sigma;
    const existing = this.constraints.find(
      (c) => c.kind === "parameterPin" && c.node === node && c.index === index,
    );
    if (!existing) {
      this.pushUndo();
      this.constraints.push({ kind: "parameterPin", node, index, value });
    } else if (existing.kind === "parameterPin") {
      existing.value = value;
    }
    this.submit();
  }

  coupleParameters(nodeA: string, indexA: number, nodeB: string, indexB: number): void {
    this.pushUndo();
    this.constraints.push({
      kind: "parameterCouple", node: nodeA, index: indexA,
      nodeB, indexB,
    });
    this.submit();
  }

  /** Swap a node's part type; validates first and rolls back on rejection. */
  async swapPart(node: string, newType: number): Promise<boolean> {
    const before = this.snapshot();
    const trialNodes = this.nodes.map((n) =>
      n.name === node ? { ...n, partType: newType } : n,
    );
    const verdict = await this.client.validateGraph(
      graphText(trialNodes, this.edges),
    );
    if (!verdict.ok) {
      this.violations = verdict.violations;
      this.restore(before); // rollback: state unchanged
      return false;
    }
    this.violations = [];
    this.pushUndo();
    this.nodes = trialNodes;
    this.submit();
    return true;
  }

  undo(): void {
    const prev = this.undoStack.pop();
    if (!prev) return;
    this.restore(prev);
    this.submit();
  }
}
