// Wire types of the partspace solve service. The client performs no
// geometry math; meshes arrive fully solved and are only displayed.

export const SUPPORTED_PROTOCOL = 1;

export type ArrayPayload =
  | number[]
  | number[][]
  | { encoding: "base64"; dtype: string; shape: number[]; data: string };

export interface PartManifest {
  vertices: ArrayPayload;
  triangles: ArrayPayload;
  sigmas: number[];
  modes: number;
}

export interface ModelManifest {
  protocol: number;
  meta: Record<string, unknown>;
  parts: Record<string, PartManifest>;
}

export interface RulesManifest {
  rules: { sites: { id: string; partA: number; partB: number; ordinal: number }[] };
  sites: Record<string, { partA: number; partB: number }>;
}

export type Constraint =
  | { kind: "pointHandle"; node: string; vertex: number; target: [number, number, number]; weight?: number }
  | { kind: "parameterPin"; node: string; index: number; value: number; weight?: number }
  | { kind: "parameterCouple"; node: string; index: number; nodeB: string; indexB: number; weight?: number };

export interface SolveRequest {
  type: "solve";
  seq: number;
  graph: string;
  constraints: Constraint[];
}

export interface SolveResult {
  type: "result";
  seq: number;
  positions: ArrayPayload;
  triangles: ArrayPayload;
  labels: ArrayPayload;
  energy: number;
  lambdas: Record<string, number[]>;
}

export interface SolveError {
  type: "error";
  seq: number;
  error: string;
  detail: string;
}

export type SessionMessage = SolveResult | SolveError;

export interface Mesh {
  positions: Float64Array; // flat xyz
  triangles: Int32Array;   // flat ijk
  labels: Int32Array;
}

function b64ToBytes(data: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(data);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(data, "base64"));
}

export function decodeArray(payload: ArrayPayload): Float64Array {
  if (Array.isArray(payload)) {
    const flat: number[] = [];
    for (const row of payload) {
      if (Array.isArray(row)) flat.push(...row);
      else flat.push(row as number);
    }
    return Float64Array.from(flat);
  }
  const bytes = b64ToBytes(payload.data);
  if (payload.dtype.endsWith("i8")) {
    const big = new BigInt64Array(bytes.buffer, bytes.byteOffset, bytes.byteLength / 8);
    return Float64Array.from(Array.from(big, Number));
  }
  return new Float64Array(bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength));
}

export function decodeMesh(msg: SolveResult): Mesh {
  return {
    positions: decodeArray(msg.positions),
    triangles: Int32Array.from(decodeArray(msg.triangles)),
    labels: Int32Array.from(decodeArray(msg.labels)),
  };
}

export function meshMaxDifference(a: Mesh, b: Mesh): number {
  if (a.positions.length !== b.positions.length) return Infinity;
  let worst = 0;
  for (let i = 0; i < a.positions.length; i++) {
    worst = Math.max(worst, Math.abs(a.positions[i] - b.positions[i]));
  }
  return worst;
}
