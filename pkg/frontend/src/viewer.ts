// Minimal wireframe viewport. Display transforms only: the solver output
// is projected with a fixed orbit camera and drawn as line segments; no
// geometry is modified client-side.

import { Mesh } from "./protocol.js";

export interface Camera {
  yaw: number;
  pitch: number;
  distance: number;
  centerX: number;
  centerY: number;
  centerZ: number;
}

export function defaultCamera(): Camera {
  return { yaw: 0.6, pitch: 0.4, distance: 6, centerX: 0, centerY: 0, centerZ: 0 };
}

/** Project a point to screen space: [x, y, depth]. */
export function project(
  cam: Camera, width: number, height: number,
  x: number, y: number, z: number,
): [number, number, number] {
  const cx = x - cam.centerX;
  const cy = y - cam.centerY;
  const cz = z - cam.centerZ;
  const cosY = Math.cos(cam.yaw), sinY = Math.sin(cam.yaw);
  const cosP = Math.cos(cam.pitch), sinP = Math.sin(cam.pitch);
  const rx = cosY * cx + sinY * cz;
  const rz0 = -sinY * cx + cosY * cz;
  const ry = cosP * cy - sinP * rz0;
  const rz = sinP * cy + cosP * rz0 + cam.distance;
  const f = (0.9 * Math.min(width, height)) / Math.max(rz, 1e-6);
  return [width / 2 + f * rx, height / 2 - f * ry, rz];
}

const PART_COLORS = ["#4a90d9", "#d97a4a", "#5cb85c", "#b85c9e", "#b8a15c"];

export class Viewer {
  private mesh: Mesh | null = null;
  camera = defaultCamera();

  constructor(private readonly canvas: HTMLCanvasElement) {}

  setMesh(mesh: Mesh): void {
    this.mesh = mesh;
    this.draw();
  }

  /** Screen-space positions of every vertex (used for handle picking). */
  projectedVertices(): [number, number, number][] {
    if (!this.mesh) return [];
    const out: [number, number, number][] = [];
    const p = this.mesh.positions;
    for (let v = 0; v < p.length / 3; v++) {
      out.push(project(this.camera, this.canvas.width, this.canvas.height,
                       p[3 * v], p[3 * v + 1], p[3 * v + 2]));
    }
    return out;
  }

  pickVertex(sx: number, sy: number, radius = 12): number {
    let best = -1;
    let bestD = radius * radius;
    const pts = this.projectedVertices();
    for (let v = 0; v < pts.length; v++) {
      const dx = pts[v][0] - sx;
      const dy = pts[v][1] - sy;
      const d = dx * dx + dy * dy;
      if (d < bestD) {
        bestD = d;
        best = v;
      }
    }
    return best;
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.mesh) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    const pts = this.projectedVertices();
    const t = this.mesh.triangles;
    for (let k = 0; k < t.length / 3; k++) {
      const label = this.mesh.labels[k] ?? 0;
      ctx.strokeStyle = PART_COLORS[label % PART_COLORS.length];
      ctx.beginPath();
      const a = pts[t[3 * k]], b = pts[t[3 * k + 1]], c = pts[t[3 * k + 2]];
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(b[0], b[1]);
      ctx.lineTo(c[0], c[1]);
      ctx.closePath();
      ctx.stroke();
    }
  }
}
