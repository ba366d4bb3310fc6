// Browser entry point: builds the part palette and mode sliders from the
// manifest, wires pointer dragging to coalesced handle edits, and keeps
// the viewport on the most recent acknowledged solve.

import { ServiceClient, SessionStream } from "./client.js";
import { EditorSession, GraphEdge, GraphNode } from "./session.js";
import { Viewer } from "./viewer.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export async function startEditor(serviceUrl: string): Promise<void> {
  const banner = el<HTMLDivElement>("banner");
  const palette = el<HTMLDivElement>("palette");
  const sliders = el<HTMLDivElement>("sliders");
  const violations = el<HTMLDivElement>("violations");
  const canvas = el<HTMLCanvasElement>("viewport");
  const viewer = new Viewer(canvas);

  const client = new ServiceClient(serviceUrl);
  const wsUrl = serviceUrl.replace(/^http/, "ws") + "/session";
  const stream = new SessionStream(wsUrl, (url) => new WebSocket(url) as never);

  let session: EditorSession;
  try {
    session = await EditorSession.connect(client, stream);
  } catch (err) {
    banner.textContent = String(err);
    banner.classList.add("error");
    return;
  }
  stream.onDrop = () => {
    banner.textContent = "connection lost; reconnecting...";
    stream.reconnect().then(() => (banner.textContent = ""));
  };

  // initial graph: one node of the first two part types, docked on the
  // first site whose rule admits them (falls back to a single part)
  const types = Object.keys(session.manifest.parts).map(Number).sort();
  const nodes: GraphNode[] = [{ name: "a", partType: types[0] }];
  const edges: GraphEdge[] = [];
  const site = Object.entries(session.rules.sites).find(
    ([, s]) => types.includes(s.partA) && types.includes(s.partB),
  );
  if (site) {
    nodes.push({ name: "b", partType: site[1].partB });
    nodes[0].partType = site[1].partA;
    edges.push({ a: "a", b: "b", siteId: site[0] });
  }
  session.setGraph(nodes, edges);

  // part palette: swap node "b" across available types (rollback on reject)
  for (const t of types) {
    const button = document.createElement("button");
    button.textContent = `part ${t}`;
    button.onclick = async () => {
      const ok = await session.swapPart("b", t);
      violations.textContent = ok ? "" : session.violations.join("; ");
    };
    palette.appendChild(button);
  }

  // sliders: +-3 sigma over the leading modes of node "a"
  const part = session.manifest.parts[String(nodes[0].partType)];
  for (let mode = 0; mode < Math.min(session.visibleModes, part.modes); mode++) {
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(-session.sliderRangeSigmas);
    input.max = String(session.sliderRangeSigmas);
    input.step = "0.05";
    input.value = "0";
    input.oninput = () => session.setSlider("a", mode, Number(input.value));
    sliders.appendChild(input);
  }

  const undoButton = el<HTMLButtonElement>("undo");
  undoButton.onclick = () => session.undo();

  // pointer dragging: pick the nearest projected vertex, move it in the
  // view plane; interim moves coalesce through the stream
  let dragging: { node: string; vertex: number } | null = null;
  canvas.onpointerdown = (ev) => {
    const v = viewer.pickVertex(ev.offsetX, ev.offsetY);
    if (v >= 0 && session.mesh) {
      dragging = { node: "a", vertex: v };
    }
  };
  canvas.onpointermove = (ev) => {
    if (!dragging || !session.mesh) return;
    const p = session.mesh.positions;
    const v = dragging.vertex;
    // view-plane displacement scaled by the camera distance
    const scale = viewer.camera.distance / (0.9 * Math.min(canvas.width, canvas.height));
    session.dragHandle(dragging.node, v, [
      p[3 * v] + ev.movementX * scale,
      p[3 * v + 1] - ev.movementY * scale,
      p[3 * v + 2],
    ]);
  };
  canvas.onpointerup = () => (dragging = null);

  // the session installed its own onResult in the constructor; chain the
  // viewer behind it so the viewport always shows the acknowledged solve
  const sessionHandler = stream.onResult;
  stream.onResult = (result) => {
    sessionHandler?.(result);
    if (session.mesh) viewer.setMesh(session.mesh);
  };
}
