/** Editor wiring: socket, canvas, pointer tools, and parameter controls. */

import { fitCamera, project, unprojectDelta } from "./camera.js";
import type { Screen } from "./camera.js";
import { DragLoop } from "./drag.js";
import { SessionClient, connectWebSocket } from "./net.js";
import { pickVertex } from "./picking.js";
import type { Frame, MeshTopology, ServerMessage, Vec } from "./protocol.js";
import { buildDrawLists, drawScene } from "./render.js";
import { ParamMirror, acceptFrame, applyTopology, initialViewState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const banner = el<HTMLDivElement>("banner");
const wSlider = el<HTMLInputElement>("w-slider");
const wLabel = el<HTMLSpanElement>("w-value");
const sSlider = el<HTMLInputElement>("s-slider");
const sLabel = el<HTMLSpanElement>("s-value");
const energySelect = el<HTMLSelectElement>("energy");
const regSelect = el<HTMLSelectElement>("regularizer");
const resetToggle = el<HTMLInputElement>("reset-on-release");
const statsBox = el<HTMLDivElement>("stats");
const sessionInput = el<HTMLInputElement>("session-file");
const baseDirInput = el<HTMLInputElement>("base-dir");

const state = initialViewState();
const params = new ParamMirror({ w: 1.0, s: 0.1, regularizer: "scl1", energy: "arap" });
let bboxDiag = 1.0;
let drag: DragLoop | null = null;
let hoverVertex: number | null = null;
let panning: { x: number; y: number; orbit: boolean } | null = null;

const client = new SessionClient({
  onMessage: handleServer,
  onStatus: (ok) => {
    banner.textContent = ok ? "" : "connection lost - edits are dropped";
    banner.className = ok ? "banner hidden" : "banner error";
    if (!ok) drag = null;
  },
});

function screenSize(): Screen {
  return { width: canvas.width, height: canvas.height };
}

function handleServer(msg: ServerMessage): void {
  switch (msg.type) {
    case "MeshTopology":
      applyTopology(state, msg as MeshTopology);
      state.camera = fitCamera(msg.restPositions, msg.embed, screenSize());
      bboxDiag = estimateBbox(msg.restPositions, msg.embed);
      refreshSliderLabels();
      break;
    case "Frame":
      acceptFrame(state, msg as Frame);
      break;
    case "Ack":
      if (msg.requestId) {
        params.onAck(msg.requestId);
        refreshSliderLabels();
      }
      break;
    case "Error":
      if (msg.requestId) params.onError(msg.requestId);
      console.warn("server error:", msg.code, msg.message);
      refreshSliderLabels();
      break;
    case "SessionExport": {
      const blob = new Blob([JSON.stringify(msg, null, 1)],
        { type: "application/json" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "session_export.json";
      a.click();
      break;
    }
  }
}

function estimateBbox(positions: number[], embed: number): number {
  const lo = [Infinity, Infinity, Infinity];
  const hi = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < positions.length / embed; i++) {
    for (let k = 0; k < embed; k++) {
      const v = positions[i * embed + k];
      lo[k] = Math.min(lo[k], v);
      hi[k] = Math.max(hi[k], v);
    }
  }
  let sum = 0;
  for (let k = 0; k < embed; k++) sum += (hi[k] - lo[k]) ** 2;
  return Math.sqrt(sum) || 1.0;
}

// -- parameter controls (log-scale w, s as a fraction of the bbox diagonal)

function sliderToW(v: number): number {
  return 10 ** (v / 25 - 2); // 0..125 -> 1e-2..1e3
}

function sliderToS(v: number): number {
  return bboxDiag * 10 ** (v / 50 - 3); // 0..125 -> 1e-3..~0.3 of bbox
}

function refreshSliderLabels(): void {
  const shown = params.shown();
  wLabel.textContent = (shown.w ?? 0).toPrecision(3);
  sLabel.textContent = (shown.s ?? 0).toPrecision(3);
  energySelect.value = shown.energy ?? "arap";
  regSelect.value = shown.regularizer ?? "scl1";
}

function submitParams(changes: Record<string, unknown>): void {
  const id = client.send({ type: "SetParams", params: changes });
  if (id) params.submit(id, changes);
}

wSlider.oninput = () => submitParams({ w: sliderToW(Number(wSlider.value)) });
sSlider.oninput = () => submitParams({ s: sliderToS(Number(sSlider.value)) });
energySelect.onchange = () => submitParams({ energy: energySelect.value });
regSelect.onchange = () => submitParams({ regularizer: regSelect.value });
resetToggle.onchange = () => { state.resetRestOnRelease = resetToggle.checked; };

el<HTMLButtonElement>("reset-rest").onclick = () => client.send({ type: "ResetRest" });
el<HTMLButtonElement>("reset-duals").onclick = () => client.send({ type: "ResetDuals" });
el<HTMLButtonElement>("pause").onclick = () => client.send({ type: "Pause" });
el<HTMLButtonElement>("resume").onclick = () => client.send({ type: "Resume" });
el<HTMLButtonElement>("export").onclick = () => client.send({ type: "ExportSession" });

sessionInput.onchange = async () => {
  const file = sessionInput.files?.[0];
  if (!file) return;
  const doc = JSON.parse(await file.text());
  client.send({ type: "LoadSession", document: doc, baseDir: baseDirInput.value || "." });
};

// -- pointer tools: pick, drag handles, pan/orbit, zoom

function currentPositions(): number[] | null {
  if (state.latestFrame) return state.latestFrame.positions;
  return state.topology ? state.topology.restPositions : null;
}

function projectedPositions(): Float64Array | null {
  const pos = currentPositions();
  if (!pos || !state.camera) return null;
  return project(pos, state.camera, screenSize());
}

canvas.onpointerdown = (ev) => {
  const proj = projectedPositions();
  if (!proj || !state.topology || !state.camera) return;
  const rect = canvas.getBoundingClientRect();
  const px = ev.clientX - rect.left;
  const py = ev.clientY - rect.top;
  const hit = pickVertex(px, py, proj);
  if (ev.shiftKey && hit !== null) {
    // toggle handle membership
    const next = new Set(state.selection);
    if (next.has(hit)) next.delete(hit);
    else next.add(hit);
    state.selection = next;
    client.send({ type: "SetHandles", indices: [...next].sort((a, b) => a - b) });
    return;
  }
  if (hit !== null && state.selection.has(hit)) {
    const pos = currentPositions()!;
    const e = state.topology.embed;
    drag = new DragLoop({ send: (m) => client.send(m) }, state.resetRestOnRelease);
    state.drag = {
      vertex: hit,
      startWorld: [...state.selection].map(() => 0), // unused; targets built per move
      pointerStart: [px, py],
      pointerCurrent: [px, py],
    };
    dragBase = new Map([...state.selection].map((i) => [
      i, pos.slice(i * e, i * e + e) as Vec]));
    canvas.setPointerCapture(ev.pointerId);
    return;
  }
  panning = { x: px, y: py, orbit: state.camera.embed === 3 && !ev.ctrlKey };
  canvas.setPointerCapture(ev.pointerId);
};

let dragBase = new Map<number, Vec>();

function dragTargets(px: number, py: number): Record<string, Vec> {
  const cam = state.camera!;
  const d = state.drag!;
  const delta = unprojectDelta(px - d.pointerStart[0], py - d.pointerStart[1], cam);
  const e = state.topology!.embed;
  const out: Record<string, Vec> = {};
  for (const [i, base] of dragBase) {
    out[String(i)] = base.map((v, k) => v + delta[k]).slice(0, e);
  }
  return out;
}

canvas.onpointermove = (ev) => {
  const rect = canvas.getBoundingClientRect();
  const px = ev.clientX - rect.left;
  const py = ev.clientY - rect.top;
  if (drag && state.drag && !drag.finished) {
    state.drag.pointerCurrent = [px, py];
    drag.move(dragTargets(px, py));
    return;
  }
  if (panning && state.camera) {
    const dx = px - panning.x;
    const dy = py - panning.y;
    if (panning.orbit) {
      state.camera.yaw += dx * 0.01;
      state.camera.pitch = Math.max(-1.5, Math.min(1.5, state.camera.pitch + dy * 0.01));
    } else {
      state.camera.center[0] -= dx / state.camera.zoom;
      state.camera.center[1] += dy / state.camera.zoom;
    }
    panning = { ...panning, x: px, y: py };
    return;
  }
  const proj = projectedPositions();
  hoverVertex = proj ? pickVertex(px, py, proj) : null;
};

canvas.onpointerup = (ev) => {
  if (drag && state.drag && !drag.finished) {
    const rect = canvas.getBoundingClientRect();
    drag.release(dragTargets(ev.clientX - rect.left, ev.clientY - rect.top));
  }
  drag = null;
  state.drag = null;
  panning = null;
};

canvas.onwheel = (ev) => {
  if (!state.camera) return;
  ev.preventDefault();
  state.camera.zoom *= ev.deltaY < 0 ? 1.1 : 1 / 1.1;
};

// -- render loop: consumes the latest frame only, one drag flush per frame

function renderLoop(): void {
  if (drag && !drag.finished) drag.frameTick();
  const topo = state.topology;
  const cam = state.camera;
  if (topo && cam) {
    const frame: Frame = state.latestFrame ?? {
      type: "Frame", protocol: 1, iteration: 0,
      positions: topo.restPositions,
      displacement: new Array(topo.restPositions.length / topo.embed).fill(0),
      residuals: { primalZ: 0, dualZ: 0, primalX: 0 },
      roi: { threshold: state.roiThreshold, count: 0, measure: 0 },
    };
    const lists = buildDrawLists(topo, frame, cam, screenSize(),
      state.roiThreshold, [...state.selection]);
    drawScene(ctx, screenSize(), lists, hoverVertex);
    statsBox.textContent =
      `iter ${frame.iteration} | roi ${frame.roi.count} ` +
      `(measure ${frame.roi.measure.toPrecision(3)}) | ` +
      `residuals z ${frame.residuals.primalZ.toExponential(1)} / ` +
      `${frame.residuals.dualZ.toExponential(1)}`;
  }
  requestAnimationFrame(renderLoop);
}

function main(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  const proto = location.protocol === "https:" ? "wss" : "ws";
  connectWebSocket(client, `${proto}://${location.host}/ws`);
  refreshSliderLabels();
  requestAnimationFrame(renderLoop);
}

main();
