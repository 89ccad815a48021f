/** Editor view state and parameter round-trip tracking. */

import type { Camera } from "./camera.js";
import type { Frame, MeshTopology, ParamChanges } from "./protocol.js";

export const DEFAULT_ROI_THRESHOLD = 1e-3;

export interface DragState {
  vertex: number;
  startWorld: number[];
  pointerStart: [number, number];
  pointerCurrent: [number, number];
}

export interface ViewState {
  camera: Camera | null;
  selection: Set<number>;
  drag: DragState | null;
  roiThreshold: number;
  resetRestOnRelease: boolean;
  topology: MeshTopology | null;
  latestFrame: Frame | null;
}

export function initialViewState(): ViewState {
  return {
    camera: null,
    selection: new Set(),
    drag: null,
    roiThreshold: DEFAULT_ROI_THRESHOLD,
    resetRestOnRelease: false,
    topology: null,
    latestFrame: null,
  };
}

/** Drop frames older than what is already displayed. */
export function acceptFrame(state: ViewState, frame: Frame): boolean {
  if (state.latestFrame && frame.iteration < state.latestFrame.iteration) {
    return false;
  }
  state.latestFrame = frame;
  return true;
}

export function applyTopology(state: ViewState, topo: MeshTopology): void {
  state.topology = topo;
  state.selection = new Set(topo.handles);
  state.roiThreshold = topo.roiThreshold > 0 ? topo.roiThreshold : DEFAULT_ROI_THRESHOLD;
  state.latestFrame = null;
  state.drag = null;
}

/**
 * Parameter controls must display what the server last acknowledged, never
 * an optimistic local value: edits are pending until their ack arrives.
 */
export class ParamMirror {
  private acked: ParamChanges;
  private pending = new Map<string, ParamChanges>();

  constructor(initial: ParamChanges) {
    this.acked = { ...initial };
  }

  /** Value to display in the controls. */
  shown(): ParamChanges {
    return { ...this.acked };
  }

  submit(requestId: string, changes: ParamChanges): void {
    this.pending.set(requestId, changes);
  }

  onAck(requestId: string): boolean {
    const changes = this.pending.get(requestId);
    if (!changes) return false;
    this.pending.delete(requestId);
    this.acked = { ...this.acked, ...changes };
    return true;
  }

  onError(requestId: string): void {
    this.pending.delete(requestId);
  }
}
