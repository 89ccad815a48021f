/** Wire protocol for the live deformation session service (version 1). */

export const PROTOCOL_VERSION = 1;

export type Vec = number[];

export interface MeshTopology {
  type: "MeshTopology";
  protocol: number;
  kind: "polyline" | "triangle" | "cloth" | "tet";
  embed: number;
  elements: number[][];
  restPositions: number[];
  handles: number[];
  roiThreshold: number;
}

export interface Frame {
  type: "Frame";
  protocol: number;
  iteration: number;
  positions: number[];
  displacement: number[];
  residuals: { primalZ: number; dualZ: number; primalX: number };
  roi: { threshold: number; count: number; measure: number };
}

export interface Ack {
  type: "Ack";
  protocol: number;
  requestId?: string;
  matrixChanged?: boolean;
}

export interface ErrorMessage {
  type: "Error";
  protocol: number;
  requestId?: string;
  code: string;
  message: string;
}

export interface SessionExport {
  type: "SessionExport";
  protocol: number;
  session: unknown;
  trajectory: unknown;
  result: { positions: number[]; iterations: number; ticks: number };
}

export type ServerMessage = MeshTopology | Frame | Ack | ErrorMessage | SessionExport;

export interface ParamChanges {
  w?: number;
  s?: number;
  rho?: number;
  gamma?: number;
  regularizer?: "scl1" | "l21" | "none";
  itersPerFrame?: number;
  energy?: "arap" | "acap" | "cloth" | "polyline";
  material?: Record<string, unknown>;
}

export type ClientMessage =
  | { type: "LoadSession"; document: unknown; baseDir?: string }
  | { type: "SetParams"; params: ParamChanges }
  | { type: "SetHandles"; indices: number[] }
  | { type: "DragHandles"; targets: Record<string, Vec> }
  | { type: "ResetRest" }
  | { type: "ResetDuals" }
  | { type: "Pause" }
  | { type: "Resume" }
  | { type: "ExportSession" };

let requestCounter = 0;

/** Stamp a client message with the protocol version and a request id. */
export function encodeMessage(msg: ClientMessage, requestId?: string): string {
  const id = requestId ?? `r${++requestCounter}`;
  return JSON.stringify({ ...msg, protocol: PROTOCOL_VERSION, requestId: id });
}

/** Parse a server message; returns null for unknown or mismatched payloads. */
export function decodeMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as { type?: string; protocol?: number };
  if (msg.protocol !== PROTOCOL_VERSION) return null;
  switch (msg.type) {
    case "MeshTopology":
    case "Frame":
    case "Ack":
    case "Error":
    case "SessionExport":
      return data as ServerMessage;
    default:
      return null;
  }
}
