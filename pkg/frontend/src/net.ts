/** Session socket wrapper: FIFO sends, ack tracking, latest-frame delivery. */

import { decodeMessage, encodeMessage } from "./protocol.js";
import type { ClientMessage, ServerMessage } from "./protocol.js";

export interface Transport {
  send(data: string): void;
  close(): void;
}

export interface SocketHandlers {
  onMessage(msg: ServerMessage): void;
  onStatus(connected: boolean): void;
}

/** Thin protocol layer over an injected transport (WebSocket in the app). */
export class SessionClient {
  private transport: Transport | null = null;
  private counter = 0;
  private connected = false;

  constructor(private readonly handlers: SocketHandlers) {}

  attach(transport: Transport): void {
    this.transport = transport;
    this.connected = true;
    this.handlers.onStatus(true);
  }

  detach(): void {
    this.transport = null;
    this.connected = false;
    this.handlers.onStatus(false);
  }

  get isConnected(): boolean {
    return this.connected;
  }

  /** Send a message; returns its request id, or null when disconnected
   * (queued edits are dropped on connection loss, never replayed). */
  send(msg: ClientMessage): string | null {
    if (!this.transport || !this.connected) return null;
    const id = `r${++this.counter}`;
    this.transport.send(encodeMessage(msg, id));
    return id;
  }

  receiveRaw(raw: string): void {
    const msg = decodeMessage(raw);
    if (msg) this.handlers.onMessage(msg);
  }
}

/** Connect a browser WebSocket to a SessionClient. */
export function connectWebSocket(client: SessionClient, url: string): WebSocket {
  const ws = new WebSocket(url);
  ws.onopen = () => client.attach({
    send: (d) => ws.send(d),
    close: () => ws.close(),
  });
  ws.onmessage = (ev) => client.receiveRaw(String(ev.data));
  ws.onclose = () => client.detach();
  ws.onerror = () => client.detach();
  return ws;
}
