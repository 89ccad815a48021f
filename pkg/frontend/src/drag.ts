/** Click-and-drag handle editing, throttled to one message per frame. */

import type { ClientMessage, Vec } from "./protocol.js";

export interface DragEvents {
  send(msg: ClientMessage): void;
}

interface PendingTargets {
  targets: Record<string, Vec>;
}

/**
 * Collects pointer-move targets and flushes at most one DragHandles per
 * animation frame; the release position is always flushed (and followed by
 * ResetRest when reset-on-release is enabled). A stationary pointer emits
 * no duplicate messages.
 */
export class DragLoop {
  private pending: PendingTargets | null = null;
  private lastSent: string | null = null;
  private released = false;

  constructor(private readonly out: DragEvents,
              public resetRestOnRelease = false) {}

  /** Pointer moved with the given handle targets (world coordinates). */
  move(targets: Record<string, Vec>): void {
    if (this.released) return;
    this.pending = { targets };
  }

  /** Animation-frame boundary: flush at most one message. */
  frameTick(): void {
    if (!this.pending) return;
    const payload = JSON.stringify(this.pending.targets);
    if (payload === this.lastSent) {
      this.pending = null;
      return;
    }
    this.out.send({ type: "DragHandles", targets: this.pending.targets });
    this.lastSent = payload;
    this.pending = null;
  }

  /** Pointer released at the final targets; marks the end of the drag. */
  release(targets: Record<string, Vec>): void {
    if (this.released) return;
    this.released = true;
    const payload = JSON.stringify(targets);
    if (payload !== this.lastSent) {
      this.out.send({ type: "DragHandles", targets });
      this.lastSent = payload;
    }
    if (this.resetRestOnRelease) {
      this.out.send({ type: "ResetRest" });
    }
  }

  get finished(): boolean {
    return this.released;
  }
}
