/**
 * Single mutable state store for the console.
 *
 * Socket callbacks are the only writers; rendering is a pure function
 * of this store.  The core invariant: the UI never simulates — every
 * displayed joint value is the last received snapshot value, exposed
 * through `displayedJointValues`.
 */

import type { ErrorMsg, EventMsg, Hello, JointSample, ServerMessage, Snapshot } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

/** How many past events the footer log keeps. */
export const EVENT_LOG_LIMIT = 200;

/** A snapshot older than this is rendered behind a "lagging" banner. */
export const STALE_AFTER_MS = 1000;

export interface ConsoleState {
  connection: Connection;
  role: "operator" | "observer" | null;
  hello: Hello | null;
  snapshot: Snapshot | null;
  /** Wall-clock receive time of `snapshot`, for staleness detection. */
  lastSnapshotAtMs: number | null;
  snapshotCount: number;
  events: EventMsg[];
  lastError: ErrorMsg | null;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    role: null,
    hello: null,
    snapshot: null,
    lastSnapshotAtMs: null,
    snapshotCount: 0,
    events: [],
    lastError: null,
  };
}

/** Fold one server message into the store. */
export function applyMessage(state: ConsoleState, message: ServerMessage, nowMs: number): void {
  switch (message.type) {
    case "hello":
      state.hello = message;
      state.role = message.role;
      state.connection = "open";
      break;
    case "snapshot":
      state.snapshot = message;
      state.lastSnapshotAtMs = nowMs;
      state.snapshotCount += 1;
      break;
    case "event":
      state.events.push(message);
      if (state.events.length > EVENT_LOG_LIMIT) {
        state.events.splice(0, state.events.length - EVENT_LOG_LIMIT);
      }
      break;
    case "error":
      state.lastError = message;
      break;
  }
}

export function markClosed(state: ConsoleState): void {
  state.connection = "closed";
}

/**
 * The joint values the UI displays: exactly the latest snapshot's,
 * by reference — no interpolation, prediction, or client-side
 * simulation ever sits between the stream and the screen.
 */
export function displayedJointValues(state: ConsoleState): Record<string, JointSample> | null {
  return state.snapshot ? state.snapshot.joints : null;
}

/** True once a snapshot exists but has gone stale. */
export function isLagging(state: ConsoleState, nowMs: number): boolean {
  if (state.lastSnapshotAtMs === null) return false;
  return nowMs - state.lastSnapshotAtMs > STALE_AFTER_MS;
}

/** Latest snapshot or null — convenience for view code. */
export function currentSnapshot(state: ConsoleState): Snapshot | null {
  return state.snapshot;
}
