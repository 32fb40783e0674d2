/**
 * Wire catalog for the teleoperation WebSocket (see docs/ui-protocol.md).
 *
 * Four server message types (hello, snapshot, event, error) and one
 * client type (command, four kinds).  Parsing is strict: a message the
 * server would never send, or a command the server would reject, throws
 * ProtocolError here instead of propagating garbage into the UI state.
 */

export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

/** All joint keys, slot order. */
export const JOINT_KEYS = [
  "thumb",
  "index",
  "middle",
  "ring",
  "little",
  "wrist_deviation",
  "wrist_rotation",
] as const;
export type JointKey = (typeof JOINT_KEYS)[number];

/** Digits that can press keys, thumb first. */
export const DIGITS = ["thumb", "index", "middle", "ring", "little"] as const;

/** Fingers in the splay fan, matching `snapshot.splay.angles` order. */
export const SPLAY_FINGERS = ["index", "middle", "ring", "little"] as const;

// -- server -> client ------------------------------------------------------

export interface JointInfo {
  slot: number;
  min_angle: number;
  max_angle: number;
  neutral: number;
}

export interface KeyInfo {
  label: string;
  center_mm: number;
  width_mm: number;
  activation_force_n: number;
  travel_mm: number;
}

export interface Hello {
  type: "hello";
  role: "operator" | "observer";
  protocol: number;
  joints: Record<string, JointInfo>;
  splay_levels: number[];
  keybed: { kind: string; keys: KeyInfo[] };
  snapshot_rate_hz: number;
}

/** One joint's telemetry inside a snapshot, exactly as sent. */
export interface JointSample {
  angle: number;
  count: number;
  normalized: number | null;
  target: number | null;
  pwm: number;
  status: string | null;
  calibrated: boolean;
}

export interface Snapshot {
  type: "snapshot";
  t: number;
  phase: string;
  joints: Record<string, JointSample>;
  splay: { level: number; angles: number[] };
  hand: { x_mm: number; y_mm: number };
  tips_mm: Record<string, number[]>;
  pressed: Record<string, string>;
  stalled: string[];
}

export interface EventMsg {
  type: "event";
  t: number;
  event: string;
  data: Record<string, unknown>;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  detail: string;
}

export type ServerMessage = Hello | Snapshot | EventMsg | ErrorMsg;

// -- parsing helpers -------------------------------------------------------

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function record(value: unknown, where: string): Record<string, unknown> {
  if (!isRecord(value)) throw new ProtocolError(`${where}: expected an object`);
  return value;
}

function num(value: unknown, where: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new ProtocolError(`${where}: expected a finite number`);
  }
  return value;
}

function numOrNull(value: unknown, where: string): number | null {
  return value === null ? null : num(value, where);
}

function str(value: unknown, where: string): string {
  if (typeof value !== "string") throw new ProtocolError(`${where}: expected a string`);
  return value;
}

function strOrNull(value: unknown, where: string): string | null {
  return value === null ? null : str(value, where);
}

function bool(value: unknown, where: string): boolean {
  if (typeof value !== "boolean") throw new ProtocolError(`${where}: expected a boolean`);
  return value;
}

function numArray(value: unknown, where: string): number[] {
  if (!Array.isArray(value)) throw new ProtocolError(`${where}: expected an array`);
  return value.map((v, i) => num(v, `${where}[${i}]`));
}

// -- per-type parsers ------------------------------------------------------

function parseHello(m: Record<string, unknown>): Hello {
  const role = str(m.role, "hello.role");
  if (role !== "operator" && role !== "observer") {
    throw new ProtocolError(`hello.role: unknown role ${JSON.stringify(role)}`);
  }
  const joints: Record<string, JointInfo> = {};
  for (const [key, raw] of Object.entries(record(m.joints, "hello.joints"))) {
    const j = record(raw, `hello.joints.${key}`);
    joints[key] = {
      slot: num(j.slot, `hello.joints.${key}.slot`),
      min_angle: num(j.min_angle, `hello.joints.${key}.min_angle`),
      max_angle: num(j.max_angle, `hello.joints.${key}.max_angle`),
      neutral: num(j.neutral, `hello.joints.${key}.neutral`),
    };
  }
  const keybed = record(m.keybed, "hello.keybed");
  const rawKeys = keybed.keys;
  if (!Array.isArray(rawKeys)) throw new ProtocolError("hello.keybed.keys: expected an array");
  const keys = rawKeys.map((raw, i) => {
    const k = record(raw, `hello.keybed.keys[${i}]`);
    return {
      label: str(k.label, `keys[${i}].label`),
      center_mm: num(k.center_mm, `keys[${i}].center_mm`),
      width_mm: num(k.width_mm, `keys[${i}].width_mm`),
      activation_force_n: num(k.activation_force_n, `keys[${i}].activation_force_n`),
      travel_mm: num(k.travel_mm, `keys[${i}].travel_mm`),
    };
  });
  return {
    type: "hello",
    role,
    protocol: num(m.protocol, "hello.protocol"),
    joints,
    splay_levels: numArray(m.splay_levels, "hello.splay_levels"),
    keybed: { kind: str(keybed.kind, "hello.keybed.kind"), keys },
    snapshot_rate_hz: num(m.snapshot_rate_hz, "hello.snapshot_rate_hz"),
  };
}

function parseSnapshot(m: Record<string, unknown>): Snapshot {
  const joints: Record<string, JointSample> = {};
  for (const [key, raw] of Object.entries(record(m.joints, "snapshot.joints"))) {
    const j = record(raw, `snapshot.joints.${key}`);
    joints[key] = {
      angle: num(j.angle, `joints.${key}.angle`),
      count: num(j.count, `joints.${key}.count`),
      normalized: numOrNull(j.normalized, `joints.${key}.normalized`),
      target: numOrNull(j.target, `joints.${key}.target`),
      pwm: num(j.pwm, `joints.${key}.pwm`),
      status: strOrNull(j.status ?? null, `joints.${key}.status`),
      calibrated: bool(j.calibrated, `joints.${key}.calibrated`),
    };
  }
  const splay = record(m.splay, "snapshot.splay");
  const hand = record(m.hand, "snapshot.hand");
  const tips: Record<string, number[]> = {};
  for (const [key, raw] of Object.entries(record(m.tips_mm, "snapshot.tips_mm"))) {
    tips[key] = numArray(raw, `snapshot.tips_mm.${key}`);
  }
  const pressed: Record<string, string> = {};
  for (const [key, raw] of Object.entries(record(m.pressed, "snapshot.pressed"))) {
    pressed[key] = str(raw, `snapshot.pressed.${key}`);
  }
  const stalledRaw = m.stalled;
  if (!Array.isArray(stalledRaw)) throw new ProtocolError("snapshot.stalled: expected an array");
  return {
    type: "snapshot",
    t: num(m.t, "snapshot.t"),
    phase: str(m.phase, "snapshot.phase"),
    joints,
    splay: {
      level: num(splay.level, "snapshot.splay.level"),
      angles: numArray(splay.angles, "snapshot.splay.angles"),
    },
    hand: { x_mm: num(hand.x_mm, "snapshot.hand.x_mm"), y_mm: num(hand.y_mm, "snapshot.hand.y_mm") },
    tips_mm: tips,
    pressed,
    stalled: stalledRaw.map((v, i) => str(v, `snapshot.stalled[${i}]`)),
  };
}

function parseEvent(m: Record<string, unknown>): EventMsg {
  return {
    type: "event",
    t: num(m.t, "event.t"),
    event: str(m.event, "event.event"),
    data: record(m.data, "event.data"),
  };
}

function parseError(m: Record<string, unknown>): ErrorMsg {
  return {
    type: "error",
    code: str(m.code, "error.code"),
    detail: str(m.detail, "error.detail"),
  };
}

/** Parse an already-decoded JSON value as a server message. */
export function parseServerObject(value: unknown): ServerMessage {
  const m = record(value, "message");
  switch (m.type) {
    case "hello":
      return parseHello(m);
    case "snapshot":
      return parseSnapshot(m);
    case "event":
      return parseEvent(m);
    case "error":
      return parseError(m);
    default:
      throw new ProtocolError(`unknown server message type ${JSON.stringify(m.type)}`);
  }
}

/** Parse one text frame from the socket. */
export function parseServerMessage(text: string): ServerMessage {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`invalid JSON frame: ${(exc as Error).message}`);
  }
  return parseServerObject(value);
}

// -- client -> server ------------------------------------------------------

export interface MoveSpec {
  joint: string;
  target?: number;
  target_angle?: number;
  pwm: number;
}

export interface MoveCommand {
  type: "command";
  kind: "move";
  moves: MoveSpec[];
}

export interface SplayCommand {
  type: "command";
  kind: "splay";
  level: number;
}

export interface HandCommand {
  type: "command";
  kind: "hand";
  x_mm: number;
  y_mm: number;
}

export interface TaskCommand {
  type: "command";
  kind: "task";
  task: string;
}

export type Command = MoveCommand | SplayCommand | HandCommand | TaskCommand;

function checkInt(value: unknown, lo: number, hi: number, where: string): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < lo || value > hi) {
    throw new ProtocolError(`${where}: expected an integer in [${lo}, ${hi}]`);
  }
  return value;
}

function checkMove(raw: unknown, where: string): MoveSpec {
  const m = record(raw, where);
  const joint = str(m.joint, `${where}.joint`);
  if (!(JOINT_KEYS as readonly string[]).includes(joint)) {
    throw new ProtocolError(`${where}.joint: unknown joint ${JSON.stringify(joint)}`);
  }
  const hasTarget = m.target !== undefined && m.target !== null;
  const hasAngle = m.target_angle !== undefined && m.target_angle !== null;
  if (hasTarget === hasAngle) {
    throw new ProtocolError(`${where}: exactly one of target / target_angle is required`);
  }
  const move: MoveSpec = { joint, pwm: checkInt(m.pwm, 1, 255, `${where}.pwm`) };
  if (hasTarget) move.target = checkInt(m.target, 0, 255, `${where}.target`);
  if (hasAngle) move.target_angle = num(m.target_angle, `${where}.target_angle`);
  return move;
}

/**
 * Validate an arbitrary value against the command catalog.  Everything
 * the UI sends goes through here, so an out-of-range command cannot be
 * constructed.
 */
export function assertValidCommand(value: unknown): Command {
  const m = record(value, "command");
  if (m.type !== "command") throw new ProtocolError('command.type must be "command"');
  switch (m.kind) {
    case "move": {
      if (!Array.isArray(m.moves) || m.moves.length === 0) {
        throw new ProtocolError("move command needs a non-empty moves list");
      }
      return {
        type: "command",
        kind: "move",
        moves: m.moves.map((raw, i) => checkMove(raw, `moves[${i}]`)),
      };
    }
    case "splay":
      return { type: "command", kind: "splay", level: checkInt(m.level, 1, 5, "splay.level") };
    case "hand":
      return {
        type: "command",
        kind: "hand",
        x_mm: num(m.x_mm, "hand.x_mm"),
        y_mm: num(m.y_mm, "hand.y_mm"),
      };
    case "task":
      return { type: "command", kind: "task", task: str(m.task, "task.task") };
    default:
      throw new ProtocolError(`unknown command kind ${JSON.stringify(m.kind)}`);
  }
}

export function moveCommand(moves: MoveSpec[]): MoveCommand {
  return assertValidCommand({ type: "command", kind: "move", moves }) as MoveCommand;
}

export function splayCommand(level: number): SplayCommand {
  return assertValidCommand({ type: "command", kind: "splay", level }) as SplayCommand;
}

export function handCommand(xMm: number, yMm: number): HandCommand {
  return assertValidCommand({ type: "command", kind: "hand", x_mm: xMm, y_mm: yMm }) as HandCommand;
}

export function taskCommand(task: string): TaskCommand {
  return assertValidCommand({ type: "command", kind: "task", task }) as TaskCommand;
}
