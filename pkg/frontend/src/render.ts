/**
 * Top-down schematic of the hand over the key bed.
 *
 * `layoutScene` is a pure function of the state store (plus the wall
 * clock, for the lagging banner): it turns the latest snapshot into
 * drawable glyphs and copies the exact joint samples through for the
 * readout panel.  `drawScene` paints a scene onto a 2D canvas and does
 * no computation of its own, so every visual fact is testable without
 * a browser.
 *
 * World axes: X forward (reach), Y lateral along the key row, Z up.
 * The schematic maps world Y to screen X and world X to screen height
 * (fingers point up toward the keys).
 */

import type { JointSample, KeyInfo, Snapshot } from "./protocol.js";
import { SPLAY_FINGERS } from "./protocol.js";
import type { Connection, ConsoleState } from "./state.js";
import { displayedJointValues, isLagging } from "./state.js";

export interface FingerGlyph {
  joint: string;
  /** Palm-relative direction, degrees; 0 = straight ahead. */
  azimuthDeg: number;
  /** 0 = fully extended, 1 = at the far stop. */
  flexFrac: number;
  /** Lateral base offset from the palm center, mm. */
  baseOffsetMm: number;
  stalled: boolean;
  calibrated: boolean;
  /** Key label this digit is currently pressing, if any. */
  pressingKey: string | null;
}

export interface KeyGlyph {
  label: string;
  centerMm: number;
  widthMm: number;
  pressed: boolean;
  pressedBy: string | null;
}

export interface Scene {
  connection: Connection;
  role: string | null;
  phase: string | null;
  banner: string | null;
  t: number | null;
  splayLevel: number | null;
  wrist: { deviationDeg: number; rotationDeg: number };
  hand: { forwardMm: number; lateralMm: number };
  /** Index, middle, ring, little — the splay fan. */
  fingers: FingerGlyph[];
  thumb: FingerGlyph | null;
  keys: KeyGlyph[];
  /** World [forward, lateral] tip positions per digit, mm. */
  tips: Record<string, { forwardMm: number; lateralMm: number }>;
  /** Exact samples for the readout panel (displayedJointValues). */
  readouts: Record<string, JointSample> | null;
  stalledJoints: string[];
  pressedKeys: Record<string, string>;
}

export const COLORS = {
  background: "#11151c",
  palm: "#2c3a4f",
  palmEdge: "#49618a",
  finger: "#8fb4e8",
  fingerStalled: "#ff6b6b",
  tipDot: "#ffd166",
  keyIdle: "#1d2633",
  keyEdge: "#3a4a63",
  keyPressed: "#2e9e5b",
  keyLabel: "#c8d6ea",
  banner: "#b33939",
  bannerText: "#ffffff",
  text: "#9fb0c8",
  stallMark: "#ff6b6b",
  wristArc: "#6c7fa3",
} as const;

/** Forward distance from fully extended to fully curled, as a fraction. */
const FLEX_SHORTENING = 0.62;
const FINGER_LENGTH_MM = 90;
const THUMB_LENGTH_MM = 55;
const THUMB_REST_AZIMUTH_DEG = -38;

function flexFraction(sample: JointSample, info: { min_angle: number; max_angle: number; neutral: number } | undefined): number {
  if (!info) return 0;
  const toMin = Math.abs(info.min_angle - info.neutral);
  const toMax = Math.abs(info.max_angle - info.neutral);
  const far = toMin > toMax ? info.min_angle : info.max_angle;
  const span = far - info.neutral;
  if (span === 0) return 0;
  const frac = (sample.angle - info.neutral) / span;
  return Math.min(1, Math.max(0, frac));
}

function pressingKeyOf(joint: string, pressed: Record<string, string>): string | null {
  for (const [label, digit] of Object.entries(pressed)) {
    if (digit === joint) return label;
  }
  return null;
}

function digitGlyph(
  joint: string,
  azimuthDeg: number,
  baseOffsetMm: number,
  snapshot: Snapshot,
  info: { min_angle: number; max_angle: number; neutral: number } | undefined,
): FingerGlyph {
  const sample = snapshot.joints[joint];
  return {
    joint,
    azimuthDeg,
    flexFrac: sample ? flexFraction(sample, info) : 0,
    baseOffsetMm,
    stalled: snapshot.stalled.includes(joint),
    calibrated: sample ? sample.calibrated : false,
    pressingKey: pressingKeyOf(joint, snapshot.pressed),
  };
}

/** Lateral spacing between neighboring finger bases, mm. */
export function fingerPitchMm(keys: KeyInfo[]): number {
  if (keys.length >= 2) {
    const first = keys[0]!;
    const second = keys[1]!;
    const pitch = Math.abs(second.center_mm - first.center_mm);
    if (pitch > 0) return pitch;
  }
  return 19.05;
}

export function layoutScene(state: ConsoleState, nowMs: number): Scene {
  const hello = state.hello;
  const snapshot = state.snapshot;

  let banner: string | null = null;
  if (state.connection === "connecting") banner = "connecting";
  else if (state.connection === "closed") banner = "disconnected";
  else if (isLagging(state, nowMs)) banner = "lagging";

  const keys: KeyGlyph[] = (hello?.keybed.keys ?? []).map((k) => {
    const pressedBy = snapshot?.pressed[k.label] ?? null;
    return {
      label: k.label,
      centerMm: k.center_mm,
      widthMm: k.width_mm,
      pressed: pressedBy !== null,
      pressedBy,
    };
  });

  const scene: Scene = {
    connection: state.connection,
    role: state.role,
    phase: snapshot?.phase ?? null,
    banner,
    t: snapshot?.t ?? null,
    splayLevel: snapshot?.splay.level ?? null,
    wrist: {
      deviationDeg: snapshot?.joints["wrist_deviation"]?.angle ?? 0,
      rotationDeg: snapshot?.joints["wrist_rotation"]?.angle ?? 0,
    },
    hand: {
      forwardMm: snapshot?.hand.x_mm ?? 0,
      lateralMm: snapshot?.hand.y_mm ?? 0,
    },
    fingers: [],
    thumb: null,
    keys,
    tips: {},
    readouts: displayedJointValues(state),
    stalledJoints: snapshot ? [...snapshot.stalled] : [],
    pressedKeys: snapshot ? { ...snapshot.pressed } : {},
  };
  if (!snapshot) return scene;

  const pitch = fingerPitchMm(hello?.keybed.keys ?? []);
  scene.fingers = SPLAY_FINGERS.map((joint, i) =>
    digitGlyph(
      joint,
      snapshot.splay.angles[i] ?? 0,
      (i - 1) * pitch, // index sits one pitch left of the middle finger
      snapshot,
      hello?.joints[joint],
    ),
  );
  scene.thumb = digitGlyph(
    "thumb",
    THUMB_REST_AZIMUTH_DEG,
    -2 * pitch,
    snapshot,
    hello?.joints["thumb"],
  );
  for (const [digit, xyz] of Object.entries(snapshot.tips_mm)) {
    scene.tips[digit] = { forwardMm: xyz[0] ?? 0, lateralMm: xyz[1] ?? 0 };
  }
  return scene;
}

/**
 * The splay fan as displayed: palm-relative finger directions for
 * index, middle, ring, little in degrees.
 */
export function fingerFanDeg(scene: Scene): number[] {
  return scene.fingers.map((f) => f.azimuthDeg);
}

// -- painting ---------------------------------------------------------------

/** The subset of CanvasRenderingContext2D the painter uses. */
export interface Canvas2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  textBaseline: CanvasTextBaseline;
  globalAlpha: number;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(rad: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

const DEG = Math.PI / 180;

export function drawScene(ctx: Canvas2D, scene: Scene, width: number, height: number): void {
  ctx.save();
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);

  // scale: fit the key row (or a default span) plus margins
  const lateralSpan = scene.keys.length
    ? Math.max(...scene.keys.map((k) => Math.abs(k.centerMm) + k.widthMm)) * 2
    : 200;
  const pxPerMm = Math.min((width * 0.9) / lateralSpan, height / 420);
  const midX = width / 2;
  const keyRowY = height * 0.18;
  const wristY = height * 0.88;
  const x = (lateralMm: number) => midX + lateralMm * pxPerMm;

  // key bed
  const keyH = 34;
  for (const key of scene.keys) {
    const w = key.widthMm * pxPerMm;
    ctx.fillStyle = key.pressed ? COLORS.keyPressed : COLORS.keyIdle;
    ctx.fillRect(x(key.centerMm) - w / 2, keyRowY - keyH / 2, w, keyH);
    ctx.strokeStyle = COLORS.keyEdge;
    ctx.lineWidth = 1;
    ctx.strokeRect(x(key.centerMm) - w / 2, keyRowY - keyH / 2, w, keyH);
    ctx.fillStyle = COLORS.keyLabel;
    ctx.font = "12px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(key.label, x(key.centerMm), keyRowY);
  }

  // hand group: translate to the wrist, rotate by deviation
  ctx.save();
  ctx.translate(x(scene.hand.lateralMm), wristY);
  ctx.rotate(scene.wrist.deviationDeg * DEG);

  // palm
  const pitchPx = 19.05 * pxPerMm;
  const palmW = pitchPx * 4.4;
  const palmH = pitchPx * 2.2;
  ctx.fillStyle = COLORS.palm;
  ctx.fillRect(-palmW / 2 + pitchPx / 2, -palmH, palmW, palmH);
  ctx.strokeStyle = COLORS.palmEdge;
  ctx.lineWidth = 2;
  ctx.strokeRect(-palmW / 2 + pitchPx / 2, -palmH, palmW, palmH);

  const drawDigit = (glyph: FingerGlyph, lengthMm: number) => {
    const lengthPx = lengthMm * pxPerMm * (1 - FLEX_SHORTENING * glyph.flexFrac);
    ctx.save();
    ctx.translate(glyph.baseOffsetMm * pxPerMm, -palmH);
    ctx.rotate(glyph.azimuthDeg * DEG);
    ctx.strokeStyle = glyph.stalled ? COLORS.fingerStalled : COLORS.finger;
    ctx.lineWidth = Math.max(4, pitchPx * 0.45);
    ctx.beginPath();
    ctx.moveTo(0, 0);
    ctx.lineTo(0, -lengthPx);
    ctx.stroke();
    // fingertip
    ctx.beginPath();
    ctx.arc(0, -lengthPx, Math.max(3, pitchPx * 0.28), 0, 2 * Math.PI);
    ctx.fillStyle = glyph.pressingKey !== null ? COLORS.keyPressed : COLORS.finger;
    ctx.fill();
    if (glyph.stalled) {
      ctx.fillStyle = COLORS.stallMark;
      ctx.font = "bold 14px system-ui, sans-serif";
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText("!", 0, -lengthPx - 14);
    }
    ctx.restore();
  };

  for (const finger of scene.fingers) drawDigit(finger, FINGER_LENGTH_MM);
  if (scene.thumb) drawDigit(scene.thumb, THUMB_LENGTH_MM);

  // wrist rotation dial
  ctx.strokeStyle = COLORS.wristArc;
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(0, 0, pitchPx * 0.9, -Math.PI, 0);
  ctx.stroke();
  ctx.beginPath();
  const rot = (-90 + scene.wrist.rotationDeg) * DEG;
  ctx.moveTo(0, 0);
  ctx.lineTo(Math.cos(rot) * pitchPx * 0.9, Math.sin(rot) * pitchPx * 0.9);
  ctx.stroke();
  ctx.restore();

  // fingertip ground-truth dots straight from the snapshot
  ctx.fillStyle = COLORS.tipDot;
  for (const tip of Object.values(scene.tips)) {
    const tipY = keyRowY + Math.max(0, 260 - tip.forwardMm) * pxPerMm;
    ctx.beginPath();
    ctx.arc(x(tip.lateralMm), tipY, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }

  // status line
  ctx.fillStyle = COLORS.text;
  ctx.font = "12px system-ui, sans-serif";
  ctx.textAlign = "left";
  ctx.textBaseline = "top";
  const status = [
    scene.role ?? "",
    scene.phase ? `phase ${scene.phase}` : "",
    scene.t !== null ? `t ${scene.t.toFixed(2)} s` : "",
    scene.splayLevel !== null ? `splay ${scene.splayLevel}` : "",
  ]
    .filter(Boolean)
    .join("  ·  ");
  ctx.fillText(status, 8, height - 20);

  // banner on top of everything
  if (scene.banner !== null) {
    ctx.globalAlpha = 0.92;
    ctx.fillStyle = COLORS.banner;
    ctx.fillRect(0, 0, width, 28);
    ctx.globalAlpha = 1;
    ctx.fillStyle = COLORS.bannerText;
    ctx.font = "bold 14px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(scene.banner, width / 2, 14);
  }
  ctx.restore();
}
