/** Builders for realistic server messages, shaped like live traffic. */

import type { Hello, JointInfo, JointSample, Snapshot } from "../src/protocol.js";

export const KEY_LABELS = [..."asdfghjkl"];
export const KEY_PITCH_MM = 19.05;

export const JOINT_INFO: Record<string, JointInfo> = {
  thumb: { slot: 0, min_angle: -10, max_angle: 90, neutral: -10 },
  index: { slot: 1, min_angle: 15, max_angle: 180, neutral: 180 },
  middle: { slot: 2, min_angle: 15, max_angle: 180, neutral: 180 },
  ring: { slot: 3, min_angle: 15, max_angle: 180, neutral: 180 },
  little: { slot: 4, min_angle: 15, max_angle: 180, neutral: 180 },
  wrist_deviation: { slot: 5, min_angle: -30, max_angle: 30, neutral: 0 },
  wrist_rotation: { slot: 6, min_angle: -40, max_angle: 190, neutral: 0 },
};

export function makeHello(overrides: Partial<Hello> = {}): Hello {
  return {
    type: "hello",
    role: "operator",
    protocol: 1,
    joints: { ...JOINT_INFO },
    splay_levels: [1, 2, 3, 4, 5],
    keybed: {
      kind: "keyboard",
      keys: KEY_LABELS.map((label, i) => ({
        label,
        center_mm: (i - 4) * KEY_PITCH_MM,
        width_mm: 18,
        activation_force_n: 0.6,
        travel_mm: 3,
      })),
    },
    snapshot_rate_hz: 20,
    ...overrides,
  };
}

export function neutralSample(joint: string, overrides: Partial<JointSample> = {}): JointSample {
  const info = JOINT_INFO[joint];
  return {
    angle: info ? info.neutral : 0,
    count: 0,
    normalized: 0,
    target: null,
    pwm: 0,
    status: null,
    calibrated: true,
    ...overrides,
  };
}

export interface SnapshotOptions {
  t?: number;
  phase?: string;
  splayLevel?: number;
  splayAngles?: number[];
  pressed?: Record<string, string>;
  stalled?: string[];
  joints?: Record<string, Partial<JointSample>>;
  hand?: { x_mm: number; y_mm: number };
}

export function makeSnapshot(options: SnapshotOptions = {}): Snapshot {
  const joints: Record<string, JointSample> = {};
  for (const joint of Object.keys(JOINT_INFO)) {
    joints[joint] = neutralSample(joint, options.joints?.[joint] ?? {});
  }
  return {
    type: "snapshot",
    t: options.t ?? 1.0,
    phase: options.phase ?? "idle",
    joints,
    splay: {
      level: options.splayLevel ?? 1,
      angles: options.splayAngles ?? [0, 0, 0, 0],
    },
    hand: options.hand ?? { x_mm: 0, y_mm: 0 },
    tips_mm: {
      thumb: [75.4, -61.3, 40],
      index: [170, -19.05, 40],
      middle: [170, 0, 40],
      ring: [170, 19.05, 40],
      little: [170, 38.1, 40],
    },
    pressed: options.pressed ?? {},
    stalled: options.stalled ?? [],
  };
}
