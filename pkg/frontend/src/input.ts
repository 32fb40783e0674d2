/**
 * Input layer: physical-keyboard bindings for the digits, discrete
 * selectors, and rate-limited sliders.
 *
 * Discrete actions (key down/up, splay level, task selection) send one
 * command per action.  Continuous controls (wrist and hand sliders) go
 * through a throttle that holds each control to at most 20 messages
 * per second, always ending on the latest value.  When the connection
 * is down or this client is an observer, nothing is sent and nothing
 * is queued.
 */

import {
  Command,
  handCommand,
  moveCommand,
  splayCommand,
  taskCommand,
} from "./protocol.js";

/** Physical key -> digit, matching the fingers' home-position keys. */
export const DEFAULT_BINDINGS: Readonly<Record<string, string>> = {
  f: "index",
  g: "middle",
  h: "ring",
  j: "little",
  " ": "thumb",
};

export const FLEX_TARGET = 255;
export const RELEASE_TARGET = 0;
export const PRESS_PWM = 255;

/** Minimum spacing between slider messages: 50 ms = 20 msg/s. */
export const SLIDER_MIN_INTERVAL_MS = 50;

type Schedule = (fn: () => void, ms: number) => unknown;

/**
 * Leading-plus-trailing rate limiter.  The first submit goes out
 * immediately; submits during the quiet window replace each other and
 * the last one is delivered when the window expires, so a drag ends on
 * the final value without ever exceeding one send per interval.
 */
export class Throttle<T> {
  private lastSentMs = -Infinity;
  private pending: { value: T } | null = null;
  private timerArmed = false;

  constructor(
    private readonly send: (value: T) => void,
    private readonly minIntervalMs: number = SLIDER_MIN_INTERVAL_MS,
    private readonly now: () => number = Date.now,
    private readonly schedule: Schedule = (fn, ms) => setTimeout(fn, ms),
  ) {}

  submit(value: T): void {
    const nowMs = this.now();
    if (!this.timerArmed && nowMs - this.lastSentMs >= this.minIntervalMs) {
      this.lastSentMs = nowMs;
      this.send(value);
      return;
    }
    this.pending = { value };
    if (!this.timerArmed) {
      this.timerArmed = true;
      const wait = Math.max(0, this.minIntervalMs - (nowMs - this.lastSentMs));
      this.schedule(() => this.fire(), wait);
    }
  }

  /** Drop anything queued (used when the connection goes away). */
  clear(): void {
    this.pending = null;
  }

  private fire(): void {
    this.timerArmed = false;
    if (this.pending === null) return;
    const { value } = this.pending;
    this.pending = null;
    this.lastSentMs = this.now();
    this.send(value);
  }
}

export interface InputOptions {
  bindings?: Readonly<Record<string, string>>;
  minIntervalMs?: number;
  now?: () => number;
  schedule?: Schedule;
}

export class InputController {
  readonly bindings: Readonly<Record<string, string>>;
  private readonly down = new Set<string>();
  private readonly wristDeviationThrottle: Throttle<number>;
  private readonly wristRotationThrottle: Throttle<number>;
  private readonly handThrottle: Throttle<{ x: number; y: number }>;

  constructor(
    private readonly sendCommand: (command: Command) => void,
    private readonly canCommand: () => boolean,
    options: InputOptions = {},
  ) {
    this.bindings = options.bindings ?? DEFAULT_BINDINGS;
    const interval = options.minIntervalMs ?? SLIDER_MIN_INTERVAL_MS;
    const now = options.now;
    const schedule = options.schedule;
    const guarded =
      (build: (v: number) => Command) =>
      (v: number): void => {
        if (this.canCommand()) this.sendCommand(build(v));
      };
    this.wristDeviationThrottle = new Throttle(
      guarded((deg) => moveCommand([{ joint: "wrist_deviation", target_angle: deg, pwm: PRESS_PWM }])),
      interval,
      now,
      schedule,
    );
    this.wristRotationThrottle = new Throttle(
      guarded((deg) => moveCommand([{ joint: "wrist_rotation", target_angle: deg, pwm: PRESS_PWM }])),
      interval,
      now,
      schedule,
    );
    this.handThrottle = new Throttle(
      ({ x, y }) => {
        if (this.canCommand()) this.sendCommand(handCommand(x, y));
      },
      interval,
      now,
      schedule,
    );
  }

  /**
   * Key pressed on the operator's keyboard.  Returns true when a flex
   * command went out; auto-repeat (a key already down) and unbound
   * keys are ignored.
   */
  keyDown(key: string): boolean {
    const digit = this.bindings[key];
    if (digit === undefined || this.down.has(key) || !this.canCommand()) return false;
    this.down.add(key);
    this.sendCommand(moveCommand([{ joint: digit, target: FLEX_TARGET, pwm: PRESS_PWM }]));
    return true;
  }

  /** Key released: retract the bound digit. */
  keyUp(key: string): boolean {
    const digit = this.bindings[key];
    if (digit === undefined || !this.down.delete(key) || !this.canCommand()) return false;
    this.sendCommand(moveCommand([{ joint: digit, target: RELEASE_TARGET, pwm: PRESS_PWM }]));
    return true;
  }

  /** Splay selector: one message per click. */
  setSplay(level: number): boolean {
    if (!this.canCommand()) return false;
    this.sendCommand(splayCommand(level));
    return true;
  }

  /** Task selector: one message per selection. */
  setTask(task: string): boolean {
    if (!this.canCommand()) return false;
    this.sendCommand(taskCommand(task));
    return true;
  }

  /** Wrist deviation slider, degrees; throttled. */
  setWristDeviation(angleDeg: number): void {
    if (!this.canCommand()) return;
    this.wristDeviationThrottle.submit(angleDeg);
  }

  /** Wrist rotation slider, degrees; throttled. */
  setWristRotation(angleDeg: number): void {
    if (!this.canCommand()) return;
    this.wristRotationThrottle.submit(angleDeg);
  }

  /** Hand translation sliders, mm; throttled as one control. */
  setHand(xMm: number, yMm: number): void {
    if (!this.canCommand()) return;
    this.handThrottle.submit({ x: xMm, y: yMm });
  }

  /** Connection dropped: forget held keys, drop queued slider values. */
  reset(): void {
    this.down.clear();
    this.wristDeviationThrottle.clear();
    this.wristRotationThrottle.clear();
    this.handThrottle.clear();
  }
}
