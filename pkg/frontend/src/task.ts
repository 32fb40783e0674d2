/**
 * Task runner: compares incoming key events against a target sequence
 * and keeps a live score plus per-press timing.
 *
 * A press on the next expected key is a hit and advances the pointer;
 * a press on any other key is a miss and leaves the pointer unmoved.
 * Durations are in simulated seconds (event `t`), so they are
 * reproducible across runs.
 */

import type { EventMsg } from "./protocol.js";

export interface PressRecord {
  key: string;
  finger: string;
  t_press: number;
  /** Simulated seconds from press to release; null while still held. */
  duration_s: number | null;
  hit: boolean;
}

export interface TaskProgress {
  pointer: number;
  total: number;
  hits: number;
  misses: number;
  done: boolean;
}

export interface TaskSummary {
  task: string;
  targets: string[];
  hits: number;
  misses: number;
  completed: boolean;
  presses: PressRecord[];
}

export class TaskRunner {
  readonly task: string;
  readonly targets: string[];
  readonly presses: PressRecord[] = [];
  private pointer = 0;
  private hits = 0;
  private misses = 0;

  /**
   * `targets` is a list of key labels; a plain string is split into
   * single-character labels ("fghjf" -> f, g, h, j, f), which fits
   * keyboard layouts; piano sequences pass label arrays (["c4", "e4"]).
   */
  constructor(targets: string[] | string, task = "typing") {
    this.task = task;
    this.targets = typeof targets === "string" ? [...targets] : [...targets];
    if (this.targets.length === 0) throw new Error("task needs a non-empty target sequence");
  }

  /** Feed every incoming event; only key events are consumed. */
  onEvent(event: EventMsg): void {
    if (event.event === "key_press") {
      const key = String(event.data.key);
      const finger = String(event.data.finger);
      const hit = !this.done && key === this.targets[this.pointer];
      if (hit) {
        this.hits += 1;
        this.pointer += 1;
      } else if (!this.done) {
        this.misses += 1;
      }
      this.presses.push({ key, finger, t_press: event.t, duration_s: null, hit });
    } else if (event.event === "key_release") {
      const key = String(event.data.key);
      for (let i = this.presses.length - 1; i >= 0; i -= 1) {
        const press = this.presses[i]!;
        if (press.key === key && press.duration_s === null) {
          press.duration_s = event.t - press.t_press;
          break;
        }
      }
    }
  }

  get done(): boolean {
    return this.pointer >= this.targets.length;
  }

  progress(): TaskProgress {
    return {
      pointer: this.pointer,
      total: this.targets.length,
      hits: this.hits,
      misses: this.misses,
      done: this.done,
    };
  }

  summary(): TaskSummary {
    return {
      task: this.task,
      targets: [...this.targets],
      hits: this.hits,
      misses: this.misses,
      completed: this.done,
      presses: this.presses.map((p) => ({ ...p })),
    };
  }

  /** Download payload for the summary button. */
  summaryJson(): string {
    return JSON.stringify(this.summary(), null, 2) + "\n";
  }
}
