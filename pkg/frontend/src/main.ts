/**
 * Browser entry point: wires the socket client, the input layer, the
 * task runner, and the canvas renderer to the static shell in
 * index.html.
 *
 * Rendering is a pure function of the state store; this file only
 * moves data between the store and the DOM.
 */

import { ConsoleClient } from "./client.js";
import { InputController } from "./input.js";
import type { JointSample } from "./protocol.js";
import { JOINT_KEYS } from "./protocol.js";
import { drawScene, layoutScene } from "./render.js";
import { displayedJointValues } from "./state.js";
import { TaskRunner } from "./task.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function socketUrl(): string {
  const override = new URLSearchParams(location.search).get("server");
  if (override) return override;
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

const canvas = byId<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("canvas 2D context unavailable");

const client = new ConsoleClient(socketUrl());
const input = new InputController(
  (command) => client.sendCommand(command),
  () => client.state.connection === "open",
);

let runner: TaskRunner | null = null;

// -- readout table -----------------------------------------------------------

const readoutBody = byId<HTMLTableSectionElement>("readouts");
const readoutCells = new Map<string, HTMLTableCellElement[]>();
for (const joint of JOINT_KEYS) {
  const row = document.createElement("tr");
  const name = document.createElement("td");
  name.textContent = joint;
  row.appendChild(name);
  const cells: HTMLTableCellElement[] = [];
  for (let i = 0; i < 6; i += 1) {
    const cell = document.createElement("td");
    cell.textContent = "–";
    row.appendChild(cell);
    cells.push(cell);
  }
  readoutCells.set(joint, cells);
  readoutBody.appendChild(row);
}

function cellText(value: number | string | boolean | null): string {
  if (value === null) return "–";
  return String(value);
}

// Displayed joint values are copied verbatim from the latest snapshot:
// no rounding, smoothing, or prediction.
function updateReadouts(): void {
  const joints = displayedJointValues(client.state);
  if (!joints) return;
  for (const [joint, cells] of readoutCells) {
    const sample: JointSample | undefined = joints[joint];
    if (!sample) continue;
    const values = [
      sample.angle,
      sample.count,
      sample.normalized,
      sample.target,
      sample.pwm,
      sample.status ?? (sample.calibrated ? "idle" : "uncalibrated"),
    ];
    values.forEach((v, i) => {
      cells[i]!.textContent = cellText(v);
    });
  }
}

// -- header / controls -------------------------------------------------------

const roleEl = byId<HTMLSpanElement>("status-role");
const connEl = byId<HTMLSpanElement>("status-conn");
const errorEl = byId<HTMLSpanElement>("status-error");
const splayBox = byId<HTMLDivElement>("splay-buttons");

function updateHeader(): void {
  roleEl.textContent = client.state.role ?? "…";
  connEl.textContent = client.state.connection;
  connEl.dataset.state = client.state.connection;
  errorEl.textContent = client.state.lastError
    ? `${client.state.lastError.code}: ${client.state.lastError.detail}`
    : "";
}

function buildSplayButtons(levels: number[]): void {
  splayBox.textContent = "";
  for (const level of levels) {
    const button = document.createElement("button");
    button.textContent = String(level);
    button.addEventListener("click", () => input.setSplay(level));
    splayBox.appendChild(button);
  }
}

function bindSlider(id: string, valueId: string, apply: (v: number) => void): HTMLInputElement {
  const slider = byId<HTMLInputElement>(id);
  const value = byId<HTMLSpanElement>(valueId);
  value.textContent = slider.value;
  slider.addEventListener("input", () => {
    value.textContent = slider.value;
    apply(Number(slider.value));
  });
  return slider;
}

const handX = byId<HTMLInputElement>("hand-reach");
const handY = byId<HTMLInputElement>("hand-lateral");
bindSlider("wrist-deviation", "wrist-deviation-value", (v) => input.setWristDeviation(v));
bindSlider("wrist-rotation", "wrist-rotation-value", (v) => input.setWristRotation(v));
bindSlider("hand-reach", "hand-reach-value", () =>
  input.setHand(Number(handX.value), Number(handY.value)),
);
bindSlider("hand-lateral", "hand-lateral-value", () =>
  input.setHand(Number(handX.value), Number(handY.value)),
);

// -- task panel ---------------------------------------------------------------

const taskKind = byId<HTMLSelectElement>("task-kind");
const taskTargets = byId<HTMLInputElement>("task-targets");
const taskProgress = byId<HTMLSpanElement>("task-progress");
const downloadButton = byId<HTMLButtonElement>("task-download");

function parseTargets(): string[] {
  const raw = taskTargets.value.trim();
  if (taskKind.value === "piano") return raw.split(/\s+/).filter(Boolean);
  return [...raw.replace(/\s+/g, "")];
}

function updateProgress(): void {
  if (!runner) {
    taskProgress.textContent = "no task running";
    downloadButton.disabled = true;
    return;
  }
  const p = runner.progress();
  taskProgress.textContent =
    `${p.pointer}/${p.total} · hits ${p.hits} · misses ${p.misses}` + (p.done ? " · done" : "");
  downloadButton.disabled = false;
}

byId<HTMLButtonElement>("task-start").addEventListener("click", () => {
  const targets = parseTargets();
  if (targets.length === 0) return;
  runner = new TaskRunner(targets, taskKind.value);
  input.setTask(taskKind.value);
  updateProgress();
});

byId<HTMLButtonElement>("task-reset").addEventListener("click", () => {
  runner = null;
  updateProgress();
});

downloadButton.addEventListener("click", () => {
  if (!runner) return;
  const blob = new Blob([runner.summaryJson()], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = "task-summary.json";
  link.click();
  URL.revokeObjectURL(url);
});

// -- event log ----------------------------------------------------------------

const eventList = byId<HTMLUListElement>("events");
const MAX_EVENT_ROWS = 30;

function appendEventRow(text: string): void {
  const row = document.createElement("li");
  row.textContent = text;
  eventList.prepend(row);
  while (eventList.childElementCount > MAX_EVENT_ROWS) {
    eventList.lastElementChild?.remove();
  }
}

// -- keyboard ------------------------------------------------------------------

function isTypingTarget(target: EventTarget | null): boolean {
  return (
    target instanceof HTMLInputElement ||
    target instanceof HTMLSelectElement ||
    target instanceof HTMLTextAreaElement
  );
}

window.addEventListener("keydown", (event) => {
  if (isTypingTarget(event.target) || event.repeat) return;
  if (input.keyDown(event.key.toLowerCase())) event.preventDefault();
});
window.addEventListener("keyup", (event) => {
  if (isTypingTarget(event.target)) return;
  if (input.keyUp(event.key.toLowerCase())) event.preventDefault();
});

// -- wiring --------------------------------------------------------------------

let splayBuilt = false;
client.onUpdate((message) => {
  if (message?.type === "hello" && !splayBuilt) {
    splayBuilt = true;
    buildSplayButtons(message.splay_levels);
  }
  if (message?.type === "snapshot") updateReadouts();
  if (message?.type === "event") {
    runner?.onEvent(message);
    updateProgress();
    appendEventRow(
      `${message.t.toFixed(2)}s ${message.event} ${JSON.stringify(message.data)}`,
    );
  }
  if (message === null && client.state.connection === "closed") input.reset();
  updateHeader();
});

function frame(): void {
  const scene = layoutScene(client.state, Date.now());
  drawScene(ctx!, scene, canvas.width, canvas.height);
  requestAnimationFrame(frame);
}

updateHeader();
updateProgress();
client.connect();
requestAnimationFrame(frame);
