import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import {
  assertValidCommand,
  handCommand,
  moveCommand,
  parseServerMessage,
  parseServerObject,
  ProtocolError,
  splayCommand,
  taskCommand,
} from "../src/protocol.js";
import { makeHello, makeSnapshot } from "./fixtures.js";

describe("server message parsing", () => {
  it("round-trips a hello", () => {
    const hello = makeHello();
    const parsed = parseServerMessage(JSON.stringify(hello));
    expect(parsed).toEqual(hello);
  });

  it("round-trips a snapshot, preserving nulls", () => {
    const snapshot = makeSnapshot({
      joints: { index: { normalized: null, target: 120, status: "reached" } },
      pressed: { f: "index" },
      stalled: ["index"],
    });
    const parsed = parseServerMessage(JSON.stringify(snapshot));
    expect(parsed).toEqual(snapshot);
  });

  it("parses event and error frames", () => {
    const event = parseServerMessage(
      '{"type": "event", "t": 16.81, "event": "key_press", "data": {"key": "f", "finger": "index"}}',
    );
    expect(event).toEqual({
      type: "event",
      t: 16.81,
      event: "key_press",
      data: { key: "f", finger: "index" },
    });
    const error = parseServerMessage('{"type": "error", "code": "read_only", "detail": "x"}');
    expect(error).toEqual({ type: "error", code: "read_only", detail: "x" });
  });

  it.each([
    ["not json at all", "{nope"],
    ["unknown type", '{"type": "mystery"}'],
    ["missing snapshot fields", '{"type": "snapshot", "t": 1.0}'],
    ["string where number expected", '{"type": "event", "t": "soon", "event": "x", "data": {}}'],
    ["NaN-free only", '{"type": "event", "t": null, "event": "x", "data": {}}'],
  ])("rejects %s", (_name, text) => {
    expect(() => parseServerMessage(text)).toThrow(ProtocolError);
  });

  it("rejects a snapshot with a malformed joint sample", () => {
    const snapshot: Record<string, unknown> = JSON.parse(JSON.stringify(makeSnapshot()));
    (snapshot.joints as Record<string, Record<string, unknown>>).index!.angle = "wide";
    expect(() => parseServerObject(snapshot)).toThrow(/angle/);
  });
});

describe("command builders", () => {
  it("builds the four kinds", () => {
    expect(moveCommand([{ joint: "index", target: 255, pwm: 255 }])).toEqual({
      type: "command",
      kind: "move",
      moves: [{ joint: "index", target: 255, pwm: 255 }],
    });
    expect(moveCommand([{ joint: "wrist_deviation", target_angle: 10.5, pwm: 90 }])).toEqual({
      type: "command",
      kind: "move",
      moves: [{ joint: "wrist_deviation", target_angle: 10.5, pwm: 90 }],
    });
    expect(splayCommand(3)).toEqual({ type: "command", kind: "splay", level: 3 });
    expect(handCommand(4, -19.05)).toEqual({
      type: "command",
      kind: "hand",
      x_mm: 4,
      y_mm: -19.05,
    });
    expect(taskCommand("typing")).toEqual({ type: "command", kind: "task", task: "typing" });
  });

  it("makes out-of-range commands impossible", () => {
    expect(() => moveCommand([{ joint: "index", target: 256, pwm: 255 }])).toThrow(ProtocolError);
    expect(() => moveCommand([{ joint: "index", target: -1, pwm: 255 }])).toThrow(ProtocolError);
    expect(() => moveCommand([{ joint: "index", target: 10, pwm: 0 }])).toThrow(ProtocolError);
    expect(() => moveCommand([{ joint: "index", target: 1.5, pwm: 10 }])).toThrow(ProtocolError);
    expect(() => moveCommand([{ joint: "pinky", target: 10, pwm: 10 }])).toThrow(/unknown joint/);
    expect(() =>
      moveCommand([{ joint: "index", target: 10, target_angle: 90, pwm: 10 }]),
    ).toThrow(/exactly one/);
    expect(() => moveCommand([{ joint: "index", pwm: 10 }])).toThrow(/exactly one/);
    expect(() => moveCommand([])).toThrow(/non-empty/);
    expect(() => splayCommand(0)).toThrow(ProtocolError);
    expect(() => splayCommand(6)).toThrow(ProtocolError);
    expect(() => splayCommand(2.5)).toThrow(ProtocolError);
    expect(() => handCommand(Number.NaN, 0)).toThrow(ProtocolError);
    expect(() => taskCommand(123 as unknown as string)).toThrow(ProtocolError);
    expect(() => assertValidCommand({ type: "command", kind: "dance" })).toThrow(/unknown command/);
    expect(() => assertValidCommand({ kind: "splay", level: 1 })).toThrow(ProtocolError);
  });
});

describe("catalog conformance", () => {
  // Every strict JSON example in the protocol document must validate:
  // server examples against the parsers, command examples against the
  // command validator.  Examples elided with "…" are skipped.
  const docPath = join(dirname(fileURLToPath(import.meta.url)), "../../docs/ui-protocol.md");
  const doc = readFileSync(docPath, "utf8");

  function extractJsonObjects(markdown: string): string[] {
    const objects: string[] = [];
    const fences = [...markdown.matchAll(/```json\n([\s\S]*?)```/g)];
    for (const fence of fences) {
      const text = fence[1]!;
      let depth = 0;
      let start = -1;
      let inString = false;
      let escaped = false;
      for (let i = 0; i < text.length; i += 1) {
        const ch = text[i]!;
        if (inString) {
          if (escaped) escaped = false;
          else if (ch === "\\") escaped = true;
          else if (ch === '"') inString = false;
          continue;
        }
        if (ch === '"') inString = true;
        else if (ch === "{") {
          if (depth === 0) start = i;
          depth += 1;
        } else if (ch === "}") {
          depth -= 1;
          if (depth === 0 && start >= 0) {
            objects.push(text.slice(start, i + 1));
            start = -1;
          }
        }
      }
    }
    return objects;
  }

  it("accepts every strict example in docs/ui-protocol.md", () => {
    const objects = extractJsonObjects(doc).filter((text) => !text.includes("…"));
    expect(objects.length).toBeGreaterThanOrEqual(9);
    let commands = 0;
    let server = 0;
    for (const text of objects) {
      const value = JSON.parse(text) as { type?: string };
      if (value.type === "command") {
        assertValidCommand(value);
        commands += 1;
      } else {
        parseServerObject(value);
        server += 1;
      }
    }
    // all five documented command shapes and at least the strict
    // event/error examples
    expect(commands).toBeGreaterThanOrEqual(5);
    expect(server).toBeGreaterThanOrEqual(4);
  });
});
