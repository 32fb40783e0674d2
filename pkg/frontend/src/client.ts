/**
 * WebSocket client: owns the state store and folds every server
 * message into it.  Works with the browser WebSocket and with any
 * implementation exposing the same onopen/onmessage/onclose surface
 * (the `ws` package does, which is how the loopback tests run under
 * Node).
 */

import type { Command, ServerMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";
import type { ConsoleState } from "./state.js";
import { applyMessage, initialState, markClosed } from "./state.js";

const WS_OPEN = 1;

export interface WebSocketLike {
  readyState: number;
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: ((event: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onerror: ((event: unknown) => void) | null;
}

export interface WebSocketCtor {
  new (url: string): WebSocketLike;
}

export interface ClientOptions {
  WebSocketImpl?: WebSocketCtor;
  now?: () => number;
}

type Listener = (message: ServerMessage | null) => void;

export class ConsoleClient {
  readonly state: ConsoleState = initialState();
  private socket: WebSocketLike | null = null;
  private readonly listeners = new Set<Listener>();
  private readonly now: () => number;
  private readonly WebSocketImpl: WebSocketCtor;

  constructor(
    private readonly url: string,
    options: ClientOptions = {},
  ) {
    const impl = options.WebSocketImpl ?? (globalThis as { WebSocket?: WebSocketCtor }).WebSocket;
    if (!impl) throw new Error("no WebSocket implementation available");
    this.WebSocketImpl = impl;
    this.now = options.now ?? Date.now;
  }

  connect(): void {
    this.state.connection = "connecting";
    const socket = new this.WebSocketImpl(this.url);
    this.socket = socket;
    socket.onmessage = (event) => {
      const text = typeof event.data === "string" ? event.data : String(event.data);
      let message: ServerMessage;
      try {
        message = parseServerMessage(text);
      } catch (exc) {
        // a malformed server frame must not kill the console
        this.state.lastError = {
          type: "error",
          code: "client_parse_error",
          detail: (exc as Error).message,
        };
        this.notify(null);
        return;
      }
      applyMessage(this.state, message, this.now());
      this.notify(message);
    };
    socket.onclose = () => {
      markClosed(this.state);
      this.notify(null);
    };
    socket.onerror = () => {
      // onclose follows; nothing to do beyond surfacing state
      this.notify(null);
    };
  }

  close(): void {
    this.socket?.close();
  }

  /** True when this client may command the session. */
  isOperator(): boolean {
    return this.state.connection === "open" && this.state.role === "operator";
  }

  /**
   * Send a command; returns false (and sends nothing) when the socket
   * is not open.
   */
  sendCommand(command: Command): boolean {
    if (!this.socket || this.socket.readyState !== WS_OPEN) return false;
    this.socket.send(JSON.stringify(command));
    return true;
  }

  /** Called after every applied message (null = close/parse failure). */
  onUpdate(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(message: ServerMessage | null): void {
    for (const listener of this.listeners) listener(message);
  }
}
