// Connection lifecycle: websocket handshake, sequence stamping, and
// decoded-frame dispatch. The socket constructor is injectable so the
// same code runs in the browser and under node tests.

import {
  decodeMessage,
  FrameStamper,
  type Kind,
  type Message,
  type Scalar,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionState = "idle" | "connecting" | "live" | "rejected" | "closed" | "error";

export interface ConnectionEvents {
  onMessage?: (msg: Message) => void;
  onLive?: (clientId: string) => void;
  onReject?: (reason: string) => void;
  onClose?: () => void;
  onError?: (detail: string) => void;
}

export class Connection {
  state: ConnectionState = "idle";
  clientId: string | null = null;
  rejectReason: string | null = null;
  private socket: SocketLike | null = null;
  private stamper = new FrameStamper();
  lastSeqIn = -1;

  constructor(private socketFactory: SocketFactory, private events: ConnectionEvents = {}) {}

  connect(url: string, name: string, role: "player" | "observer"): void {
    this.state = "connecting";
    this.stamper = new FrameStamper();
    this.lastSeqIn = -1;
    let socket: SocketLike;
    try {
      socket = this.socketFactory(url);
    } catch (err) {
      this.state = "error";
      this.events.onError?.(String(err));
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.sendRaw("connect", { client_name: name, desired_role: role });
    };
    socket.onmessage = (ev) => this.handleFrame(String(ev.data));
    socket.onclose = () => {
      if (this.state === "live" || this.state === "connecting") {
        this.state = "closed";
        this.events.onClose?.();
      }
    };
    socket.onerror = () => {
      if (this.state === "connecting") {
        this.state = "error";
        this.events.onError?.("connection failed");
      }
    };
  }

  private handleFrame(text: string): void {
    let msg: Message;
    try {
      msg = decodeMessage(text);
    } catch (err) {
      this.events.onError?.(String(err));
      return;
    }
    if (msg.seq <= this.lastSeqIn) return; // non-monotone sender, drop
    this.lastSeqIn = msg.seq;
    if (this.state === "connecting") {
      if (msg.kind === "handshake_ack") {
        this.state = "live";
        this.clientId = msg.payload.client_id;
        this.events.onLive?.(this.clientId);
        return;
      }
      if (msg.kind === "reject") {
        this.state = "rejected";
        this.rejectReason = msg.payload.reason;
        this.events.onReject?.(msg.payload.reason);
        return;
      }
    }
    if (msg.kind === "bye") {
      this.state = "closed";
      this.events.onMessage?.(msg);
      this.events.onClose?.();
      this.socket?.close();
      return;
    }
    this.events.onMessage?.(msg);
  }

  private sendRaw(kind: Kind, payload: unknown): void {
    this.socket?.send(this.stamper.encode(kind, payload as never));
  }

  send(kind: Kind, payload: unknown): boolean {
    if (this.state !== "live") return false;
    this.sendRaw(kind, payload);
    return true;
  }

  invoke(action: string, args: Scalar[], requestId: string): boolean {
    return this.send("invoke_action", { request_id: requestId, action, args });
  }

  close(): void {
    if (this.state === "live") this.sendRaw("bye", {});
    this.socket?.close();
    this.state = "closed";
  }
}
