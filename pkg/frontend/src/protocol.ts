// Wire protocol: frame types and the JSON codec, mirroring the server's
// vocabulary. Frames are JSON text, one message per websocket frame.
// Unknown payload fields are ignored; seq strictly increases per sender.

export const PROTOCOL_VERSION = 1;

export type Scalar = boolean | number | string;
export type Vec3 = [number, number, number];

export interface SimTransform {
  scale: number;
  offset: Vec3;
  flip_vertical_axis: boolean;
}

export interface SpeciesSpec {
  species: string;
  mode: "per_step" | "static_init" | "background_only";
  dims: "2d" | "3d";
  color: [number, number, number];
  tag: string;
  has_collider: boolean;
  interactable: boolean;
  synced_attributes: string[];
  filter?: string;
}

export interface Feature {
  species: string;
  id: string;
  dims: "2d" | "3d";
  shape: { type: "point" | "polyline" | "polygon"; coords: number[][] };
  height_m: number;
  color: [number, number, number];
  tag: string;
  has_collider: boolean;
  interactable: boolean;
  attributes: Record<string, Scalar>;
}

export interface Entity {
  species: string;
  id: string;
  location: Vec3;
  heading_deg: number;
  attributes: Record<string, Scalar>;
}

export interface WorldBounds {
  min_x: number;
  min_y: number;
  max_x: number;
  max_y: number;
}

export interface WorldInitPayload {
  world_bounds: WorldBounds;
  transform: SimTransform;
  species_defs: SpeciesSpec[];
  static_features: Feature[];
  phase?: PhasePayload;
  player_id?: string;
}

export interface StepUpdatePayload {
  step: number;
  entities: Entity[];
  removed: [string, string][];
}

export interface ValueUpdatePayload {
  values: Record<string, Scalar>;
}

export interface PlayerStatePayload {
  location: Vec3;
  yaw_deg: number;
  pitch_deg: number;
}

export interface InvokeActionPayload {
  request_id: string;
  action: string;
  args: Scalar[];
}

export interface ActionResultPayload {
  request_id: string;
  status: "ok" | "error";
  value?: Scalar;
  message?: string;
}

export interface EvalPayload {
  request_id: string;
  command: string;
}

export interface PhasePayload {
  name: string;
  duration_s: number | null;
}

export interface DebugPayload {
  level: "info" | "warn" | "error";
  text: string;
}

export interface ConnectPayload {
  client_name: string;
  desired_role: "player" | "observer";
}

type PayloadByKind = {
  connect: ConnectPayload;
  handshake_ack: { client_id: string };
  world_init: WorldInitPayload;
  step_update: StepUpdatePayload;
  value_update: ValueUpdatePayload;
  player_state: PlayerStatePayload;
  invoke_action: InvokeActionPayload;
  action_result: ActionResultPayload;
  eval: EvalPayload;
  eval_result: ActionResultPayload;
  phase: PhasePayload;
  phase_done: { name: string };
  debug: DebugPayload;
  reject: { reason: "version_mismatch" | "session_full" | "bad_name" };
  bye: Record<string, never>;
};

export type Kind = keyof PayloadByKind;

export type Message = {
  [K in Kind]: { kind: K; protocol_version: number; seq: number; payload: PayloadByKind[K] };
}[Kind];

export const KINDS: Kind[] = [
  "connect",
  "handshake_ack",
  "world_init",
  "step_update",
  "value_update",
  "player_state",
  "invoke_action",
  "action_result",
  "eval",
  "eval_result",
  "phase",
  "phase_done",
  "debug",
  "reject",
  "bye",
];

export class ProtocolError extends Error {}

export function decodeMessage(text: string): Message {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`malformed frame: ${err}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const frame = doc as Record<string, unknown>;
  const kind = frame.kind;
  if (typeof kind !== "string" || !(KINDS as string[]).includes(kind)) {
    throw new ProtocolError(`unknown kind ${String(kind)}`);
  }
  if (typeof frame.protocol_version !== "number" || typeof frame.seq !== "number") {
    throw new ProtocolError("missing protocol_version or seq");
  }
  if (typeof frame.payload !== "object" || frame.payload === null) {
    throw new ProtocolError("missing payload");
  }
  return frame as unknown as Message;
}

export function encodeMessage(msg: Message): string {
  // Field order matches the server's canonical encoder.
  return JSON.stringify({
    kind: msg.kind,
    protocol_version: msg.protocol_version,
    seq: msg.seq,
    payload: msg.payload,
  });
}

/** Allocates the per-sender sequence numbers for one connection. */
export class FrameStamper {
  private next = 0;

  stamp<K extends Kind>(kind: K, payload: PayloadByKind[K]): Message {
    return {
      kind,
      protocol_version: PROTOCOL_VERSION,
      seq: this.next++,
      payload,
    } as Message;
  }

  encode<K extends Kind>(kind: K, payload: PayloadByKind[K]): string {
    return encodeMessage(this.stamp(kind, payload));
  }
}
