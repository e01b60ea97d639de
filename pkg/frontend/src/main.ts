// App wiring: connect screen, websocket session, camera input, render
// loop, and the outbound player_state throttle.

import { Camera } from "./camera.js";
import { Connection } from "./net.js";
import { Interactor } from "./pick.js";
import type { Message } from "./protocol.js";
import { renderFrame, cameraClientLocation, type Ctx2D } from "./render.js";
import { SceneStore } from "./scene.js";
import { RateLimiter } from "./throttle.js";

const DIRECT_PORT = 8000;
const BROKER_PORT = 8080;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const connectScreen = el<HTMLDivElement>("connect-screen");
const hostInput = el<HTMLInputElement>("host");
const nameInput = el<HTMLInputElement>("name");
const roleSelect = el<HTMLSelectElement>("role");
const brokerToggle = el<HTMLInputElement>("use-broker");
const connectButton = el<HTMLButtonElement>("connect");
const statusLine = el<HTMLDivElement>("status");
const canvas = el<HTMLCanvasElement>("scene");
const toast = el<HTMLDivElement>("toast");

const params = new URLSearchParams(location.search);
if (params.get("host")) hostInput.value = params.get("host")!;

brokerToggle.addEventListener("change", () => {
  const [host] = hostInput.value.split(":");
  hostInput.value = `${host || "127.0.0.1"}:${brokerToggle.checked ? BROKER_PORT : DIRECT_PORT}`;
});

const scene = new SceneStore();
const camera = new Camera();
const interactor = new Interactor(scene);
const poseLimiter = new RateLimiter(10);
let connection: Connection | null = null;
let lastSnapshotAt = 0;
let snapshotPeriodMs = 100;
let showDebug = false;
let cameraDirty = false;

function showToast(text: string): void {
  toast.textContent = text;
  toast.style.opacity = "1";
  setTimeout(() => (toast.style.opacity = "0"), 2500);
}

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function onMessage(msg: Message): void {
  const before = scene.snapshotCount;
  scene.apply(msg);
  if (scene.snapshotCount !== before) {
    const now = performance.now();
    if (lastSnapshotAt > 0) snapshotPeriodMs = Math.max(20, now - lastSnapshotAt);
    lastSnapshotAt = now;
  }
  if (msg.kind === "world_init" && scene.bounds) {
    camera.fit(
      scene.bounds.min_x,
      scene.bounds.min_y,
      scene.bounds.max_x,
      scene.bounds.max_y,
      canvas.width,
      canvas.height,
    );
  }
  if (msg.kind === "action_result") {
    interactor.onActionResult(msg.payload.request_id, msg.payload.status, msg.payload.message);
    if (msg.payload.status === "error") showToast(msg.payload.message ?? "action failed");
  }
  if (msg.kind === "bye") showToast("server closed the session");
}

connectButton.addEventListener("click", () => {
  const hostPort = hostInput.value.trim() || `127.0.0.1:${DIRECT_PORT}`;
  const name = nameInput.value.trim() || "web";
  const role = roleSelect.value === "observer" ? "observer" : "player";
  setStatus("connecting...");
  connection = new Connection((url) => new WebSocket(url) as never, {
    onMessage,
    onLive: () => {
      connectScreen.style.display = "none";
      setStatus("");
    },
    onReject: (reason) => setStatus(`rejected: ${reason.replace("_", " ")}`),
    onClose: () => {
      connectScreen.style.display = "";
      setStatus("connection closed");
    },
    onError: () => setStatus("cannot reach server (check the address)"),
  });
  connection.connect(`ws://${hostPort}`, name, role);
  // Surface unreachable hosts even when no error event fires.
  setTimeout(() => {
    if (connection && connection.state === "connecting") setStatus("connection timed out");
  }, 5000);
});

// -- Camera input -------------------------------------------------------------

let dragging = false;
let rotating = false;
let lastPointer: [number, number] = [0, 0];

canvas.addEventListener("mousedown", (ev) => {
  dragging = ev.button === 0;
  rotating = ev.button === 2;
  lastPointer = [ev.offsetX, ev.offsetY];
});
canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
window.addEventListener("mouseup", () => {
  dragging = false;
  rotating = false;
});
canvas.addEventListener("mousemove", (ev) => {
  const dx = ev.offsetX - lastPointer[0];
  const dy = ev.offsetY - lastPointer[1];
  lastPointer = [ev.offsetX, ev.offsetY];
  if (dragging) {
    camera.panScreen(dx, dy);
    cameraDirty = true;
  } else if (rotating) {
    camera.rotate(dx * 0.4);
    cameraDirty = true;
  }
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  camera.zoomAt(ev.deltaY < 0 ? 1.15 : 1 / 1.15, ev.offsetX, ev.offsetY, canvas.width, canvas.height);
  cameraDirty = true;
});
canvas.addEventListener("click", (ev) => {
  if (dragWasPan(ev)) return;
  const [wx, wy] = camera.screenToWorld(ev.offsetX, ev.offsetY, canvas.width, canvas.height);
  const tolerance = Math.max(3, 8 / camera.zoom);
  const outcome = interactor.click(wx, wy, tolerance);
  if (outcome.action && connection) {
    connection.send("invoke_action", outcome.action);
  }
});
window.addEventListener("keydown", (ev) => {
  if (ev.key === "d" || ev.key === "D") showDebug = !showDebug;
  if (ev.key === "q") camera.rotate(-15);
  if (ev.key === "e") camera.rotate(15);
});

let moveStart: [number, number] | null = null;
canvas.addEventListener("mousedown", (ev) => (moveStart = [ev.offsetX, ev.offsetY]));
function dragWasPan(ev: MouseEvent): boolean {
  if (!moveStart) return false;
  return Math.hypot(ev.offsetX - moveStart[0], ev.offsetY - moveStart[1]) > 4;
}

// -- Render loop ----------------------------------------------------------------

function resize(): void {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
}
window.addEventListener("resize", resize);
resize();

function frame(): void {
  requestAnimationFrame(frame);
  const now = performance.now();
  const blend = lastSnapshotAt > 0 ? (now - lastSnapshotAt) / snapshotPeriodMs : 1;
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  renderFrame(ctx, scene, camera, {
    viewW: canvas.width,
    viewH: canvas.height,
    showDebug,
    blend,
    nowMs: Date.now(),
  });
  // Camera pose is the player's position: throttled to 10 frames/s.
  if (cameraDirty && connection?.state === "live" && poseLimiter.tryAcquire(now)) {
    cameraDirty = false;
    connection.send("player_state", camera.pose(cameraClientLocation(scene, camera)));
  }
}
requestAnimationFrame(frame);
