// Browser bootstrap: canvas + control buttons wired to the console core.
// Connects to the service's WebSocket listener, e.g.
//   stagetrack serve --replay run.ndjson --port 8765 --ws-port 8766
// then open index.html?ws=ws://127.0.0.1:8766

import { OperatorConsole } from "./console.js";
import { webSocketFactory } from "./connection.js";

const params = new URLSearchParams(location.search);
const wsUrl = params.get("ws") ?? `ws://${location.hostname || "127.0.0.1"}:8766`;

const canvas = document.getElementById("stage") as HTMLCanvasElement;
const controls = document.getElementById("controls") as HTMLDivElement;
const ctx = canvas.getContext("2d")!;

const console_ = new OperatorConsole(ctx, webSocketFactory(wsUrl), {
  width: canvas.width,
  height: canvas.height,
});

canvas.addEventListener("pointerdown", (e) => {
  const rect = canvas.getBoundingClientRect();
  if (console_.pointerDown(e.clientX - rect.left, e.clientY - rect.top)) {
    canvas.setPointerCapture(e.pointerId);
  }
});
canvas.addEventListener("pointermove", (e) => {
  const rect = canvas.getBoundingClientRect();
  console_.pointerMove(e.clientX - rect.left, e.clientY - rect.top);
});
canvas.addEventListener("pointerup", () => {
  console_.pointerUp();
});

function button(label: string, onClick: () => void): HTMLButtonElement {
  const b = document.createElement("button");
  b.textContent = label;
  b.addEventListener("click", onClick);
  controls.appendChild(b);
  return b;
}

button("pause", () => console_.pause());
button("resume", () => console_.resume());
button("coverage", () => console_.requestCoverage());

// Scene force buttons appear once the snapshot delivers the scene list.
let sceneButtonsBuilt = false;
setInterval(() => {
  if (sceneButtonsBuilt || !console_.store.stage) return;
  sceneButtonsBuilt = true;
  for (const scene of console_.store.stage.scenes) {
    button(`force ${scene.id}`, () => console_.forceScene(scene.id));
  }
  button("force end", () => console_.forceScene("end"));
}, 250);

console_.start();
