// Glue for the wasm demo. Build the wasm package first (see README):
//   cargo build --release -p c2f-demo --target wasm32-unknown-unknown
//   wasm-bindgen --target web --out-dir crates/demo/www/pkg \
//       target/wasm32-unknown-unknown/release/c2f_demo.wasm
import init, { DemoSession } from "./pkg/c2f_demo.js";

const W = 320, H = 240;
let session = null;

const el = (id) => document.getElementById(id);
const farCanvas = el("far"), nearCanvas = el("near");
const farCtx = farCanvas.getContext("2d"), nearCtx = nearCanvas.getContext("2d");

function blit(ctx, rgba) {
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), W, H), 0, 0);
}

function status(msg) {
  el("status").textContent = msg;
}

function applyNoise() {
  const s0 = parseFloat(el("sigma0").value);
  const k = parseFloat(el("k").value);
  const d = parseFloat(el("dropout").value);
  el("sigma0v").textContent = s0.toFixed(1);
  el("kv").textContent = k.toFixed(1);
  el("dropv").textContent = d.toFixed(2);
  if (session) session.set_noise(s0, k, d);
}

function scanFar() {
  if (!session) return;
  try {
    blit(farCtx, session.scan_far(W, H));
    el("jointfill").style.width = `${(session.joint_state_fraction() * 100).toFixed(0)}%`;
  } catch (e) {
    status(`far scan failed: ${e}`);
  }
}

function newScene() {
  const cat = el("category").value;
  const seed = parseInt(el("seed").value, 10) || 0;
  session = new DemoSession(cat, seed);
  applyNoise();
  nearCtx.clearRect(0, 0, W, H);
  scanFar();
  status(`new ${cat} (seed ${seed}) — click the far view to zoom in`);
}

function canvasXY(canvas, ev) {
  const r = canvas.getBoundingClientRect();
  return [(ev.clientX - r.left) * (W / r.width), (ev.clientY - r.top) * (H / r.height)];
}

await init();
newScene();

el("newScene").onclick = newScene;
el("rescan").onclick = scanFar;
for (const id of ["sigma0", "k", "dropout"]) el(id).oninput = applyNoise;

farCanvas.onclick = (ev) => {
  if (!session) return;
  const [x, y] = canvasXY(farCanvas, ev);
  try {
    blit(nearCtx, session.zoom(x, y, W, H));
    status("zoomed in — click a near point to interact");
  } catch (e) {
    status(`zoom failed: ${e}`);
  }
};

nearCanvas.onclick = (ev) => {
  if (!session) return;
  const [x, y] = canvasXY(nearCanvas, ev);
  const task = el("task").value;
  try {
    const out = JSON.parse(session.interact(x, y, task));
    const verdict = out.gt ? "SUCCESS" : `failed (${out.failure_reason})`;
    status(
      `${task}: ${verdict}\njoint moved ${out.joint_delta.toFixed(3)} — re-scan to see the object`
    );
    el("jointfill").style.width = `${(out.joint_fraction * 100).toFixed(0)}%`;
    scanFar();
  } catch (e) {
    status(`interaction failed: ${e}`);
  }
};
