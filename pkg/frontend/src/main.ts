// Browser entry: stereo annotation UI. Left and right frames render side
// by side with a synchronized zoom/pan transform; clicking places the
// active keypoint with sub-pixel precision at the current zoom.

import { ApiClient, Camera } from "./api.js";
import {
  Ctx2D,
  ViewTransform,
  drawMarkers,
  fitTransform,
  pan,
  screenToImage,
  zoomAt,
} from "./canvas.js";
import { SessionViewModel } from "./state.js";

const API_BASE = (window as { POSEFACTORY_API?: string }).POSEFACTORY_API ?? "";

const api = new ApiClient(API_BASE);
const vm = new SessionViewModel(api);

const app = document.getElementById("app") as HTMLDivElement;

interface FramePane {
  camera: Camera;
  canvas: HTMLCanvasElement;
  image: HTMLImageElement | null;
}

let panes: FramePane[] = [];
let transform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
let currentFrame: number | null = null;
let occludedMode = false;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function render(): void {
  app.replaceChildren();
  renderBanner();
  renderPickers();
  if (vm.session !== null) {
    renderFrameStrip();
    renderPalette();
    renderResidualSummary();
    renderCanvases();
    renderCommit();
  }
}

function renderBanner(): void {
  if (vm.banner === null) return;
  const div = el("div", { class: `banner ${vm.banner.tone}` }, vm.banner.text);
  if (vm.banner.retry) {
    const retry = el("button", {}, "retry");
    retry.onclick = async () => {
      await vm.banner?.retry?.();
      render();
    };
    div.append(" ", retry);
  }
  app.append(div);
}

function renderPickers(): void {
  const bar = el("div", { class: "pickers" });
  const sceneSel = el("select");
  for (const s of vm.scenes) {
    sceneSel.append(el("option", { value: s.scene_id }, s.scene_id));
  }
  const objectSel = el("select");
  const fillObjects = () => {
    objectSel.replaceChildren();
    const scene = vm.scenes.find((s) => s.scene_id === sceneSel.value);
    for (const o of scene?.objects ?? []) {
      objectSel.append(el("option", { value: o }, o));
    }
  };
  sceneSel.onchange = fillObjects;
  fillObjects();
  const open = el("button", {}, "open session");
  open.onclick = async () => {
    await vm.openSession(sceneSel.value, objectSel.value);
    currentFrame = vm.session?.selected_frames[0] ?? null;
    transform = { scale: 1, offsetX: 0, offsetY: 0 };
    await loadImages();
    render();
  };
  bar.append("scene ", sceneSel, " object ", objectSel, " ", open);
  app.append(bar);
}

function renderFrameStrip(): void {
  const strip = el("div", { class: "frames" });
  for (const j of vm.session?.selected_frames ?? []) {
    const btn = el(
      "button",
      { class: j === currentFrame ? "frame active" : "frame" },
      `frame ${j}`,
    );
    btn.onclick = async () => {
      currentFrame = j;
      await loadImages();
      render();
    };
    strip.append(btn);
  }
  app.append(strip);
}

function renderPalette(): void {
  const bar = el("div", { class: "palette" });
  for (const kp of vm.palette) {
    const btn = el(
      "button",
      {
        class: kp.id === vm.activeKeypoint ? "kp active" : "kp",
        style: `border-color: ${kp.color}`,
      },
      kp.name,
    );
    btn.onclick = () => {
      vm.activeKeypoint = kp.id;
      render();
    };
    bar.append(btn);
  }
  const occ = el(
    "button",
    { class: occludedMode ? "occluded active" : "occluded" },
    "occluded",
  );
  occ.onclick = () => {
    occludedMode = !occludedMode;
    render();
  };
  bar.append(occ);
  app.append(bar);
}

function renderResidualSummary(): void {
  const list = el("div", { class: "residuals" });
  for (const row of vm.residualSummary()) {
    list.append(
      el(
        "span",
        { class: `residual ${row.status}` },
        `${row.name}: ${row.rmsePx.toFixed(2)}px`,
      ),
    );
  }
  const pending = vm.pendingKeypoints();
  if (pending.length > 0) {
    list.append(
      el(
        "span",
        { class: "pending" },
        `needs more clicks: ${pending.map((k) => vm.keypointName(k)).join(", ")}`,
      ),
    );
  }
  app.append(list);
}

function renderCommit(): void {
  const bar = el("div", { class: "commitbar" });
  const btn = el("button", { class: "commit" }, vm.committed ? "committed" : "commit");
  if (vm.committed) btn.setAttribute("disabled", "disabled");
  btn.onclick = async () => {
    await vm.commitSession();
    render();
  };
  bar.append(btn);
  if (vm.commitResult !== null) {
    bar.append(
      el(
        "span",
        { class: "pose" },
        ` t = [${vm.commitResult.world_pose.translation
          .map((v) => v.toFixed(4))
          .join(", ")}] m`,
      ),
    );
  }
  app.append(bar);
}

function paneSize(): [number, number] {
  const width = Math.max(320, Math.floor((window.innerWidth - 60) / 2));
  return [width, Math.max(240, window.innerHeight - 260)];
}

function renderCanvases(): void {
  const wrap = el("div", { class: "panes" });
  panes = [];
  const [w, h] = paneSize();
  for (const camera of ["left", "right"] as Camera[]) {
    const canvas = el("canvas", { width: String(w), height: String(h) });
    canvas.className = `pane ${camera}`;
    attachPaneEvents(canvas, camera);
    wrap.append(canvas);
    panes.push({ camera, canvas, image: null });
  }
  app.append(wrap);
  void loadImages().then(drawPanes);
  drawPanes();
}

function attachPaneEvents(canvas: HTMLCanvasElement, camera: Camera): void {
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const rect = canvas.getBoundingClientRect();
    const p: [number, number] = [ev.clientX - rect.left, ev.clientY - rect.top];
    transform = zoomAt(transform, p, ev.deltaY < 0 ? 1.25 : 0.8);
    drawPanes(); // shared transform: both panes stay in sync
  });
  let dragging = false;
  let last: [number, number] = [0, 0];
  canvas.addEventListener("mousedown", (ev) => {
    if (ev.button === 1 || ev.shiftKey) {
      dragging = true;
      last = [ev.clientX, ev.clientY];
      ev.preventDefault();
    }
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (ev) => {
    if (dragging) {
      transform = pan(transform, ev.clientX - last[0], ev.clientY - last[1]);
      last = [ev.clientX, ev.clientY];
      drawPanes();
    }
  });
  canvas.addEventListener("click", async (ev) => {
    if (currentFrame === null || dragging) return;
    const rect = canvas.getBoundingClientRect();
    const pixel = screenToImage(transform, [
      ev.clientX - rect.left,
      ev.clientY - rect.top,
    ]);
    await vm.clickKeypoint(currentFrame, camera, vm.activeKeypoint, pixel, occludedMode);
    render();
  });
}

async function loadImages(): Promise<void> {
  if (vm.session === null || currentFrame === null) return;
  const frame = vm.sceneFrames?.frames.find((f) => f.frame_index === currentFrame);
  await Promise.all(
    panes.map(async (pane) => {
      const ref = pane.camera === "left" ? frame?.image_left : frame?.image_right;
      if (!ref) {
        pane.image = null;
        return;
      }
      pane.image = await new Promise((resolve) => {
        const img = new Image();
        img.onload = () => resolve(img);
        img.onerror = () => resolve(null);
        img.src = api.imageUrl(vm.session!.scene_id, pane.camera, currentFrame!);
      });
    }),
  );
}

function drawPanes(): void {
  if (currentFrame === null) return;
  for (const pane of panes) {
    const ctx = pane.canvas.getContext("2d");
    if (ctx === null) continue;
    ctx.setTransform(1, 0, 0, 1, 0, 0);
    ctx.fillStyle = "#15171c";
    ctx.fillRect(0, 0, pane.canvas.width, pane.canvas.height);
    if (pane.image !== null) {
      if (transform.scale === 1 && transform.offsetX === 0 && transform.offsetY === 0) {
        transform = fitTransform(
          pane.image.naturalWidth,
          pane.image.naturalHeight,
          pane.canvas.width,
          pane.canvas.height,
        );
      }
      ctx.setTransform(
        transform.scale,
        0,
        0,
        transform.scale,
        transform.offsetX,
        transform.offsetY,
      );
      ctx.imageSmoothingEnabled = transform.scale < 4;
      ctx.drawImage(pane.image, 0, 0);
      ctx.setTransform(1, 0, 0, 1, 0, 0);
    }
    drawMarkers(
      ctx as unknown as Ctx2D,
      transform,
      vm.clickMarkers(currentFrame, pane.camera),
      vm.overlayMarkers(currentFrame, pane.camera),
    );
    ctx.fillStyle = "#9aa3ad";
    ctx.font = "12px sans-serif";
    ctx.fillText(`${pane.camera} / frame ${currentFrame}`, 8, 16);
  }
}

window.addEventListener("resize", render);

void (async () => {
  await vm.refreshScenes();
  render();
})();
