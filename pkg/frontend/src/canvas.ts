// Frame canvas: zoom/pan transform between screen and image pixels, and
// marker drawing. Drawing goes through a minimal 2D-context interface so
// the logic is testable without a browser.

import { ClickMarker, OverlayMarker } from "./state.js";

export interface ViewTransform {
  scale: number;
  offsetX: number; // screen position of image pixel (0, 0)
  offsetY: number;
}

export const MIN_SCALE = 0.1;
export const MAX_SCALE = 64;

export function identityTransform(): ViewTransform {
  return { scale: 1, offsetX: 0, offsetY: 0 };
}

export function imageToScreen(t: ViewTransform, p: [number, number]): [number, number] {
  return [p[0] * t.scale + t.offsetX, p[1] * t.scale + t.offsetY];
}

export function screenToImage(t: ViewTransform, p: [number, number]): [number, number] {
  return [(p[0] - t.offsetX) / t.scale, (p[1] - t.offsetY) / t.scale];
}

/** Zoom by `factor` keeping the image point under `screenPoint` fixed,
 * which is what gives sub-pixel click placement at high zoom. */
export function zoomAt(
  t: ViewTransform,
  screenPoint: [number, number],
  factor: number,
): ViewTransform {
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, t.scale * factor));
  const effective = scale / t.scale;
  return {
    scale,
    offsetX: screenPoint[0] - (screenPoint[0] - t.offsetX) * effective,
    offsetY: screenPoint[1] - (screenPoint[1] - t.offsetY) * effective,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { scale: t.scale, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}

/** Fit an image of the given size into a viewport, centered. */
export function fitTransform(
  imageWidth: number,
  imageHeight: number,
  viewWidth: number,
  viewHeight: number,
): ViewTransform {
  const scale = Math.min(viewWidth / imageWidth, viewHeight / imageHeight);
  return {
    scale,
    offsetX: (viewWidth - imageWidth * scale) / 2,
    offsetY: (viewHeight - imageHeight * scale) / 2,
  };
}

// Subset of CanvasRenderingContext2D the renderer needs.
export interface Ctx2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export const RESIDUAL_GOOD_COLOR = "hsl(120, 70%, 45%)";
export const RESIDUAL_BAD_COLOR = "hsl(0, 85%, 55%)";

/** Crosshair for a recorded click. Occluded clicks draw hollow. */
export function drawClickMarker(ctx: Ctx2D, t: ViewTransform, marker: ClickMarker): void {
  const [x, y] = imageToScreen(t, marker.pixel);
  const r = 6;
  ctx.strokeStyle = marker.color;
  ctx.lineWidth = marker.occluded ? 1 : 2;
  ctx.beginPath();
  ctx.moveTo(x - r, y);
  ctx.lineTo(x + r, y);
  ctx.moveTo(x, y - r);
  ctx.lineTo(x, y + r);
  ctx.stroke();
}

/** Reprojection overlay circle, color-coded by residual status; the
 * residual in pixels is printed next to clicked observations. */
export function drawOverlayMarker(ctx: Ctx2D, t: ViewTransform, marker: OverlayMarker): void {
  const [x, y] = imageToScreen(t, marker.pixel);
  ctx.strokeStyle =
    marker.status === null
      ? marker.color
      : marker.status === "good"
        ? RESIDUAL_GOOD_COLOR
        : RESIDUAL_BAD_COLOR;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(x, y, 8, 0, Math.PI * 2);
  ctx.stroke();
  if (marker.residualPx !== null) {
    ctx.fillStyle = ctx.strokeStyle;
    ctx.font = "11px sans-serif";
    ctx.fillText(`${marker.residualPx.toFixed(2)}px`, x + 10, y - 10);
  }
}

export function drawMarkers(
  ctx: Ctx2D,
  t: ViewTransform,
  clicks: ClickMarker[],
  overlays: OverlayMarker[],
): void {
  for (const c of clicks) drawClickMarker(ctx, t, c);
  for (const o of overlays) drawOverlayMarker(ctx, t, o);
}
