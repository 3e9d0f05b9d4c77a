import { describe, expect, it } from "vitest";

import {
  Ctx2D,
  MAX_SCALE,
  RESIDUAL_BAD_COLOR,
  RESIDUAL_GOOD_COLOR,
  drawMarkers,
  fitTransform,
  identityTransform,
  imageToScreen,
  pan,
  screenToImage,
  zoomAt,
} from "../src/canvas.js";

class RecordingCtx implements Ctx2D {
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 1;
  font = "";
  ops: string[] = [];
  strokes: string[] = [];
  texts: string[] = [];

  beginPath() {
    this.ops.push("beginPath");
  }
  moveTo() {
    this.ops.push("moveTo");
  }
  lineTo() {
    this.ops.push("lineTo");
  }
  arc() {
    this.ops.push("arc");
  }
  stroke() {
    this.strokes.push(String(this.strokeStyle));
  }
  fill() {
    this.ops.push("fill");
  }
  fillText(text: string) {
    this.texts.push(text);
  }
}

describe("view transform", () => {
  it("round-trips screen and image coordinates", () => {
    const t = { scale: 3.5, offsetX: -40, offsetY: 12 };
    const image: [number, number] = [123.25, 456.75];
    const back = screenToImage(t, imageToScreen(t, image));
    expect(back[0]).toBeCloseTo(image[0], 10);
    expect(back[1]).toBeCloseTo(image[1], 10);
  });

  it("zoomAt keeps the anchored image point fixed (sub-pixel placement)", () => {
    let t = identityTransform();
    const anchor: [number, number] = [200, 150];
    const imagePoint = screenToImage(t, anchor);
    for (let i = 0; i < 10; i++) {
      t = zoomAt(t, anchor, 1.3);
    }
    const after = imageToScreen(t, imagePoint);
    expect(after[0]).toBeCloseTo(anchor[0], 8);
    expect(after[1]).toBeCloseTo(anchor[1], 8);
    expect(t.scale).toBeGreaterThan(10);
  });

  it("clamps the zoom range", () => {
    let t = identityTransform();
    for (let i = 0; i < 50; i++) t = zoomAt(t, [0, 0], 4.0);
    expect(t.scale).toBe(MAX_SCALE);
  });

  it("pan shifts offsets only", () => {
    const t = pan({ scale: 2, offsetX: 5, offsetY: 6 }, 10, -4);
    expect(t).toEqual({ scale: 2, offsetX: 15, offsetY: 2 });
  });

  it("fitTransform centers the image", () => {
    const t = fitTransform(100, 50, 400, 400);
    expect(t.scale).toBe(4);
    expect(t.offsetX).toBe(0);
    expect(t.offsetY).toBe(100);
  });
});

describe("marker drawing", () => {
  it("draws overlays only for supplied markers and color-codes residuals", () => {
    const ctx = new RecordingCtx();
    drawMarkers(
      ctx,
      identityTransform(),
      [
        { keypointId: 0, pixel: [5, 5], occluded: false, color: "hsl(0, 85%, 55%)" },
      ],
      [
        {
          keypointId: 0,
          pixel: [5.2, 5.1],
          residualPx: 0.4,
          status: "good",
          color: "hsl(0, 85%, 55%)",
        },
        {
          keypointId: 1,
          pixel: [80, 40],
          residualPx: 21.0,
          status: "bad",
          color: "hsl(120, 85%, 55%)",
        },
      ],
    );
    expect(ctx.strokes).toContain(RESIDUAL_GOOD_COLOR);
    expect(ctx.strokes).toContain(RESIDUAL_BAD_COLOR);
    expect(ctx.texts).toContain("0.40px");
    expect(ctx.texts).toContain("21.00px");
  });

  it("keypoints without residuals keep their palette color", () => {
    const ctx = new RecordingCtx();
    drawMarkers(
      ctx,
      identityTransform(),
      [],
      [
        {
          keypointId: 2,
          pixel: [10, 10],
          residualPx: null,
          status: null,
          color: "hsl(240, 85%, 55%)",
        },
      ],
    );
    expect(ctx.strokes).toEqual(["hsl(240, 85%, 55%)"]);
    expect(ctx.texts).toHaveLength(0);
  });
});
