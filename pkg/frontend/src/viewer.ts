/** Canvas layer viewer: draws /render windows for the current view and
 * overlays the registered points. Pan by dragging, zoom with the wheel or
 * buttons; every view change requests a new window from the service. */

import type { ApiClient, LayerGeometry, XY } from "./api.js";
import type { LabelPoint } from "./api.js";
import {
  type View,
  cellWindow,
  crsToScreen,
  windowScreenRect,
} from "./geometry.js";

export interface ViewerSources {
  geometry: () => LayerGeometry | null;
  view: () => View | null;
  layer: () => string;
  bands: () => [number, number, number];
  templatePoints: () => XY[];
  labelPoints: () => LabelPoint[];
}

export class LayerViewer {
  private ctx: CanvasRenderingContext2D | null;
  private image: HTMLImageElement | null = null;
  private imageKey = "";

  constructor(
    private canvas: HTMLCanvasElement,
    private api: ApiClient,
    private sources: ViewerSources,
  ) {
    this.ctx = canvas.getContext ? canvas.getContext("2d") : null;
  }

  /** Request the visible window and redraw when it arrives. */
  refresh(): void {
    const geom = this.sources.geometry();
    const view = this.sources.view();
    if (!geom || !view) return;
    const win = cellWindow(geom, view, this.canvas.width, this.canvas.height);
    if (!win) {
      this.image = null;
      this.draw();
      return;
    }
    const url = this.api.renderUrl(
      this.sources.layer(),
      win,
      geom.bands >= 3 ? this.sources.bands() : undefined,
    );
    if (url === this.imageKey && this.image) {
      this.draw();
      return;
    }
    const img = new Image();
    img.onload = () => {
      this.image = img;
      this.imageKey = url;
      this.draw();
    };
    img.src = url;
    this.draw(); // keep overlays responsive while the tile loads
  }

  draw(): void {
    if (!this.ctx) return; // test environments without 2d canvas
    const { width, height } = this.canvas;
    this.ctx.fillStyle = "#202229";
    this.ctx.fillRect(0, 0, width, height);
    const geom = this.sources.geometry();
    const view = this.sources.view();
    if (!geom || !view) return;
    if (this.image) {
      const win = cellWindow(geom, view, width, height);
      if (win) {
        const rect = windowScreenRect(geom, view, width, height, win);
        this.ctx.imageSmoothingEnabled = view.unitsPerPx
          < Math.abs(geom.pixel_width);
        this.ctx.drawImage(this.image, rect.dx, rect.dy, rect.dw, rect.dh);
      }
    }
    for (const p of this.sources.templatePoints()) {
      this.cross(view, p.x, p.y, "#ff3860");
    }
    for (const p of this.sources.labelPoints()) {
      this.cross(view, p.x, p.y, "#3273dc", String(p.label));
    }
  }

  private cross(view: View, x: number, y: number, color: string,
                text?: string): void {
    if (!this.ctx) return;
    const { px, py } = crsToScreen(view, this.canvas.width,
                                   this.canvas.height, x, y);
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = 2;
    this.ctx.beginPath();
    this.ctx.moveTo(px - 6, py);
    this.ctx.lineTo(px + 6, py);
    this.ctx.moveTo(px, py - 6);
    this.ctx.lineTo(px, py + 6);
    this.ctx.stroke();
    if (text) {
      this.ctx.fillStyle = color;
      this.ctx.font = "12px sans-serif";
      this.ctx.fillText(text, px + 8, py - 8);
    }
  }
}
