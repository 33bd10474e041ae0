/** Screen <-> CRS conversions derived from /meta layer geometry.
 *
 * The view is kept in CRS units (center plus units-per-screen-pixel) so
 * panning and zooming stay consistent when switching between layers with
 * different cell sizes. Click coordinates are sent to the service in CRS
 * units, so the server applies the same point-to-cell floor rule as
 * file-based points. */

import type { LayerGeometry } from "./api.js";

export interface View {
  centerX: number;
  centerY: number;
  unitsPerPx: number; // CRS units per screen pixel, > 0
}

export interface CellWindow {
  col: number;
  row: number;
  w: number;
  h: number;
}

export function layerExtent(geom: LayerGeometry) {
  const x1 = geom.origin_x + geom.width * geom.pixel_width;
  const yBottom = geom.origin_y + geom.height * geom.pixel_height;
  return {
    minX: Math.min(geom.origin_x, x1),
    maxX: Math.max(geom.origin_x, x1),
    minY: Math.min(geom.origin_y, yBottom),
    maxY: Math.max(geom.origin_y, yBottom),
  };
}

export function fitView(
  geom: LayerGeometry,
  canvasW: number,
  canvasH: number,
): View {
  const ext = layerExtent(geom);
  return {
    centerX: (ext.minX + ext.maxX) / 2,
    centerY: (ext.minY + ext.maxY) / 2,
    unitsPerPx: Math.max(
      (ext.maxX - ext.minX) / canvasW,
      (ext.maxY - ext.minY) / canvasH,
    ),
  };
}

export function screenToCrs(
  view: View,
  canvasW: number,
  canvasH: number,
  px: number,
  py: number,
): { x: number; y: number } {
  return {
    x: view.centerX + (px - canvasW / 2) * view.unitsPerPx,
    y: view.centerY - (py - canvasH / 2) * view.unitsPerPx,
  };
}

export function crsToScreen(
  view: View,
  canvasW: number,
  canvasH: number,
  x: number,
  y: number,
): { px: number; py: number } {
  return {
    px: canvasW / 2 + (x - view.centerX) / view.unitsPerPx,
    py: canvasH / 2 - (y - view.centerY) / view.unitsPerPx,
  };
}

export function pan(view: View, dxPx: number, dyPx: number): View {
  return {
    centerX: view.centerX - dxPx * view.unitsPerPx,
    centerY: view.centerY + dyPx * view.unitsPerPx,
    unitsPerPx: view.unitsPerPx,
  };
}

export function zoom(view: View, factor: number): View {
  return { ...view, unitsPerPx: view.unitsPerPx / factor };
}

/** Layer cell window covering the visible CRS box, clamped to the layer
 * extent; null when the view and layer do not intersect. */
export function cellWindow(
  geom: LayerGeometry,
  view: View,
  canvasW: number,
  canvasH: number,
): CellWindow | null {
  const halfW = (canvasW / 2) * view.unitsPerPx;
  const halfH = (canvasH / 2) * view.unitsPerPx;
  const x0 = view.centerX - halfW;
  const x1 = view.centerX + halfW;
  const yTop = view.centerY + halfH;
  const yBottom = view.centerY - halfH;

  let col0 = Math.floor((x0 - geom.origin_x) / geom.pixel_width);
  let col1 = Math.ceil((x1 - geom.origin_x) / geom.pixel_width);
  let row0 = Math.floor((yTop - geom.origin_y) / geom.pixel_height);
  let row1 = Math.ceil((yBottom - geom.origin_y) / geom.pixel_height);
  col0 = Math.max(0, Math.min(col0, geom.width));
  col1 = Math.max(0, Math.min(col1, geom.width));
  row0 = Math.max(0, Math.min(row0, geom.height));
  row1 = Math.max(0, Math.min(row1, geom.height));
  if (col1 <= col0 || row1 <= row0) return null;
  return { col: col0, row: row0, w: col1 - col0, h: row1 - row0 };
}

/** Canvas rectangle (in screen pixels) where a cell window draws. */
export function windowScreenRect(
  geom: LayerGeometry,
  view: View,
  canvasW: number,
  canvasH: number,
  win: CellWindow,
) {
  const xLeft = geom.origin_x + win.col * geom.pixel_width;
  const yTop = geom.origin_y + win.row * geom.pixel_height;
  const topLeft = crsToScreen(view, canvasW, canvasH, xLeft, yTop);
  return {
    dx: topLeft.px,
    dy: topLeft.py,
    dw: (win.w * geom.pixel_width) / view.unitsPerPx,
    dh: (win.h * Math.abs(geom.pixel_height)) / view.unitsPerPx,
  };
}
