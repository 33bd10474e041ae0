/** Client view state. Computation state lives on the server; everything
 * here can be rebuilt by re-fetching, so a page reload reproduces the same
 * view. */

import type { CvReport, LabelPoint, PointScore, XY } from "./api.js";
import type { View } from "./geometry.js";

export type Mode = "pan" | "template" | "label";

export interface ViewState {
  activeLayer: string;
  layers: string[];
  bands: [number, number, number];
  view: View | null;
  mode: Mode;
  templatePoints: XY[];
  labelPoints: LabelPoint[];
  currentLabel: string;
  currentFold: string;
  currentSplit: string;
  aggregation: string;
  threshold: number | null;
  scores: PointScore[];
  lastReport: CvReport | null;
  busy: boolean; // one in-flight mutating request at a time
}

export function initialState(): ViewState {
  return {
    activeLayer: "",
    layers: [],
    bands: [1, 2, 3],
    view: null,
    mode: "pan",
    templatePoints: [],
    labelPoints: [],
    currentLabel: "",
    currentFold: "",
    currentSplit: "",
    aggregation: "mean",
    threshold: null,
    scores: [],
    lastReport: null,
    busy: false,
  };
}

/** Add a template point, or remove an existing one when the click lands
 * within `tol` CRS units of it. Returns a new list. */
export function toggleTemplatePoint(
  points: XY[],
  pt: XY,
  tol: number,
): XY[] {
  const hit = points.findIndex(
    (p) => Math.hypot(p.x - pt.x, p.y - pt.y) <= tol,
  );
  if (hit >= 0) {
    return points.slice(0, hit).concat(points.slice(hit + 1));
  }
  return points.concat([pt]);
}

/** Build a label point from the editor fields; null when the label text is
 * missing (the point is rejected client-side). */
export function makeLabelPoint(
  pt: XY,
  label: string,
  fold: string,
  split: string,
): LabelPoint | null {
  const text = label.trim();
  if (!text) return null;
  const out: LabelPoint = { x: pt.x, y: pt.y, label: text };
  if (fold.trim() !== "") {
    const parsed = Number(fold);
    if (!Number.isInteger(parsed)) return null;
    out.fold = parsed;
  }
  if (split === "train" || split === "test") out.split = split;
  return out;
}
