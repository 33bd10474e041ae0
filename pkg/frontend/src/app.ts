/** Wires the toolbar, canvas viewer, template picker, label editor, and
 * fit panel to the service API.
 *
 * The client is stateless with respect to computation: init() rebuilds the
 * whole view from service state, every mutation is followed by a re-fetch
 * of the points it changed, and every displayed number is taken verbatim
 * from a service response. */

import { ApiClient, type Status } from "./api.js";
import { fitView, pan, screenToCrs, zoom } from "./geometry.js";
import {
  type Mode,
  type ViewState,
  initialState,
  makeLabelPoint,
  toggleTemplatePoint,
} from "./state.js";
import { LayerViewer } from "./viewer.js";

const CANVAS_SIZE = 640;
const POLL_MS = 1000;

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

export class App {
  state: ViewState = initialState();
  viewer: LayerViewer;

  layerSelect: HTMLSelectElement;
  bandInputs: [HTMLInputElement, HTMLInputElement, HTMLInputElement];
  modeButtons: Record<Mode, HTMLButtonElement>;
  canvas: HTMLCanvasElement;
  runButton: HTMLButtonElement;
  thresholdSlider: HTMLInputElement;
  aggregationSelect: HTMLSelectElement;
  scoreList: HTMLUListElement;
  labelInput: HTMLInputElement;
  foldInput: HTMLInputElement;
  splitSelect: HTMLSelectElement;
  labelList: HTMLUListElement;
  algorithmSelect: HTMLSelectElement;
  schemeSelect: HTMLSelectElement;
  knnK: HTMLInputElement;
  rfTrees: HTMLInputElement;
  kfoldK: HTMLInputElement;
  fitButton: HTMLButtonElement;
  predictButton: HTMLButtonElement;
  featuresButton: HTMLButtonElement;
  reportTable: HTMLTableElement;
  statusBar: HTMLDivElement;

  private dragStart: { px: number; py: number } | null = null;
  private dragged = false;

  constructor(root: HTMLElement, public api: ApiClient) {
    this.canvas = el("canvas", {
      id: "map",
      width: String(CANVAS_SIZE),
      height: String(CANVAS_SIZE),
    });

    this.layerSelect = el("select", { id: "layer-select" });
    this.bandInputs = [1, 2, 3].map((n, i) => {
      const input = el("input", {
        id: `band-${n}`,
        type: "number",
        min: "1",
        value: String(this.state.bands[i]),
      });
      return input;
    }) as [HTMLInputElement, HTMLInputElement, HTMLInputElement];
    this.modeButtons = {
      pan: el("button", { id: "mode-pan" }, "pan"),
      template: el("button", { id: "mode-template" }, "template points"),
      label: el("button", { id: "mode-label" }, "label points"),
    };
    const zoomIn = el("button", { id: "zoom-in" }, "+");
    const zoomOut = el("button", { id: "zoom-out" }, "-");

    this.runButton = el("button", { id: "run-similarity" }, "run similarity");
    this.thresholdSlider = el("input", {
      id: "threshold",
      type: "range",
      min: "0",
      max: "1",
      step: "0.01",
      value: "0.8",
    });
    this.aggregationSelect = el("select", { id: "aggregation" });
    for (const v of ["mean", "max"]) {
      this.aggregationSelect.appendChild(el("option", { value: v }, v));
    }
    this.scoreList = el("ul", { id: "scores" });

    this.labelInput = el("input", { id: "label-text", type: "text" });
    this.foldInput = el("input", { id: "label-fold", type: "text" });
    this.splitSelect = el("select", { id: "label-split" });
    for (const v of ["", "train", "test"]) {
      this.splitSelect.appendChild(el("option", { value: v }, v || "(none)"));
    }
    this.labelList = el("ul", { id: "label-list" });

    this.algorithmSelect = el("select", { id: "algorithm" });
    for (const v of ["knn", "random-forest"]) {
      this.algorithmSelect.appendChild(el("option", { value: v }, v));
    }
    this.schemeSelect = el("select", { id: "scheme" });
    for (const v of ["random-kfold", "column-fold", "column-split"]) {
      this.schemeSelect.appendChild(el("option", { value: v }, v));
    }
    this.knnK = el("input", { id: "knn-k", type: "number", value: "5" });
    this.rfTrees = el("input", { id: "rf-trees", type: "number", value: "100" });
    this.kfoldK = el("input", { id: "kfold-k", type: "number", value: "5" });
    this.fitButton = el("button", { id: "fit" }, "fit + validate");
    this.predictButton = el("button", { id: "predict" }, "predict");
    this.featuresButton = el("button", { id: "run-features" }, "extract features");
    this.reportTable = el("table", { id: "report" });
    this.statusBar = el("div", { id: "status-bar" }, "idle");

    const toolbar = el("div", { id: "toolbar" });
    toolbar.append(
      this.layerSelect,
      ...this.bandInputs,
      zoomIn,
      zoomOut,
      ...Object.values(this.modeButtons),
      this.featuresButton,
    );
    const templatePanel = el("div", { id: "template-panel" });
    templatePanel.append(
      el("h3", {}, "similarity"),
      this.aggregationSelect,
      this.thresholdSlider,
      this.runButton,
      this.scoreList,
    );
    const labelPanel = el("div", { id: "label-panel" });
    labelPanel.append(
      el("h3", {}, "labels"),
      this.labelInput,
      this.foldInput,
      this.splitSelect,
      this.labelList,
    );
    const fitPanel = el("div", { id: "fit-panel" });
    fitPanel.append(
      el("h3", {}, "classification"),
      this.algorithmSelect,
      this.knnK,
      this.rfTrees,
      this.schemeSelect,
      this.kfoldK,
      this.fitButton,
      this.predictButton,
      this.reportTable,
    );
    root.append(toolbar, this.canvas, templatePanel, labelPanel, fitPanel,
                this.statusBar);

    this.viewer = new LayerViewer(this.canvas, api, {
      geometry: () => this.activeGeometry(),
      view: () => this.state.view,
      layer: () => this.state.activeLayer,
      bands: () => this.state.bands,
      templatePoints: () => this.state.templatePoints,
      labelPoints: () => this.state.labelPoints,
    });
    this.bindEvents();
  }

  activeGeometry() {
    return this.metaGeometries[this.state.activeLayer] ?? null;
  }

  private metaGeometries: Record<string, import("./api.js").LayerGeometry> = {};

  /** Rebuild the entire view from service state (page-reload safe). */
  async init(): Promise<void> {
    await this.refreshMeta();
    const first = this.state.layers.includes("source")
      ? "source"
      : this.state.layers[0] ?? "";
    this.setActiveLayer(first);
    this.state.templatePoints = await this.api.similarityPoints();
    this.state.labelPoints = await this.api.labels();
    const result = await this.api.similarityResult();
    if (result) this.showScores(result.scores);
    this.renderLabelList();
    const status = await this.api.status();
    this.showStatus(status);
    this.updateControls();
    this.viewer.refresh();
  }

  async refreshMeta(): Promise<void> {
    const meta = await this.api.meta();
    this.state.layers = meta.layers;
    this.metaGeometries = meta.geometries;
    this.layerSelect.innerHTML = "";
    for (const name of meta.layers) {
      this.layerSelect.appendChild(el("option", { value: name }, name));
    }
    this.layerSelect.value = this.state.activeLayer;
  }

  setActiveLayer(name: string): void {
    if (!name) return;
    this.state.activeLayer = name;
    this.layerSelect.value = name;
    if (!this.state.view) {
      const geom = this.metaGeometries[name];
      if (geom) {
        this.state.view = fitView(geom, this.canvas.width, this.canvas.height);
      }
    }
    this.viewer.refresh();
  }

  private bindEvents(): void {
    this.layerSelect.addEventListener("change", () => {
      this.setActiveLayer(this.layerSelect.value);
    });
    for (const input of this.bandInputs) {
      input.addEventListener("change", () => {
        this.state.bands = [
          Number(this.bandInputs[0].value) || 1,
          Number(this.bandInputs[1].value) || 2,
          Number(this.bandInputs[2].value) || 3,
        ];
        this.viewer.refresh();
      });
    }
    for (const [mode, button] of Object.entries(this.modeButtons)) {
      button.addEventListener("click", () => {
        this.state.mode = mode as Mode;
        this.updateControls();
      });
    }
    const byId = (id: string) =>
      this.canvas.parentElement?.querySelector(`#${id}`) as HTMLButtonElement;
    byId("zoom-in")?.addEventListener("click", () => this.zoomBy(1.5));
    byId("zoom-out")?.addEventListener("click", () => this.zoomBy(1 / 1.5));

    this.canvas.addEventListener("mousedown", (e) => {
      const p = this.eventPx(e);
      this.dragStart = p;
      this.dragged = false;
    });
    this.canvas.addEventListener("mousemove", (e) => {
      if (!this.dragStart || !this.state.view) return;
      const p = this.eventPx(e);
      const dx = p.px - this.dragStart.px;
      const dy = p.py - this.dragStart.py;
      if (Math.abs(dx) + Math.abs(dy) > 3) {
        this.dragged = true;
        this.state.view = pan(this.state.view, dx, dy);
        this.dragStart = p;
        this.viewer.refresh();
      }
    });
    this.canvas.addEventListener("mouseup", (e) => {
      const wasDrag = this.dragged;
      this.dragStart = null;
      this.dragged = false;
      if (!wasDrag) this.handleClick(this.eventPx(e));
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.zoomBy(e.deltaY < 0 ? 1.25 : 0.8);
    });

    this.runButton.addEventListener("click", () => {
      void this.runSimilarity();
    });
    this.thresholdSlider.addEventListener("change", () => {
      // Re-request the mask at the new threshold (server recomputes).
      if (this.state.templatePoints.length) void this.runSimilarity();
    });
    this.aggregationSelect.addEventListener("change", () => {
      this.state.aggregation = this.aggregationSelect.value;
    });
    this.fitButton.addEventListener("click", () => {
      void this.runFit();
    });
    this.predictButton.addEventListener("click", () => {
      void this.runPredict();
    });
    this.featuresButton.addEventListener("click", () => {
      void this.runFeatures();
    });
  }

  private eventPx(e: MouseEvent): { px: number; py: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { px: e.clientX - rect.left, py: e.clientY - rect.top };
  }

  private zoomBy(factor: number): void {
    if (!this.state.view) return;
    this.state.view = zoom(this.state.view, factor);
    this.viewer.refresh();
  }

  handleClick(p: { px: number; py: number }): void {
    const view = this.state.view;
    const geom = this.activeGeometry();
    if (!view || !geom) return;
    const crs = screenToCrs(view, this.canvas.width, this.canvas.height,
                            p.px, p.py);
    if (this.state.mode === "template") {
      const tol = 8 * view.unitsPerPx; // clicks near a cross remove it
      this.state.templatePoints = toggleTemplatePoint(
        this.state.templatePoints, crs, tol);
      this.updateControls();
      this.viewer.draw();
    } else if (this.state.mode === "label") {
      const point = makeLabelPoint(crs, this.labelInput.value,
                                   this.foldInput.value,
                                   this.splitSelect.value);
      if (!point) {
        this.statusBar.textContent = "label text required";
        return;
      }
      void this.pushLabels(this.state.labelPoints.concat([point]));
    }
  }

  updateControls(): void {
    this.runButton.disabled =
      this.state.templatePoints.length === 0 || this.state.busy;
    this.fitButton.disabled = this.state.busy;
    this.predictButton.disabled = this.state.busy
      || this.state.lastReport === null;
    this.featuresButton.disabled = this.state.busy;
    for (const [mode, button] of Object.entries(this.modeButtons)) {
      button.classList.toggle("active", this.state.mode === mode);
    }
  }

  private showStatus(s: Status): void {
    this.statusBar.textContent = s.error
      ? `error: ${s.error}`
      : `${s.stage} ${s.done}/${s.total}${s.paused ? " (paused)" : ""}`;
  }

  private showScores(scores: import("./api.js").PointScore[]): void {
    this.state.scores = scores;
    this.scoreList.innerHTML = "";
    for (const s of scores) {
      // The value string comes straight from the service response.
      this.scoreList.appendChild(
        el("li", {}, `(${s.x}, ${s.y}) score ${s.value}`));
    }
  }

  private renderLabelList(): void {
    this.labelList.innerHTML = "";
    for (const p of this.state.labelPoints) {
      const extras = [
        p.fold != null ? `fold ${p.fold}` : "",
        p.split ? `split ${p.split}` : "",
      ].filter(Boolean).join(", ");
      this.labelList.appendChild(
        el("li", {}, `${p.label} @ (${p.x}, ${p.y})${extras ? ` [${extras}]` : ""}`));
    }
  }

  /** Serialize mutating requests: at most one in flight. */
  private async exclusive(fn: () => Promise<void>): Promise<void> {
    if (this.state.busy) return;
    this.state.busy = true;
    this.updateControls();
    try {
      await fn();
    } catch (err) {
      this.statusBar.textContent = `error: ${(err as Error).message}`;
    } finally {
      this.state.busy = false;
      this.updateControls();
    }
  }

  async runSimilarity(): Promise<void> {
    await this.exclusive(async () => {
      const threshold = this.thresholdSlider.value === ""
        ? null
        : Number(this.thresholdSlider.value);
      await this.api.startSimilarity(this.state.templatePoints,
                                     this.state.aggregation, threshold);
      await this.api.pollUntilDone((s) => this.showStatus(s), POLL_MS);
      // Re-fetch everything the job changed; display only server values.
      this.state.templatePoints = await this.api.similarityPoints();
      const result = await this.api.similarityResult();
      if (result) this.showScores(result.scores);
      await this.refreshMeta();
      this.setActiveLayer("similarity");
    });
  }

  async pushLabels(points: import("./api.js").LabelPoint[]): Promise<void> {
    await this.exclusive(async () => {
      await this.api.setLabels(points);
      // Displayed points always mirror what the service registered.
      this.state.labelPoints = await this.api.labels();
      this.renderLabelList();
      this.viewer.draw();
    });
  }

  async runFit(): Promise<void> {
    await this.exclusive(async () => {
      const algorithm = this.algorithmSelect.value;
      const params = algorithm === "knn"
        ? { k: Number(this.knnK.value) || 1 }
        : { n_trees: Number(this.rfTrees.value) || 100 };
      const report = await this.api.fit({
        algorithm,
        params,
        scheme: this.schemeSelect.value,
        kfold_k: Number(this.kfoldK.value) || 5,
      });
      this.state.lastReport = report;
      this.renderReport();
    });
  }

  private renderReport(): void {
    const report = this.state.lastReport;
    this.reportTable.innerHTML = "";
    if (!report) return;
    const head = el("tr");
    for (const title of ["fold", "accuracy", "macro-F1", "test n"]) {
      head.appendChild(el("th", {}, title));
    }
    this.reportTable.appendChild(head);
    for (const fold of report.folds) {
      const row = el("tr", { class: "fold-row" });
      row.appendChild(el("td", {}, fold.name));
      row.appendChild(el("td", {}, String(fold.accuracy)));
      row.appendChild(el("td", {}, String(fold.macro_f1)));
      row.appendChild(el("td", {}, String(fold.test_count)));
      this.reportTable.appendChild(row);
    }
    const agg = el("tr", { class: "aggregate-row" });
    agg.appendChild(el("td", {}, `${report.scheme} mean`));
    agg.appendChild(el("td", {}, `${report.aggregate.accuracy.mean}`));
    agg.appendChild(el("td", {}, `${report.aggregate.macro_f1.mean}`));
    agg.appendChild(el("td", {}, ""));
    this.reportTable.appendChild(agg);
  }

  async runPredict(): Promise<void> {
    await this.exclusive(async () => {
      await this.api.predict();
      await this.refreshMeta();
      this.setActiveLayer("prediction");
    });
  }

  async runFeatures(): Promise<void> {
    await this.exclusive(async () => {
      await this.api.startFeatures();
      await this.api.pollUntilDone((s) => this.showStatus(s), POLL_MS);
      await this.refreshMeta();
      if (this.state.layers.includes("features")) {
        this.setActiveLayer("features");
      }
    });
  }
}
