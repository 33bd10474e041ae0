"""HTTP facade over the pipeline for the browser UI.

One session per process: one source raster / feature raster pair, point
sets mutated only through the endpoints, and at most one long-running job
at a time (409 on conflict). Long jobs run in a background thread and are
observed by polling /status; /meta, /render, and /status never block on
them. Every computation is the same code path the CLI uses, so service
outputs are byte-identical to CLI outputs on the same inputs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .config import DEFAULTS, SEED_CV, SEED_FOREST, _merge_strict
from .errors import GeodeepError, InputError
from .geoml import (
    ForestParams,
    build_dataset,
    cross_validate,
    extract_template,
    fit_knn,
    fit_random_forest,
    predict_knn,
    predict_rf,
    similarity_map,
    threshold_mask,
)
from .pipeline import run_features
from .raster import PointCollection, PointFeature, RasterDataset, open_raster
from .render import band_percentiles, render_composite, render_ramp

MULTIBAND_LAYERS = ("source", "features")


@dataclass
class JobStatus:
    stage: str = "idle"
    done: int = 0
    total: int = 0
    paused: bool = False
    error: str | None = None

    def as_dict(self) -> dict:
        return {"stage": self.stage, "done": self.done, "total": self.total,
                "paused": self.paused, "error": self.error}


@dataclass
class SessionState:
    cfg: dict
    workspace: Path
    layers: dict[str, Path] = field(default_factory=dict)
    template_points: list[dict] = field(default_factory=list)
    label_points: list[dict] = field(default_factory=list)
    similarity_result: dict | None = None
    last_report: dict | None = None
    last_algorithm: dict | None = None
    job: JobStatus = field(default_factory=JobStatus)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._datasets: dict[str, RasterDataset] = {}
        self._percentiles: dict[tuple[str, int], tuple[float, float]] = {}
        self._thread: threading.Thread | None = None

    @classmethod
    def from_config(cls, cfg: dict, workspace: Path) -> "SessionState":
        workspace.mkdir(parents=True, exist_ok=True)
        session = cls(cfg=cfg, workspace=workspace)
        if cfg["input"]["raster"]:
            session.register_layer("source", Path(cfg["input"]["raster"]))
        if cfg["input"]["features"]:
            session.register_layer("features", Path(cfg["input"]["features"]))
        return session

    def register_layer(self, name: str, path: Path) -> None:
        self.layers[name] = path
        self._datasets.pop(name, None)
        self._percentiles = {k: v for k, v in self._percentiles.items()
                             if k[0] != name}

    def dataset(self, name: str) -> RasterDataset:
        if name not in self.layers:
            raise KeyError(name)
        if name not in self._datasets:
            self._datasets[name] = open_raster(self.layers[name])
        return self._datasets[name]

    def stretch(self, name: str, band: int) -> tuple[float, float]:
        key = (name, band)
        if key not in self._percentiles:
            self._percentiles[key] = band_percentiles(self.dataset(name), band)
        return self._percentiles[key]

    def require_features(self) -> RasterDataset:
        if "features" not in self.layers:
            raise HTTPException(409, "no feature raster loaded; "
                                     "run a features job first")
        return self.dataset("features")

    def start_job(self, stage: str, total: int, target) -> None:
        with self._lock:
            if self.job.stage not in ("idle",) and not self._job_finished():
                raise HTTPException(409, f"a {self.job.stage} job is running")
            self.job = JobStatus(stage=stage, total=total)
            self._thread = threading.Thread(target=self._run_job,
                                            args=(target,), daemon=True)
            self._thread.start()

    def _job_finished(self) -> bool:
        return self._thread is None or not self._thread.is_alive()

    def _run_job(self, target) -> None:
        try:
            target()
            self.job.done = max(self.job.done, self.job.total)
        except GeodeepError as e:
            self.job.error = str(e)
            self.job.paused = True  # resumable stop: state kept on disk
        except Exception as e:  # surface anything else to /status
            self.job.error = f"{type(e).__name__}: {e}"

    def wait_for_job(self, timeout: float = 60.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


class PointIn(BaseModel):
    x: float
    y: float


class SimilarityRequest(BaseModel):
    points: list[PointIn]
    aggregation: str = "mean"
    threshold: float | None = None


class LabelPointIn(BaseModel):
    x: float
    y: float
    label: str | int
    fold: int | None = None
    split: str | None = None


class LabelsRequest(BaseModel):
    points: list[LabelPointIn]


class FitRequest(BaseModel):
    algorithm: str = "knn"
    params: dict = {}
    scheme: str = "random-kfold"
    kfold_k: int = 5


class FeaturesRequest(BaseModel):
    encoder: dict = {}


def _geometry(ds: RasterDataset) -> dict:
    gt = ds.geotransform
    return {
        "width": ds.width,
        "height": ds.height,
        "bands": ds.band_count,
        "crs": ds.crs_id,
        "origin_x": gt.origin_x,
        "origin_y": gt.origin_y,
        "pixel_width": gt.pixel_width,
        "pixel_height": gt.pixel_height,
    }


def create_app(session: SessionState,
               ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="geodeep service")
    if ui_dir is not None:
        # Mounted last (see end of function) so API routes win.
        from fastapi.staticfiles import StaticFiles
        app.state.ui_mount = StaticFiles(directory=ui_dir, html=True)

    @app.get("/meta")
    def meta():
        if not session.layers:
            raise HTTPException(409, "no raster loaded")
        out = {"layers": sorted(session.layers)}
        for name in session.layers:
            out[name] = _geometry(session.dataset(name))
        return out

    @app.get("/render")
    def render(layer: str, bands: str = "1,2,3", window: str | None = None):
        if layer not in session.layers:
            raise HTTPException(404, f"unknown layer {layer!r}")
        ds = session.dataset(layer)
        if window:
            try:
                col, row, w, h = (int(v) for v in window.split(","))
            except ValueError:
                raise HTTPException(422, "window must be col,row,w,h")
        else:
            col, row, w, h = 0, 0, ds.width, ds.height
        if not (0 <= col and 0 <= row and w >= 1 and h >= 1
                and col + w <= ds.width and row + h <= ds.height):
            raise HTTPException(422, "window outside raster")
        if layer in MULTIBAND_LAYERS and ds.band_count >= 3:
            try:
                idx = [int(b) - 1 for b in bands.split(",")][:3]
            except ValueError:
                raise HTTPException(422, "bands must be like 1,2,3")
            if any(not (0 <= b < ds.band_count) for b in idx):
                raise HTTPException(422, f"band out of range for {layer}")
            stretches = [session.stretch(layer, b) for b in idx]
            png = render_composite(ds, idx, (col, row, w, h), stretches)
        elif layer == "similarity":
            png = render_ramp(ds, (col, row, w, h), 0.0, 1.0)
        else:
            lo, hi = session.stretch(layer, 0)
            png = render_ramp(ds, (col, row, w, h), lo, hi)
        return Response(content=png, media_type="image/png")

    @app.get("/status")
    def status():
        return session.job.as_dict()

    @app.post("/features", status_code=202)
    def features(req: FeaturesRequest):
        cfg = {k: v for k, v in session.cfg.items()}
        if req.encoder:
            cfg["encoder"] = _merge_strict(DEFAULTS["encoder"],
                                           {**session.cfg["encoder"],
                                            **req.encoder})
        if not cfg["input"]["raster"]:
            raise HTTPException(409, "no source raster configured")
        out_path = session.workspace / "features.tif"

        def progress(done: int, total: int) -> None:
            session.job.done, session.job.total = done, total

        def job():
            result = run_features(cfg, out_path, resume=True,
                                  progress=progress)
            if result.complete:
                session.register_layer("features", out_path)

        session.start_job("features", total=0, target=job)
        return {"job": "features"}

    @app.post("/similarity", status_code=202)
    def similarity(req: SimilarityRequest):
        ds = session.require_features()
        if not req.points:
            raise HTTPException(422, "at least one template point required")
        coords = []
        for p in req.points:
            try:
                ds.pixel_for_point(p.x, p.y)
            except InputError as e:
                raise HTTPException(422, str(e))
            coords.append((p.x, p.y))
        if req.threshold is not None and not (0.0 <= req.threshold <= 1.0):
            raise HTTPException(422, "threshold must be in [0, 1]")
        session.template_points = [{"x": x, "y": y} for x, y in coords]
        session.similarity_result = None
        compression = session.cfg["output"]["compression"]

        def job():
            tset = extract_template(ds, coords, aggregation=req.aggregation)
            sim_path = session.workspace / "similarity.tif"
            sim = similarity_map(ds, tset, sim_path, compression)
            session.register_layer("similarity", sim_path)
            png_path = session.workspace / "similarity.png"
            png_path.write_bytes(render_ramp(sim, (0, 0, sim.width, sim.height),
                                             0.0, 1.0))
            result = {
                "geotiff": str(sim_path),
                "png": str(png_path),
                "points": session.template_points,
                "scores": _point_scores(sim, coords),
            }
            if req.threshold is not None:
                mask_path = session.workspace / "similarity_mask.tif"
                threshold_mask(sim, req.threshold, mask_path, compression)
                session.register_layer("mask", mask_path)
                result["mask"] = str(mask_path)
            session.similarity_result = result

        session.start_job("similarity", total=1, target=job)
        return {"job": "similarity"}

    @app.get("/similarity/result")
    def similarity_result():
        if session.similarity_result is None:
            raise HTTPException(404, "no similarity result yet")
        return session.similarity_result

    @app.get("/similarity/points")
    def similarity_points():
        return {"points": session.template_points}

    @app.post("/labels")
    def labels(req: LabelsRequest):
        if "features" in session.layers:
            ds = session.dataset("features")
            for p in req.points:
                try:
                    ds.pixel_for_point(p.x, p.y)
                except InputError as e:
                    raise HTTPException(422, str(e))
        session.label_points = [p.model_dump() for p in req.points]
        return {"count": len(session.label_points)}

    @app.get("/labels")
    def get_labels():
        return {"points": session.label_points}

    @app.delete("/labels")
    def clear_labels():
        session.label_points = []
        return {"count": 0}

    @app.post("/fit")
    def fit(req: FitRequest):
        if not session.label_points:
            raise HTTPException(409, "no label points registered")
        ds = session.require_features()
        data = _label_dataset(ds, session.label_points)
        seed = int(session.cfg["seed"])
        spec = dict(req.params)
        spec["algorithm"] = req.algorithm
        if req.algorithm == "random-forest":
            spec.setdefault("seed", seed + SEED_FOREST)
        try:
            report = cross_validate(data, req.scheme, spec, k=req.kfold_k,
                                    seed=seed + SEED_CV)
        except (GeodeepError, ValueError) as e:
            raise HTTPException(422, str(e))
        session.last_report = report.to_json_dict()
        session.last_algorithm = spec
        return session.last_report

    @app.post("/predict")
    def predict():
        if session.last_algorithm is None:
            raise HTTPException(409, "fit a model before predicting")
        ds = session.require_features()
        data = _label_dataset(ds, session.label_points)
        spec = session.last_algorithm
        out_path = session.workspace / "prediction.tif"
        compression = session.cfg["output"]["compression"]
        if spec["algorithm"] == "knn":
            model = fit_knn(data.x, data.y, data.labels,
                            k=int(spec.get("k", 5)),
                            metric=spec.get("metric", "euclidean"))
            predict_knn(model, ds, out_path, compression)
        else:
            model = fit_random_forest(data.x, data.y, data.labels,
                                      _forest_params(spec))
            predict_rf(model, ds, out_path, compression)
        session.register_layer("prediction", out_path)
        return {"geotiff": str(out_path), "labels": data.labels}

    if ui_dir is not None:
        app.mount("/", app.state.ui_mount, name="ui")
    return app


def _forest_params(spec: dict) -> ForestParams:
    return ForestParams(
        n_trees=int(spec.get("n_trees", 100)),
        max_depth=spec.get("max_depth"),
        min_samples_leaf=int(spec.get("min_samples_leaf", 1)),
        features_per_split=spec.get("features_per_split"),
        bootstrap=bool(spec.get("bootstrap", True)),
        seed=int(spec.get("seed", 0)),
    )


def _label_dataset(ds: RasterDataset, points: list[dict]):
    features = []
    for p in points:
        props = {"label": p["label"]}
        if p.get("fold") is not None:
            props["fold"] = p["fold"]
        if p.get("split") is not None:
            props["split"] = p["split"]
        features.append(PointFeature(x=p["x"], y=p["y"], properties=props))
    try:
        return build_dataset(ds, PointCollection(points=features))
    except InputError as e:
        raise HTTPException(422, str(e))


def _point_scores(sim: RasterDataset, coords) -> list[dict]:
    from .raster import read_window

    out = []
    for x, y in coords:
        col, row = sim.pixel_for_point(x, y)
        value = float(read_window(sim, (col, row, 1, 1)).data[0, 0, 0])
        out.append({"x": x, "y": y, "value": value})
    return out
