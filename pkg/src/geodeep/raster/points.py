"""GeoJSON point collections (template points and labeled reference points)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InputError


@dataclass(frozen=True)
class PointFeature:
    x: float
    y: float
    properties: dict = field(default_factory=dict)


@dataclass
class PointCollection:
    points: list[PointFeature]
    crs_id: str | None = None  # None: file does not declare a CRS

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def check_crs(self, raster_crs: str) -> None:
        """Consumers call this: points must share the working raster's CRS."""
        if self.crs_id is not None and self.crs_id != raster_crs:
            raise InputError(
                f"point CRS {self.crs_id} does not match raster CRS {raster_crs}"
            )


def _parse_crs(obj: dict) -> str | None:
    # Legacy GeoJSON "crs" member; plain files carry none.
    crs = obj.get("crs")
    if not isinstance(crs, dict):
        return None
    name = crs.get("properties", {}).get("name", "")
    if not isinstance(name, str) or not name:
        return None
    if name.upper().startswith("URN:OGC:DEF:CRS:EPSG"):
        return "EPSG:" + name.rsplit(":", 1)[-1]
    if name.upper() in ("URN:OGC:DEF:CRS:OGC:1.3:CRS84", "OGC:CRS84"):
        return "EPSG:4326"
    if name.upper().startswith("EPSG:"):
        return "EPSG:" + name.split(":", 1)[1]
    return name


def read_points(path: Path | str) -> PointCollection:
    """Read a GeoJSON FeatureCollection of Point geometries.

    Non-point geometries are rejected. Property maps are preserved verbatim
    (including "label", "fold", and "split" when present). An empty
    collection is returned as-is; consumers decide whether that is an error.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"point file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise InputError(f"malformed GeoJSON: {path}: {e}") from e
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise InputError(f"expected a GeoJSON FeatureCollection: {path}")
    features = obj.get("features")
    if not isinstance(features, list):
        raise InputError(f"malformed FeatureCollection (no features list): {path}")

    points: list[PointFeature] = []
    for i, feat in enumerate(features):
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype != "Point":
            raise InputError(f"points only: feature {i} has geometry {gtype!r}")
        coords = geom.get("coordinates")
        if (not isinstance(coords, (list, tuple)) or len(coords) < 2
                or not all(isinstance(c, (int, float)) for c in coords[:2])):
            raise InputError(f"malformed point coordinates in feature {i}: {path}")
        props = feat.get("properties") or {}
        if not isinstance(props, dict):
            raise InputError(f"malformed properties in feature {i}: {path}")
        points.append(PointFeature(x=float(coords[0]), y=float(coords[1]),
                                   properties=props))
    return PointCollection(points=points, crs_id=_parse_crs(obj))
