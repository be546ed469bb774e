"""Scene files, depth rasters, solution files and the canonical JSON encoding.

Scene JSON layout is documented in docs/schema.md. Raster files are
``b"DTO1"`` followed by little-endian u32 width, u32 height and width*height
little-endian float32 values, row-major from the top-left pixel.
"""
from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, ImageSize
from .depthfit import DepthRaster, sample_pairs_from_raster, sample_representative_depth
from .errors import DomainError, DtoError, ParseError, ValidationError
from .metrics import GroundTruthAnnotation
from .priors import AgeGroup, GaussianComponent, Gender, HeightPrior, fit_single_gaussian, prior_for
from .solver import DtoSolution, PersonObservation

SCENE_SCHEMA = "dto-scene/1"
SOLUTION_SCHEMA = "dto-solution/1"
MANIFEST_SCHEMA = "dto-manifest/1"
RASTER_MAGIC = b"DTO1"
_RASTER_HEADER = struct.Struct("<4sII")


@dataclass(eq=False)
class Scene:
    image: ImageSize
    camera: CameraIntrinsics
    persons: list[PersonObservation]
    name: str = "scene"
    camera_spec: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)       # person id -> GroundTruthAnnotation
    vertices: dict = field(default_factory=dict)          # person id -> (N, 4) [u, v, mesh_depth, visible]
    explicit_priors: frozenset = frozenset()
    raster: DepthRaster | None = None
    raster_path: str | None = None
    scale_estimate: float | None = None

    def person(self, pid: str) -> PersonObservation:
        for p in self.persons:
            if p.id == pid:
                return p
        raise KeyError(pid)


def dumps_canonical(obj) -> str:
    """Sorted keys, shortest round-trip floats, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def read_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


# -- rasters -----------------------------------------------------------------

def write_raster(path, raster: DepthRaster) -> None:
    h, w = raster.values.shape
    body = np.ascontiguousarray(raster.values, dtype="<f4").tobytes()
    Path(path).write_bytes(_RASTER_HEADER.pack(RASTER_MAGIC, w, h) + body)


def read_raster(path) -> DepthRaster:
    data = Path(path).read_bytes()
    if len(data) < _RASTER_HEADER.size:
        raise ValidationError(f"{path}: raster file shorter than its header")
    magic, w, h = _RASTER_HEADER.unpack_from(data)
    if magic != RASTER_MAGIC:
        raise ValidationError(f"{path}: bad raster magic {magic!r}")
    expected = _RASTER_HEADER.size + 4 * w * h
    if len(data) != expected:
        raise ValidationError(f"{path}: raster length {len(data)} contradicts header ({expected} expected)")
    values = np.frombuffer(data, dtype="<f4", offset=_RASTER_HEADER.size).reshape(h, w)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: raster contains non-finite values")
    return DepthRaster(ImageSize(w, h), values.astype(np.float64))


# -- prior tables ------------------------------------------------------------

def _components(rows, where) -> list[GaussianComponent]:
    try:
        return [GaussianComponent(float(r["mean_m"]), float(r["std_m"]), float(r["weight"])) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: each component needs mean_m, std_m, weight ({exc})") from exc


def load_prior_table(path) -> dict:
    """A bare component list applies to everyone; an object maps keys such as
    "Kid" or "Adult/Female" to component lists."""
    raw = read_json(path)
    try:
        if isinstance(raw, list):
            return {"*": fit_single_gaussian(_components(raw, path))}
        if isinstance(raw, dict):
            return {key: fit_single_gaussian(_components(rows, f"{path}[{key}]")) for key, rows in raw.items()}
    except DomainError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    raise ValidationError(f"{path}: prior table must be a list or an object")


# -- scenes ------------------------------------------------------------------

def _float(rec, key, where, positive=False):
    if key not in rec:
        raise ValidationError(f"{where}.{key}: missing")
    try:
        val = float(rec[key])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}.{key}: not a number") from exc
    if not math.isfinite(val) or (positive and val <= 0.0):
        raise ValidationError(f"{where}.{key}: must be {'positive' if positive else 'finite'}, got {val}")
    return val


def _camera_from_spec(spec: dict, image: ImageSize) -> CameraIntrinsics:
    if not isinstance(spec, dict):
        raise ValidationError("camera: must be an object")
    has_fov, has_focal = "fov_deg" in spec, "focal_px" in spec
    if has_fov == has_focal:
        raise ValidationError("camera: exactly one of fov_deg or focal_px is required")
    pp = spec.get("principal_point")
    if pp is not None and (len(pp) != 2):
        raise ValidationError("camera.principal_point: expected [cx, cy]")
    try:
        if has_fov:
            return CameraIntrinsics.from_fov(math.radians(_float(spec, "fov_deg", "camera")), image, pp)
        return CameraIntrinsics.from_focal(_float(spec, "focal_px", "camera", positive=True), image, pp)
    except DomainError as exc:
        raise ValidationError(f"camera: {exc}") from exc


def _annotation(rec, where) -> GroundTruthAnnotation:
    ann = GroundTruthAnnotation(
        depth_layer=None if rec.get("depth_layer") is None else int(rec["depth_layer"]),
        gt_depth=None if rec.get("gt_depth") is None else float(rec["gt_depth"]),
        gt_height=None if rec.get("gt_height") is None else float(rec["gt_height"]),
        gt_fov=None if rec.get("gt_fov") is None else float(rec["gt_fov"]),
    )
    if all(v is None for v in (ann.depth_layer, ann.gt_depth, ann.gt_height, ann.gt_fov)):
        raise ValidationError(f"{where}: annotation has no fields")
    return ann


def scene_from_dict(raw: dict, base_dir=".", name: str = "scene", prior_table=None) -> Scene:
    if not isinstance(raw, dict):
        raise ValidationError("scene: top level must be an object")
    if raw.get("schema_version") != SCENE_SCHEMA:
        raise ValidationError(f"schema_version: expected {SCENE_SCHEMA!r}, got {raw.get('schema_version')!r}")
    img = raw.get("image") or {}
    try:
        image = ImageSize(int(img["width"]), int(img["height"]))
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ValidationError(f"image: needs positive integer width and height ({exc})") from exc
    camera_spec = raw.get("camera")
    camera = _camera_from_spec(camera_spec, image)

    raster, raster_path = None, raw.get("depth_raster_path")
    if raster_path is not None:
        full = Path(base_dir) / raster_path
        if not full.exists():
            raise ValidationError(f"depth_raster_path: {raster_path} does not exist")
        raster = read_raster(full)
        if raster.size != image:
            raise ValidationError(
                f"raster dims {raster.size.width}x{raster.size.height} do not match image "
                f"{image.width}x{image.height}")

    records = raw.get("persons")
    if not isinstance(records, list) or not records:
        raise ValidationError("persons: need a non-empty list")
    persons, annotations, vertices, explicit = [], {}, {}, set()
    seen = set()
    for k, rec in enumerate(records):
        where = f"persons[{k}]"
        pid = str(rec.get("id", ""))
        if not pid:
            raise ValidationError(f"{where}.id: missing")
        if pid in seen:
            raise ValidationError(f"duplicate id {pid!r}")
        seen.add(pid)
        try:
            age_group = AgeGroup(rec.get("age_group", "Adult"))
            gender = Gender(rec.get("gender", "Unknown"))
        except ValueError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        h0 = _float(rec, "initial_height", where, positive=True)
        tr = rec.get("translation")
        if not isinstance(tr, list) or len(tr) != 3:
            raise ValidationError(f"{where}.translation: expected [x, y, z]")
        x, y, z0 = (float(v) for v in tr)
        if not z0 > 0.0:
            raise ValidationError(f"{where}.translation: depth must be positive")

        if "vertices" in rec:
            if raster is None:
                raise ValidationError(f"{where}.vertices: raw evidence needs depth_raster_path")
            vert = np.asarray(rec["vertices"], dtype=float).reshape(-1, 4)
            try:
                d = sample_representative_depth(raster, vert[:, :2], vert[:, 3] != 0)
            except DtoError as exc:
                raise ValidationError(f"{where}.vertices: {exc}") from exc
            pairs = sample_pairs_from_raster(raster, vert[:, :2], vert[:, 2], vert[:, 3] != 0)
            samples = np.array([[p.mesh_depth, p.rel_depth] for p in pairs]).reshape(-1, 2)
            vertices[pid] = vert
        else:
            d = _float(rec, "rep_rel_depth", where)
            samples = np.asarray(rec.get("samples", []), dtype=float).reshape(-1, 2)
            if np.any(samples[:, 0] <= 0.0) or not np.all(np.isfinite(samples)):
                raise ValidationError(f"{where}.samples: mesh depths must be positive and values finite")

        try:
            if "prior" in rec:
                prior = HeightPrior(_float(rec["prior"], "mean_m", f"{where}.prior"),
                                    _float(rec["prior"], "std_m", f"{where}.prior"))
                explicit.add(pid)
            else:
                prior = prior_for(age_group, gender, h0, prior_table)
        except DomainError as exc:
            raise ValidationError(f"{where}.prior: {exc}") from exc
        persons.append(PersonObservation(pid, h0, z0, d, prior, samples, age_group, gender, x, y))
        if rec.get("annotation") is not None:
            annotations[pid] = _annotation(rec["annotation"], f"{where}.annotation")

    scale_estimate = raw.get("scale_estimate")
    return Scene(
        image=image, camera=camera, persons=persons, name=raw.get("name", name),
        camera_spec=dict(camera_spec), annotations=annotations, vertices=vertices,
        explicit_priors=frozenset(explicit), raster=raster, raster_path=raster_path,
        scale_estimate=None if scale_estimate is None else float(scale_estimate),
    )


def load_scene(path, prior_table=None) -> Scene:
    path = Path(path)
    raw = read_json(path)
    return scene_from_dict(raw, base_dir=path.parent, name=path.stem, prior_table=prior_table)


def _annotation_dict(ann: GroundTruthAnnotation) -> dict:
    out = {}
    for key in ("depth_layer", "gt_depth", "gt_height", "gt_fov"):
        val = getattr(ann, key)
        if val is not None:
            out[key] = val
    return out


def scene_to_dict(scene: Scene) -> dict:
    records = []
    for p in scene.persons:
        rec = {
            "id": p.id,
            "age_group": p.age_group.value,
            "gender": p.gender.value,
            "initial_height": p.initial_height,
            "translation": [p.root_x, p.root_y, p.initial_depth],
        }
        if p.id in scene.vertices:
            rec["vertices"] = scene.vertices[p.id].tolist()
        else:
            rec["rep_rel_depth"] = p.rep_rel_depth
            rec["samples"] = p.samples.tolist()
        if p.id in scene.explicit_priors:
            rec["prior"] = {"mean_m": p.prior.mean, "std_m": p.prior.std_dev}
        if p.id in scene.annotations:
            rec["annotation"] = _annotation_dict(scene.annotations[p.id])
        records.append(rec)
    out = {
        "schema_version": SCENE_SCHEMA,
        "kind": "scene",
        "name": scene.name,
        "image": {"width": scene.image.width, "height": scene.image.height},
        "camera": scene.camera_spec or {"focal_px": scene.camera.focal_length},
        "persons": records,
    }
    if scene.raster_path is not None:
        out["depth_raster_path"] = scene.raster_path
    if scene.scale_estimate is not None:
        out["scale_estimate"] = scene.scale_estimate
    return out


def save_scene(path, scene: Scene) -> None:
    write_json(path, scene_to_dict(scene))


# -- solutions ---------------------------------------------------------------

def solution_to_dict(solution: DtoSolution, scene_name: str) -> dict:
    out = solution.to_dict()
    out.update({"schema_version": SOLUTION_SCHEMA, "kind": "solution", "scene": scene_name})
    return out


def save_solution(path, solution: DtoSolution, scene_name: str) -> None:
    write_json(path, solution_to_dict(solution, scene_name))


# -- predictions and annotations for evaluation --------------------------------

def predictions_from_file(path) -> dict:
    """Map scene name -> {person id: (depth, height)} from a solution or a scene file.

    A scene file yields its initial (uncorrected) estimates.
    """
    raw = read_json(path)
    kind = raw.get("kind") if isinstance(raw, dict) else None
    if kind == "solution":
        return {raw["scene"]: {p["id"]: (float(p["corrected_depth"]), float(p["corrected_height"]))
                               for p in raw["persons"]}}
    if kind == "scene":
        return {raw.get("name", Path(path).stem): {
            p["id"]: (float(p["translation"][2]), float(p["initial_height"])) for p in raw["persons"]}}
    raise ValidationError(f"{path}: not a solution or scene file")


def load_predictions(path) -> dict:
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    preds = {}
    for f in files:
        raw = read_json(f)
        if isinstance(raw, dict) and raw.get("kind") in ("solution", "scene"):
            preds.update(predictions_from_file(f))
    return preds


def load_annotations(path) -> dict:
    """Map scene name -> list of (person id, age group, GroundTruthAnnotation).

    Accepts a generator manifest, a single scene file, or a directory of scene files.
    """
    path = Path(path)
    if path.is_dir():
        out = {}
        for f in sorted(path.glob("*.json")):
            raw = read_json(f)
            if isinstance(raw, dict) and raw.get("kind") == "scene":
                out.update(load_annotations(f))
        return out
    raw = read_json(path)
    if raw.get("kind") == "manifest":
        return {
            entry["scene"]: [(p["id"], AgeGroup(p["age_group"]), _annotation(p, f"{entry['scene']}.{p['id']}"))
                             for p in entry["persons"]]
            for entry in raw["scenes"]
        }
    if raw.get("kind") == "scene":
        name = raw.get("name", path.stem)
        return {name: [(p["id"], AgeGroup(p.get("age_group", "Adult")), _annotation(p["annotation"], p["id"]))
                       for p in raw["persons"] if p.get("annotation")]}
    raise ValidationError(f"{path}: not a manifest or scene file")


def scene_files(directory) -> list[Path]:
    """Scene JSON files in a directory, sorted by name."""
    out = []
    for f in sorted(Path(directory).glob("*.json")):
        try:
            raw = json.loads(f.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError):
            out.append(f)  # surfaces as a parse error downstream
            continue
        if isinstance(raw, dict) and raw.get("kind", "scene") == "scene" and "persons" in raw:
            out.append(f)
    return out


def relpath(path, start) -> str:
    return os.path.relpath(path, start).replace(os.sep, "/")
