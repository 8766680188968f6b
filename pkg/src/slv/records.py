"""JSONL record formats: scenes, supervision, detections, ground truth.

One UTF-8 JSON object per line. Coordinates are written with 2 decimal
places, every other number with up to 6 significant digits, which keeps
repeated runs byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, TextIO

import numpy as np

from .errors import RecordError
from .evaluation import Detection, GroundTruth
from .geometry import Box, ImageDims, clip
from .voting import Supervision, SupervisionEntry


def fmt_coord(v: float) -> float:
    return float(f"{float(v):.2f}") + 0.0  # +0.0 folds -0.0 into 0.0


def fmt_num(v: float) -> float:
    return float(f"{float(v):.6g}") + 0.0


def dump_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, parsed_object) pairs; blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise RecordError(f"{path}:{line_no}: expected a JSON object")
            yield line_no, obj


def write_jsonl(objs: Iterable[dict[str, Any]], out: TextIO) -> None:
    for obj in objs:
        out.write(dump_line(obj) + "\n")


# ---------------------------------------------------------------------------
# Scenes

@dataclass
class Scene:
    """One image's bundle: dims, label vector, proposals, and scores.

    Ground truth and the training-side matrices are optional; loss
    reporting uses whichever of them a record carries.
    """

    image_id: str
    dims: ImageDims
    label: np.ndarray
    proposals: list[Box]
    avg_scores: np.ndarray
    gt: list[tuple[int, Box]] = field(default_factory=list)
    x_cls: np.ndarray | None = None
    x_det: np.ndarray | None = None
    phi_refine: list[np.ndarray] | None = None
    phi_slv: np.ndarray | None = None
    t_slv: np.ndarray | None = None
    feature_map: np.ndarray | None = None

    @property
    def num_classes(self) -> int:
        return int(self.label.shape[0])


def _as_box(raw: Any, where: str) -> Box:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
        raise RecordError(f"{where}: box must be [x_min,y_min,x_max,y_max]")
    try:
        return Box(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise RecordError(f"{where}: bad box {raw!r}") from exc


def _matrix(obj: dict, key: str, shape: tuple[int, ...], where: str) -> np.ndarray | None:
    if key not in obj or obj[key] is None:
        return None
    try:
        arr = np.asarray(obj[key], dtype=np.float64)
    except ValueError as exc:
        raise RecordError(f"{where}: field '{key}' is not numeric") from exc
    if arr.shape != shape:
        raise RecordError(f"{where}: field '{key}' has shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise RecordError(f"{where}: field '{key}' contains non-finite values")
    return arr


def scene_from_obj(obj: dict[str, Any], where: str = "scene") -> Scene:
    """Validate and convert one scene record. Boxes are clipped to the image."""
    try:
        image_id = str(obj["image_id"])
        dims = ImageDims(int(obj["width"]), int(obj["height"]))
        label = np.asarray(obj["label"], dtype=np.int64)
        raw_props = obj["proposals"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(f"{where}: missing or malformed required field ({exc})") from exc
    if dims.width < 1 or dims.height < 1:
        raise RecordError(f"{where}: bad dims {dims}")
    if label.ndim != 1 or not np.isin(label, (0, 1)).all():
        raise RecordError(f"{where}: label must be a vector of 0/1")
    proposals = [clip(_as_box(b, where), dims) for b in raw_props]
    c, r = label.shape[0], len(proposals)
    avg_scores = _matrix(obj, "avg_scores", (c, r), where)
    if avg_scores is None:
        raise RecordError(f"{where}: missing or malformed required field ('avg_scores')")
    gt: list[tuple[int, Box]] = []
    for entry in obj.get("gt") or []:
        try:
            cls = int(entry["class"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{where}: bad gt entry {entry!r}") from exc
        if not 0 <= cls < c:
            raise RecordError(f"{where}: gt class {cls} out of range")
        gt.append((cls, clip(_as_box(entry["box"], where), dims)))
    phi_refine = None
    if obj.get("phi_refine") is not None:
        phi_refine = [
            _matrix({"m": m}, "m", (c + 1, r), f"{where}.phi_refine[{k}]")
            for k, m in enumerate(obj["phi_refine"])
        ]
    feature_map = None
    if obj.get("feature_map") is not None:
        try:
            feature_map = np.asarray(obj["feature_map"], dtype=np.float64)
        except ValueError as exc:
            raise RecordError(f"{where}: feature_map is not numeric") from exc
        if feature_map.ndim != 3:
            raise RecordError(f"{where}: feature_map must be h x w x d")
    return Scene(
        image_id=image_id,
        dims=dims,
        label=label,
        proposals=proposals,
        avg_scores=avg_scores,
        gt=gt,
        x_cls=_matrix(obj, "x_cls", (c, r), where),
        x_det=_matrix(obj, "x_det", (c, r), where),
        phi_refine=phi_refine,
        phi_slv=_matrix(obj, "phi_slv", (c + 1, r), where),
        t_slv=_matrix(obj, "t_slv", (4 * (c + 1), r), where),
        feature_map=feature_map,
    )


def scene_to_obj(scene: Scene) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "image_id": scene.image_id,
        "width": scene.dims.width,
        "height": scene.dims.height,
        "label": [int(v) for v in scene.label],
        "proposals": [[fmt_coord(v) for v in b.as_tuple()] for b in scene.proposals],
        "avg_scores": [[fmt_num(v) for v in row] for row in scene.avg_scores],
    }
    if scene.gt:
        obj["gt"] = [
            {"class": c, "box": [fmt_coord(v) for v in b.as_tuple()]} for c, b in scene.gt
        ]
    for key, mat in (("x_cls", scene.x_cls), ("x_det", scene.x_det),
                     ("phi_slv", scene.phi_slv), ("t_slv", scene.t_slv)):
        if mat is not None:
            obj[key] = [[fmt_num(v) for v in row] for row in mat]
    if scene.phi_refine is not None:
        obj["phi_refine"] = [
            [[fmt_num(v) for v in row] for row in m] for m in scene.phi_refine
        ]
    if scene.feature_map is not None:
        obj["feature_map"] = [
            [[fmt_num(v) for v in px] for px in row] for row in scene.feature_map
        ]
    return obj


def load_scenes(path: str | Path) -> list[Scene]:
    return [scene_from_obj(obj, f"{path}:{n}") for n, obj in iter_jsonl(path)]


# ---------------------------------------------------------------------------
# Supervision / detections / ground truth

def supervision_to_obj(sup: Supervision) -> dict[str, Any]:
    entries = []
    for e in sup.entries:
        rec: dict[str, Any] = {
            "class": e.class_id,
            "boxes": [[fmt_coord(v) for v in b.as_tuple()] for b in e.boxes],
        }
        if e.scores is not None:
            rec["scores"] = [fmt_num(s) for s in e.scores]
        entries.append(rec)
    return {"image_id": sup.image_id, "entries": entries}


def supervision_from_obj(obj: dict[str, Any], where: str = "supervision") -> Supervision:
    try:
        image_id = str(obj["image_id"])
        raw_entries = obj["entries"]
    except KeyError as exc:
        raise RecordError(f"{where}: missing field {exc}") from exc
    entries = []
    for e in raw_entries:
        try:
            cls = int(e["class"])
            boxes = [_as_box(b, where) for b in e["boxes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{where}: bad entry {e!r}") from exc
        scores = None
        if e.get("scores") is not None:
            scores = [float(s) for s in e["scores"]]
            if len(scores) != len(boxes):
                raise RecordError(f"{where}: scores do not match boxes")
        entries.append(SupervisionEntry(cls, boxes, scores))
    return Supervision(image_id, entries)


def load_detections(path: str | Path) -> list[Detection]:
    """Read detection records. Boxes without scores default to score 1.0,
    so supervision files can be evaluated directly."""
    dets: list[Detection] = []
    for n, obj in iter_jsonl(path):
        sup = supervision_from_obj(obj, f"{path}:{n}")
        for e in sup.entries:
            scores = e.scores if e.scores is not None else [1.0] * len(e.boxes)
            for b, s in zip(e.boxes, scores):
                dets.append(Detection(sup.image_id, e.class_id, b, s))
    return dets


def load_ground_truth(path: str | Path) -> list[GroundTruth]:
    gts: list[GroundTruth] = []
    for n, obj in iter_jsonl(path):
        sup = supervision_from_obj(obj, f"{path}:{n}")
        for e in sup.entries:
            for b in e.boxes:
                gts.append(GroundTruth(sup.image_id, e.class_id, b))
    return gts


def ground_truth_to_objs(gts: Iterable[GroundTruth]) -> list[dict[str, Any]]:
    by_image: dict[str, dict[int, list[Box]]] = {}
    order: list[str] = []
    for g in gts:
        if g.image_id not in by_image:
            by_image[g.image_id] = {}
            order.append(g.image_id)
        by_image[g.image_id].setdefault(g.class_id, []).append(g.box)
    out = []
    for image_id in order:
        entries = [
            {"class": c, "boxes": [[fmt_coord(v) for v in b.as_tuple()] for b in boxes]}
            for c, boxes in sorted(by_image[image_id].items())
        ]
        out.append({"image_id": image_id, "entries": entries})
    return out


def load_class_names(path: str | Path) -> list[str]:
    try:
        names = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RecordError(f"{path}: cannot read class vocabulary ({exc})") from exc
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise RecordError(f"{path}: class vocabulary must be a JSON array of names")
    return names
