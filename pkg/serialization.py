"""
JSON file kinds: grammar skeleton/bundle, training scenes, catalog, parse
graph, layout, camera spec and manifest.

Every written document carries a `kind` field. Floats go through Python's
shortest round-trip repr, keys keep insertion order and no timestamps are
written, so identical inputs give byte-identical files.
"""

import hashlib
import json
import os
from dataclasses import asdict
from typing import Any, List, Optional, Tuple

from constants import LAYOUT_VERSION
from data_models import (
    AttributeConfig, CameraSpec, CatalogEntry, ChainTrace, EnergyBreakdown, Light, Material,
    ModelCatalog, ObjectInstance, ParseGraph, ParseTree, PlacedObject, Room, RoomShell,
    SceneLayout, TrainingObject, TrainingScene,
)
from errors import GrammarError, SceneSynthError, ValidationError
from grammar import SAOG, build_grammar, collect_cliques, grammar_to_document

SCENE_KEYS = {"scene_id", "room_type", "room_dims", "objects"}
OBJECT_KEYS = {"id", "category", "position", "yaw", "size", "support_parent"}
MODEL_KEYS = {"model_id", "category", "native_dims", "mesh_ref", "front_yaw_offset"}


# ---------------------------------------------------------------------------
# Plain I/O
# ---------------------------------------------------------------------------

def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def dump_json(doc: Any, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(doc))
    return path


def load_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e.msg} at line {e.lineno}, column {e.colno})")


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _check_keys(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------

def load_grammar(path: str, require_sizes: bool = True) -> SAOG:
    return build_grammar(load_json(path), require_sizes=require_sizes)


def write_grammar(grammar: SAOG, path: str) -> str:
    return dump_json(grammar_to_document(grammar), path)


# ---------------------------------------------------------------------------
# Training scenes
# ---------------------------------------------------------------------------

def training_scenes_from_doc(doc: Any) -> List[TrainingScene]:
    raw = doc.get("scenes") if isinstance(doc, dict) else doc
    if not isinstance(raw, list):
        raise ValidationError("training scenes: expected a list of scenes")
    scenes = []
    for i, s in enumerate(raw):
        where = f"scene[{i}]"
        _check_keys(s, SCENE_KEYS, where)
        objects = []
        for j, o in enumerate(s.get("objects", [])):
            _check_keys(o, OBJECT_KEYS, f"{where}.objects[{j}]")
            try:
                parent = o.get("support_parent")
                objects.append(TrainingObject(
                    id=str(o["id"]), category=o["category"], position=tuple(o["position"]),
                    yaw=float(o.get("yaw", 0.0)), size=tuple(o["size"]),
                    support_parent=None if parent is None else str(parent),
                    support_given="support_parent" in o,
                ))
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"{where}.objects[{j}]: {e}")
        try:
            scenes.append(TrainingScene(room_type=s.get("room_type", ""), room_dims=tuple(s["room_dims"]),
                                        objects=objects, scene_id=str(s.get("scene_id", i))))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{where}: {e}")
    return scenes


def load_training_scenes(path: str) -> List[TrainingScene]:
    return training_scenes_from_doc(load_json(path))


def training_scenes_to_doc(scenes: List[TrainingScene]) -> dict:
    out = []
    for s in scenes:
        objects = []
        for o in s.objects:
            entry = {"id": o.id, "category": o.category, "position": list(o.position),
                     "yaw": o.yaw, "size": list(o.size)}
            if o.support_given:
                entry["support_parent"] = o.support_parent
            objects.append(entry)
        out.append({"scene_id": s.scene_id, "room_type": s.room_type,
                    "room_dims": list(s.room_dims), "objects": objects})
    return {"kind": "training_scenes", "scenes": out}


def parse_graph_to_training_scene(pg: ParseGraph, scene_id: str = "", room_type: str = "") -> TrainingScene:
    """A sampled configuration as an annotated training scene (explicit support parents)."""
    names = {o.id: f"{o.category}_{o.id}" for o in pg.objects}
    objects = [TrainingObject(id=names[o.id], category=o.category, position=o.position, yaw=o.yaw, size=o.size,
                              support_parent=names.get(o.address))
               for o in pg.objects if o.is_placed]
    return TrainingScene(room_type=room_type, room_dims=(pg.room.width, pg.room.depth, pg.room.height),
                         objects=objects, scene_id=scene_id)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def catalog_from_doc(doc: Any) -> ModelCatalog:
    raw = doc.get("models") if isinstance(doc, dict) else doc
    if not isinstance(raw, list):
        raise ValidationError("catalog: expected a list of models")
    entries = []
    for i, m in enumerate(raw):
        _check_keys(m, MODEL_KEYS, f"models[{i}]")
        try:
            entries.append(CatalogEntry(
                model_id=str(m["model_id"]), category=m["category"],
                native_dims=tuple(float(v) for v in m["native_dims"]),
                mesh_ref=m.get("mesh_ref"), front_yaw_offset=float(m.get("front_yaw_offset", 0.0)),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"models[{i}]: {e}")
    try:
        return ModelCatalog(entries)
    except ValueError as e:
        raise ValidationError(f"catalog: {e}")


def load_catalog(path: str) -> ModelCatalog:
    return catalog_from_doc(load_json(path))


# ---------------------------------------------------------------------------
# Parse graph
# ---------------------------------------------------------------------------

def parse_graph_to_doc(pg: ParseGraph, grammar: Optional[SAOG] = None, seed: Optional[int] = None,
                       trace: Optional[ChainTrace] = None, energy: Optional[EnergyBreakdown] = None) -> dict:
    objects = []
    for o in pg.objects:
        objects.append({
            "id": o.id, "category": o.category, "terminal": o.terminal, "size": list(o.size),
            "position": list(o.position) if o.position is not None else None, "yaw": o.yaw,
            "address": o.address, "address_slot": o.address_slot, "stage": o.stage,
            "local_offset": list(o.local_offset) if o.local_offset is not None else None,
            "rel_yaw": o.rel_yaw,
        })
    doc = {
        "kind": "parse_graph",
        "version": LAYOUT_VERSION,
        "seed": seed,
        "room": [pg.room.width, pg.room.depth, pg.room.height],
        "tree": {"or_choices": [list(c) for c in pg.tree.or_choices],
                 "set_counts": [list(c) for c in pg.tree.set_counts]},
        "objects": objects,
    }
    if energy is not None:
        doc["energy"] = energy.to_dict()
    if trace is not None:
        doc["converged"] = trace.converged
        doc["steps"] = len(trace.records)
        doc["acceptance_rate"] = trace.acceptance_rate
    return doc


def parse_graph_from_doc(doc: dict, grammar: Optional[SAOG] = None) -> ParseGraph:
    try:
        room = Room(*doc["room"])
        tree = ParseTree(or_choices=[(n, int(i)) for n, i in doc["tree"]["or_choices"]],
                         set_counts=[(n, c, int(k)) for n, c, k in doc["tree"]["set_counts"]])
        objects = [ObjectInstance(
            id=int(o["id"]), category=o["category"], size=tuple(o["size"]), terminal=o.get("terminal", ""),
            position=tuple(o["position"]) if o.get("position") is not None else None, yaw=float(o["yaw"]),
            address=o.get("address"), address_slot=o.get("address_slot"), stage=int(o.get("stage", 4)),
            local_offset=tuple(o["local_offset"]) if o.get("local_offset") is not None else None,
            rel_yaw=float(o.get("rel_yaw", 0.0)),
        ) for o in doc["objects"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"parse graph: {e}")
    ids = [o.id for o in objects]
    if len(ids) != len(set(ids)):
        raise ValidationError("parse graph: duplicate object ids")
    for o in objects:
        if o.address is not None and o.address not in ids:
            raise ValidationError(f"parse graph: object {o.id} rests on unknown object {o.address}")
    pg = ParseGraph(tree=tree, objects=objects, room=room)
    if grammar is not None:
        pg.cliques = collect_cliques(pg, grammar)
    return pg


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------

def layout_to_doc(layout: SceneLayout) -> dict:
    return {
        "kind": "layout",
        "version": LAYOUT_VERSION,
        "room": {"width": layout.room.width, "depth": layout.room.depth, "height": layout.room.height,
                 "quads": layout.room.quads},
        "placed": [{
            "instance_id": p.instance_id, "model_id": p.model_id, "category": p.category,
            "position": list(p.position), "yaw": p.yaw, "box_yaw": p.box_yaw, "size": list(p.size),
            "scale": list(p.scale), "support_parent": p.support_parent, "mesh_ref": p.mesh_ref,
        } for p in layout.placed],
        "attributes": {
            "lights": [{"position": list(l.position), "intensity": l.intensity, "color": list(l.color)}
                       for l in layout.attributes.lights],
            "materials": {k: asdict(m) for k, m in layout.attributes.materials.items()},
            "cameras": [camera_to_doc(c) for c in layout.attributes.cameras],
        },
        "label_table": dict(layout.label_table),
    }


def layout_from_doc(doc: dict) -> SceneLayout:
    if doc.get("version") != LAYOUT_VERSION:
        raise ValidationError(f"layout: unsupported version {doc.get('version')!r}")
    try:
        room = doc["room"]
        shell = RoomShell(width=float(room["width"]), depth=float(room["depth"]),
                          height=float(room["height"]), quads=list(room.get("quads", [])))
        placed = [PlacedObject(
            instance_id=int(p["instance_id"]), model_id=p["model_id"], category=p["category"],
            position=tuple(p["position"]), yaw=float(p["yaw"]), box_yaw=float(p.get("box_yaw", p["yaw"])),
            size=tuple(p["size"]), scale=tuple(p["scale"]), support_parent=p.get("support_parent"),
            mesh_ref=p.get("mesh_ref"),
        ) for p in doc["placed"]]
        attrs = doc.get("attributes", {}) or {}
        attributes = AttributeConfig(
            lights=[Light(tuple(l["position"]), float(l["intensity"]), tuple(l["color"])) for l in attrs.get("lights", [])],
            materials={k: Material(**m) for k, m in (attrs.get("materials") or {}).items()},
            cameras=[camera_from_doc(c) for c in attrs.get("cameras", [])],
        )
        label_table = {k: int(v) for k, v in doc.get("label_table", {}).items()}
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"layout: {e}")
    return SceneLayout(room=shell, placed=placed, attributes=attributes, label_table=label_table)


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------

def camera_to_doc(spec: CameraSpec) -> dict:
    doc = asdict(spec)
    for key in ("position", "look_at", "up"):
        doc[key] = list(doc[key])
    return doc


def camera_from_doc(doc: dict) -> CameraSpec:
    try:
        return CameraSpec(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()})
    except (TypeError, ValueError) as e:
        raise ValidationError(f"camera: {e}")


def cameras_from_doc(doc: Any) -> List[CameraSpec]:
    if isinstance(doc, dict) and "cameras" in doc:
        doc = doc["cameras"]
    if isinstance(doc, dict):
        doc = [{k: v for k, v in doc.items() if k != "kind"}]
    if not isinstance(doc, list):
        raise ValidationError("camera file: expected a camera object or a list of cameras")
    return [camera_from_doc(c) for c in doc]


def load_cameras(path: str) -> List[CameraSpec]:
    return cameras_from_doc(load_json(path))


# ---------------------------------------------------------------------------
# Kind detection and validation
# ---------------------------------------------------------------------------

def detect_kind(doc: Any) -> str:
    if isinstance(doc, dict) and doc.get("kind"):
        return doc["kind"]
    if isinstance(doc, list):
        if doc and isinstance(doc[0], dict) and "room_dims" in doc[0]:
            return "training_scenes"
        if doc and isinstance(doc[0], dict) and "model_id" in doc[0]:
            return "catalog"
        if doc and isinstance(doc[0], dict) and "look_at" in doc[0]:
            return "camera"
        return "unknown"
    if isinstance(doc, dict):
        if "root" in doc and "nodes" in doc:
            return "bundle" if "size_models" in doc else "grammar"
        if "models" in doc:
            return "catalog"
        if "placed" in doc:
            return "layout"
        if "tree" in doc and "objects" in doc:
            return "parse_graph"
        if "look_at" in doc:
            return "camera"
    return "unknown"


def validate_document(doc: Any) -> Tuple[str, List[str]]:
    """(kind, findings); an empty list means the document is clean."""
    from scene import validate_layout

    kind = detect_kind(doc)
    findings: List[str] = []
    try:
        if kind == "grammar":
            build_grammar(doc, require_sizes=False)
        elif kind == "bundle":
            build_grammar(doc, require_sizes=True)
        elif kind == "training_scenes":
            if not training_scenes_from_doc(doc):
                findings.append("no training scenes")
        elif kind == "catalog":
            catalog_from_doc(doc)
        elif kind == "parse_graph":
            parse_graph_from_doc(doc)
        elif kind == "layout":
            findings.extend(validate_layout(layout_from_doc(doc)))
        elif kind == "camera":
            cameras_from_doc(doc)
        elif kind == "manifest":
            if not isinstance(doc.get("artifacts"), list):
                findings.append("manifest: 'artifacts' must be a list")
        else:
            findings.append("unrecognized file kind")
    except (GrammarError, ValidationError) as e:
        findings.append(str(e))
    except SceneSynthError as e:
        findings.append(f"{type(e).__name__}: {e}")
    return kind, findings


def validate_file(path: str) -> Tuple[str, List[str]]:
    try:
        doc = load_json(path)
    except ValidationError as e:
        return "unknown", [str(e)]
    return validate_document(doc)
