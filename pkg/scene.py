"""
Scene instantiation: catalog model selection, placement, room containment,
gravity snap, room shell, sampled attribute metadata, layout validation and
OBJ export of box proxies.
"""

import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import networkx as nx
import numpy as np

from constants import ROOM_TOL, SHELL_LABELS, SNAP_RESIDUAL, SUPPORT_TOL, Emojis
from data_models import (
    AttributeConfig, CameraSpec, CatalogEntry, Light, Material, ModelCatalog, ObjectInstance,
    ParseGraph, PlacedObject, RoomShell, SceneLayout,
)
from errors import SceneError
from geometry import axis_extent, contains_point, footprint_corners, footprint_polygon, nearest_interior, wrap_angle
from logger import logger


# ---------------------------------------------------------------------------
# Model selection and placement
# ---------------------------------------------------------------------------

def select_model(catalog: ModelCatalog, category: str, target_dims: Sequence[float]) -> str:
    """Closest |ln(l/w)| match; ties go to the lexicographically smallest id."""
    entries = catalog.for_category(category)
    if not entries:
        raise SceneError(f"catalog has no model for category '{category}'")
    target = math.log(target_dims[0] / target_dims[1])
    best = min(entries, key=lambda e: (abs(math.log(e.native_dims[0] / e.native_dims[1]) - target), e.model_id))
    return best.model_id


def place_model(entry: CatalogEntry, instance: ObjectInstance) -> PlacedObject:
    scale = tuple(s / n for s, n in zip(instance.size, entry.native_dims))
    return PlacedObject(
        instance_id=instance.id,
        model_id=entry.model_id,
        category=instance.category,
        position=tuple(instance.position) if instance.position is not None else (0.0, 0.0, 0.0),
        yaw=wrap_angle(instance.yaw + entry.front_yaw_offset),
        box_yaw=instance.yaw,
        size=tuple(instance.size),
        scale=scale,
        support_parent=instance.address,
        mesh_ref=entry.mesh_ref,
    )


# ---------------------------------------------------------------------------
# Room containment and gravity snap
# ---------------------------------------------------------------------------

def _overflow_shift(obj: PlacedObject, shell: RoomShell):
    ex, ey = axis_extent(obj.box_yaw, obj.size[0], obj.size[1])
    x, y = obj.position[0], obj.position[1]
    dx = dy = 0.0
    if 2 * ex <= shell.width:
        dx = max(0.0, ex - x) - max(0.0, x + ex - shell.width)
    if 2 * ey <= shell.depth:
        dy = max(0.0, ey - y) - max(0.0, y + ey - shell.depth)
    return dx, dy


def fit_room(layout: SceneLayout) -> SceneLayout:
    """Shift objects whose rotated footprint leaves the room back inside; children ride along."""
    placed = {p.instance_id: p for p in layout.placed}
    children: Dict[int, List[int]] = {}
    for p in layout.placed:
        if p.support_parent is not None:
            children.setdefault(p.support_parent, []).append(p.instance_id)

    def shift(obj_id, dx, dy):
        p = placed[obj_id]
        placed[obj_id] = replace(p, position=(p.position[0] + dx, p.position[1] + dy, p.position[2]))
        for child in children.get(obj_id, []):
            shift(child, dx, dy)

    order = [p.instance_id for p in layout.placed if p.support_parent is None]
    order += [p.instance_id for p in layout.placed if p.support_parent is not None]
    for obj_id in order:
        dx, dy = _overflow_shift(placed[obj_id], layout.room)
        if dx or dy:
            logger.warning(f"{Emojis.WARN} instance {obj_id} overlaps the room boundary, shifted by ({dx:.3f}, {dy:.3f}) m")
            shift(obj_id, dx, dy)
    return replace(layout, placed=[placed[p.instance_id] for p in layout.placed])


def support_order(layout: SceneLayout) -> List[int]:
    graph = nx.DiGraph()
    graph.add_nodes_from(p.instance_id for p in layout.placed)
    for p in layout.placed:
        if p.support_parent is not None:
            if p.support_parent not in graph:
                raise SceneError(f"instance {p.instance_id} rests on missing instance {p.support_parent}")
            graph.add_edge(p.support_parent, p.instance_id)
    try:
        return list(nx.lexicographical_topological_sort(graph))
    except nx.NetworkXUnfeasible:
        cycle = [e[0] for e in nx.find_cycle(graph)]
        raise SceneError(f"support cycle among instances {cycle}")


def resolve_vertical(layout: SceneLayout) -> SceneLayout:
    """
    Seat every object on its support (floor z = 0 or parent top) in support
    order; a child whose center left the parent footprint is clamped inside.
    """
    placed = {p.instance_id: p for p in layout.placed}
    for obj_id in support_order(layout):
        p = placed[obj_id]
        if p.support_parent is None:
            placed[obj_id] = replace(p, position=(p.position[0], p.position[1], 0.0))
            continue
        parent = placed[p.support_parent]
        poly = footprint_polygon(parent.position[:2], parent.box_yaw, parent.size[0], parent.size[1])
        x, y = p.position[0], p.position[1]
        if not contains_point(poly, (x, y)):
            nx_, ny_ = nearest_interior(poly, (x, y))
            logger.warning(f"{Emojis.WARN} instance {obj_id} center left parent {parent.instance_id}, clamped to ({nx_:.3f}, {ny_:.3f})")
            x, y = nx_, ny_
        p = replace(p, position=(x, y, parent.top))
        if parent.top - p.position[2] > SNAP_RESIDUAL:
            raise SceneError(f"instance {obj_id} still penetrates parent {parent.instance_id} after snapping")
        placed[obj_id] = p
    return replace(layout, placed=[placed[p.instance_id] for p in layout.placed])


# ---------------------------------------------------------------------------
# Shell, labels, attributes
# ---------------------------------------------------------------------------

def build_shell(width: float, depth: float, height: float, first_id: int) -> RoomShell:
    """Floor, ceiling and the four walls as quads, ids from `first_id` in that order."""
    w, d, h = width, depth, height
    quads = [
        ("floor", "floor", [[0, 0, 0], [w, 0, 0], [w, d, 0], [0, d, 0]]),
        ("ceiling", "ceiling", [[0, 0, h], [0, d, h], [w, d, h], [w, 0, h]]),
        ("wall_0", "wall", [[0, 0, 0], [0, 0, h], [w, 0, h], [w, 0, 0]]),
        ("wall_1", "wall", [[w, 0, 0], [w, 0, h], [w, d, h], [w, d, 0]]),
        ("wall_2", "wall", [[w, d, 0], [w, d, h], [0, d, h], [0, d, 0]]),
        ("wall_3", "wall", [[0, d, 0], [0, d, h], [0, 0, h], [0, 0, 0]]),
    ]
    return RoomShell(width=w, depth=d, height=h, quads=[
        {"name": name, "instance_id": first_id + i, "label": label,
         "corners": [[float(v) for v in c] for c in corners]}
        for i, (name, label, corners) in enumerate(quads)
    ])


def build_label_table(catalog: Optional[ModelCatalog], placed: Sequence[PlacedObject]) -> Dict[str, int]:
    names = set(SHELL_LABELS) | {p.category for p in placed}
    if catalog is not None:
        names |= set(catalog.categories)
    return {name: i + 1 for i, name in enumerate(sorted(names))}


def _range(ranges: dict, key: str, default=None):
    value = ranges.get(key, default)
    if value is None:
        raise SceneError(f"attribute range '{key}' missing")
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    if len(value) != 2 or value[0] > value[1]:
        raise SceneError(f"attribute range '{key}' is empty: {value}")
    return (float(value[0]), float(value[1]))


def sample_attributes(ranges: dict, layout: SceneLayout, rng: np.random.Generator) -> AttributeConfig:
    """Lights, per-part materials and cameras drawn uniformly from the configured ranges."""
    shell = layout.room
    light_r = ranges.get("lights", {}) or {}
    mat_r = ranges.get("materials", {}) or {}
    cam_r = ranges.get("cameras", {}) or {}

    lights = []
    lo, hi = _range(light_r, "count", [1, 1])
    c_min = light_r.get("color_min", [1.0, 1.0, 1.0])
    c_max = light_r.get("color_max", [1.0, 1.0, 1.0])
    if any(a > b for a, b in zip(c_min, c_max)):
        raise SceneError(f"attribute range 'color' is empty: {c_min} > {c_max}")
    i_lo, i_hi = _range(light_r, "intensity", [1.0, 1.0])
    z = shell.height - float(light_r.get("ceiling_offset", 0.1))
    for _ in range(int(rng.integers(int(lo), int(hi) + 1))):
        position = (float(rng.uniform(0.0, shell.width)), float(rng.uniform(0.0, shell.depth)), z)
        intensity = float(rng.uniform(i_lo, i_hi))
        color = tuple(float(rng.uniform(a, b)) for a, b in zip(c_min, c_max))
        lights.append(Light(position=position, intensity=intensity, color=color))

    materials = {}
    textures = list(mat_r.get("textures", ["default"]))
    if not textures:
        raise SceneError("attribute range 'textures' is empty")
    rough = _range(mat_r, "roughness", [0.5, 0.5])
    metal = _range(mat_r, "metallic", [0.0, 0.0])
    refl = _range(mat_r, "reflectivity", [0.0, 0.0])
    for p in sorted(layout.placed, key=lambda x: x.instance_id):
        for part in mat_r.get("parts", ["body"]):
            materials[f"{p.instance_id}:{part}"] = Material(
                roughness=float(rng.uniform(*rough)),
                metallic=float(rng.uniform(*metal)),
                reflectivity=float(rng.uniform(*refl)),
                texture=textures[int(rng.integers(len(textures)))],
            )

    cameras = []
    c_lo, c_hi = _range(cam_r, "count", [1, 1])
    h_lo, h_hi = _range(cam_r, "height", [1.5, 1.5])
    f_lo, f_hi = _range(cam_r, "fov_deg", [60.0, 60.0])
    margin = float(cam_r.get("margin", 0.3))
    width, height = (int(v) for v in cam_r.get("resolution", [320, 240]))
    mx, my = min(margin, shell.width / 2), min(margin, shell.depth / 2)
    for _ in range(int(rng.integers(int(c_lo), int(c_hi) + 1))):
        pos = (float(rng.uniform(mx, shell.width - mx)), float(rng.uniform(my, shell.depth - my)),
               float(rng.uniform(h_lo, h_hi)))
        fov = math.radians(float(rng.uniform(f_lo, f_hi)))
        target = (shell.width / 2, shell.depth / 2, pos[2])
        if math.hypot(target[0] - pos[0], target[1] - pos[1]) < 1e-6:
            target = (pos[0] + 1.0, pos[1], pos[2])
        focal = (width / 2) / math.tan(fov / 2)
        cameras.append(CameraSpec(position=pos, look_at=target, width=width, height=height,
                                  fx=focal, fy=focal, cx=width / 2, cy=height / 2))
    return AttributeConfig(lights=lights, materials=materials, cameras=cameras)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def instantiate_scene(pg: ParseGraph, catalog: ModelCatalog, ranges: dict,
                      rng: np.random.Generator) -> SceneLayout:
    placed = []
    for obj in sorted((o for o in pg.objects if o.is_placed), key=lambda o: o.id):
        entry = catalog.get(select_model(catalog, obj.category, obj.size))
        placed.append(place_model(entry, obj))
    first_shell_id = max((o.id for o in pg.objects), default=0) + 1
    shell = build_shell(pg.room.width, pg.room.depth, pg.room.height, first_shell_id)
    layout = SceneLayout(room=shell, placed=placed, label_table=build_label_table(catalog, placed))
    layout = resolve_vertical(fit_room(layout))
    layout.attributes = sample_attributes(ranges, layout, rng)
    logger.debug(f"{Emojis.BUILD} instantiated {len(placed)} objects in a {shell.width:.2f} x {shell.depth:.2f} m room")
    return layout


def validate_layout(layout: SceneLayout) -> List[str]:
    """Findings for floating, interpenetrating, out-of-room and below-floor objects."""
    findings = []
    placed = {p.instance_id: p for p in layout.placed}
    shell = layout.room
    for p in layout.placed:
        bottom = p.position[2]
        if bottom < -SUPPORT_TOL:
            findings.append(f"instance {p.instance_id} ({p.category}): bottom {bottom:.4f} m below the floor")
        if p.support_parent is None:
            if bottom > SUPPORT_TOL:
                findings.append(f"instance {p.instance_id} ({p.category}): floating {bottom:.4f} m above the floor")
        else:
            parent = placed.get(p.support_parent)
            if parent is None:
                findings.append(f"instance {p.instance_id} ({p.category}): support parent {p.support_parent} missing")
            else:
                gap = bottom - parent.top
                if gap > SUPPORT_TOL:
                    findings.append(f"instance {p.instance_id} ({p.category}): floating {gap:.4f} m above parent {parent.instance_id}")
                elif gap < -SUPPORT_TOL:
                    findings.append(f"instance {p.instance_id} ({p.category}): penetrates parent {parent.instance_id} by {-gap:.4f} m")
        corners = footprint_corners(p.position[:2], p.box_yaw, p.size[0], p.size[1])
        if (corners[:, 0].min() < -ROOM_TOL or corners[:, 0].max() > shell.width + ROOM_TOL
                or corners[:, 1].min() < -ROOM_TOL or corners[:, 1].max() > shell.depth + ROOM_TOL):
            findings.append(f"instance {p.instance_id} ({p.category}): footprint outside the room")
        if p.category not in layout.label_table:
            findings.append(f"instance {p.instance_id} ({p.category}): category missing from label table")
    return findings


def box_corners(p: PlacedObject) -> np.ndarray:
    base = footprint_corners(p.position[:2], p.box_yaw, p.size[0], p.size[1])
    bottom = np.column_stack([base, np.full(4, p.position[2])])
    top = np.column_stack([base, np.full(4, p.top)])
    return np.vstack([bottom, top])


_BOX_FACES = ((1, 2, 3, 4), (5, 8, 7, 6), (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 8, 4), (4, 8, 5, 1))


def export_obj(layout: SceneLayout, path: str):
    """Box proxies (one group per instance id) plus the room shell quads."""
    lines = ["# scene layout box proxies"]
    offset = 0
    for p in layout.placed:
        lines.append(f"g {p.instance_id}")
        if p.mesh_ref:
            lines.append(f"# mesh_ref {p.mesh_ref}")
        for v in box_corners(p):
            lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
        for face in _BOX_FACES:
            lines.append("f " + " ".join(str(offset + i) for i in face))
        offset += 8
    for quad in layout.room.quads:
        lines.append(f"g {quad['instance_id']}")
        lines.append(f"# {quad['name']}")
        for v in quad["corners"]:
            lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
        lines.append("f " + " ".join(str(offset + i) for i in (1, 2, 3, 4)))
        offset += 4
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
