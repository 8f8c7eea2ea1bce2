"""
Ground-truth ray casting: per-pixel z-depth, world normal, instance id and
semantic label from a pinhole camera over oriented-box proxies and the room
shell. No shading, one ray per pixel center.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from constants import TIE_EPS, Emojis
from data_models import CameraSpec, GroundTruthFrame, SceneLayout
from errors import RenderError
from logger import logger

CHANNELS = ("depth", "normal", "instance", "semantic")


@dataclass(frozen=True)
class CameraBasis:
    origin: np.ndarray
    right: np.ndarray
    down: np.ndarray
    forward: np.ndarray
    spec: CameraSpec


@dataclass(frozen=True)
class Box:
    """Oriented box about z; a zero half extent gives a quad."""
    instance_id: int
    label: int
    center: Tuple[float, float, float]
    half: Tuple[float, float, float]
    cos_yaw: float = 1.0
    sin_yaw: float = 0.0


def build_camera(spec: CameraSpec) -> CameraBasis:
    """x right, y down, z forward."""
    origin = np.asarray(spec.position, dtype=float)
    forward = np.asarray(spec.look_at, dtype=float) - origin
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise RenderError("camera position and look_at coincide")
    forward = forward / norm
    right = np.cross(forward, np.asarray(spec.up, dtype=float))
    r_norm = np.linalg.norm(right)
    if r_norm < 1e-9:
        raise RenderError("camera up vector is parallel to the viewing direction")
    right = right / r_norm
    down = np.cross(forward, right)
    return CameraBasis(origin=origin, right=right, down=down, forward=forward, spec=spec)


def pixel_ray(basis: CameraBasis, i: float, j: float) -> np.ndarray:
    """World direction through pixel column i, row j with forward component 1."""
    s = basis.spec
    x = (i + 0.5 - s.cx) / s.fx
    y = (j + 0.5 - s.cy) / s.fy
    return x * basis.right + y * basis.down + basis.forward


def ray_grid(basis: CameraBasis, rows: Optional[Sequence[int]] = None) -> np.ndarray:
    """(len(rows) * width, 3) directions, row-major."""
    s = basis.spec
    rows = np.arange(s.height) if rows is None else np.asarray(rows)
    cols = np.arange(s.width)
    x = (cols + 0.5 - s.cx) / s.fx
    y = (rows + 0.5 - s.cy) / s.fy
    xx, yy = np.meshgrid(x, y)
    dirs = xx[..., None] * basis.right + yy[..., None] * basis.down + basis.forward
    return dirs.reshape(-1, 3)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def scene_boxes(layout: SceneLayout) -> List[Box]:
    """Placed objects and shell quads, ascending instance id."""
    boxes = []
    for p in layout.placed:
        l, w, h = p.size
        boxes.append(Box(
            instance_id=p.instance_id,
            label=layout.label_table.get(p.category, 0),
            center=(p.position[0], p.position[1], p.position[2] + h / 2),
            half=(l / 2, w / 2, h / 2),
            cos_yaw=math.cos(p.box_yaw),
            sin_yaw=math.sin(p.box_yaw),
        ))
    shell = layout.room
    w, d, h = shell.width, shell.depth, shell.height
    planes = {
        "floor": ((w / 2, d / 2, 0.0), (w / 2, d / 2, 0.0)),
        "ceiling": ((w / 2, d / 2, h), (w / 2, d / 2, 0.0)),
        "wall_0": ((w / 2, 0.0, h / 2), (w / 2, 0.0, h / 2)),
        "wall_1": ((w, d / 2, h / 2), (0.0, d / 2, h / 2)),
        "wall_2": ((w / 2, d, h / 2), (w / 2, 0.0, h / 2)),
        "wall_3": ((0.0, d / 2, h / 2), (0.0, d / 2, h / 2)),
    }
    for quad in shell.quads:
        center, half = planes[quad["name"]]
        boxes.append(Box(quad["instance_id"], layout.label_table.get(quad["label"], 0), center, half))
    return sorted(boxes, key=lambda b: b.instance_id)


def intersect_box(origin: np.ndarray, dirs: np.ndarray, box: Box, near: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Slab test for N rays. Returns t (inf on miss) and world normals facing
    the ray. Rays starting inside the box hit its exit face.
    """
    c, s = box.cos_yaw, box.sin_yaw
    p = origin - np.asarray(box.center)
    p_local = np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]])
    d_local = np.column_stack([c * dirs[:, 0] + s * dirs[:, 1], -s * dirs[:, 0] + c * dirs[:, 1], dirs[:, 2]])
    half = np.asarray(box.half)

    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - p_local) / d_local
        t2 = (half - p_local) / d_local
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    parallel = d_local == 0
    inside = np.abs(p_local) <= half
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)

    enter_axis = tmin.argmax(axis=1)
    exit_axis = tmax.argmin(axis=1)
    rows = np.arange(len(dirs))
    t_enter = tmin[rows, enter_axis]
    t_exit = tmax[rows, exit_axis]
    hit = (t_enter <= t_exit) & (t_exit >= near)
    front = t_enter >= near
    t = np.where(front, t_enter, t_exit)
    axis = np.where(front, enter_axis, exit_axis)
    t = np.where(hit, t, np.inf)

    n_local = np.zeros_like(d_local)
    sign = -np.sign(d_local[rows, axis])
    n_local[rows, axis] = sign
    normals = np.column_stack([
        c * n_local[:, 0] - s * n_local[:, 1],
        s * n_local[:, 0] + c * n_local[:, 1],
        n_local[:, 2],
    ])
    normals[~hit] = 0.0
    return t, normals


def _closest(origin: np.ndarray, dirs: np.ndarray, boxes: Sequence[Box], near: float):
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_id = np.zeros(n, dtype=np.int64)
    best_label = np.zeros(n, dtype=np.int64)
    best_n = np.zeros((n, 3))
    for box in boxes:
        t, normals = intersect_box(origin, dirs, box, near)
        finite = np.isfinite(t)
        closer = finite & (t < best_t - TIE_EPS)
        tie = finite & (np.abs(t - best_t) <= TIE_EPS) & ((best_id == 0) | (box.instance_id < best_id))
        take = closer | tie
        best_t = np.where(take, t, best_t)
        best_id = np.where(take, box.instance_id, best_id)
        best_label = np.where(take, box.label, best_label)
        best_n[take] = normals[take]
    return best_t, best_id, best_label, best_n


def intersect_scene(origin, direction, boxes: Sequence[Box], near: float = 0.01) -> Optional[dict]:
    """Nearest hit of a single ray, or None."""
    dirs = np.asarray(direction, dtype=float).reshape(1, 3)
    t, ids, labels, normals = _closest(np.asarray(origin, dtype=float), dirs, boxes, near)
    if not np.isfinite(t[0]):
        return None
    return {"t": float(t[0]), "instance_id": int(ids[0]), "label": int(labels[0]), "normal": normals[0].copy()}


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_ground_truth(layout: SceneLayout, spec: CameraSpec, jobs: int = 1) -> GroundTruthFrame:
    basis = build_camera(spec)
    boxes = scene_boxes(layout)
    H, W = spec.height, spec.width

    def render_rows(rows):
        return _closest(basis.origin, ray_grid(basis, rows), boxes, spec.near)

    chunks = np.array_split(np.arange(H), max(1, min(jobs, H)))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(render_rows, chunks))
    else:
        parts = [render_rows(rows) for rows in chunks]

    t = np.concatenate([p[0] for p in parts]).reshape(H, W)
    ids = np.concatenate([p[1] for p in parts]).reshape(H, W)
    labels = np.concatenate([p[2] for p in parts]).reshape(H, W)
    normals = np.concatenate([p[3] for p in parts]).reshape(H, W, 3)

    hit = np.isfinite(t)
    depth = np.where(hit, t, 0.0)
    logger.debug(f"{Emojis.CAMERA} rendered {W}x{H}, {int(hit.sum())} hit pixels")
    return GroundTruthFrame(
        depth=depth,
        normal=np.where(hit[..., None], normals, 0.0),
        instance=np.where(hit, ids, 0).astype(np.uint16),
        semantic=np.where(hit, labels, 0).astype(np.uint16),
    )


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def encode_depth_mm(depth: np.ndarray) -> np.ndarray:
    mm = np.floor(np.asarray(depth, dtype=float) * 1000.0 + 0.5)
    return np.clip(mm, 0, 65535).astype(np.uint16)


def encode_normal(normal: np.ndarray, hit: Optional[np.ndarray] = None) -> np.ndarray:
    """floor(255 * (n + 1) / 2 + 0.5) per channel, misses (0, 0, 0)."""
    normal = np.asarray(normal, dtype=float)
    rgb = np.floor(255.0 * (normal + 1.0) / 2.0 + 0.5).clip(0, 255).astype(np.uint8)
    if hit is None:
        hit = np.any(normal != 0, axis=-1)
    rgb[~hit] = 0
    return rgb


def write_pfm(path: str, image: np.ndarray):
    """Single-channel little-endian PFM, rows bottom to top."""
    data = np.flipud(np.asarray(image, dtype="<f4"))
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(data.tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise RenderError(f"{path}: not a single-channel PFM")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(float)


def _save_png16(path: str, array: np.ndarray):
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint16)).save(path)


def write_frame(frame: GroundTruthFrame, base_path: str, spec: CameraSpec,
                label_table: Dict[str, int], channels: Sequence[str] = CHANNELS) -> List[str]:
    """Writes the requested channels plus a JSON sidecar; returns the written paths."""
    unknown = [c for c in channels if c not in CHANNELS]
    if unknown:
        raise RenderError(f"unknown channels {unknown}")
    os.makedirs(os.path.dirname(base_path) or ".", exist_ok=True)
    written = []
    hit = frame.instance != 0
    if "depth" in channels:
        write_pfm(f"{base_path}_depth.pfm", frame.depth)
        _save_png16(f"{base_path}_depth.png", encode_depth_mm(frame.depth))
        written += [f"{base_path}_depth.pfm", f"{base_path}_depth.png"]
    if "normal" in channels:
        Image.fromarray(encode_normal(frame.normal, hit)).save(f"{base_path}_normal.png")
        written.append(f"{base_path}_normal.png")
    if "instance" in channels:
        _save_png16(f"{base_path}_instance.png", frame.instance)
        written.append(f"{base_path}_instance.png")
    if "semantic" in channels:
        _save_png16(f"{base_path}_semantic.png", frame.semantic)
        written.append(f"{base_path}_semantic.png")

    sidecar = {"camera": asdict(spec), "label_table": dict(sorted(label_table.items())),
               "channels": list(channels), "depth_units": "m", "depth_png_units": "mm"}
    with open(f"{base_path}.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
    written.append(f"{base_path}.json")
    return written
