"""
Shared data classes for the scene-synthesis pipeline.

Grammar structure, parse graphs, potential parameters, training scenes,
sampler/learning configuration, instantiated layouts and ground-truth frames.
"""

import copy
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import circmean

from config import Config
from constants import WALL_KEY
from geometry import wrap_angle

Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------

class NodeKind(Enum):
    AND = "and"
    OR = "or"
    SET = "set"
    TERMINAL = "terminal"
    ADDRESS = "address"


@dataclass(frozen=True)
class Node:
    """
    One S-AOG vertex.

    Or-nodes carry `probs` (one per child, declared order); Set-nodes carry
    `counts` mapping each child id to {multiplicity: probability};
    regular terminals carry `category`; address terminals name the regular
    terminal they seat through `target_of`.
    """
    id: str
    kind: NodeKind
    children: Tuple[str, ...] = ()
    category: Optional[str] = None
    probs: Optional[Tuple[float, ...]] = None
    counts: Optional[Dict[str, Dict[int, float]]] = None
    target_of: Optional[str] = None

    def __post_init__(self):
        if self.kind in (NodeKind.AND, NodeKind.OR, NodeKind.SET) and not self.children:
            raise ValueError(f"{self.kind.value}-node '{self.id}' needs at least one child")
        if self.kind in (NodeKind.TERMINAL, NodeKind.ADDRESS) and self.children:
            raise ValueError(f"terminal '{self.id}' cannot have children")
        if self.kind == NodeKind.TERMINAL and not self.category:
            raise ValueError(f"regular terminal '{self.id}' needs a category")
        if self.kind == NodeKind.ADDRESS and not self.target_of:
            raise ValueError(f"address terminal '{self.id}' needs 'target_of'")

    @property
    def is_terminal(self) -> bool:
        return self.kind in (NodeKind.TERMINAL, NodeKind.ADDRESS)


# ---------------------------------------------------------------------------
# Parse graph
# ---------------------------------------------------------------------------

@dataclass
class ObjectInstance:
    id: int
    category: str
    size: Vec3                                 # length, width, height (m)
    terminal: str = ""
    position: Optional[Vec3] = None            # footprint center, bottom z (m); None = not yet placed
    yaw: float = 0.0
    address: Optional[int] = None              # supporting instance id, None = floor
    address_slot: Optional[str] = None         # address terminal id for supported objects
    stage: int = 4
    local_offset: Optional[Vec2] = None        # offset in the parent's (length, width) frame
    rel_yaw: float = 0.0                       # yaw relative to the parent

    def __post_init__(self):
        self.size = tuple(float(v) for v in self.size)
        if len(self.size) != 3 or min(self.size) <= 0:
            raise ValueError(f"object {self.id} ({self.category}) needs a positive size, got {self.size}")
        if self.address is not None and self.address == self.id:
            raise ValueError(f"object {self.id} cannot support itself")
        if not 1 <= self.stage <= 5:
            raise ValueError(f"object {self.id}: stage must be 1..5, got {self.stage}")
        self.yaw = wrap_angle(float(self.yaw))
        if self.position is not None:
            self.position = tuple(float(v) for v in self.position)

    @property
    def is_supported_kind(self) -> bool:
        """Terminal carries an address slot (small object)."""
        return self.address_slot is not None

    @property
    def is_placed(self) -> bool:
        return self.position is not None

    @property
    def xy(self) -> Vec2:
        return (self.position[0], self.position[1])

    @property
    def top(self) -> float:
        return self.position[2] + self.size[2]


@dataclass(frozen=True)
class Wall:
    id: int
    start: Vec2
    end: Vec2
    heading: float       # inward normal direction (rad)

    @property
    def normal(self) -> Vec2:
        return (math.cos(self.heading), math.sin(self.heading))

    def distance(self, xy: Vec2) -> float:
        """Perpendicular distance from `xy` to the wall's infinite line."""
        nx, ny = self.normal
        return abs((xy[0] - self.start[0]) * nx + (xy[1] - self.start[1]) * ny)


@dataclass(frozen=True)
class Room:
    width: float      # x extent
    depth: float      # y extent
    height: float     # wall height

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError(f"room dims must be positive, got {(self.width, self.depth, self.height)}")

    def walls(self) -> List[Wall]:
        w, d = self.width, self.depth
        return [
            Wall(0, (0.0, 0.0), (w, 0.0), math.pi / 2),     # y = 0
            Wall(1, (w, 0.0), (w, d), -math.pi),            # x = w
            Wall(2, (w, d), (0.0, d), -math.pi / 2),        # y = d
            Wall(3, (0.0, d), (0.0, 0.0), 0.0),             # x = 0
        ]

    def contains(self, xy: Vec2) -> bool:
        return 0.0 <= xy[0] <= self.width and 0.0 <= xy[1] <= self.depth


@dataclass
class ParseTree:
    or_choices: List[Tuple[str, int]] = field(default_factory=list)
    set_counts: List[Tuple[str, str, int]] = field(default_factory=list)


@dataclass
class CliqueSet:
    wall_cliques: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)
    furniture_cliques: List[Tuple[int, int]] = field(default_factory=list)
    support_cliques: List[Tuple[Optional[int], str, int]] = field(default_factory=list)   # (furniture, slot, object)
    group_cliques: List[Tuple[str, List[Tuple[int, int]]]] = field(default_factory=list)

    def sizes(self) -> Tuple[int, int, int, int]:
        return (len(self.wall_cliques), len(self.furniture_cliques),
                len(self.support_cliques), len(self.group_cliques))


@dataclass
class ParseGraph:
    tree: ParseTree
    objects: List[ObjectInstance]
    room: Room
    cliques: CliqueSet = field(default_factory=CliqueSet)
    energy_cache: Optional[float] = None

    @property
    def walls(self) -> List[Wall]:
        return self.room.walls()

    def object_map(self) -> Dict[int, ObjectInstance]:
        return {o.id: o for o in self.objects}

    def get(self, obj_id: int) -> ObjectInstance:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def children_of(self, obj_id: int) -> List[ObjectInstance]:
        return [o for o in self.objects if o.address == obj_id]

    def descendants(self, obj_id: int) -> List[ObjectInstance]:
        out, frontier = [], [obj_id]
        while frontier:
            kids = [o for o in self.objects if o.address in frontier]
            out.extend(kids)
            frontier = [k.id for k in kids]
        return out

    def copy(self) -> "ParseGraph":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialWeights:
    """Layout: [w_con, w_wall, c_occ, o_pos, o_ori, o_add, g_dis, g_ori]."""
    lambda_w: Tuple[float, float] = (1.0, 1.0)
    lambda_c: float = 1.0
    lambda_o: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    lambda_g: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        vec = self.as_vector()
        if vec.shape != (8,) or not np.all(np.isfinite(vec)) or np.any(vec < 0):
            raise ValueError(f"potential weights must be 8 finite values >= 0, got {vec.tolist()}")

    def as_vector(self) -> np.ndarray:
        return np.array([*self.lambda_w, self.lambda_c, *self.lambda_o, *self.lambda_g], dtype=float)

    @classmethod
    def from_vector(cls, vec) -> "PotentialWeights":
        v = [float(x) for x in vec]
        if len(v) != 8:
            raise ValueError(f"expected 8 weights, got {len(v)}")
        return cls(lambda_w=(v[0], v[1]), lambda_c=v[2], lambda_o=(v[3], v[4], v[5]), lambda_g=(v[6], v[7]))

    def scaled(self, c: float) -> "PotentialWeights":
        return PotentialWeights.from_vector(self.as_vector() * c)


def pair_key(cat_a: str, cat_b: str) -> str:
    a, b = sorted((cat_a, cat_b))
    return f"{a}|{b}"


def wall_key(category: str, rank: int) -> str:
    return f"{category}|{WALL_KEY}#{rank}"


@dataclass
class RelationStats:
    """
    Learned relation means. Pair keys are `a|b` with a <= b; the stored
    orientation is wrap(yaw_a - yaw_b) for that order. Wall keys are
    `category|wall#rank` (rank 0 = nearest wall).
    """
    mean_dist: Dict[str, float] = field(default_factory=dict)
    mean_ori: Dict[str, float] = field(default_factory=dict)
    support_face_dist: Dict[str, Tuple[float, float, float, float]] = field(default_factory=dict)
    support_ori: Dict[str, float] = field(default_factory=dict)      # key "f|o", mean wrap(yaw_o - yaw_f)
    d_acc: float = 0.8

    def __post_init__(self):
        if not self.d_acc > 0:
            raise ValueError(f"d_acc must be positive, got {self.d_acc}")
        for key, v in list(self.mean_ori.items()):
            self.mean_ori[key] = wrap_angle(float(v))
        for key, v in list(self.support_ori.items()):
            self.support_ori[key] = wrap_angle(float(v))
        for table in (self.mean_dist, self.mean_ori, self.support_ori):
            if not all(math.isfinite(v) for v in table.values()):
                raise ValueError("relation means must be finite")
        self._build_fallbacks()

    def _build_fallbacks(self):
        cat_d: Dict[str, List[float]] = {}
        cat_o: Dict[str, List[float]] = {}
        rank_d: Dict[str, List[float]] = {}
        rank_o: Dict[str, List[float]] = {}
        pair_d: List[float] = []
        for key, d in self.mean_dist.items():
            a, b = key.split("|", 1)
            if b.startswith(WALL_KEY + "#"):
                rank_d.setdefault(b, []).append(d)
                continue
            pair_d.append(d)
            cat_d.setdefault(a, []).append(d)
            if b != a:
                cat_d.setdefault(b, []).append(d)
        for key, t in self.mean_ori.items():
            a, b = key.split("|", 1)
            if b.startswith(WALL_KEY + "#"):
                rank_o.setdefault(b, []).append(t)
                continue
            cat_o.setdefault(a, []).append(t)
            cat_o.setdefault(b, []).append(wrap_angle(-t))
        self._cat_dist = {k: float(np.mean(v)) for k, v in cat_d.items()}
        self._cat_ori = {k: _circ(v) for k, v in cat_o.items()}
        self._rank_dist = {k: float(np.mean(v)) for k, v in rank_d.items()}
        self._rank_ori = {k: _circ(v) for k, v in rank_o.items()}
        self._global_dist = float(np.mean(pair_d)) if pair_d else None

    # -- pair lookups -------------------------------------------------------
    def dist(self, cat_a: str, cat_b: str) -> Optional[float]:
        key = pair_key(cat_a, cat_b)
        if key in self.mean_dist:
            return self.mean_dist[key]
        fallbacks = [self._cat_dist[c] for c in (cat_a, cat_b) if c in self._cat_dist]
        if fallbacks:
            return float(np.mean(fallbacks))
        return self._global_dist

    def ori(self, cat_a: str, cat_b: str) -> Optional[float]:
        """Mean of wrap(yaw_a - yaw_b)."""
        key = pair_key(cat_a, cat_b)
        if key in self.mean_ori:
            t = self.mean_ori[key]
            return t if (cat_a, cat_b) == tuple(sorted((cat_a, cat_b))) else wrap_angle(-t)
        if cat_a in self._cat_ori:
            return self._cat_ori[cat_a]
        if cat_b in self._cat_ori:
            return wrap_angle(-self._cat_ori[cat_b])
        return None

    # -- wall lookups -------------------------------------------------------
    def wall_dist(self, category: str, rank: int) -> Optional[float]:
        key = wall_key(category, rank)
        if key in self.mean_dist:
            return self.mean_dist[key]
        return self._rank_dist.get(f"{WALL_KEY}#{rank}")

    def wall_ori(self, category: str, rank: int) -> Optional[float]:
        key = wall_key(category, rank)
        if key in self.mean_ori:
            return self.mean_ori[key]
        return self._rank_ori.get(f"{WALL_KEY}#{rank}")

    def faces(self, f_cat: str, o_cat: str) -> Optional[Tuple[float, float, float, float]]:
        return self.support_face_dist.get(f"{f_cat}|{o_cat}")

    def support_yaw(self, f_cat: str, o_cat: str) -> Optional[float]:
        """Mean of wrap(yaw_o - yaw_f) for objects resting on `f_cat`."""
        return self.support_ori.get(f"{f_cat}|{o_cat}")

    def to_dict(self) -> dict:
        return {
            "mean_dist": dict(sorted(self.mean_dist.items())),
            "mean_ori": dict(sorted(self.mean_ori.items())),
            "support_face_dist": {k: list(v) for k, v in sorted(self.support_face_dist.items())},
            "support_ori": dict(sorted(self.support_ori.items())),
            "d_acc": self.d_acc,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationStats":
        return cls(
            mean_dist={k: float(v) for k, v in data.get("mean_dist", {}).items()},
            mean_ori={k: float(v) for k, v in data.get("mean_ori", {}).items()},
            support_face_dist={k: tuple(float(x) for x in v) for k, v in data.get("support_face_dist", {}).items()},
            support_ori={k: float(v) for k, v in data.get("support_ori", {}).items()},
            d_acc=float(data.get("d_acc", 0.8)),
        )


def _circ(values: List[float]) -> float:
    return wrap_angle(float(circmean(values, high=math.pi, low=-math.pi)))


@dataclass
class EnergyBreakdown:
    tree_energy: float
    wall_energy: float
    furniture_energy: float
    support_energy: float
    group_energy: float
    total: float
    beta: float = 1.0

    @property
    def relational(self) -> float:
        return self.total - self.tree_energy

    @property
    def tempered(self) -> float:
        """Total scaled by the tidiness exponent used in acceptance."""
        return self.beta * self.total

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------

@dataclass
class TrainingObject:
    id: str
    category: str
    position: Vec3
    yaw: float
    size: Vec3
    support_parent: Optional[str] = None
    support_given: bool = True     # False: discover the parent geometrically

    def __post_init__(self):
        self.position = tuple(float(v) for v in self.position)
        self.size = tuple(float(v) for v in self.size)
        self.yaw = wrap_angle(float(self.yaw))
        if min(self.size) <= 0:
            raise ValueError(f"training object {self.id} needs a positive size")


@dataclass
class TrainingScene:
    room_type: str
    room_dims: Vec3
    objects: List[TrainingObject] = field(default_factory=list)
    scene_id: str = ""

    def __post_init__(self):
        self.room_dims = tuple(float(v) for v in self.room_dims)
        if len(self.room_dims) != 3 or min(self.room_dims) <= 0:
            raise ValueError(f"scene {self.scene_id}: room dims must be positive, got {self.room_dims}")
        ids = {o.id for o in self.objects}
        for o in self.objects:
            if o.support_parent is not None and o.support_parent not in ids:
                raise ValueError(f"scene {self.scene_id}: object {o.id} references unknown parent {o.support_parent}")

    @property
    def room(self) -> Room:
        return Room(*self.room_dims)


@dataclass
class SufficientStats:
    """Count tables and raw sample lists accumulated over training scenes."""
    n_scenes: int = 0
    or_counts: Dict[str, List[int]] = field(default_factory=dict)
    set_counts: Dict[str, Dict[str, Dict[int, int]]] = field(default_factory=dict)
    address_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    sizes: Dict[str, List[Vec3]] = field(default_factory=dict)
    room_dims: List[Vec3] = field(default_factory=list)
    pair_dist: Dict[str, List[float]] = field(default_factory=dict)
    pair_ori: Dict[str, List[float]] = field(default_factory=dict)
    wall_dist: Dict[str, List[float]] = field(default_factory=dict)
    wall_ori: Dict[str, List[float]] = field(default_factory=dict)
    face_dist: Dict[str, List[Tuple[float, float, float, float]]] = field(default_factory=dict)
    support_ori: Dict[str, List[float]] = field(default_factory=dict)
    group_counts: Dict[str, int] = field(default_factory=dict)
    unknown_categories: Dict[str, int] = field(default_factory=dict)

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        """Associative merge of two partial accumulations."""
        out = copy.deepcopy(self)
        out.n_scenes += other.n_scenes
        for node, counts in other.or_counts.items():
            mine = out.or_counts.setdefault(node, [0] * len(counts))
            out.or_counts[node] = [a + b for a, b in zip(mine, counts)]
        for node, children in other.set_counts.items():
            for child, table in children.items():
                mine = out.set_counts.setdefault(node, {}).setdefault(child, {})
                for k, c in table.items():
                    mine[k] = mine.get(k, 0) + c
        for table_name in ("address_counts",):
            for slot, table in getattr(other, table_name).items():
                mine = getattr(out, table_name).setdefault(slot, {})
                for k, c in table.items():
                    mine[k] = mine.get(k, 0) + c
        for name in ("sizes", "pair_dist", "pair_ori", "wall_dist", "wall_ori", "face_dist", "support_ori"):
            for key, values in getattr(other, name).items():
                getattr(out, name).setdefault(key, []).extend(values)
        out.room_dims.extend(other.room_dims)
        for name in ("group_counts", "unknown_categories"):
            for key, c in getattr(other, name).items():
                getattr(out, name)[key] = getattr(out, name).get(key, 0) + c
        return out


@dataclass
class CDConfig:
    eta0: float = 0.05
    decay: float = 0.01
    n_tilde: int = 1
    batch: int = 16
    iterations: int = 200
    n_model: Optional[int] = None

    def __post_init__(self):
        if self.n_model is None:
            self.n_model = self.batch
        if self.eta0 < 0 or self.decay < 0 or self.n_tilde < 1 or self.batch < 1 or self.iterations < 0 or self.n_model < 1:
            raise ValueError(f"invalid CD config: {self}")

    @classmethod
    def from_config(cls, **overrides) -> "CDConfig":
        section = dict(Config.get('LEARNING', {}))
        section.update({k: v for k, v in overrides.items() if v is not None})
        return cls(
            eta0=float(section.get('eta0', 0.05)),
            decay=float(section.get('decay', 0.01)),
            n_tilde=int(section.get('n_tilde', 1)),
            batch=int(section.get('batch', 16)),
            iterations=int(section.get('iterations', 200)),
            n_model=section.get('n_model'),
        )


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceConfig:
    w: int = 500
    s: int = 100
    eps: float = 0.2
    bins: int = 20


@dataclass
class SamplerConfig:
    beta: float = 1.0
    iter_max: int = 20000
    move_probs: Tuple[float, float, float, float] = (0.4, 0.3, 0.15, 0.15)
    sigma_pos: float = 0.2
    sigma_theta: float = math.pi / 18
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    staged: bool = True
    seed: int = 0
    debug_check_every: int = 0

    def __post_init__(self):
        self.move_probs = tuple(float(p) for p in self.move_probs)
        if len(self.move_probs) != 4 or any(p < 0 for p in self.move_probs) or abs(sum(self.move_probs) - 1.0) > 1e-9:
            raise ValueError(f"move_probs must be 4 probabilities summing to 1, got {self.move_probs}")
        if self.beta < 0 or self.iter_max < 0 or self.sigma_pos < 0 or self.sigma_theta < 0:
            raise ValueError(f"invalid sampler config: {self}")

    @classmethod
    def from_config(cls, **overrides) -> "SamplerConfig":
        section = dict(Config.get('SAMPLER', {}))
        section.update({k: v for k, v in overrides.items() if v is not None})
        conv = section.get('convergence', {}) or {}
        return cls(
            beta=float(section.get('beta', 1.0)),
            iter_max=int(section.get('iter_max', 20000)),
            move_probs=tuple(section.get('move_probs', (0.4, 0.3, 0.15, 0.15))),
            sigma_pos=float(section.get('sigma_pos', 0.2)),
            sigma_theta=float(section.get('sigma_theta', math.pi / 18)),
            convergence=ConvergenceConfig(
                w=int(conv.get('w', 500)), s=int(conv.get('s', 100)),
                eps=float(conv.get('eps', 0.2)), bins=int(conv.get('bins', 20)),
            ),
            staged=bool(section.get('staged', True)),
            seed=int(section.get('seed', 0)),
            debug_check_every=int(section.get('debug_check_every', 0)),
        )


@dataclass
class TraceRecord:
    step: int
    move: str
    delta: float
    accepted: bool
    energy: float
    stage: int = 0


@dataclass
class ChainTrace:
    records: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    stage_converged: Dict[int, bool] = field(default_factory=dict)

    @property
    def energies(self) -> List[float]:
        return [r.energy for r in self.records]

    @property
    def acceptance_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.accepted for r in self.records) / len(self.records)


# ---------------------------------------------------------------------------
# Scene instantiation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    model_id: str
    category: str
    native_dims: Vec3
    mesh_ref: Optional[str] = None
    front_yaw_offset: float = 0.0

    def __post_init__(self):
        if len(self.native_dims) != 3 or min(self.native_dims) <= 0:
            raise ValueError(f"catalog model {self.model_id}: native dims must be positive")


@dataclass
class ModelCatalog:
    entries: List[CatalogEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.model_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("catalog model ids must be unique")

    def for_category(self, category: str) -> List[CatalogEntry]:
        return [e for e in self.entries if e.category == category]

    def get(self, model_id: str) -> CatalogEntry:
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(model_id)

    @property
    def categories(self) -> List[str]:
        return sorted({e.category for e in self.entries})


@dataclass
class PlacedObject:
    instance_id: int
    model_id: str
    category: str
    position: Vec3            # bottom-center (m)
    yaw: float                # model yaw (layout yaw + front offset)
    box_yaw: float            # layout yaw, orientation of the proxy box
    size: Vec3                # scaled bounding box (m)
    scale: Vec3               # s_l, s_w, s_h
    support_parent: Optional[int] = None
    mesh_ref: Optional[str] = None

    @property
    def top(self) -> float:
        return self.position[2] + self.size[2]


@dataclass
class RoomShell:
    width: float
    depth: float
    height: float
    quads: List[dict] = field(default_factory=list)      # {name, instance_id, label, corners}


@dataclass
class Light:
    position: Vec3
    intensity: float
    color: Vec3


@dataclass
class Material:
    roughness: float
    metallic: float
    reflectivity: float
    texture: str


@dataclass
class CameraSpec:
    position: Vec3
    look_at: Vec3
    up: Vec3 = (0.0, 0.0, 1.0)
    width: int = 320
    height: int = 240
    fx: float = 277.0
    fy: float = 277.0
    cx: float = 160.0
    cy: float = 120.0
    near: float = 0.01

    def __post_init__(self):
        self.position = tuple(float(v) for v in self.position)
        self.look_at = tuple(float(v) for v in self.look_at)
        self.up = tuple(float(v) for v in self.up)
        if self.width < 1 or self.height < 1:
            raise ValueError("camera width/height must be >= 1")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("camera focal lengths must be positive")
        if self.position == self.look_at:
            raise ValueError("camera position and look_at coincide")
        if not self.near > 0:
            raise ValueError("near clip must be positive")


@dataclass
class AttributeConfig:
    lights: List[Light] = field(default_factory=list)
    materials: Dict[str, Material] = field(default_factory=dict)    # key "instance_id:part"
    cameras: List[CameraSpec] = field(default_factory=list)


@dataclass
class SceneLayout:
    room: RoomShell
    placed: List[PlacedObject] = field(default_factory=list)
    attributes: AttributeConfig = field(default_factory=AttributeConfig)
    label_table: Dict[str, int] = field(default_factory=dict)

    def get(self, instance_id: int) -> PlacedObject:
        for p in self.placed:
            if p.instance_id == instance_id:
                return p
        raise KeyError(instance_id)


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

@dataclass
class GroundTruthFrame:
    depth: np.ndarray       # (H, W) float64, camera-space z, 0 = miss
    normal: np.ndarray      # (H, W, 3) world-space unit normals, 0 = miss
    instance: np.ndarray    # (H, W) uint16
    semantic: np.ndarray    # (H, W) uint16


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    grammar_path: Optional[str] = None      # skeleton (learn) or bundle (sample)
    scenes_path: Optional[str] = None
    catalog_path: Optional[str] = None
    output_dir: str = "output"
    bundle_path: Optional[str] = None       # pre-learned bundle, skips learning
    n: int = 1
    learning: CDConfig = field(default_factory=CDConfig)
    sampling: SamplerConfig = field(default_factory=SamplerConfig)
    attribute_ranges: dict = field(default_factory=dict)
    cameras: List[CameraSpec] = field(default_factory=list)
    channels: Tuple[str, ...] = ("depth", "normal", "instance", "semantic")

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("scene count n must be >= 1")
