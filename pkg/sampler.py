"""
Metropolis-Hastings sampling of scene configurations from the learned prior.

Four dynamics: translate (q1), rotate (q2), swap two furniture poses (q3),
re-address a supported object (q4). Proposals are applied in place and
reverted on rejection; the energy cache follows the incremental deltas.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from constants import NIL, Emojis
from data_models import ChainTrace, ConvergenceConfig, ObjectInstance, ParseGraph, SamplerConfig, TraceRecord
from energy import local_energy, total_energy
from errors import SamplerError
from geometry import to_world, wrap_angle
from grammar import SAOG, collect_cliques, derive_parse_tree, inverse_cdf
from logger import logger

MOVE_KINDS = ("translate", "rotate", "swap", "support_swap")
ADDRESS_RETRIES = 10
DEBUG_TOL = 1e-9

_POSE_FIELDS = ("position", "yaw", "address", "local_offset", "rel_yaw")


# ---------------------------------------------------------------------------
# Seating
# ---------------------------------------------------------------------------

def surface_offset(parent: ObjectInstance, u_x: float, u_y: float) -> Tuple[float, float]:
    """Offset in the parent's (length, width) frame for surface coordinates in [0,1]^2; (0.5, 0.5) = centered."""
    return ((u_y - 0.5) * parent.size[0], (u_x - 0.5) * parent.size[1])


def seat(obj: ObjectInstance, parent: ObjectInstance):
    """Recompute a supported object's world pose from its parent."""
    x, y = to_world(parent.xy, parent.yaw, obj.local_offset)
    obj.position = (x, y, parent.top)
    obj.yaw = wrap_angle(parent.yaw + obj.rel_yaw)


def reseat_descendants(pg: ParseGraph, obj_id: int):
    objects = pg.object_map()
    frontier = [obj_id]
    while frontier:
        nxt = []
        for o in pg.objects:
            if o.address in frontier and o.is_placed:
                seat(o, objects[o.address])
                nxt.append(o.id)
        frontier = nxt


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _place_on_floor(obj: ObjectInstance, pg: ParseGraph, rng: np.random.Generator):
    x = rng.uniform(0.0, pg.room.width)
    y = rng.uniform(0.0, pg.room.depth)
    obj.address = None
    obj.local_offset = None
    obj.rel_yaw = 0.0
    obj.position = (x, y, 0.0)


def _choose_address(obj: ObjectInstance, pg: ParseGraph, grammar: SAOG,
                    rng: np.random.Generator) -> Optional[ObjectInstance]:
    prior = grammar.address_priors[obj.address_slot]
    keys = list(prior)
    probs = [prior[k] for k in keys]
    for _ in range(ADDRESS_RETRIES):
        category = keys[inverse_cdf(probs, rng.random())]
        if category == NIL:
            return None
        candidates = [o for o in pg.objects if o.category == category and o.is_placed and o.id != obj.id]
        if candidates:
            return candidates[int(rng.integers(len(candidates)))]
    logger.debug(f"{Emojis.DICE} object {obj.id} ({obj.category}): no present parent after {ADDRESS_RETRIES} tries, on floor")
    return None


def init_layout(pg: ParseGraph, grammar: SAOG, rng: np.random.Generator,
                ids: Optional[Iterable[int]] = None) -> ParseGraph:
    """
    Place the given objects (default all): furniture uniformly in the room with
    uniform yaw, supported objects on a parent drawn from their address prior.
    """
    wanted = None if ids is None else set(ids)
    targets = [o for o in pg.objects if wanted is None or o.id in wanted]
    furniture = [o for o in targets if not o.is_supported_kind]
    supported = [o for o in targets if o.is_supported_kind]

    for obj in furniture:
        _place_on_floor(obj, pg, rng)
        obj.yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
    for obj in supported:
        parent = _choose_address(obj, pg, grammar, rng)
        if parent is None:
            _place_on_floor(obj, pg, rng)
            obj.yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
            continue
        u_x, u_y = rng.random(2)
        obj.address = parent.id
        obj.local_offset = surface_offset(parent, u_x, u_y)
        obj.rel_yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
        seat(obj, parent)

    pg.cliques = collect_cliques(pg, grammar)
    pg.energy_cache = total_energy(pg, grammar).total
    return pg


# ---------------------------------------------------------------------------
# Proposals
# ---------------------------------------------------------------------------

@dataclass
class Proposal:
    kind: str
    changes: Dict[int, Dict[str, Any]] = field(default_factory=dict)
    structural: bool = False
    _snapshot: Dict[int, Tuple] = field(default_factory=dict, repr=False)

    def affected(self, pg: ParseGraph) -> List[int]:
        ids = list(self.changes)
        for obj_id in self.changes:
            ids.extend(d.id for d in pg.descendants(obj_id) if d.id not in ids)
        return ids

    def apply(self, pg: ParseGraph) -> List[int]:
        ids = self.affected(pg)
        objects = pg.object_map()
        self._snapshot = {i: tuple(getattr(objects[i], f) for f in _POSE_FIELDS) for i in ids}
        for obj_id, attrs in self.changes.items():
            obj = objects[obj_id]
            for name, value in attrs.items():
                setattr(obj, name, value)
            if obj.address is not None:
                seat(obj, objects[obj.address])
        for obj_id in self.changes:
            reseat_descendants(pg, obj_id)
        return ids

    def revert(self, pg: ParseGraph):
        objects = pg.object_map()
        for obj_id, values in self._snapshot.items():
            for name, value in zip(_POSE_FIELDS, values):
                setattr(objects[obj_id], name, value)

    def leaves_room(self, pg: ParseGraph) -> bool:
        objects = pg.object_map()
        return any(objects[i].address is None and not pg.room.contains(objects[i].xy) for i in self.changes)


def _candidates(pg: ParseGraph, active: Optional[Set[int]], predicate) -> List[ObjectInstance]:
    return [o for o in pg.objects if o.is_placed and (active is None or o.id in active) and predicate(o)]


def propose_translate(pg: ParseGraph, rng: np.random.Generator, sigma_pos: float,
                      active: Optional[Set[int]] = None) -> Optional[Proposal]:
    pool = _candidates(pg, active, lambda o: o.address is None)
    if not pool:
        return None
    obj = pool[int(rng.integers(len(pool)))]
    dx, dy = rng.normal(0.0, sigma_pos, size=2)
    x, y, z = obj.position
    return Proposal("translate", {obj.id: {"position": (x + float(dx), y + float(dy), z)}})


def propose_rotate(pg: ParseGraph, rng: np.random.Generator, sigma_theta: float,
                   active: Optional[Set[int]] = None) -> Optional[Proposal]:
    pool = _candidates(pg, active, lambda o: True)
    if not pool:
        return None
    obj = pool[int(rng.integers(len(pool)))]
    delta = float(rng.normal(0.0, sigma_theta))
    if obj.address is not None:
        return Proposal("rotate", {obj.id: {"rel_yaw": wrap_angle(obj.rel_yaw + delta)}})
    return Proposal("rotate", {obj.id: {"yaw": wrap_angle(obj.yaw + delta)}})


def propose_swap(pg: ParseGraph, rng: np.random.Generator,
                 active: Optional[Set[int]] = None) -> Optional[Proposal]:
    pool = _candidates(pg, active, lambda o: not o.is_supported_kind)
    if len(pool) < 2:
        return None
    i, j = rng.choice(len(pool), size=2, replace=False)
    a, b = pool[int(i)], pool[int(j)]
    return Proposal("swap", {
        a.id: {"position": b.position, "yaw": b.yaw},
        b.id: {"position": a.position, "yaw": a.yaw},
    })


def propose_support_swap(pg: ParseGraph, grammar: SAOG, rng: np.random.Generator,
                         active: Optional[Set[int]] = None) -> Optional[Proposal]:
    pool = _candidates(pg, active, lambda o: o.is_supported_kind)
    if not pool:
        return None
    obj = pool[int(rng.integers(len(pool)))]
    prior = grammar.address_priors[obj.address_slot]
    excluded = {obj.id} | {d.id for d in pg.descendants(obj.id)}
    present = [o for o in pg.objects if o.is_placed and o.id not in excluded]

    options, weights = [], []
    for category, p in prior.items():
        if category == NIL or any(o.category == category for o in present):
            options.append(category)
            weights.append(p)
    total = sum(weights)
    choice = options[inverse_cdf([w / total for w in weights], rng.random())] if total > 0 else NIL

    if choice == NIL:
        x = rng.uniform(0.0, pg.room.width)
        y = rng.uniform(0.0, pg.room.depth)
        return Proposal("support_swap", {obj.id: {
            "address": None, "local_offset": None, "rel_yaw": 0.0, "position": (x, y, 0.0),
        }}, structural=True)

    parents = [o for o in present if o.category == choice]
    parent = parents[int(rng.integers(len(parents)))]
    u_x, u_y = rng.random(2)
    return Proposal("support_swap", {obj.id: {
        "address": parent.id,
        "local_offset": surface_offset(parent, u_x, u_y),
        "rel_yaw": wrap_angle(obj.yaw - parent.yaw),
    }}, structural=True)


# ---------------------------------------------------------------------------
# Metropolis-Hastings
# ---------------------------------------------------------------------------

def _propose(kind: str, pg: ParseGraph, grammar: SAOG, cfg: SamplerConfig,
             rng: np.random.Generator, active: Optional[Set[int]]) -> Optional[Proposal]:
    proposal = None
    if kind == "rotate":
        proposal = propose_rotate(pg, rng, cfg.sigma_theta, active)
    elif kind == "swap":
        proposal = propose_swap(pg, rng, active)
    elif kind == "support_swap":
        proposal = propose_support_swap(pg, grammar, rng, active)
    if proposal is None:
        proposal = propose_translate(pg, rng, cfg.sigma_pos, active)
    return proposal


def _step(pg: ParseGraph, grammar: SAOG, cfg: SamplerConfig, rng: np.random.Generator,
          active: Optional[Set[int]] = None) -> Tuple[str, bool, float]:
    kind = MOVE_KINDS[inverse_cdf(cfg.move_probs, rng.random())]
    proposal = _propose(kind, pg, grammar, cfg, rng, active)
    if proposal is None:
        rng.random()
        return ("noop", True, 0.0)

    affected = proposal.affected(pg)
    before = local_energy(pg, grammar, affected)
    proposal.apply(pg)
    if proposal.structural:
        pg.cliques = collect_cliques(pg, grammar)
    if proposal.leaves_room(pg):
        delta = math.inf
    else:
        delta = float(local_energy(pg, grammar, affected) - before)

    u = rng.random()
    accepted = bool(delta <= 0 or (math.isfinite(delta) and u < math.exp(-cfg.beta * delta)))
    if accepted:
        pg.energy_cache += delta
    else:
        proposal.revert(pg)
        if proposal.structural:
            pg.cliques = collect_cliques(pg, grammar)
    return (proposal.kind, accepted, delta)


def mh_step(pg: ParseGraph, grammar: SAOG, cfg: SamplerConfig, rng: np.random.Generator,
            active: Optional[Set[int]] = None) -> Tuple[ParseGraph, bool, float]:
    """One MH step; acceptance u < min(1, exp(-beta * dE)), dE = +inf when a center leaves the room."""
    if pg.energy_cache is None:
        pg.energy_cache = total_energy(pg, grammar).total
    _, accepted, delta = _step(pg, grammar, cfg, rng, active)
    return pg, accepted, delta


def has_converged(history, conv: ConvergenceConfig) -> bool:
    """L1 distance between normalized histograms of the last w energies and the w energies s steps earlier."""
    if len(history) < conv.w + conv.s:
        return False
    recent = np.asarray(history[-conv.w:], dtype=float)
    earlier = np.asarray(history[-(conv.w + conv.s):-conv.s], dtype=float)
    lo = min(recent.min(), earlier.min())
    hi = max(recent.max(), earlier.max())
    if hi <= lo:
        return True
    h_recent, _ = np.histogram(recent, bins=conv.bins, range=(lo, hi))
    h_earlier, _ = np.histogram(earlier, bins=conv.bins, range=(lo, hi))
    l1 = np.abs(h_recent / conv.w - h_earlier / conv.w).sum()
    return bool(l1 < conv.eps)


def _check_cache(pg: ParseGraph, grammar: SAOG, step: int):
    full = total_energy(pg, grammar).total
    if abs(full - pg.energy_cache) > DEBUG_TOL:
        raise SamplerError(f"energy cache drifted at step {step}: cached {pg.energy_cache!r}, recomputed {full!r}")
    pg.energy_cache = full


def _run_chain(pg: ParseGraph, grammar: SAOG, cfg: SamplerConfig, rng: np.random.Generator,
               trace: ChainTrace, active: Optional[Set[int]] = None, stage: int = 0) -> bool:
    history: List[float] = []
    for step in range(cfg.iter_max):
        kind, accepted, delta = _step(pg, grammar, cfg, rng, active)
        history.append(pg.energy_cache)
        trace.records.append(TraceRecord(len(trace.records), kind, delta, accepted, pg.energy_cache, stage))
        if cfg.debug_check_every and (step + 1) % cfg.debug_check_every == 0:
            _check_cache(pg, grammar, step + 1)
        if has_converged(history, cfg.convergence):
            return True
    return False


def sample_scene(grammar: SAOG, cfg: SamplerConfig, rng: np.random.Generator) -> Tuple[ParseGraph, ChainTrace]:
    pg = derive_parse_tree(grammar, rng)
    init_layout(pg, grammar, rng)
    trace = ChainTrace()
    trace.converged = _run_chain(pg, grammar, cfg, rng, trace)
    if not trace.converged:
        logger.info(f"{Emojis.WARN} chain hit iter_max={cfg.iter_max} without converging")
    return pg, trace


def staged_sample(grammar: SAOG, cfg: SamplerConfig, rng: np.random.Generator) -> Tuple[ParseGraph, ChainTrace]:
    """
    Five passes (1 wall-mounted, 2 core functional, 3 associated, 4 unpaired,
    5 supported). Each pass places its own objects and moves only those;
    earlier stages stay frozen and later stages stay unplaced.
    """
    pg = derive_parse_tree(grammar, rng)
    trace = ChainTrace()
    for stage in range(1, 6):
        ids = [o.id for o in pg.objects if o.stage == stage]
        if not ids:
            logger.debug(f"{Emojis.DICE} stage {stage} empty, skipped")
            continue
        init_layout(pg, grammar, rng, ids=ids)
        trace.stage_converged[stage] = _run_chain(pg, grammar, cfg, rng, trace, active=set(ids), stage=stage)
        logger.debug(f"{Emojis.DICE} stage {stage}: {len(ids)} objects, converged={trace.stage_converged[stage]}")
    trace.converged = all(trace.stage_converged.values())
    if not pg.objects:
        pg.cliques = collect_cliques(pg, grammar)
        pg.energy_cache = total_energy(pg, grammar).total
    return pg, trace


def run_chain(grammar: SAOG, cfg: SamplerConfig, seed: int) -> Tuple[ParseGraph, ChainTrace]:
    """Seeded entry point used by the CLI and learning harnesses."""
    rng = np.random.default_rng(seed)
    sampler = staged_sample if cfg.staged else sample_scene
    return sampler(grammar, cfg, rng)
