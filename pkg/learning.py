"""
Parameter estimation from annotated training scenes.

collect_statistics walks every scene once, parses it against the authored
grammar skeleton (Or branches, Set multiplicities, address values) and
gathers the raw relation samples. learn_grammar turns those into branch
probabilities, size KDEs and relation means, then fits the potential
weights with contrastive divergence.
"""

import itertools
import math
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import circmean

from config import Config
from constants import NIL, Emojis
from data_models import (
    CDConfig, Node, NodeKind, ObjectInstance, ParseGraph, ParseTree, PotentialWeights,
    RelationStats, SamplerConfig, SufficientStats, TrainingScene, pair_key, wall_key,
)
from energy import face_distances, loss_vector, total_energy
from errors import LearningError
from geometry import footprint_polygon, contains_point, planar_gap, to_local, wrap_angle
from grammar import SAOG, collect_cliques
from logger import logger
from sampler import mh_step
from size_kde import fit_size_kde


# ---------------------------------------------------------------------------
# Branch probabilities
# ---------------------------------------------------------------------------

def estimate_branch_probs(counts: Sequence[float], alpha: float = 1.0) -> Tuple[float, ...]:
    """rho_i = (c_i + alpha) / sum_j (c_j + alpha)."""
    counts = [float(c) for c in counts]
    if not counts:
        raise LearningError("branch probabilities need at least one branch")
    if alpha < 0 or any(c < 0 for c in counts):
        raise LearningError("counts and alpha must be non-negative")
    denom = math.fsum(c + alpha for c in counts)
    if denom <= 0:
        raise LearningError("alpha = 0 with all-zero counts leaves the branch probabilities undefined")
    return tuple((c + alpha) / denom for c in counts)


# ---------------------------------------------------------------------------
# Discovery
# ---------------------------------------------------------------------------

def _footprint(obj):
    return footprint_polygon(obj.position[:2], obj.yaw, obj.size[0], obj.size[1])


def discover_support_relations(scene: TrainingScene, z_tol: float = 0.05) -> List[Tuple[str, str]]:
    """
    (child, parent) pairs: child bottom within z_tol of parent top and child
    center inside parent footprint. Parents must start strictly lower than the
    child, so no cycles. Ties: smallest vertical gap, then smallest footprint.
    """
    pairs = []
    for child in scene.objects:
        best = None
        for parent in scene.objects:
            if parent.id == child.id or parent.position[2] >= child.position[2]:
                continue
            top = parent.position[2] + parent.size[2]
            gap = abs(child.position[2] - top)
            if gap > z_tol:
                continue
            poly = _footprint(parent)
            if not contains_point(poly, child.position[:2]):
                continue
            key = (gap, poly.area, parent.id)
            if best is None or key < best[0]:
                best = (key, parent.id)
        if best is not None:
            pairs.append((child.id, best[1]))
    return pairs


def discover_groups(scene: TrainingScene, group_defs: Dict[str, Sequence[str]],
                    dist_threshold: float = 1.0) -> List[Tuple[str, str, str]]:
    """(group, id_a, id_b) for declared category pairs whose footprints are within the threshold."""
    found = []
    for name, members in group_defs.items():
        present = [o for o in scene.objects if o.category in members]
        for a, b in itertools.combinations(present, 2):
            if a.category == b.category:
                continue
            if planar_gap(_footprint(a), _footprint(b)) < dist_threshold:
                found.append((name, a.id, b.id))
    return found


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def _resolve_supports(scene: TrainingScene, z_tol: float) -> Dict[str, Optional[str]]:
    parents = {o.id: o.support_parent for o in scene.objects if o.support_given}
    unknown = [o.id for o in scene.objects if not o.support_given]
    if unknown:
        discovered = dict(discover_support_relations(scene, z_tol))
        for oid in unknown:
            parents[oid] = discovered.get(oid)
    return parents


def parse_scene_tree(scene: TrainingScene, grammar: SAOG) -> ParseTree:
    """
    Reconstruct the parse tree a scene implies. Or: the child named like the
    room type, else the child covering most scene objects. Set: instance count
    of the child's category (terminal) or the minimum count among the
    categories reached through And-nodes (non-terminal).
    """
    counts: Dict[str, int] = {}
    for o in scene.objects:
        counts[o.category] = counts.get(o.category, 0) + 1
    tree = ParseTree()

    def coverage(nid):
        cats = grammar.reachable_categories(nid)
        return sum(c for cat, c in counts.items() if cat in cats)

    def and_categories(nid):
        node = grammar.nodes[nid]
        if node.kind == NodeKind.TERMINAL:
            return [node.category]
        if node.kind == NodeKind.AND:
            return [cat for child in node.children for cat in and_categories(child)]
        return []

    def multiplicity(nid):
        node = grammar.nodes[nid]
        if node.kind == NodeKind.TERMINAL:
            return counts.get(node.category, 0)
        cats = and_categories(nid)
        if cats:
            return min(counts.get(c, 0) for c in cats)
        return 1 if coverage(nid) > 0 else 0

    def walk(nid):
        node = grammar.nodes[nid]
        if node.kind == NodeKind.AND:
            for child in node.children:
                walk(child)
        elif node.kind == NodeKind.OR:
            if scene.room_type in node.children:
                idx = node.children.index(scene.room_type)
            else:
                scores = [coverage(c) for c in node.children]
                idx = scores.index(max(scores))
            tree.or_choices.append((nid, idx))
            walk(node.children[idx])
        elif node.kind == NodeKind.SET:
            for child in node.children:
                k = multiplicity(child)
                tree.set_counts.append((nid, child, k))
                if k > 0:
                    walk(child)

    walk(grammar.root)
    return tree


def _scene_statistics(scene: TrainingScene, grammar: SAOG, z_tol: float, group_dist: float) -> SufficientStats:
    stats = SufficientStats(n_scenes=1)
    known = set(grammar.categories)
    kept = []
    for o in scene.objects:
        if o.category in known:
            kept.append(o)
        else:
            stats.unknown_categories[o.category] = stats.unknown_categories.get(o.category, 0) + 1
    kept_ids = {o.id for o in kept}
    # objects resting on a skipped parent fall back to geometric discovery
    kept = [o if o.support_parent is None or o.support_parent in kept_ids
            else replace(o, support_parent=None, support_given=False) for o in kept]
    scene = TrainingScene(scene.room_type, scene.room_dims, kept, scene.scene_id)
    by_id = {o.id: o for o in scene.objects}

    tree = parse_scene_tree(scene, grammar)
    for nid, idx in tree.or_choices:
        row = stats.or_counts.setdefault(nid, [0] * len(grammar.nodes[nid].children))
        row[idx] += 1
    for nid, child, k in tree.set_counts:
        table = stats.set_counts.setdefault(nid, {}).setdefault(child, {})
        table[k] = table.get(k, 0) + 1

    stats.room_dims.append(scene.room_dims)
    for o in scene.objects:
        stats.sizes.setdefault(o.category, []).append(o.size)

    parents = _resolve_supports(scene, z_tol)
    for o in scene.objects:
        terminal = grammar.terminal_for(o.category)
        slot = grammar.slot_of(terminal)
        if slot is None:
            continue
        parent = by_id.get(parents.get(o.id)) if parents.get(o.id) else None
        value = parent.category if parent is not None else NIL
        table = stats.address_counts.setdefault(slot, {})
        table[value] = table.get(value, 0) + 1
        if parent is not None:
            key = f"{parent.category}|{o.category}"
            fake_parent = ObjectInstance(0, parent.category, parent.size, position=parent.position, yaw=parent.yaw)
            fake_child = ObjectInstance(1, o.category, o.size, position=o.position, yaw=o.yaw)
            stats.face_dist.setdefault(key, []).append(face_distances(fake_parent, fake_child))
            stats.support_ori.setdefault(key, []).append(wrap_angle(o.yaw - parent.yaw))

    furniture = [o for o in scene.objects if not grammar.is_supported_category(o.category)]
    walls = scene.room.walls()
    for f in furniture:
        ranked = sorted(walls, key=lambda w: (w.distance(f.position[:2]), w.id))
        for rank, wall in enumerate(ranked):
            key = wall_key(f.category, rank)
            stats.wall_dist.setdefault(key, []).append(wall.distance(f.position[:2]))
            stats.wall_ori.setdefault(key, []).append(wrap_angle(f.yaw - wall.heading))

    grouped = discover_groups(scene, grammar.groups, group_dist)
    for _, a_id, b_id in grouped:
        a, b = by_id[a_id], by_id[b_id]
        if b.category < a.category:
            a, b = b, a
        key = pair_key(a.category, b.category)
        stats.pair_dist.setdefault(key, []).append(math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1]))
        stats.pair_ori.setdefault(key, []).append(wrap_angle(a.yaw - b.yaw))
    for name in sorted({g for g, _, _ in grouped}):
        stats.group_counts[name] = stats.group_counts.get(name, 0) + 1
    return stats


def collect_statistics(scenes: Sequence[TrainingScene], grammar: SAOG, z_tol: Optional[float] = None,
                       group_dist: Optional[float] = None, jobs: int = 1) -> SufficientStats:
    """Map-reduce over scenes; unknown categories are skipped and counted."""
    learning = Config.get('LEARNING', {}) or {}
    z_tol = float(learning.get('z_tol', 0.05)) if z_tol is None else z_tol
    group_dist = float(learning.get('group_dist_threshold', 1.0)) if group_dist is None else group_dist

    if jobs > 1 and len(scenes) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda s: _scene_statistics(s, grammar, z_tol, group_dist), scenes))
    else:
        parts = [_scene_statistics(s, grammar, z_tol, group_dist) for s in scenes]

    total = SufficientStats()
    for part in parts:
        total = total.merge(part)
    for category, n in sorted(total.unknown_categories.items()):
        logger.warning(f"{Emojis.WARN} unknown category '{category}' in training scenes: {n} objects skipped")
    return total


def _circular_mean(values: Sequence[float]) -> float:
    return wrap_angle(float(circmean(values, high=math.pi, low=-math.pi)))


def relation_means(stats: SufficientStats, d_acc: float) -> RelationStats:
    mean_dist = {k: float(np.mean(v)) for k, v in stats.pair_dist.items() if v}
    mean_dist.update({k: float(np.mean(v)) for k, v in stats.wall_dist.items() if v})
    mean_ori = {k: _circular_mean(v) for k, v in stats.pair_ori.items() if v}
    mean_ori.update({k: _circular_mean(v) for k, v in stats.wall_ori.items() if v})
    faces = {k: tuple(float(x) for x in np.mean(np.asarray(v), axis=0)) for k, v in stats.face_dist.items() if v}
    support_ori = {k: _circular_mean(v) for k, v in stats.support_ori.items() if v}
    return RelationStats(mean_dist=mean_dist, mean_ori=mean_ori, support_face_dist=faces,
                         support_ori=support_ori, d_acc=d_acc)


def estimate_parameters(stats: SufficientStats, skeleton: SAOG, alpha: float = 1.0,
                        d_acc: float = 0.8) -> SAOG:
    """Branch probabilities, address priors, size and room KDEs and relation means."""
    nodes = dict(skeleton.nodes)
    for nid, node in skeleton.nodes.items():
        if node.kind == NodeKind.OR:
            counts = stats.or_counts.get(nid, [0] * len(node.children))
            nodes[nid] = Node(nid, node.kind, node.children, probs=estimate_branch_probs(counts, alpha))
        elif node.kind == NodeKind.SET:
            tables = {}
            for child in node.children:
                observed = stats.set_counts.get(nid, {}).get(child, {})
                support = sorted(set(node.counts[child]) | set(observed))
                probs = estimate_branch_probs([observed.get(k, 0) for k in support], alpha)
                tables[child] = dict(zip(support, probs))
            nodes[nid] = Node(nid, node.kind, node.children, counts=tables)

    priors = {}
    for slot, prior in skeleton.address_priors.items():
        observed = stats.address_counts.get(slot, {})
        keys = sorted((set(prior) | set(observed)) - {NIL}) + [NIL]
        priors[slot] = dict(zip(keys, estimate_branch_probs([observed.get(k, 0) for k in keys], alpha)))

    size_models = dict(skeleton.size_models)
    for category in skeleton.categories:
        samples = stats.sizes.get(category)
        if samples:
            size_models[category] = fit_size_kde(samples)
        elif category not in size_models:
            raise LearningError(f"no size samples for category '{category}'")

    room_model = fit_size_kde(stats.room_dims) if stats.room_dims else skeleton.room_model
    groups = list(skeleton.groups)
    occurrence = {}
    if groups:
        probs = estimate_branch_probs([stats.group_counts.get(g, 0) for g in groups], alpha)
        occurrence = dict(zip(groups, probs))

    return skeleton.with_parameters(
        nodes=nodes, address_priors=priors, size_models=size_models, room_model=room_model,
        relation_stats=relation_means(stats, d_acc), group_occurrence=occurrence,
    )


# ---------------------------------------------------------------------------
# Contrastive divergence
# ---------------------------------------------------------------------------

def scene_to_parse_graph(scene: TrainingScene, grammar: SAOG, z_tol: float = 0.05) -> ParseGraph:
    """Observed configuration as a parse graph; unknown categories are dropped."""
    known = set(grammar.categories)
    kept = [o for o in scene.objects if o.category in known]
    parents = _resolve_supports(scene, z_tol)
    ids = {o.id: i + 1 for i, o in enumerate(kept)}

    objects = []
    for o in kept:
        terminal = grammar.terminal_for(o.category)
        slot = grammar.slot_of(terminal)
        parent_key = parents.get(o.id)
        address = ids.get(parent_key) if slot is not None and parent_key in ids else None
        objects.append(ObjectInstance(
            id=ids[o.id], category=o.category, size=o.size, terminal=terminal,
            position=o.position if address is None else None, yaw=o.yaw,
            address=address, address_slot=slot, stage=grammar.stage_of(terminal),
        ))
    by_id = {o.id: o for o in objects}
    source = {ids[o.id]: o for o in kept}
    # seat children after their parents are in place
    pending = [o for o in objects if o.address is not None]
    while pending:
        progressed = False
        for obj in list(pending):
            parent = by_id[obj.address]
            if parent.position is None:
                continue
            raw = source[obj.id]
            obj.local_offset = to_local(parent.xy, parent.yaw, raw.position[:2])
            obj.rel_yaw = wrap_angle(raw.yaw - parent.yaw)
            obj.position = (raw.position[0], raw.position[1], parent.top)
            pending.remove(obj)
            progressed = True
        if not progressed:
            raise LearningError(f"scene {scene.scene_id}: support cycle among {[o.id for o in pending]}")

    pg = ParseGraph(tree=parse_scene_tree(scene, grammar), objects=objects, room=scene.room)
    pg.cliques = collect_cliques(pg, grammar)
    return pg


def batch_losses(batch: Sequence[ParseGraph], grammar: SAOG) -> np.ndarray:
    return np.array([loss_vector(pg, grammar) for pg in batch]).reshape(-1, 8)


def cd_update(weights: PotentialWeights, data_losses: np.ndarray, model_losses: np.ndarray,
              eta: float) -> PotentialWeights:
    """lambda <- max(0, lambda + eta * (mean model loss - mean data loss))."""
    data_losses = np.atleast_2d(np.asarray(data_losses, dtype=float))
    model_losses = np.atleast_2d(np.asarray(model_losses, dtype=float))
    if data_losses.shape[0] == 0 or model_losses.shape[0] == 0:
        raise LearningError("contrastive divergence needs non-empty data and model batches")
    step = eta * (model_losses.mean(axis=0) - data_losses.mean(axis=0))
    return PotentialWeights.from_vector(np.maximum(weights.as_vector() + step, 0.0))


def learn_weights(data: Sequence[ParseGraph], grammar: SAOG, cfg: CDConfig,
                  rng: np.random.Generator, sampler_cfg: Optional[SamplerConfig] = None,
                  jobs: int = 1) -> Tuple[PotentialWeights, List[dict]]:
    """
    CD-n: model samples are n_tilde MH steps (full move set, beta = 1) from
    data configurations. Returns the final weights and one trace row per
    iteration with the L1 moment mismatch.
    """
    weights = PotentialWeights()
    trace: List[dict] = []
    if not data:
        raise LearningError("no training scenes")
    sampler_cfg = sampler_cfg or SamplerConfig.from_config(beta=1.0)

    for t in range(cfg.iterations):
        eta = cfg.eta0 / (1.0 + cfg.decay * t)
        current = grammar.with_parameters(weights=weights)
        size = min(cfg.batch, len(data))
        picks = rng.choice(len(data), size=size, replace=False)
        data_batch = [data[int(i)] for i in picks]
        seeds = rng.integers(0, 2**32, size=cfg.n_model)

        def chain(k):
            pg = data_batch[k % len(data_batch)].copy()
            pg.energy_cache = total_energy(pg, current).total
            chain_rng = np.random.default_rng(int(seeds[k]))
            for _ in range(cfg.n_tilde):
                mh_step(pg, current, sampler_cfg, chain_rng)
            return pg

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                model_batch = list(pool.map(chain, range(cfg.n_model)))
        else:
            model_batch = [chain(k) for k in range(cfg.n_model)]

        data_l = batch_losses(data_batch, current)
        model_l = batch_losses(model_batch, current)
        mismatch = float(np.abs(model_l.mean(axis=0) - data_l.mean(axis=0)).sum())
        trace.append({"iteration": t, "eta": eta, "mismatch": mismatch,
                      **{f"lambda_{i}": v for i, v in enumerate(weights.as_vector())}})
        weights = cd_update(weights, data_l, model_l, eta)
    return weights, trace


def learn_grammar(scenes: Sequence[TrainingScene], skeleton: SAOG, cfg: CDConfig,
                  rng: np.random.Generator, alpha: Optional[float] = None,
                  jobs: int = 1) -> Tuple[SAOG, List[dict], SufficientStats]:
    """Full estimation: statistics, branch probabilities, KDEs, relation means, weights."""
    if not scenes:
        raise LearningError("no training scenes")
    learning = Config.get('LEARNING', {}) or {}
    alpha = float(learning.get('alpha', 1.0)) if alpha is None else alpha
    d_acc = float(learning.get('d_acc', 0.8))
    z_tol = float(learning.get('z_tol', 0.05))

    logger.info(f"{Emojis.LEARN} collecting statistics over {len(scenes)} scenes")
    stats = collect_statistics(scenes, skeleton, z_tol=z_tol, jobs=jobs)
    grammar = estimate_parameters(stats, skeleton, alpha=alpha, d_acc=d_acc)

    data = [scene_to_parse_graph(s, grammar, z_tol) for s in scenes]
    logger.info(f"{Emojis.LEARN} contrastive divergence: {cfg.iterations} iterations, batch {cfg.batch}, n~={cfg.n_tilde}")
    weights, trace = learn_weights(data, grammar, cfg, rng, jobs=jobs)
    if trace:
        logger.info(f"{Emojis.CHART} moment mismatch {trace[0]['mismatch']:.4f} -> {trace[-1]['mismatch']:.4f}")
    return grammar.with_parameters(weights=weights), trace, stats
