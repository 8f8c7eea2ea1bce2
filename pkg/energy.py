"""
Cost functions, clique potentials and total Gibbs energy of a parse graph.

All energies are -ln(potential) up to the never-computed log partition
function. The relational energy is linear in the 8 potential weights:

    E_rel = weights . loss_vector(pg)

with the loss layout [w_con, w_wall, c_occ, o_pos, o_ori, o_add, g_dis, g_ori].
"""

import math
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from constants import DENSITY_FLOOR, NIL
from data_models import (
    CliqueSet, EnergyBreakdown, ObjectInstance, ParseGraph, RelationStats, Wall,
)
from errors import EnergyError
from geometry import footprint_polygon, planar_gap, to_local, wrap_angle

Entity = Union[ObjectInstance, Wall]


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------

def _heading(x: Entity) -> float:
    return x.heading if isinstance(x, Wall) else x.yaw


def relative_yaw(a: Entity, b: Entity) -> float:
    return wrap_angle(_heading(a) - _heading(b))


def distance(a: Entity, b: Entity) -> float:
    """Center-to-center for object pairs, center to wall line otherwise."""
    if isinstance(b, Wall):
        return b.distance(a.xy)
    if isinstance(a, Wall):
        return a.distance(b.xy)
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


def _wall_side(a: Entity, b: Entity) -> Tuple[Optional[ObjectInstance], Optional[Wall]]:
    if isinstance(b, Wall):
        return a, b
    if isinstance(a, Wall):
        return b, a
    return None, None


def cost_dis(a: Entity, b: Entity, stats: RelationStats, wall_rank: int = 0) -> float:
    """|d(a,b) - mean|; `wall_rank` picks the mean for object/wall pairs."""
    obj, wall = _wall_side(a, b)
    if wall is not None:
        mean = stats.wall_dist(obj.category, wall_rank)
    else:
        mean = stats.dist(a.category, b.category)
    if mean is None:
        return 0.0
    return abs(distance(a, b) - mean)


def cost_ori(a: Entity, b: Entity, stats: RelationStats, wall_rank: int = 0) -> float:
    obj, wall = _wall_side(a, b)
    if wall is not None:
        mean = stats.wall_ori(obj.category, wall_rank)
        theta = relative_yaw(obj, wall)
    else:
        mean = stats.ori(a.category, b.category)
        theta = relative_yaw(a, b)
    if mean is None:
        return 0.0
    return abs(wrap_angle(theta - mean))


def cost_occ(f_i: ObjectInstance, f_j: ObjectInstance, d_acc: float) -> float:
    gap = planar_gap(
        footprint_polygon(f_i.xy, f_i.yaw, f_i.size[0], f_i.size[1]),
        footprint_polygon(f_j.xy, f_j.yaw, f_j.size[0], f_j.size[1]),
    )
    return max(0.0, 1.0 - gap / d_acc)


def face_distances(f: ObjectInstance, o: ObjectInstance) -> Tuple[float, float, float, float]:
    """Signed distances from o's center to f's faces (+length, -length, +width, -width)."""
    lx, ly = to_local(f.xy, f.yaw, o.xy)
    hl, hw = 0.5 * f.size[0], 0.5 * f.size[1]
    return (hl - lx, lx + hl, hw - ly, ly + hw)


def cost_pos(f: ObjectInstance, o: ObjectInstance, stats: RelationStats) -> float:
    means = stats.faces(f.category, o.category)
    if means is None:
        hl, hw = 0.5 * f.size[0], 0.5 * f.size[1]
        means = (hl, hl, hw, hw)
    return sum(abs(d - m) for d, m in zip(face_distances(f, o), means))


def cost_support_ori(f: ObjectInstance, o: ObjectInstance, stats: RelationStats) -> float:
    mean = stats.support_yaw(f.category, o.category)
    if mean is None:
        return 0.0
    return abs(wrap_angle(wrap_angle(o.yaw - f.yaw) - mean))


def cost_add(value: str, prior: Dict[str, float]) -> float:
    if value not in prior:
        raise EnergyError(f"address value '{value}' outside prior support {sorted(prior)}")
    return -math.log(max(prior[value], DENSITY_FLOOR))


# ---------------------------------------------------------------------------
# Clique losses and energies
# ---------------------------------------------------------------------------

def wall_losses(f: ObjectInstance, walls: Sequence[Wall], stats: RelationStats) -> Tuple[float, float]:
    """(sum of wall-consistency losses, sum of distance + orientation losses) over ranked walls."""
    ranked = sorted(walls, key=lambda w: (w.distance(f.xy), w.id))
    total = 0.0
    for rank, wall in enumerate(ranked):
        total += cost_dis(f, wall, stats, rank) + cost_ori(f, wall, stats, rank)
    return (0.0, total)


def support_losses(parent: Optional[ObjectInstance], o: ObjectInstance, slot: str,
                   priors: Dict[str, Dict[str, float]], stats: RelationStats) -> Tuple[float, float, float]:
    prior = priors.get(slot)
    if prior is None:
        raise EnergyError(f"object {o.id} refers to unknown address slot '{slot}'")
    if parent is None:
        return (0.0, 0.0, cost_add(NIL, prior))
    return (cost_pos(parent, o, stats), cost_support_ori(parent, o, stats), cost_add(parent.category, prior))


def group_losses(pairs: Iterable[Tuple[int, int]], objects: Dict[int, ObjectInstance],
                 stats: RelationStats) -> Tuple[float, float]:
    dis = ori = 0.0
    for a, b in pairs:
        fa, fb = objects[a], objects[b]
        dis += cost_dis(fa, fb, stats)
        ori += cost_ori(fa, fb, stats)
    return (dis, ori)


def clique_energy_wall(pg: ParseGraph, clique, stats: RelationStats, lambda_w: Sequence[float]) -> float:
    f = pg.get(clique[0])
    walls = [w for w in pg.walls if w.id in clique[1]]
    l_con, l_wall = wall_losses(f, walls, stats)
    return lambda_w[0] * l_con + lambda_w[1] * l_wall


def clique_energy_furniture(pg: ParseGraph, clique, stats: RelationStats, lambda_c: float) -> float:
    return lambda_c * cost_occ(pg.get(clique[0]), pg.get(clique[1]), stats.d_acc)


def clique_energy_support(pg: ParseGraph, clique, grammar, lambda_o: Sequence[float]) -> float:
    parent_id, slot, obj_id = clique
    parent = pg.get(parent_id) if parent_id is not None else None
    losses = support_losses(parent, pg.get(obj_id), slot, grammar.address_priors, grammar.relation_stats)
    return sum(lam * loss for lam, loss in zip(lambda_o, losses))


def clique_energy_group(pg: ParseGraph, clique, stats: RelationStats, lambda_g: Sequence[float]) -> float:
    dis, ori = group_losses(clique[1], pg.object_map(), stats)
    return lambda_g[0] * dis + lambda_g[1] * ori


# ---------------------------------------------------------------------------
# Totals
# ---------------------------------------------------------------------------

def energy_parse_tree(pg: ParseGraph, grammar) -> float:
    energy = 0.0
    for node_id, idx in pg.tree.or_choices:
        energy -= math.log(max(grammar.nodes[node_id].probs[idx], DENSITY_FLOOR))
    for node_id, child, count in pg.tree.set_counts:
        p = grammar.nodes[node_id].counts[child].get(count, 0.0)
        energy -= math.log(max(p, DENSITY_FLOOR))
    for o in pg.objects:
        energy -= math.log(max(grammar.size_models[o.category].density(o.size), DENSITY_FLOOR))
    return energy


def _relational_terms(pg: ParseGraph, grammar, cliques: CliqueSet, touching=None) -> Tuple[float, float, float, float]:
    stats = grammar.relation_stats
    w = grammar.weights
    objects = pg.object_map()
    walls = pg.walls

    def hit(*ids):
        return touching is None or any(i in touching for i in ids)

    wall_e = 0.0
    for f_id, wall_ids in cliques.wall_cliques:
        if hit(f_id):
            l_con, l_wall = wall_losses(objects[f_id], [x for x in walls if x.id in wall_ids], stats)
            wall_e += w.lambda_w[0] * l_con + w.lambda_w[1] * l_wall
    furn_e = 0.0
    for a, b in cliques.furniture_cliques:
        if hit(a, b):
            furn_e += w.lambda_c * cost_occ(objects[a], objects[b], stats.d_acc)
    supp_e = 0.0
    for parent_id, slot, obj_id in cliques.support_cliques:
        if hit(parent_id, obj_id):
            parent = objects[parent_id] if parent_id is not None else None
            losses = support_losses(parent, objects[obj_id], slot, grammar.address_priors, stats)
            supp_e += sum(lam * loss for lam, loss in zip(w.lambda_o, losses))
    group_e = 0.0
    for _, pairs in cliques.group_cliques:
        pairs = [p for p in pairs if hit(*p)]
        if pairs:
            dis, ori = group_losses(pairs, objects, stats)
            group_e += w.lambda_g[0] * dis + w.lambda_g[1] * ori
    return wall_e, furn_e, supp_e, group_e


def total_energy(pg: ParseGraph, grammar, beta: float = 1.0) -> EnergyBreakdown:
    """Tree + clique energies, summed in a fixed order. `beta` is carried for tempered totals."""
    tree_e = energy_parse_tree(pg, grammar)
    wall_e, furn_e, supp_e, group_e = _relational_terms(pg, grammar, pg.cliques)
    total = tree_e + wall_e + furn_e + supp_e + group_e
    return EnergyBreakdown(tree_e, wall_e, furn_e, supp_e, group_e, total, beta)


def local_energy(pg: ParseGraph, grammar, ids: Iterable[int]) -> float:
    """Relational energy of the cliques touching `ids` (group cliques pairwise)."""
    return sum(_relational_terms(pg, grammar, pg.cliques, touching=set(ids)))


def loss_vector(pg: ParseGraph, grammar, cliques: Optional[CliqueSet] = None) -> np.ndarray:
    cliques = cliques or pg.cliques
    stats = grammar.relation_stats
    objects = pg.object_map()
    walls = pg.walls
    loss = np.zeros(8)
    for f_id, wall_ids in cliques.wall_cliques:
        loss[0:2] += wall_losses(objects[f_id], [x for x in walls if x.id in wall_ids], stats)
    for a, b in cliques.furniture_cliques:
        loss[2] += cost_occ(objects[a], objects[b], stats.d_acc)
    for parent_id, slot, obj_id in cliques.support_cliques:
        parent = objects[parent_id] if parent_id is not None else None
        loss[3:6] += support_losses(parent, objects[obj_id], slot, grammar.address_priors, stats)
    for _, pairs in cliques.group_cliques:
        loss[6:8] += group_losses(pairs, objects, stats)
    return loss
