"""
Attributed spatial And-Or grammar: document loading/validation, top-down
derivation of parse trees and clique collection over the derived terminals.

Grammar document (JSON):

    {
      "root": "room",
      "nodes": {
        "room":   {"kind": "and", "children": ["sleep", "extras"]},
        "extras": {"kind": "set", "children": ["chair"], "counts": {"chair": {"0": 0.5, "1": 0.5}}},
        "style":  {"kind": "or", "children": ["a", "b"], "probs": [0.7, 0.3]},
        "chair":  {"kind": "terminal", "category": "chair"},
        "lamp_on": {"kind": "address", "object": "lamp"}
      },
      "groups": {"sleep": ["bed", "nightstand"]},
      "address_slots": {"lamp_on": {"nightstand": 0.8, "nil": 0.2}},
      "stages": {"painting": 1}
    }

A learned bundle carries the same keys plus `size_models`, `relation_stats`,
`weights`, `room`, `group_occurrence`.
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from config import Config
from constants import BUNDLE_VERSION, NIL, PROB_TOL_EXACT, PROB_TOL_RENORM, Emojis
from data_models import (
    CliqueSet, Node, NodeKind, ObjectInstance, ParseGraph, ParseTree,
    PotentialWeights, RelationStats, Room,
)
from errors import GrammarError
from logger import logger
from size_kde import SizeKDE, sample_kde

TOP_LEVEL_KEYS = {
    "root", "nodes", "groups", "address_slots", "stages", "kind", "version", "description",
    "default_room", "max_objects",
    "size_models", "relation_stats", "weights", "room", "group_occurrence",
}
NODE_KEYS = {"kind", "children", "category", "probs", "counts", "object"}


@dataclass(frozen=True, eq=False)
class SAOG:
    root: str
    nodes: Dict[str, Node]
    groups: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    address_priors: Dict[str, Dict[str, float]] = field(default_factory=dict)
    stage_tags: Dict[str, int] = field(default_factory=dict)
    size_models: Dict[str, SizeKDE] = field(default_factory=dict)
    relation_stats: RelationStats = field(default_factory=RelationStats)
    weights: PotentialWeights = field(default_factory=PotentialWeights)
    room_model: Optional[SizeKDE] = None
    group_occurrence: Dict[str, float] = field(default_factory=dict)
    default_room: Tuple[float, float, float] = (4.0, 4.0, 2.8)
    max_objects: int = 256

    def __post_init__(self):
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        for node in self.nodes.values():
            for child in node.children:
                graph.add_edge(node.id, child)
        slot_of = {n.target_of: n.id for n in self.nodes.values() if n.kind == NodeKind.ADDRESS}
        object.__setattr__(self, "_graph", graph)
        object.__setattr__(self, "_slot_of", slot_of)

    # -- structure queries ---------------------------------------------------
    @property
    def graph(self) -> nx.DiGraph:
        return self._graph

    def terminals(self) -> List[Node]:
        return [n for n in self.nodes.values() if n.kind == NodeKind.TERMINAL]

    @property
    def categories(self) -> List[str]:
        return sorted({n.category for n in self.terminals()})

    def reachable_categories(self, node_id: str) -> FrozenSet[str]:
        reach = nx.descendants(self._graph, node_id) | {node_id}
        return frozenset(self.nodes[n].category for n in reach if self.nodes[n].kind == NodeKind.TERMINAL)

    def terminal_for(self, category: str) -> Optional[str]:
        for node in self.nodes.values():
            if node.kind == NodeKind.TERMINAL and node.category == category:
                return node.id
        return None

    def slot_of(self, terminal_id: str) -> Optional[str]:
        return self._slot_of.get(terminal_id)

    def is_supported_category(self, category: str) -> bool:
        terminal = self.terminal_for(category)
        return terminal is not None and self.slot_of(terminal) is not None

    def stage_of(self, terminal_id: str) -> int:
        node = self.nodes[terminal_id]
        if terminal_id in self.stage_tags:
            return self.stage_tags[terminal_id]
        if node.category in self.stage_tags:
            return self.stage_tags[node.category]
        if self.slot_of(terminal_id) is not None:
            return 5
        for members in self.groups.values():
            if node.category == members[0]:
                return 2
        for members in self.groups.values():
            if node.category in members:
                return 3
        return 4

    def with_parameters(self, **changes) -> "SAOG":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def normalize_probs(values: Sequence[float], where: str) -> Tuple[float, ...]:
    """
    Stored as-is within 1e-9 of 1, renormalized within 1e-3 (warning beyond
    1e-6), rejected otherwise.
    """
    probs = [float(v) for v in values]
    if not probs:
        raise GrammarError(f"{where}: empty probability vector")
    if any(not math.isfinite(p) or p < 0 for p in probs):
        raise GrammarError(f"{where}: probabilities must be finite and >= 0, got {probs}")
    total = math.fsum(probs)
    gap = abs(total - 1.0)
    if gap <= PROB_TOL_EXACT:
        return tuple(probs)
    if gap <= PROB_TOL_RENORM:
        if gap > 1e-6:
            logger.warning(f"{Emojis.WARN} {where}: probabilities sum to {total:.6f}, renormalizing")
        return tuple(p / total for p in probs)
    raise GrammarError(f"{where}: probabilities sum to {total}, expected 1")


def _parse_node(nid: str, spec: dict) -> Node:
    if not isinstance(spec, dict):
        raise GrammarError(f"node '{nid}' must be an object")
    unknown = set(spec) - NODE_KEYS
    if unknown:
        raise GrammarError(f"node '{nid}': unknown keys {sorted(unknown)}")
    try:
        kind = NodeKind(spec.get("kind"))
    except ValueError:
        raise GrammarError(f"node '{nid}': unknown kind {spec.get('kind')!r}")
    children = tuple(spec.get("children", []) or [])
    if len(set(children)) != len(children):
        raise GrammarError(f"node '{nid}': duplicate children")

    probs = None
    counts = None
    if kind == NodeKind.OR:
        raw = spec.get("probs")
        if raw is None:
            raw = [1.0 / len(children)] * len(children) if children else []
        if len(raw) != len(children):
            raise GrammarError(f"or-node '{nid}': {len(raw)} probs for {len(children)} children")
        probs = normalize_probs(raw, f"or-node '{nid}'")
    elif kind == NodeKind.SET:
        raw = spec.get("counts") or {}
        missing = [c for c in children if c not in raw]
        extra = [c for c in raw if c not in children]
        if missing or extra:
            raise GrammarError(f"set-node '{nid}': count tables missing {missing} / unexpected {extra}")
        counts = {}
        for child in children:
            table = raw[child]
            try:
                ks = [int(k) for k in table]
            except (TypeError, ValueError):
                raise GrammarError(f"set-node '{nid}': count keys for '{child}' must be integers")
            if any(k < 0 for k in ks):
                raise GrammarError(f"set-node '{nid}': negative multiplicity for '{child}'")
            ps = normalize_probs(list(table.values()), f"set-node '{nid}' child '{child}'")
            counts[child] = dict(sorted(zip(ks, ps)))

    try:
        return Node(id=nid, kind=kind, children=children, category=spec.get("category"),
                    probs=probs, counts=counts, target_of=spec.get("object"))
    except ValueError as e:
        raise GrammarError(str(e))


def build_grammar(doc: dict, require_sizes: bool = True) -> SAOG:
    """
    Validate a grammar document and materialize the SAOG.

    `require_sizes=False` accepts an authored skeleton without size models
    (the input to learning).
    """
    if not isinstance(doc, dict):
        raise GrammarError("grammar document must be a JSON object")
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise GrammarError(f"unknown grammar keys {sorted(unknown)}")
    if "root" not in doc or "nodes" not in doc:
        raise GrammarError("grammar document needs 'root' and 'nodes'")

    nodes = {nid: _parse_node(nid, spec) for nid, spec in (doc["nodes"] or {}).items()}
    root = doc["root"]
    if root not in nodes:
        raise GrammarError(f"root '{root}' is not a defined node")
    for node in nodes.values():
        for child in node.children:
            if child not in nodes:
                raise GrammarError(f"node '{node.id}' references undefined child '{child}'")
        if node.kind == NodeKind.ADDRESS:
            target = nodes.get(node.target_of)
            if target is None or target.kind != NodeKind.TERMINAL:
                raise GrammarError(f"address node '{node.id}' must name a regular terminal, got '{node.target_of}'")

    graph = nx.DiGraph()
    graph.add_nodes_from(nodes)
    graph.add_edges_from((n.id, c) for n in nodes.values() for c in n.children)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = [edge[0] for edge in nx.find_cycle(graph)]
        raise GrammarError(f"grammar contains a cycle through {' -> '.join(cycle)}")

    reach = nx.descendants(graph, root) | {root}
    reachable = {nodes[n].category for n in reach if nodes[n].kind == NodeKind.TERMINAL}
    known = {n.category for n in nodes.values() if n.kind == NodeKind.TERMINAL}

    seated = {}
    for node in nodes.values():
        if node.kind == NodeKind.ADDRESS:
            if node.target_of in seated:
                raise GrammarError(f"terminal '{node.target_of}' has two address slots")
            seated[node.target_of] = node.id

    groups = {}
    for name, members in (doc.get("groups") or {}).items():
        members = tuple(members)
        if len(members) < 2:
            raise GrammarError(f"group '{name}' needs at least two categories")
        bad = [c for c in members if c not in known]
        if bad:
            raise GrammarError(f"group '{name}' names unknown categories {bad}")
        groups[name] = members

    priors = {}
    raw_slots = doc.get("address_slots") or {}
    for slot in raw_slots:
        if slot not in nodes or nodes[slot].kind != NodeKind.ADDRESS:
            raise GrammarError(f"address prior for '{slot}', which is not an address node")
    for slot in seated.values():
        table = dict(raw_slots.get(slot) or {})
        if not table:
            raise GrammarError(f"address node '{slot}' has no prior")
        outside = [c for c in table if c != NIL and c not in reachable]
        if outside:
            raise GrammarError(f"address prior '{slot}' names unreachable categories {outside}")
        table.setdefault(NIL, 0.0)
        keys = sorted(k for k in table if k != NIL) + [NIL]
        probs = normalize_probs([table[k] for k in keys], f"address prior '{slot}'")
        priors[slot] = dict(zip(keys, probs))

    stages = {}
    for key, stage in (doc.get("stages") or {}).items():
        if key not in nodes and key not in known:
            raise GrammarError(f"stage tag for unknown node or category '{key}'")
        if int(stage) != stage or not 1 <= int(stage) <= 5:
            raise GrammarError(f"stage for '{key}' must be an integer in 1..5")
        stages[key] = int(stage)

    size_models = {cat: SizeKDE.from_dict(spec) for cat, spec in (doc.get("size_models") or {}).items()}
    if require_sizes:
        missing = sorted(c for c in known if c not in size_models)
        if missing:
            raise GrammarError(f"terminal categories without a size model: {missing}")

    learning = Config.get('LEARNING', {}) or {}
    stats_doc = doc.get("relation_stats")
    try:
        stats = (RelationStats.from_dict(stats_doc) if stats_doc
                 else RelationStats(d_acc=float(learning.get('d_acc', 0.8))))
        weights = PotentialWeights.from_vector(doc["weights"]) if "weights" in doc else PotentialWeights()
    except ValueError as e:
        raise GrammarError(f"bundle parameters: {e}")

    room_model = SizeKDE.from_dict(doc["room"]) if doc.get("room") else None
    default_room = tuple(float(v) for v in (doc.get("default_room") or Config.get('DEFAULT_ROOM', [4.0, 4.0, 2.8])))
    max_objects = int(doc.get("max_objects") or Config.get('MAX_OBJECTS', 256))

    grammar = SAOG(
        root=root, nodes=nodes, groups=groups, address_priors=priors, stage_tags=stages,
        size_models=size_models, relation_stats=stats, weights=weights, room_model=room_model,
        group_occurrence={k: float(v) for k, v in (doc.get("group_occurrence") or {}).items()},
        default_room=default_room, max_objects=max_objects,
    )
    logger.debug(f"{Emojis.GRAMMAR} grammar loaded: {len(nodes)} nodes, {len(known)} categories, {len(priors)} address slots")
    return grammar


def grammar_to_document(grammar: SAOG) -> dict:
    """Inverse of build_grammar; a bundle when size models are present."""
    nodes = {}
    for nid, node in grammar.nodes.items():
        spec = {"kind": node.kind.value}
        if node.children:
            spec["children"] = list(node.children)
        if node.category:
            spec["category"] = node.category
        if node.probs is not None:
            spec["probs"] = list(node.probs)
        if node.counts is not None:
            spec["counts"] = {child: {str(k): p for k, p in table.items()} for child, table in node.counts.items()}
        if node.target_of:
            spec["object"] = node.target_of
        nodes[nid] = spec

    doc = {
        "kind": "bundle" if grammar.size_models else "grammar",
        "version": BUNDLE_VERSION,
        "root": grammar.root,
        "nodes": nodes,
        "groups": {k: list(v) for k, v in grammar.groups.items()},
        "address_slots": {k: dict(v) for k, v in grammar.address_priors.items()},
        "stages": dict(grammar.stage_tags),
        "default_room": list(grammar.default_room),
        "max_objects": grammar.max_objects,
    }
    if grammar.size_models:
        doc["size_models"] = {cat: kde.to_dict() for cat, kde in sorted(grammar.size_models.items())}
        doc["relation_stats"] = grammar.relation_stats.to_dict()
        doc["weights"] = grammar.weights.as_vector().tolist()
        doc["group_occurrence"] = dict(sorted(grammar.group_occurrence.items()))
        if grammar.room_model is not None:
            doc["room"] = grammar.room_model.to_dict()
    return doc


# ---------------------------------------------------------------------------
# Derivation
# ---------------------------------------------------------------------------

def inverse_cdf(probs: Sequence[float], u: float) -> int:
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, len(probs) - 1)


def sample_or(node: Node, u: float) -> str:
    return node.children[inverse_cdf(node.probs, u)]


def sample_count(distribution: Dict[int, float], u: float) -> int:
    counts = sorted(distribution)
    return counts[inverse_cdf([distribution[k] for k in counts], u)]


def sample_set(node: Node, rng: np.random.Generator) -> List[Tuple[str, int]]:
    return [(child, sample_count(node.counts[child], rng.random())) for child in node.children]


def sample_room(grammar: SAOG, rng: np.random.Generator) -> Room:
    if grammar.room_model is not None:
        return Room(*sample_kde(grammar.room_model, rng))
    return Room(*grammar.default_room)


def derive_parse_tree(grammar: SAOG, rng: np.random.Generator, room: Optional[Room] = None) -> ParseGraph:
    """
    Top-down derivation: Or branches and Set counts by inverse CDF in declared
    child order, sizes from the category KDEs. Objects come back unplaced.
    """
    room = room or sample_room(grammar, rng)
    tree = ParseTree()
    objects: List[ObjectInstance] = []

    def expand(nid: str):
        node = grammar.nodes[nid]
        if node.kind == NodeKind.AND:
            for child in node.children:
                expand(child)
        elif node.kind == NodeKind.OR:
            idx = inverse_cdf(node.probs, rng.random())
            tree.or_choices.append((nid, idx))
            expand(node.children[idx])
        elif node.kind == NodeKind.SET:
            for child in node.children:
                count = sample_count(node.counts[child], rng.random())
                tree.set_counts.append((nid, child, count))
                for _ in range(count):
                    expand(child)
        elif node.kind == NodeKind.TERMINAL:
            if len(objects) >= grammar.max_objects:
                raise GrammarError(f"derivation exceeded {grammar.max_objects} objects, grammar looks runaway")
            objects.append(ObjectInstance(
                id=len(objects) + 1,
                category=node.category,
                size=sample_kde(grammar.size_models[node.category], rng),
                terminal=nid,
                address_slot=grammar.slot_of(nid),
                stage=grammar.stage_of(nid),
            ))

    expand(grammar.root)
    return ParseGraph(tree=tree, objects=objects, room=room)


# ---------------------------------------------------------------------------
# Cliques
# ---------------------------------------------------------------------------

def collect_cliques(pg: ParseGraph, grammar: SAOG) -> CliqueSet:
    placed = [o for o in pg.objects if o.is_placed]
    furniture = [o for o in placed if not o.is_supported_kind]
    wall_ids = tuple(w.id for w in pg.walls)

    cliques = CliqueSet()
    cliques.wall_cliques = [(f.id, wall_ids) for f in furniture]
    cliques.furniture_cliques = [(a.id, b.id) for a, b in itertools.combinations(furniture, 2)]
    cliques.support_cliques = [(o.address, o.address_slot, o.id) for o in placed if o.is_supported_kind]
    for name, members in grammar.groups.items():
        present = [f for f in furniture if f.category in members]
        pairs = [(a.id, b.id) for a, b in itertools.combinations(present, 2) if a.category != b.category]
        if pairs:
            cliques.group_cliques.append((name, pairs))
    return cliques
