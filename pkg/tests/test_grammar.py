import json
import os
import sys
import unittest

import numpy as np

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from data_models import Node, NodeKind, ObjectInstance, ParseGraph, ParseTree, Room
from errors import GrammarError
from grammar import (
    build_grammar, collect_cliques, derive_parse_tree, grammar_to_document, inverse_cdf,
    normalize_probs, sample_count, sample_or,
)

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'fixtures')


def load_fixture(name):
    with open(os.path.join(FIXTURES, name), 'r', encoding='utf-8') as f:
        return json.load(f)


def tiny_skeleton():
    return {
        "root": "room",
        "nodes": {
            "room": {"kind": "and", "children": ["seat", "extras"]},
            "seat": {"kind": "or", "children": ["sofa", "armchair"], "probs": [0.7, 0.3]},
            "extras": {"kind": "set", "children": ["lamp"], "counts": {"lamp": {"0": 0.5, "1": 0.5}}},
            "sofa": {"kind": "terminal", "category": "sofa"},
            "armchair": {"kind": "terminal", "category": "armchair"},
            "lamp": {"kind": "terminal", "category": "lamp"},
        },
    }


class TestProbabilityVectors(unittest.TestCase):
    def test_exact_vector_kept(self):
        """Test that a vector summing to 1 is stored as given."""
        self.assertEqual(normalize_probs([0.25, 0.75], "t"), (0.25, 0.75))

    def test_near_one_renormalized(self):
        """Test that a 1e-4 drift is renormalized, not rejected."""
        probs = normalize_probs([0.5, 0.5001], "t")
        self.assertAlmostEqual(probs[0], 0.5 / 1.0001, places=12)
        self.assertAlmostEqual(probs[1], 0.5001 / 1.0001, places=12)

    def test_far_from_one_rejected(self):
        with self.assertRaises(GrammarError):
            normalize_probs([0.5, 0.6], "t")

    def test_negative_rejected(self):
        with self.assertRaises(GrammarError):
            normalize_probs([1.5, -0.5], "t")


class TestInverseCDF(unittest.TestCase):
    def setUp(self):
        self.node = Node("pick", NodeKind.OR, ("a", "b", "c"), probs=(0.5, 0.3, 0.2))

    def test_or_branch_by_uniform(self):
        """Test that the first child whose cumulative mass exceeds u is chosen."""
        self.assertEqual(sample_or(self.node, 0.85), "c")
        self.assertEqual(sample_or(self.node, 0.0), "a")
        self.assertEqual(sample_or(self.node, 0.5), "b")

    def test_count_by_uniform(self):
        self.assertEqual(sample_count({0: 0.2, 1: 0.5, 2: 0.3}, 0.75), 2)
        self.assertEqual(sample_count({2: 0.3, 0: 0.2, 1: 0.5}, 0.1), 0)

    def test_upper_edge_clamped(self):
        """Test that rounding in the cumulative sum never indexes past the last branch."""
        self.assertEqual(inverse_cdf([0.1] * 10, 0.9999999999999999), 9)

    def test_empirical_frequencies(self):
        """Test that 10k draws match the branch probabilities."""
        rng = np.random.default_rng(3)
        draws = [sample_or(self.node, rng.random()) for _ in range(10000)]
        for child, p in zip(self.node.children, self.node.probs):
            self.assertAlmostEqual(draws.count(child) / 10000, p, delta=0.02)


class TestBuildGrammar(unittest.TestCase):
    def test_skeleton_without_sizes(self):
        grammar = build_grammar(tiny_skeleton(), require_sizes=False)
        self.assertEqual(grammar.categories, ["armchair", "lamp", "sofa"])
        self.assertEqual(grammar.nodes["seat"].probs, (0.7, 0.3))
        self.assertEqual(grammar.nodes["extras"].counts["lamp"], {0: 0.5, 1: 0.5})

    def test_sizes_required_for_bundle(self):
        with self.assertRaises(GrammarError):
            build_grammar(tiny_skeleton(), require_sizes=True)

    def test_cycle_rejected(self):
        """Test that a cycle is reported instead of recursing forever."""
        doc = tiny_skeleton()
        doc["nodes"]["extras"] = {"kind": "set", "children": ["room"], "counts": {"room": {"1": 1.0}}}
        with self.assertRaises(GrammarError) as ctx:
            build_grammar(doc, require_sizes=False)
        self.assertIn("cycle", str(ctx.exception))

    def test_undefined_child_rejected(self):
        doc = tiny_skeleton()
        doc["nodes"]["room"]["children"].append("ghost")
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_unknown_key_rejected(self):
        doc = tiny_skeleton()
        doc["nodes"]["sofa"]["colour"] = "red"
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_or_probs_length_mismatch(self):
        doc = tiny_skeleton()
        doc["nodes"]["seat"]["probs"] = [1.0]
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_set_without_count_table(self):
        doc = tiny_skeleton()
        doc["nodes"]["extras"]["counts"] = {}
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_address_must_name_terminal(self):
        doc = tiny_skeleton()
        doc["nodes"]["lamp_on"] = {"kind": "address", "object": "extras"}
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_address_prior_gets_nil(self):
        """Test that address priors always carry a nil entry."""
        doc = tiny_skeleton()
        doc["nodes"]["lamp_on"] = {"kind": "address", "object": "lamp"}
        doc["address_slots"] = {"lamp_on": {"sofa": 0.6, "armchair": 0.4}}
        grammar = build_grammar(doc, require_sizes=False)
        prior = grammar.address_priors["lamp_on"]
        self.assertEqual(list(prior), ["armchair", "sofa", "nil"])
        self.assertEqual(prior["nil"], 0.0)
        self.assertTrue(grammar.is_supported_category("lamp"))

    def test_address_prior_unreachable_category(self):
        doc = tiny_skeleton()
        doc["nodes"]["lamp_on"] = {"kind": "address", "object": "lamp"}
        doc["address_slots"] = {"lamp_on": {"table": 1.0}}
        with self.assertRaises(GrammarError):
            build_grammar(doc, require_sizes=False)

    def test_stage_defaults_and_tags(self):
        grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        self.assertEqual(grammar.stage_of("bed"), 2)
        self.assertEqual(grammar.stage_of("nightstand"), 3)
        self.assertEqual(grammar.stage_of("wardrobe"), 4)
        self.assertEqual(grammar.stage_of("lamp"), 5)

        doc = load_fixture("bedroom_grammar.json")
        doc["stages"] = {"wardrobe": 1}
        self.assertEqual(build_grammar(doc).stage_of("wardrobe"), 1)

    def test_document_round_trip(self):
        grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        again = build_grammar(grammar_to_document(grammar))
        self.assertEqual(again.categories, grammar.categories)
        self.assertEqual(again.nodes["desk_seat"].probs, grammar.nodes["desk_seat"].probs)
        self.assertEqual(again.address_priors, grammar.address_priors)
        np.testing.assert_array_equal(again.weights.as_vector(), grammar.weights.as_vector())


class TestDerivation(unittest.TestCase):
    def setUp(self):
        self.grammar = build_grammar(load_fixture("bedroom_grammar.json"))

    def test_same_seed_same_tree(self):
        a = derive_parse_tree(self.grammar, np.random.default_rng(11))
        b = derive_parse_tree(self.grammar, np.random.default_rng(11))
        self.assertEqual(a.tree.or_choices, b.tree.or_choices)
        self.assertEqual(a.tree.set_counts, b.tree.set_counts)
        self.assertEqual([(o.category, o.size) for o in a.objects], [(o.category, o.size) for o in b.objects])
        self.assertEqual(a.room, b.room)

    def test_objects_come_back_unplaced(self):
        pg = derive_parse_tree(self.grammar, np.random.default_rng(5))
        categories = [o.category for o in pg.objects]
        self.assertEqual(categories.count("bed"), 1)
        self.assertIn(categories.count("nightstand"), (1, 2))
        self.assertEqual(categories.count("chair") + categories.count("stool"), 1)
        for o in pg.objects:
            self.assertFalse(o.is_placed)
            self.assertTrue(min(o.size) > 0)
            self.assertEqual(o.is_supported_kind, o.category in ("lamp", "book", "laptop", "plant"))
        self.assertEqual(sorted(o.id for o in pg.objects), list(range(1, len(pg.objects) + 1)))

    def test_runaway_derivation_stops(self):
        doc = load_fixture("bedroom_grammar.json")
        doc["max_objects"] = 3
        with self.assertRaises(GrammarError):
            derive_parse_tree(build_grammar(doc), np.random.default_rng(0))


class TestCliques(unittest.TestCase):
    def test_clique_counts(self):
        """Test wall, furniture, support and group cliques over placed objects."""
        grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        objects = [
            ObjectInstance(1, "bed", (2.0, 1.6, 0.5), terminal="bed", position=(2.0, 1.0, 0.0)),
            ObjectInstance(2, "nightstand", (0.5, 0.45, 0.55), terminal="nightstand", position=(0.6, 0.3, 0.0)),
            ObjectInstance(3, "desk", (1.2, 0.6, 0.75), terminal="desk", position=(1.0, 4.0, 0.0)),
            ObjectInstance(4, "chair", (0.5, 0.5, 0.9), terminal="chair", position=(1.0, 3.4, 0.0)),
            ObjectInstance(5, "lamp", (0.3, 0.3, 0.5), terminal="lamp", position=(0.6, 0.3, 0.55),
                           address=2, address_slot="lamp_on", local_offset=(0.0, 0.0)),
            ObjectInstance(6, "book", (0.2, 0.15, 0.04), terminal="book", address_slot="book_on"),
        ]
        pg = ParseGraph(tree=ParseTree(), objects=objects, room=Room(4.0, 4.5, 2.8))
        cliques = collect_cliques(pg, grammar)
        self.assertEqual(cliques.sizes(), (4, 6, 1, 2))
        self.assertEqual(cliques.support_cliques, [(2, "lamp_on", 5)])
        self.assertEqual(dict(cliques.group_cliques)["sleep"], [(1, 2)])

    def test_empty_scene_has_no_cliques(self):
        grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        pg = ParseGraph(tree=ParseTree(), objects=[], room=Room(4.0, 4.0, 2.8))
        self.assertEqual(collect_cliques(pg, grammar).sizes(), (0, 0, 0, 0))


if __name__ == '__main__':
    unittest.main()
