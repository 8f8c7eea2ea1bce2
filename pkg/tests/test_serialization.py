import json
import os
import sys
import tempfile
import unittest

import numpy as np

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from errors import ValidationError
from grammar import build_grammar, derive_parse_tree
from sampler import init_layout
from scene import instantiate_scene
from serialization import (
    cameras_from_doc, catalog_from_doc, detect_kind, dumps, layout_from_doc, layout_to_doc, load_json,
    parse_graph_from_doc, parse_graph_to_doc, training_scenes_from_doc, training_scenes_to_doc,
    validate_document, validate_file,
)

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'fixtures')

RANGES = {
    "lights": {"count": [1, 2], "intensity": [0.5, 2.0]},
    "materials": {"roughness": [0.2, 0.9], "textures": ["wood", "paint"]},
    "cameras": {"count": [1, 1], "resolution": [32, 24]},
}


def load_fixture(name):
    with open(os.path.join(FIXTURES, name), 'r', encoding='utf-8') as f:
        return json.load(f)


class TestDocuments(unittest.TestCase):
    def setUp(self):
        self.grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        self.catalog = catalog_from_doc(load_fixture("catalog.json"))
        rng = np.random.default_rng(12)
        self.pg = init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)

    def test_parse_graph_round_trip(self):
        doc = parse_graph_to_doc(self.pg, self.grammar, seed=12)
        again = parse_graph_from_doc(json.loads(dumps(doc)), self.grammar)
        self.assertEqual(again.objects, self.pg.objects)
        self.assertEqual(again.tree, self.pg.tree)
        self.assertEqual(again.cliques.sizes(), self.pg.cliques.sizes())

    def test_parse_graph_unknown_parent(self):
        doc = parse_graph_to_doc(self.pg)
        doc["objects"][0]["address"] = 999
        with self.assertRaises(ValidationError):
            parse_graph_from_doc(doc)

    def test_layout_bytes_are_stable(self):
        """Test that writing a re-read layout reproduces the file byte for byte."""
        layout = instantiate_scene(self.pg, self.catalog, RANGES, np.random.default_rng(12))
        text = dumps(layout_to_doc(layout))
        self.assertEqual(dumps(layout_to_doc(layout_from_doc(json.loads(text)))), text)

    def test_layout_version_checked(self):
        layout = instantiate_scene(self.pg, self.catalog, RANGES, np.random.default_rng(12))
        doc = layout_to_doc(layout)
        doc["version"] = 99
        with self.assertRaises(ValidationError):
            layout_from_doc(doc)

    def test_nan_refused(self):
        with self.assertRaises(ValueError):
            dumps({"x": float("nan")})


class TestTrainingScenes(unittest.TestCase):
    def test_missing_parent_key_means_discover(self):
        scenes = training_scenes_from_doc(load_fixture("training_scenes.json"))
        plant = next(o for o in scenes[0].objects if o.id == "plant")
        bed = next(o for o in scenes[0].objects if o.id == "bed")
        self.assertFalse(plant.support_given)
        self.assertTrue(bed.support_given)

    def test_round_trip_keeps_discovery_flag(self):
        scenes = training_scenes_from_doc(load_fixture("training_scenes.json"))
        again = training_scenes_from_doc(training_scenes_to_doc(scenes))
        self.assertEqual(again, scenes)

    def test_unknown_object_key(self):
        doc = {"scenes": [{"room_dims": [4, 4, 2.8], "objects": [
            {"id": "a", "category": "bed", "position": [1, 1, 0], "size": [2, 1.6, 0.5], "colour": "red"}]}]}
        with self.assertRaises(ValidationError):
            training_scenes_from_doc(doc)

    def test_dangling_parent(self):
        doc = {"scenes": [{"room_dims": [4, 4, 2.8], "objects": [
            {"id": "a", "category": "lamp", "position": [1, 1, 0], "size": [0.3, 0.3, 0.5], "support_parent": "b"}]}]}
        with self.assertRaises(ValidationError):
            training_scenes_from_doc(doc)


class TestCameras(unittest.TestCase):
    def test_accepted_shapes(self):
        cam = {"position": [0, 0, 1.5], "look_at": [1, 1, 1.5], "width": 16, "height": 12,
               "fx": 10.0, "fy": 10.0, "cx": 8.0, "cy": 6.0}
        self.assertEqual(len(cameras_from_doc(cam)), 1)
        self.assertEqual(len(cameras_from_doc([cam, cam])), 2)
        self.assertEqual(len(cameras_from_doc({"kind": "camera", "cameras": [cam]})), 1)

    def test_coincident_look_at(self):
        with self.assertRaises(ValidationError):
            cameras_from_doc({"position": [1, 1, 1], "look_at": [1, 1, 1]})


class TestValidation(unittest.TestCase):
    def test_fixture_kinds(self):
        for name, kind in (("bedroom_grammar.json", "bundle"), ("training_scenes.json", "training_scenes"),
                           ("catalog.json", "catalog")):
            got, findings = validate_document(load_fixture(name))
            self.assertEqual(got, kind)
            self.assertEqual(findings, [])

    def test_kind_heuristics(self):
        self.assertEqual(detect_kind({"root": "r", "nodes": {}}), "grammar")
        self.assertEqual(detect_kind([{"model_id": "m"}]), "catalog")
        self.assertEqual(detect_kind({"placed": []}), "layout")
        self.assertEqual(detect_kind(42), "unknown")

    def test_empty_training_set(self):
        kind, findings = validate_document({"kind": "training_scenes", "scenes": []})
        self.assertEqual(kind, "training_scenes")
        self.assertEqual(findings, ["no training scenes"])

    def test_broken_grammar_reported(self):
        doc = load_fixture("bedroom_grammar.json")
        doc["nodes"]["bedroom"]["children"].append("ghost")
        _, findings = validate_document(doc)
        self.assertEqual(len(findings), 1)
        self.assertIn("ghost", findings[0])

    def test_invalid_json_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "broken.json")
            with open(path, 'w', encoding='utf-8') as f:
                f.write("{ not json")
            with self.assertRaises(ValidationError):
                load_json(path)
            kind, findings = validate_file(path)
        self.assertEqual(kind, "unknown")
        self.assertEqual(len(findings), 1)


if __name__ == '__main__':
    unittest.main()
