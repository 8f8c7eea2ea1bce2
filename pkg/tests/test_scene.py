import json
import math
import os
import sys
import tempfile
import unittest

import numpy as np

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from data_models import (
    CatalogEntry, ModelCatalog, ObjectInstance, ParseGraph, ParseTree, PlacedObject, Room, SceneLayout,
)
from errors import SceneError
from grammar import build_grammar, derive_parse_tree
from sampler import init_layout
from scene import (
    box_corners, build_label_table, build_shell, export_obj, fit_room, instantiate_scene,
    place_model, resolve_vertical, sample_attributes, select_model, support_order, validate_layout,
)
from serialization import catalog_from_doc

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'fixtures')

RANGES = {
    "lights": {"count": [1, 3], "intensity": [0.5, 2.0], "color_min": [0.8, 0.8, 0.8],
               "color_max": [1.0, 1.0, 1.0], "ceiling_offset": 0.1},
    "materials": {"roughness": [0.2, 0.9], "metallic": [0.0, 0.3], "reflectivity": [0.0, 0.5],
                  "textures": ["wood", "fabric"], "parts": ["body", "legs"]},
    "cameras": {"count": [1, 2], "height": [1.2, 1.7], "margin": 0.3, "fov_deg": [55.0, 65.0],
                "resolution": [64, 48]},
}


def load_fixture(name):
    with open(os.path.join(FIXTURES, name), 'r', encoding='utf-8') as f:
        return json.load(f)


def placed(instance_id, category, position, size, yaw=0.0, parent=None):
    return PlacedObject(instance_id=instance_id, model_id=f"{category}_m", category=category,
                        position=position, yaw=yaw, box_yaw=yaw, size=size, scale=(1.0, 1.0, 1.0),
                        support_parent=parent)


def small_layout(objects):
    shell = build_shell(4.0, 4.0, 2.8, first_id=len(objects) + 1)
    return SceneLayout(room=shell, placed=objects, label_table=build_label_table(None, objects))


class TestModelSelection(unittest.TestCase):
    def setUp(self):
        self.catalog = ModelCatalog([
            CatalogEntry("bed_square", "bed", (2.0, 2.0, 0.5)),
            CatalogEntry("bed_long", "bed", (2.0, 1.0, 0.5)),
            CatalogEntry("bed_twin", "bed", (2.0, 1.0, 0.45)),
        ])

    def test_closest_aspect_ratio(self):
        self.assertEqual(select_model(self.catalog, "bed", (1.9, 1.0, 0.5)), "bed_long")
        self.assertEqual(select_model(self.catalog, "bed", (1.1, 1.0, 0.5)), "bed_square")

    def test_ties_pick_smallest_id(self):
        self.assertEqual(select_model(self.catalog, "bed", (2.0, 1.0, 0.5)), "bed_long")

    def test_scale_invariant(self):
        for dims, expected in (((1.9, 1.0, 0.5), "bed_long"), ((1.1, 1.0, 0.5), "bed_square")):
            for c in (0.25, 0.5, 3.0, 17.3):
                scaled = tuple(c * v for v in dims)
                self.assertEqual(select_model(self.catalog, "bed", scaled), expected)

    def test_missing_category(self):
        with self.assertRaises(SceneError):
            select_model(self.catalog, "sofa", (2.0, 1.0, 0.8))

    def test_scale_matches_instance(self):
        entry = CatalogEntry("crate", "crate", (2.0, 1.0, 1.0), front_yaw_offset=math.pi / 2)
        obj = ObjectInstance(3, "crate", (1.0, 0.5, 0.8), position=(1.0, 1.0, 0.0), yaw=0.0)
        p = place_model(entry, obj)
        self.assertEqual(p.scale, (0.5, 0.5, 0.8))
        self.assertEqual(p.box_yaw, 0.0)
        self.assertAlmostEqual(p.yaw, math.pi / 2, places=12)


class TestPhysicalFixes(unittest.TestCase):
    def test_fit_room_shifts_inside(self):
        layout = small_layout([placed(1, "desk", (0.2, 2.0, 0.0), (1.0, 0.6, 0.75)),
                               placed(2, "lamp", (0.2, 2.0, 0.75), (0.3, 0.3, 0.5), parent=1)])
        fixed = fit_room(layout)
        desk, lamp = fixed.get(1), fixed.get(2)
        self.assertAlmostEqual(desk.position[0], 0.5, places=12)
        self.assertAlmostEqual(lamp.position[0], 0.5, places=12)
        self.assertEqual(validate_layout(fixed), [])

    def test_gravity_snap(self):
        layout = small_layout([placed(1, "desk", (2.0, 2.0, 0.3), (1.0, 0.6, 0.75)),
                               placed(2, "lamp", (2.1, 2.0, 0.2), (0.3, 0.3, 0.5), parent=1)])
        self.assertEqual(len(validate_layout(layout)), 2)
        fixed = resolve_vertical(layout)
        self.assertEqual(fixed.get(1).position[2], 0.0)
        self.assertAlmostEqual(fixed.get(2).position[2], 0.75, places=12)
        self.assertEqual(validate_layout(fixed), [])

    def test_child_clamped_onto_parent(self):
        layout = small_layout([placed(1, "desk", (2.0, 2.0, 0.0), (1.0, 0.6, 0.75)),
                               placed(2, "lamp", (3.0, 2.0, 0.75), (0.3, 0.3, 0.5), parent=1)])
        lamp = resolve_vertical(layout).get(2)
        self.assertLessEqual(lamp.position[0], 2.5 + 1e-9)

    def test_resolve_vertical_is_idempotent(self):
        layout = small_layout([placed(1, "desk", (2.0, 2.0, 0.3), (1.0, 0.6, 0.75), yaw=0.4),
                               placed(2, "lamp", (3.0, 2.6, 0.2), (0.3, 0.3, 0.5), parent=1),
                               placed(3, "book", (2.1, 2.0, 2.0), (0.2, 0.15, 0.05), parent=1),
                               placed(4, "bed", (1.0, 1.0, -0.2), (2.0, 1.6, 0.5))])
        once = resolve_vertical(layout)
        self.assertEqual(resolve_vertical(once), once)

    def test_support_cycle(self):
        layout = small_layout([placed(1, "desk", (2.0, 2.0, 0.0), (1.0, 0.6, 0.75), parent=2),
                               placed(2, "lamp", (2.0, 2.0, 0.75), (0.3, 0.3, 0.5), parent=1)])
        with self.assertRaises(SceneError):
            support_order(layout)

    def test_validator_reports_out_of_room(self):
        layout = small_layout([placed(1, "desk", (3.9, 2.0, 0.0), (1.0, 0.6, 0.75))])
        findings = validate_layout(layout)
        self.assertEqual(len(findings), 1)
        self.assertIn("outside the room", findings[0])


class TestShellAndLabels(unittest.TestCase):
    def test_shell_ids_follow_objects(self):
        shell = build_shell(4.0, 5.0, 2.8, first_id=7)
        self.assertEqual([q["name"] for q in shell.quads],
                         ["floor", "ceiling", "wall_0", "wall_1", "wall_2", "wall_3"])
        self.assertEqual([q["instance_id"] for q in shell.quads], list(range(7, 13)))

    def test_label_table_is_sorted_and_dense(self):
        catalog = ModelCatalog([CatalogEntry("sofa_1", "sofa", (2.0, 0.9, 0.8))])
        table = build_label_table(catalog, [placed(1, "bed", (1.0, 1.0, 0.0), (2.0, 1.6, 0.5))])
        self.assertEqual(table, {"bed": 1, "ceiling": 2, "floor": 3, "sofa": 4, "wall": 5})


class TestAttributes(unittest.TestCase):
    def setUp(self):
        self.layout = small_layout([placed(1, "bed", (2.0, 2.0, 0.0), (2.0, 1.6, 0.5)),
                                    placed(2, "desk", (1.0, 3.5, 0.0), (1.0, 0.6, 0.75))])

    def test_ranges_respected(self):
        attrs = sample_attributes(RANGES, self.layout, np.random.default_rng(1))
        self.assertTrue(1 <= len(attrs.lights) <= 3)
        for light in attrs.lights:
            self.assertAlmostEqual(light.position[2], 2.7, places=12)
            self.assertTrue(0.5 <= light.intensity <= 2.0)
        self.assertEqual(sorted(attrs.materials), ["1:body", "1:legs", "2:body", "2:legs"])
        self.assertTrue(1 <= len(attrs.cameras) <= 2)
        for cam in attrs.cameras:
            self.assertTrue(0.3 <= cam.position[0] <= 3.7)
            self.assertTrue(1.2 <= cam.position[2] <= 1.7)
            self.assertEqual((cam.width, cam.height), (64, 48))

    def test_empty_range_rejected(self):
        ranges = dict(RANGES, lights=dict(RANGES["lights"], intensity=[2.0, 1.0]))
        with self.assertRaises(SceneError):
            sample_attributes(ranges, self.layout, np.random.default_rng(1))


class TestInstantiation(unittest.TestCase):
    def setUp(self):
        self.grammar = build_grammar(load_fixture("bedroom_grammar.json"))
        self.catalog = catalog_from_doc(load_fixture("catalog.json"))

    def sampled_graph(self, seed):
        rng = np.random.default_rng(seed)
        return init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)

    def test_instantiated_layout_is_grounded(self):
        """Test that every object rests on the floor or on its parent after instantiation."""
        for seed in range(3):
            pg = self.sampled_graph(seed)
            layout = instantiate_scene(pg, self.catalog, RANGES, np.random.default_rng(seed))
            self.assertEqual(len(layout.placed), len(pg.objects))
            findings = validate_layout(layout)
            self.assertFalse([f for f in findings if "floating" in f or "penetrates" in f or "below" in f])
            for p in layout.placed:
                self.assertIn(p.category, layout.label_table)
            shell_ids = [q["instance_id"] for q in layout.room.quads]
            self.assertEqual(shell_ids[0], max(o.id for o in pg.objects) + 1)

    def test_same_seed_same_layout(self):
        pg = self.sampled_graph(4)
        a = instantiate_scene(pg, self.catalog, RANGES, np.random.default_rng(4))
        b = instantiate_scene(pg, self.catalog, RANGES, np.random.default_rng(4))
        self.assertEqual(a, b)

    def test_unknown_category_fails(self):
        pg = ParseGraph(tree=ParseTree(), room=Room(4.0, 4.0, 2.8), objects=[
            ObjectInstance(1, "piano", (1.5, 0.6, 1.2), position=(2.0, 2.0, 0.0))])
        with self.assertRaises(SceneError):
            instantiate_scene(pg, self.catalog, RANGES, np.random.default_rng(0))


class TestExport(unittest.TestCase):
    def test_box_corners(self):
        corners = box_corners(placed(1, "desk", (2.0, 2.0, 0.0), (1.0, 0.6, 0.75)))
        self.assertEqual(corners.shape, (8, 3))
        self.assertAlmostEqual(corners[:, 2].max(), 0.75, places=12)

    def test_obj_groups(self):
        layout = small_layout([placed(1, "desk", (2.0, 2.0, 0.0), (1.0, 0.6, 0.75))])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "scene.obj")
            export_obj(layout, path)
            with open(path, 'r', encoding='utf-8') as f:
                lines = f.read().splitlines()
        self.assertEqual(sum(line.startswith("g ") for line in lines), 7)
        self.assertEqual(sum(line.startswith("v ") for line in lines), 8 + 6 * 4)
        self.assertEqual(sum(line.startswith("f ") for line in lines), 6 + 6)


if __name__ == '__main__':
    unittest.main()
