import json
import math
import os
import sys
import unittest
from unittest.mock import MagicMock, patch

import numpy as np

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from data_models import ConvergenceConfig, ObjectInstance, ParseGraph, ParseTree, Room, SamplerConfig
from energy import local_energy, total_energy
from geometry import contains_point, footprint_polygon
from grammar import build_grammar, collect_cliques, derive_parse_tree
import sampler
from sampler import (
    Proposal, has_converged, init_layout, mh_step, propose_rotate, propose_support_swap, propose_swap,
    propose_translate, run_chain, seat, staged_sample, surface_offset,
)

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'fixtures')


def fixture_grammar():
    with open(os.path.join(FIXTURES, 'bedroom_grammar.json'), 'r', encoding='utf-8') as f:
        return build_grammar(json.load(f))


def quick_config(**overrides):
    params = dict(iter_max=300, convergence=ConvergenceConfig(w=50, s=20, eps=0.2, bins=10))
    params.update(overrides)
    return SamplerConfig(**params)


class TestSeating(unittest.TestCase):
    def test_centered_offset(self):
        parent = ObjectInstance(1, "desk", (1.4, 0.7, 0.75), position=(2.0, 2.0, 0.0))
        self.assertEqual(surface_offset(parent, 0.5, 0.5), (0.0, 0.0))

    def test_child_follows_parent_frame(self):
        parent = ObjectInstance(1, "desk", (1.0, 0.5, 0.7), position=(1.0, 1.0, 0.0), yaw=math.pi / 2)
        child = ObjectInstance(2, "lamp", (0.3, 0.3, 0.5), address=1, address_slot="lamp_on",
                               local_offset=(0.2, 0.0), rel_yaw=0.0)
        seat(child, parent)
        self.assertAlmostEqual(child.position[0], 1.0, places=9)
        self.assertAlmostEqual(child.position[1], 1.2, places=9)
        self.assertAlmostEqual(child.position[2], 0.7, places=12)
        self.assertAlmostEqual(child.yaw, math.pi / 2, places=12)


class TestInitialization(unittest.TestCase):
    def setUp(self):
        self.grammar = fixture_grammar()
        rng = np.random.default_rng(4)
        self.pg = init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)

    def test_everything_placed(self):
        for o in self.pg.objects:
            self.assertTrue(o.is_placed)
            if o.address is None:
                self.assertTrue(self.pg.room.contains(o.xy))
                self.assertEqual(o.position[2], 0.0)

    def test_supported_objects_rest_on_parent(self):
        objects = self.pg.object_map()
        for o in self.pg.objects:
            if o.address is None:
                continue
            parent = objects[o.address]
            self.assertIn(parent.category, self.grammar.address_priors[o.address_slot])
            self.assertAlmostEqual(o.position[2], parent.top, places=12)
            poly = footprint_polygon(parent.xy, parent.yaw, parent.size[0], parent.size[1])
            self.assertTrue(contains_point(poly.buffer(1e-9), o.xy))

    def test_energy_cache_initialized(self):
        self.assertAlmostEqual(self.pg.energy_cache, total_energy(self.pg, self.grammar).total, places=9)


class TestMetropolisHastings(unittest.TestCase):
    def setUp(self):
        self.grammar = fixture_grammar()
        rng = np.random.default_rng(8)
        self.pg = init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)
        self.rng = rng

    def test_cache_tracks_full_energy(self):
        """Test that incremental deltas keep the cached energy equal to a full recomputation."""
        cfg = quick_config()
        for _ in range(300):
            mh_step(self.pg, self.grammar, cfg, self.rng)
        self.assertAlmostEqual(self.pg.energy_cache, total_energy(self.pg, self.grammar).total, places=6)

    def test_objects_never_leave_the_room(self):
        cfg = quick_config(sigma_pos=3.0, move_probs=(1.0, 0.0, 0.0, 0.0))
        rejected_infinite = 0
        for _ in range(200):
            _, accepted, delta = mh_step(self.pg, self.grammar, cfg, self.rng)
            if math.isinf(delta):
                self.assertFalse(accepted)
                rejected_infinite += 1
        self.assertGreater(rejected_infinite, 0)
        for o in self.pg.objects:
            if o.address is None:
                self.assertTrue(self.pg.room.contains(o.xy))

    def test_zero_beta_accepts_every_finite_move(self):
        cfg = quick_config(beta=0.0)
        for _ in range(200):
            _, accepted, delta = mh_step(self.pg, self.grammar, cfg, self.rng)
            self.assertEqual(accepted, not math.isinf(delta))

    def test_translate_carries_children(self):
        objects = self.pg.object_map()
        child = next((o for o in self.pg.objects if o.address is not None), None)
        if child is None:
            self.skipTest("no supported object in this derivation")
        parent = objects[child.address]
        before_child, before_parent = child.position, parent.position
        proposal = Proposal("translate", {parent.id: {"position": (parent.position[0] + 0.1,
                                                                   parent.position[1], 0.0)}})
        affected = proposal.apply(self.pg)
        self.assertIn(child.id, affected)
        self.assertAlmostEqual(child.position[0] - before_child[0], 0.1, places=9)
        self.assertAlmostEqual(child.position[1], before_child[1], places=9)
        proposal.revert(self.pg)
        self.assertEqual(child.position, before_child)
        self.assertEqual(parent.position, before_parent)

    def test_support_swap_respects_prior(self):
        for _ in range(20):
            proposal = propose_support_swap(self.pg, self.grammar, self.rng)
            if proposal is None:
                self.skipTest("no supported object in this derivation")
            proposal.apply(self.pg)
            objects = self.pg.object_map()
            for obj_id in proposal.changes:
                obj = objects[obj_id]
                prior = self.grammar.address_priors[obj.address_slot]
                if obj.address is None:
                    self.assertGreater(prior["nil"], 0.0)
                else:
                    self.assertIn(objects[obj.address].category, prior)
                    self.assertAlmostEqual(obj.position[2], objects[obj.address].top, places=12)
            self.pg.cliques = collect_cliques(self.pg, self.grammar)


class TestConvergence(unittest.TestCase):
    def test_short_history(self):
        self.assertFalse(has_converged([1.0] * 10, ConvergenceConfig(w=10, s=5)))

    def test_flat_history(self):
        self.assertTrue(has_converged([1.0] * 15, ConvergenceConfig(w=10, s=5)))

    def test_shifted_history(self):
        history = [0.0] * 10 + [10.0] * 10
        self.assertFalse(has_converged(history, ConvergenceConfig(w=10, s=10, eps=0.2, bins=5)))


class TestChains(unittest.TestCase):
    def setUp(self):
        self.grammar = fixture_grammar()

    def test_same_seed_same_chain(self):
        cfg = quick_config(staged=False)
        pg_a, trace_a = run_chain(self.grammar, cfg, 17)
        pg_b, trace_b = run_chain(self.grammar, cfg, 17)
        self.assertEqual(trace_a.energies, trace_b.energies)
        self.assertEqual([o.position for o in pg_a.objects], [o.position for o in pg_b.objects])

    def test_staged_places_all_objects(self):
        cfg = quick_config(iter_max=100, staged=True)
        pg, trace = run_chain(self.grammar, cfg, 3)
        self.assertTrue(all(o.is_placed for o in pg.objects))
        self.assertTrue(set(trace.stage_converged) <= {1, 2, 3, 4, 5})
        self.assertEqual([r.step for r in trace.records], list(range(len(trace.records))))
        self.assertAlmostEqual(pg.energy_cache, total_energy(pg, self.grammar).total, places=6)

    def test_debug_cache_check(self):
        """Test that periodic full recomputation finds no drift."""
        cfg = quick_config(iter_max=200, staged=False, debug_check_every=25)
        pg, trace = run_chain(self.grammar, cfg, 5)
        self.assertGreater(len(trace.records), 0)

    def test_empty_scene(self):
        grammar = self.grammar
        pg = ParseGraph(tree=ParseTree(), objects=[], room=Room(4.0, 4.0, 2.8))
        pg = init_layout(pg, grammar, np.random.default_rng(0))
        _, accepted, delta = mh_step(pg, grammar, quick_config(), np.random.default_rng(0))
        self.assertTrue(accepted)
        self.assertEqual(delta, 0.0)


def single_bed(yaw=0.0):
    bed = ObjectInstance(1, "bed", (2.0, 1.6, 0.5), position=(2.0, 2.0, 0.0), yaw=yaw)
    return ParseGraph(tree=ParseTree(), objects=[bed], room=Room(4.0, 4.0, 2.8))


class TestProposalSteps(unittest.TestCase):
    def test_translate_covariance(self):
        """Test that 10,000 translation steps have covariance sigma^2 * I within 5%."""
        pg, rng, sigma = single_bed(), np.random.default_rng(5), 0.2
        steps = []
        for _ in range(10000):
            x, y, z = propose_translate(pg, rng, sigma).changes[1]["position"]
            self.assertEqual(z, 0.0)
            steps.append((x - 2.0, y - 2.0))
        cov = np.cov(np.asarray(steps).T)
        self.assertLess(abs(cov[0, 0] / sigma ** 2 - 1.0), 0.05)
        self.assertLess(abs(cov[1, 1] / sigma ** 2 - 1.0), 0.05)
        self.assertLess(abs(cov[0, 1]), 0.05 * sigma ** 2)

    def test_rotate_spread(self):
        pg, rng, sigma = single_bed(), np.random.default_rng(6), math.pi / 18
        turns = [propose_rotate(pg, rng, sigma).changes[1]["yaw"] for _ in range(10000)]
        self.assertLess(abs(np.std(turns) / sigma - 1.0), 0.05)

    def test_rotate_wraps_past_pi(self):
        rng = MagicMock()
        rng.integers.return_value = 0
        rng.normal.return_value = 0.05
        proposal = propose_rotate(single_bed(yaw=math.pi - 0.01), rng, math.pi / 18)
        self.assertAlmostEqual(proposal.changes[1]["yaw"], -math.pi + 0.04, places=12)

        rng.normal.return_value = -0.05
        proposal = propose_rotate(single_bed(yaw=-math.pi + 0.01), rng, math.pi / 18)
        self.assertAlmostEqual(proposal.changes[1]["yaw"], math.pi - 0.04, places=12)

    def test_zero_sigma_is_identity(self):
        pg = single_bed(yaw=0.3)
        rng = np.random.default_rng(0)
        self.assertEqual(propose_translate(pg, rng, 0.0).changes[1]["position"], (2.0, 2.0, 0.0))
        self.assertAlmostEqual(propose_rotate(pg, rng, 0.0).changes[1]["yaw"], 0.3, places=12)


class TestSwap(unittest.TestCase):
    def setUp(self):
        self.grammar = fixture_grammar()
        rng = np.random.default_rng(12)
        self.pg = init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)

    def poses(self):
        return [(o.position, o.yaw) for o in self.pg.objects]

    def test_swap_twice_restores_layout(self):
        before = self.poses()
        first = propose_swap(self.pg, np.random.default_rng(3))
        self.assertIsNotNone(first)
        self.assertEqual(len(first.changes), 2)
        first.apply(self.pg)
        self.assertNotEqual(self.poses(), before)

        second = propose_swap(self.pg, np.random.default_rng(3))
        self.assertEqual(set(second.changes), set(first.changes))
        second.apply(self.pg)
        self.assertEqual(self.poses(), before)

    def test_swap_delta_matches_recomputation(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            full_before = total_energy(self.pg, self.grammar).total
            proposal = propose_swap(self.pg, rng)
            ids = proposal.affected(self.pg)
            local_before = local_energy(self.pg, self.grammar, ids)
            proposal.apply(self.pg)
            delta = local_energy(self.pg, self.grammar, ids) - local_before
            full_after = total_energy(self.pg, self.grammar).total
            self.assertAlmostEqual(delta, full_after - full_before, delta=1e-9)

    def test_swap_needs_two_pieces_of_furniture(self):
        self.assertIsNone(propose_swap(single_bed(), np.random.default_rng(0)))


class TestAcceptance(unittest.TestCase):
    def setUp(self):
        self.grammar = fixture_grammar()
        rng = np.random.default_rng(30)
        self.pg = init_layout(derive_parse_tree(self.grammar, rng), self.grammar, rng)

    def test_step_results_are_plain_python(self):
        """Test that step outcomes serialize to JSON without numpy scalars."""
        rng = np.random.default_rng(1)
        for _ in range(100):
            _, accepted, delta = mh_step(self.pg, self.grammar, quick_config(), rng)
            self.assertIs(type(accepted), bool)
            self.assertIs(type(delta), float)
        _, trace = run_chain(self.grammar, quick_config(iter_max=40, staged=False), 2)
        for r in trace.records:
            json.dumps({"accepted": r.accepted, "energy": r.energy,
                        "delta": r.delta if math.isfinite(r.delta) else None})

    def test_weight_scale_equals_beta_scale(self):
        """Test that doubling every weight gives the same accept sequence as doubling beta."""
        doubled = self.grammar.with_parameters(weights=self.grammar.weights.scaled(2.0))
        pg_weights, pg_beta = self.pg.copy(), self.pg.copy()
        pg_weights.energy_cache = pg_beta.energy_cache = None
        rng_weights, rng_beta = np.random.default_rng(44), np.random.default_rng(44)
        cfg_weights, cfg_beta = quick_config(beta=1.0), quick_config(beta=2.0)

        decisions_weights, decisions_beta = [], []
        for _ in range(300):
            decisions_weights.append(mh_step(pg_weights, doubled, cfg_weights, rng_weights)[1])
            decisions_beta.append(mh_step(pg_beta, self.grammar, cfg_beta, rng_beta)[1])
        self.assertEqual(decisions_weights, decisions_beta)
        self.assertIn(False, decisions_beta)
        self.assertEqual([o.position for o in pg_weights.objects], [o.position for o in pg_beta.objects])


class TestStagedFreezing(unittest.TestCase):
    def test_other_stages_stay_put(self):
        """Test that each stage moves only its own objects and later stages stay unplaced."""
        grammar = fixture_grammar()
        real_run_chain = sampler._run_chain
        passes = []

        def poses(pg):
            return {o.id: (o.position, o.yaw, o.address) for o in pg.objects}

        def recording_run_chain(pg, grammar, cfg, rng, trace, active=None, stage=0):
            before = poses(pg)
            converged = real_run_chain(pg, grammar, cfg, rng, trace, active=active, stage=stage)
            passes.append((stage, set(active), before, poses(pg), {o.id: o.stage for o in pg.objects}))
            return converged

        with patch('sampler._run_chain', side_effect=recording_run_chain):
            pg, _ = staged_sample(grammar, quick_config(iter_max=80, staged=True), np.random.default_rng(9))

        stages = [p[0] for p in passes]
        self.assertEqual(stages, sorted(set(stages)))
        self.assertTrue(stages)
        for stage, active, before, after, tags in passes:
            for obj_id, pose in before.items():
                if obj_id in active:
                    continue
                self.assertEqual(after[obj_id], pose)
                if tags[obj_id] > stage:
                    self.assertIsNone(after[obj_id][0])
        self.assertTrue(all(o.is_placed for o in pg.objects))


if __name__ == '__main__':
    unittest.main()
