import os
import sys
import time

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from commands import sample_chains
from data_models import CDConfig, PotentialWeights, SamplerConfig
from learning import learn_grammar
from serialization import load_grammar, parse_graph_to_training_scene

from .config import CD_MISMATCH_RATIO, CD_SAMPLE_ITERS, CD_SCENES, CD_TRUE_WEIGHTS


def run_cd_self_consistency(bundle_path, n_scenes=CD_SCENES, seed=0, jobs=1):
    """
    Samples scenes under hand-set weights, relearns the bundle from them and
    checks that contrastive divergence closes most of the moment gap.
    """
    print(f"📚 CD self-consistency: {n_scenes} scenes sampled under lambda* = {list(CD_TRUE_WEIGHTS)}")
    bundle = load_grammar(bundle_path)
    truth = bundle.with_parameters(weights=PotentialWeights.from_vector(CD_TRUE_WEIGHTS))

    start = time.time()
    cfg = SamplerConfig.from_config(iter_max=CD_SAMPLE_ITERS)
    results = sample_chains(truth, cfg, seed, n_scenes, jobs)
    scenes = [parse_graph_to_training_scene(pg, scene_id=f"s{i}", room_type=truth.root)
              for i, (_, pg, _) in enumerate(results)]
    print(f"  🎲 sampled in {time.time() - start:.1f}s")

    start = time.time()
    learned, trace, _ = learn_grammar(scenes, bundle, CDConfig.from_config(), np.random.default_rng(seed), jobs=jobs)
    first, last = trace[0]["mismatch"], trace[-1]["mismatch"]
    ratio = last / first if first > 0 else 0.0
    print(f"  ⏱️ {len(trace)} iterations in {time.time() - start:.1f}s")
    print(f"  📊 mismatch {first:.4f} -> {last:.4f} (ratio {ratio:.3f})")
    print(f"  📊 learned lambda = {np.round(learned.weights.as_vector(), 3).tolist()}")
    passed = ratio < CD_MISMATCH_RATIO
    print(f"  {'✅' if passed else '❌'} final mismatch below {CD_MISMATCH_RATIO:.0%} of initial")
    return {"benchmark": "cd_self_consistency", "value": ratio, "limit": CD_MISMATCH_RATIO, "passed": passed}
