"""
Synthetic Training Scenes
-------------------------
Samples layouts from a grammar bundle and writes them as a training-scene
file. Useful for checking that learning recovers the parameters a bundle
was sampled with, and for producing larger training sets than the shipped
fixture.

Usage:
    python scripts/make_training_scenes.py fixtures/bedroom_grammar.json --n 200 --out output/synthetic.json
"""

import argparse
import os
import sys

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from commands import sample_chains
from constants import Emojis
from data_models import SamplerConfig
from logger import logger
from serialization import dump_json, load_grammar, parse_graph_to_training_scene, training_scenes_to_doc


def make_scenes(bundle_path, n, seed=0, iters=None, beta=None, jobs=1):
    grammar = load_grammar(bundle_path, require_sizes=True)
    cfg = SamplerConfig.from_config(iter_max=iters, beta=beta)
    results = sample_chains(grammar, cfg, seed, n, jobs)
    scenes = [parse_graph_to_training_scene(pg, scene_id=f"synthetic_{i:04d}", room_type=grammar.root)
              for i, (_, pg, _) in enumerate(results)]
    converged = sum(trace.converged for _, _, trace in results)
    logger.info(f"{Emojis.DICE} sampled {n} scenes, {converged} converged")
    return scenes


def main():
    parser = argparse.ArgumentParser(description="Sample a training-scene file from a grammar bundle")
    parser.add_argument('bundle')
    parser.add_argument('--n', type=int, default=50)
    parser.add_argument('--out', required=True)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--iters', type=int, default=None)
    parser.add_argument('--beta', type=float, default=None)
    parser.add_argument('--jobs', type=int, default=1)
    args = parser.parse_args()

    scenes = make_scenes(args.bundle, args.n, seed=args.seed, iters=args.iters, beta=args.beta, jobs=args.jobs)
    dump_json(training_scenes_to_doc(scenes), args.out)
    print(f"{Emojis.DISK} {len(scenes)} scenes written: {args.out}")


if __name__ == "__main__":
    main()
