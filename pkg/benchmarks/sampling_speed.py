import os
import sys
import time

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from data_models import SamplerConfig
from energy import total_energy
from sampler import run_chain
from serialization import load_grammar

from .config import SPEED_LIMIT_S, SPEED_SEEDS, STAGED_ENERGY_TOL, STAGED_SEEDS


def run_sampling_speed(bundle_path, seeds=SPEED_SEEDS):
    """Wall-clock time to convergence with the default sampler settings, median over seeds."""
    print(f"⏱️ Sampling speed: default settings, {seeds} seeds")
    grammar = load_grammar(bundle_path)
    cfg = SamplerConfig.from_config()
    rows = []
    for seed in range(seeds):
        start = time.time()
        pg, trace = run_chain(grammar, cfg, seed)
        rows.append({"seed": seed, "seconds": time.time() - start, "steps": len(trace.records),
                     "objects": len(pg.objects), "supported": sum(o.address is not None for o in pg.objects),
                     "converged": trace.converged})
    df = pd.DataFrame(rows).set_index("seed")
    print(df.to_string(float_format=lambda v: f"{v:.2f}"))
    median = float(df["seconds"].median())
    passed = median <= SPEED_LIMIT_S and bool(df["converged"].all())
    print(f"  {'✅' if passed else '❌'} median {median:.1f}s (limit {SPEED_LIMIT_S:.0f}s)")
    return {"benchmark": "sampling_speed", "value": median, "limit": SPEED_LIMIT_S, "passed": passed}


def run_staged_comparison(bundle_path, seeds=STAGED_SEEDS):
    """
    Staged vs single-pass sampling: steps needed until the running energy
    first comes within tolerance of the single-pass final mean.
    """
    print(f"🏗️ Staged vs unstaged: {seeds} seeds")
    grammar = load_grammar(bundle_path)
    finals, steps_unstaged, traces = [], [], []
    for seed in range(seeds):
        pg, trace = run_chain(grammar, SamplerConfig.from_config(staged=False), seed)
        finals.append(total_energy(pg, grammar).total)
        steps_unstaged.append(len(trace.records))
        traces.append(run_chain(grammar, SamplerConfig.from_config(staged=True), seed)[1])

    target = float(np.mean(finals))
    band = STAGED_ENERGY_TOL * abs(target)
    staged_steps = []
    for trace in traces:
        reached = next((r.step for r in trace.records if r.stage == 5 and r.energy <= target + band), None)
        staged_steps.append(len(trace.records) if reached is None else reached + 1)

    summary = pd.DataFrame({"unstaged_steps": steps_unstaged, "staged_steps": staged_steps})
    print(summary.describe().loc[["mean", "50%"]].to_string(float_format=lambda v: f"{v:.0f}"))
    ratio = float(np.mean(staged_steps) / np.mean(steps_unstaged))
    passed = ratio <= 0.5
    print(f"  {'✅' if passed else '❌'} staged needs {ratio:.0%} of the unstaged steps")
    return {"benchmark": "staged_schedule", "value": ratio, "limit": 0.5, "passed": passed}
