import os
import sys
import time

import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from data_models import SamplerConfig
from energy import total_energy
from sampler import run_chain
from serialization import load_grammar

from .config import SWEEP_BETAS, SWEEP_ITERS, SWEEP_PAIR, SWEEP_SEEDS


def relational_energy(breakdown):
    """Wall, furniture, support and group cliques only; the tree and size terms do not depend on beta."""
    return (breakdown.wall_energy + breakdown.furniture_energy
            + breakdown.support_energy + breakdown.group_energy)


def sweep_table(grammar, betas, seeds, iters):
    rows = []
    for beta in betas:
        cfg = SamplerConfig.from_config(beta=beta, iter_max=iters)
        for seed in range(seeds):
            pg, trace = run_chain(grammar, cfg, seed)
            breakdown = total_energy(pg, grammar)
            rows.append({"beta": beta, "seed": seed, "relational": relational_energy(breakdown),
                         "energy": breakdown.total, "steps": len(trace.records), "converged": trace.converged})
    return pd.DataFrame(rows)


def summarize(df):
    return df.groupby("beta").agg(mean_relational=("relational", "mean"), mean_energy=("energy", "mean"),
                                  std_relational=("relational", "std"), converged=("converged", "mean"),
                                  steps=("steps", "median")).sort_index()


def non_increasing(values):
    """True when every value is <= its predecessor."""
    values = list(values)
    return all(b <= a for a, b in zip(values, values[1:]))


def run_beta_sweep(bundle_path, seeds=SWEEP_SEEDS, betas=SWEEP_BETAS, pair=SWEEP_PAIR, iters=SWEEP_ITERS):
    """
    Two checks from one sweep: the mean converged relational energy must not
    rise from one beta to the next, and the mean final energy at the larger
    beta of `pair` must sit below the smaller one.
    """
    all_betas = sorted(set(betas) | set(pair))
    print(f"🌡️ Tidiness sweep: beta in {all_betas}, {seeds} seeds, {iters} steps per stage")
    grammar = load_grammar(bundle_path)
    start = time.time()
    summary = summarize(sweep_table(grammar, all_betas, seeds, iters))
    print(summary.to_string(float_format=lambda v: f"{v:.3f}"))
    print(f"  ⏱️ {time.time() - start:.1f}s")

    ranked = summary.loc[sorted(betas), "mean_relational"]
    rank_ok = non_increasing(ranked)
    rises = [float(b - a) for a, b in zip(ranked, ranked.iloc[1:])]
    print(f"  {'✅' if rank_ok else '❌'} mean relational energy non-increasing over beta in {sorted(betas)}")

    low, high = min(pair), max(pair)
    gap = float(summary.loc[high, "mean_energy"] - summary.loc[low, "mean_energy"])
    pair_ok = gap < 0
    print(f"  {'✅' if pair_ok else '❌'} mean energy at beta={high} below beta={low} ({gap:+.3f})")
    return [
        {"benchmark": "beta_rank_order", "value": max(rises, default=0.0), "limit": 0.0, "passed": bool(rank_ok)},
        {"benchmark": "beta_pair", "value": gap, "limit": 0.0, "passed": bool(pair_ok)},
    ]
