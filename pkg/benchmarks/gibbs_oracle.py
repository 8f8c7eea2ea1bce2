import math
import os
import sys
import time

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from data_models import Room
from energy import local_energy, total_energy
from grammar import build_grammar, collect_cliques, derive_parse_tree, inverse_cdf
from sampler import Proposal

from .config import (
    ORACLE_BETA, ORACLE_BURN_IN, ORACLE_GRID, ORACLE_MOVE_PROBS, ORACLE_ROOM, ORACLE_STEPS,
    ORACLE_TV_LIMIT, ORACLE_YAW_BINS,
)

TOY_GRAMMAR = {
    "root": "toy",
    "nodes": {
        "toy": {"kind": "and", "children": ["bed", "desk"]},
        "bed": {"kind": "terminal", "category": "bed"},
        "desk": {"kind": "terminal", "category": "desk"},
    },
    "size_models": {
        "bed": {"samples": [[1.2, 0.8, 0.5]], "bandwidths": [0.01, 0.01, 0.01]},
        "desk": {"samples": [[0.8, 0.5, 0.75]], "bandwidths": [0.01, 0.01, 0.01]},
    },
    "relation_stats": {
        "mean_dist": {"bed|desk": 1.2, "bed|wall#0": 0.9, "desk|wall#0": 0.3},
        "mean_ori": {"bed|desk": 0.0, "bed|wall#0": 0.0, "desk|wall#0": 0.0},
        "d_acc": 0.4,
    },
    "weights": [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
}


def grid_cells():
    w, d, _ = ORACLE_ROOM
    xs = [(i + 0.5) * w / ORACLE_GRID for i in range(ORACLE_GRID)]
    ys = [(j + 0.5) * d / ORACLE_GRID for j in range(ORACLE_GRID)]
    return [(x, y) for x in xs for y in ys]


def yaw_bins():
    return [-math.pi + k * 2.0 * math.pi / ORACLE_YAW_BINS for k in range(ORACLE_YAW_BINS)]


def _set_state(pg, state, cells, yaws):
    for obj, (c, k) in zip(pg.objects, (state[:2], state[2:])):
        obj.position = (cells[c][0], cells[c][1], 0.0)
        obj.yaw = yaws[k]


def toy_scene(seed=0):
    grammar = build_grammar(TOY_GRAMMAR)
    pg = derive_parse_tree(grammar, np.random.default_rng(seed), room=Room(*ORACLE_ROOM))
    cells, yaws = grid_cells(), yaw_bins()
    _set_state(pg, (0, 0, 1, 0), cells, yaws)
    pg.cliques = collect_cliques(pg, grammar)
    return grammar, pg


def exact_distribution(grammar, pg, beta=ORACLE_BETA):
    """pi*(s) proportional to exp(-beta E(s)) over every grid state."""
    cells, yaws = grid_cells(), yaw_bins()
    n_c, n_k = len(cells), len(yaws)
    energies = np.empty((n_c, n_k, n_c, n_k))
    for c1 in range(n_c):
        for k1 in range(n_k):
            for c2 in range(n_c):
                for k2 in range(n_k):
                    _set_state(pg, (c1, k1, c2, k2), cells, yaws)
                    energies[c1, k1, c2, k2] = total_energy(pg, grammar).total
    logits = -beta * (energies - energies.min())
    probs = np.exp(logits)
    return probs / probs.sum()


def run_grid_chain(grammar, pg, rng, steps=ORACLE_STEPS, burn_in=ORACLE_BURN_IN, beta=ORACLE_BETA):
    """
    MH over grid-snapped moves (cell jump, yaw bin, swap). Every proposal is
    symmetric, so acceptance is min(1, exp(-beta dE)) with dE from the
    production incremental energy.
    """
    cells, yaws = grid_cells(), yaw_bins()
    n_c, n_k = len(cells), len(yaws)
    state = [0, 0, 1, 0]
    _set_state(pg, state, cells, yaws)
    counts = np.zeros((n_c, n_k, n_c, n_k), dtype=np.int64)
    a, b = pg.objects
    accepted = 0

    for step in range(steps + burn_in):
        move = inverse_cdf(ORACLE_MOVE_PROBS, rng.random())
        new = list(state)
        if move == 0:
            slot = 2 * int(rng.integers(2))
            new[slot] = int(rng.integers(n_c))
        elif move == 1:
            slot = 2 * int(rng.integers(2)) + 1
            new[slot] = int(rng.integers(n_k))
        else:
            new = [state[2], state[3], state[0], state[1]]

        changes = {
            a.id: {"position": (cells[new[0]][0], cells[new[0]][1], 0.0), "yaw": yaws[new[1]]},
            b.id: {"position": (cells[new[2]][0], cells[new[2]][1], 0.0), "yaw": yaws[new[3]]},
        }
        proposal = Proposal("grid", changes)
        ids = proposal.affected(pg)
        before = local_energy(pg, grammar, ids)
        proposal.apply(pg)
        delta = local_energy(pg, grammar, ids) - before
        if delta <= 0 or rng.random() < math.exp(-beta * delta):
            state = new
            accepted += 1
        else:
            proposal.revert(pg)
        if step >= burn_in:
            counts[tuple(state)] += 1
    return counts / counts.sum(), accepted / (steps + burn_in)


def total_variation(p, q):
    return 0.5 * float(np.abs(p - q).sum())


def run_gibbs_oracle(seed=0):
    print("🎲 Gibbs oracle: exhaustive enumeration vs grid-snapped MH chain")
    start = time.time()
    grammar, pg = toy_scene(seed)
    exact = exact_distribution(grammar, pg)
    print(f"  📐 {exact.size:,} states enumerated in {time.time() - start:.1f}s")

    start = time.time()
    empirical, acceptance = run_grid_chain(grammar, pg, np.random.default_rng(seed))
    tv = total_variation(empirical, exact)
    print(f"  ⏱️ {ORACLE_STEPS:,} steps in {time.time() - start:.1f}s, acceptance {acceptance:.2f}")
    status = "✅" if tv < ORACLE_TV_LIMIT else "❌"
    print(f"  {status} TV(empirical, exact) = {tv:.4f} (limit {ORACLE_TV_LIMIT})")
    return {"benchmark": "gibbs_oracle", "value": tv, "limit": ORACLE_TV_LIMIT, "passed": tv < ORACLE_TV_LIMIT}
