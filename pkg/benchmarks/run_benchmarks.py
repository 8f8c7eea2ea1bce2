import argparse
import os
import sys

import pandas as pd

from .beta_sweep import run_beta_sweep
from .cd_self_consistency import run_cd_self_consistency
from .gibbs_oracle import run_gibbs_oracle
from .sampling_speed import run_sampling_speed, run_staged_comparison

DEFAULT_BUNDLE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures', 'bedroom_grammar.json')


def main():
    parser = argparse.ArgumentParser(description="Acceptance-scale benchmarks (slow; not part of the unit suite)")
    parser.add_argument('which', nargs='*', default=['oracle', 'beta', 'cd', 'speed', 'staged'],
                        choices=['oracle', 'beta', 'cd', 'speed', 'staged'])
    parser.add_argument('--bundle', default=DEFAULT_BUNDLE)
    parser.add_argument('--jobs', type=int, default=1)
    args = parser.parse_args()

    print("🔥 Scene synthesis benchmarks")
    print("==================================================")
    results = []
    for name in args.which:
        if name == 'oracle':
            results.append(run_gibbs_oracle())
        elif name == 'beta':
            results.extend(run_beta_sweep(args.bundle))
        elif name == 'cd':
            results.append(run_cd_self_consistency(args.bundle, jobs=args.jobs))
        elif name == 'speed':
            results.append(run_sampling_speed(args.bundle))
        elif name == 'staged':
            results.append(run_staged_comparison(args.bundle))
        print()

    print(pd.DataFrame(results).set_index("benchmark").to_string(float_format=lambda v: f"{v:.4f}"))
    sys.exit(0 if all(r["passed"] for r in results) else 1)


if __name__ == "__main__":
    main()
