"""Train the toy hashing head in every loss mode and report binary R@1 per seed."""

import argparse
import json

import numpy as np

from hashvpr.experiments import AblationConfig, run_hashing_ablation
from hashvpr.losses import HASH_MODES


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--steps", type=int, default=600)
    ap.add_argument("--code-dim", type=int, default=32)
    ap.add_argument("--out", help="write per-seed results as JSON lines")
    args = ap.parse_args()
    cfg = AblationConfig(code_dim=args.code_dim, steps=args.steps)
    runs = []
    for seed in args.seeds:
        res = run_hashing_ablation(seed, cfg)
        runs.append({"seed": seed, **res})
        print(f"seed {seed}: " + "  ".join(f"{m} {100 * res[m]:.1f}" for m in HASH_MODES))
    print("mean:   " + "  ".join(
        f"{m} {100 * np.mean([r[m] for r in runs]):.1f}" for m in HASH_MODES))
    if args.out:
        with open(args.out, "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in runs)


if __name__ == "__main__":
    main()
