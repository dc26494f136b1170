"""Float-only versus Hamming-then-rerank recall on clustered synthetic places,
swept over candidate-list size and cluster spread."""

import argparse

from hashvpr.experiments import two_stage_vs_float
from hashvpr.synthetic import clustered_places


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spread", type=float, nargs="+", default=[1.0, 1.3, 1.6])
    ap.add_argument("--k", type=int, nargs="+", default=[10, 50, 100])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'spread':>6} {'k':>4} {'float R@1':>10} {'2-stage R@1':>12} {'stage-1 R@1':>12} "
          f"{'stage-1 R@k':>12}")
    for spread in args.spread:
        places = clustered_places(spread=spread, seed=args.seed)
        for k in args.k:
            rep = two_stage_vs_float(places, k=k)
            print(f"{spread:>6.2f} {k:>4} {rep.float_recall[1]:>10.3f} "
                  f"{rep.two_stage_recall[1]:>12.3f} {rep.stage1_recall[1]:>12.3f} "
                  f"{rep.stage1_recall[k]:>12.3f}")


if __name__ == "__main__":
    main()
