"""Per-query latency of float, binary and two-stage retrieval on random data."""

import argparse

from hashvpr.evaluation import latency_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--db-size", type=int, nargs="+", default=[10_000])
    ap.add_argument("--repeats", type=int, default=100)
    ap.add_argument("--out")
    args = ap.parse_args()
    lines = []
    for n in args.db_size:
        rep = latency_bench(n_db=n, repeats=args.repeats)
        print(rep.table(), end="\n\n")
        lines.append(rep.to_jsonl())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
