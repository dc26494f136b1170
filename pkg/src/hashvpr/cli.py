"""Command-line entry point: ``hashvpr <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .descriptors import BinaryCode, sign_hash_rows
from .evaluation import GT_MODES, GroundTruthSpec, latency_bench, recall_at_n
from .geo import DivisionConfig, PlaceRecord, divide, sample_batches
from .index import build_binary_index, build_float_store
from .losses import HASH_MODES, LossConfig
from .pipeline import RetrievalConfig, binary_search, float_search, two_stage_search
from .synthetic import clustered_places


def _load(path, dtype=None) -> io.DescriptorSet:
    ds = io.read_descriptors(path)
    if dtype is not None and ds.dtype != dtype:
        kind = "float32" if dtype == io.FLOAT32 else "bit-packed"
        raise SystemExit(f"{path}: expected {kind} rows")
    if ds.ids is None:
        ds.ids = [str(i) for i in range(ds.count)]
    return ds


def cmd_synth(args) -> int:
    places = clustered_places(args.places, args.per_place, float_dim=args.float_dim,
                              code_dim=args.code_dim, spread=args.spread, seed=args.seed)
    q_idx, db_idx = places.split(args.queries_per_place)
    rng = np.random.default_rng(args.seed)
    # places on a 100 m lattice, images jittered within a few meters
    side = int(np.ceil(np.sqrt(args.places)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in (("db", db_idx), ("query", q_idx)):
        ids = [f"{name}{i:06d}" for i in range(len(rows))]
        io.write_descriptors(out / f"{name}_float.svpr",
                             io.DescriptorSet(args.float_dim, io.FLOAT32, places.floats[rows], ids))
        io.write_descriptors(out / f"{name}_bin.svpr",
                             io.DescriptorSet(args.code_dim, io.PACKED, places.codes[rows], ids))
        meta = []
        for rid, r in zip(ids, rows):
            lab = int(places.labels[r])
            e = 500_000.0 + 100.0 * (lab % side) + float(rng.uniform(-3, 3))
            n = 4_400_000.0 + 100.0 * (lab // side) + float(rng.uniform(-3, 3))
            meta.append({"id": rid, "east": round(e, 3), "north": round(n, 3),
                         "heading": round(float(rng.uniform(0, 30)), 3), "frame": lab * 100,
                         "source": "synthetic"})
        io.write_jsonl(out / f"{name}_meta.jsonl", meta)
    print(f"wrote {len(db_idx)} database and {len(q_idx)} query images to {out}")
    return 0


def cmd_hash(args) -> int:
    ds = _load(args.input, io.FLOAT32)
    codes = sign_hash_rows(ds.data)
    io.write_descriptors(args.output, io.DescriptorSet(ds.dim, io.PACKED, codes, ds.ids))
    print(f"hashed {ds.count} descriptors of dim {ds.dim}")
    return 0


def cmd_index(args) -> int:
    prefix = Path(args.out)
    if args.bin:
        ds = _load(args.bin, io.PACKED)
        idx = build_binary_index(ds.data, ds.ids, dim=ds.dim)
        io.write_descriptors(str(prefix) + ".bin.svpr",
                             io.DescriptorSet(idx.dim, io.PACKED, idx.codes, idx.ids))
        print(f"binary index: {len(idx)} codes, {idx.n_words} words per row")
    if args.float:
        ds = _load(args.float, io.FLOAT32)
        store = build_float_store(ds.data, ds.ids)
        io.write_descriptors(str(prefix) + ".float.svpr",
                             io.DescriptorSet(store.dim, io.FLOAT32, store.descriptors, store.ids))
        print(f"float store: {len(store)} descriptors of dim {store.dim}")
    if not (args.bin or args.float):
        raise SystemExit("index: give --bin and/or --float")
    return 0


def cmd_search(args) -> int:
    need_bin = args.mode in ("binary", "two-stage")
    need_float = args.mode in ("float", "two-stage")
    bidx = store = qb = qf = None
    if need_bin:
        if not (args.db_bin and args.query_bin):
            raise SystemExit(f"search --mode {args.mode} needs --db-bin and --query-bin")
        db = _load(args.db_bin, io.PACKED)
        bidx = build_binary_index(db.data, db.ids, dim=db.dim)
        qb = _load(args.query_bin, io.PACKED)
    if need_float:
        if not (args.db_float and args.query_float):
            raise SystemExit(f"search --mode {args.mode} needs --db-float and --query-float")
        db = _load(args.db_float, io.FLOAT32)
        store = build_float_store(db.data, db.ids)
        qf = _load(args.query_float, io.FLOAT32)
    if qb is not None and qf is not None and qb.ids != qf.ids:
        raise SystemExit("binary and float query files list different ids")
    queries = (qb or qf)
    cfg = RetrievalConfig(k_candidates=args.topk)
    rows = []
    for i, qid in enumerate(queries.ids):
        if args.mode == "two-stage":
            res = two_stage_search(bidx, store, BinaryCode(qb.data[i], qb.dim), qf.data[i], cfg)
            dist = res.rerank_distances.tolist()
        elif args.mode == "binary":
            res = binary_search(bidx, BinaryCode(qb.data[i], qb.dim), args.topk)
            dist = res.candidates.distances.tolist()
        else:
            res = float_search(store, qf.data[i], args.topk)
            dist = res.candidates.distances.tolist()
        row = {"query": qid, "ids": res.ids, "distances": dist}
        if args.mode == "two-stage":
            row["candidates"] = list(res.candidates.ids)
            row["candidate_distances"] = res.candidates.distances.tolist()
        if args.timings:
            row["timings_ns"] = res.timings_ns
        rows.append(row)
    io.write_jsonl(args.out, rows)
    print(f"{args.mode} search: {len(rows)} queries, top-{args.topk} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    results = list(io.read_jsonl(args.results))
    queries = {r.id: r for r in map(PlaceRecord.from_dict, io.read_jsonl(args.queries))}
    database = {r.id: r for r in map(PlaceRecord.from_dict, io.read_jsonl(args.database))}
    gt = GroundTruthSpec(args.gt_mode, args.dist_m, args.angle_deg, args.frames)
    key = "candidates" if args.stage1 else "ids"
    ranked = [row[key] for row in results]
    qrecs = [queries[row["query"]] for row in results]
    res = recall_at_n(ranked, qrecs, database, gt, args.n, args.exclude_no_positive)
    print(res.table())
    if args.out:
        io.write_jsonl(args.out, [{"gt_mode": gt.mode, **r} for r in res.to_records()])
    return 0


def cmd_bench(args) -> int:
    report = latency_bench(n_db=args.db_size, binary_dim=args.binary_dim,
                           float_dims=args.float_dims, rerank_dim=args.rerank_dim, k=args.topk,
                           repeats=args.repeats, warmup=args.warmup, seed=args.seed)
    print(report.table())
    if args.out:
        Path(args.out).write_text(report.to_jsonl() + "\n")
    return 0


def cmd_divide(args) -> int:
    cfg = DivisionConfig(args.cell_m, args.angle_bin_deg, args.group_n, args.group_l)
    records = [PlaceRecord.from_dict(d) for d in io.read_jsonl(args.records)]
    rows = divide(records, cfg)
    io.write_jsonl(args.out, (row.to_dict(cfg) for row in rows))
    n_cats = len({row.place_key for row in rows})
    used = len({row.group for row in rows if row.group is not None})
    print(f"{len(rows)} records -> {n_cats} categories in {used} of {cfg.n_groups} groups")
    if args.batches:
        warnings: list = []
        batches = list(sample_batches(rows, cfg, args.places_per_batch, args.images_per_place,
                                      args.seed, args.batches, warnings))
        io.write_jsonl(args.batch_out or str(args.out) + ".batches.jsonl",
                       warnings + [b.to_dict() for b in batches])
        print(f"{len(batches)} batches, {len(warnings)} groups skipped")
    return 0


def cmd_traintoy(args) -> int:
    from .experiments import AblationConfig, binary_recall_at_1, train_hashing_mode
    from .synthetic import hashing_task

    loss = LossConfig(args.ms_alpha, args.ms_beta, args.ms_gamma, args.lam, args.pair_fraction)
    cfg = AblationConfig(code_dim=args.code_dim, steps=args.steps, lr=args.lr, loss=loss)
    task = hashing_task(seed=args.seed, **cfg.task_kwargs)
    modes = HASH_MODES if args.mode == "all" else (args.mode,)
    records = []
    for mode in modes:
        log = (lambda res, m=mode: records.append({"mode": m, **json.loads(res.to_json())}))
        model = train_hashing_mode(task, mode, cfg, args.seed, log=log)
        r1 = binary_recall_at_1(model, task, cfg.code_dim)
        records.append({"mode": mode, "binary_r1": r1})
        print(f"{mode:<8} binary R@1 = {100 * r1:.1f}")
    if args.metrics:
        io.write_jsonl(args.metrics, records)
    return 0


def build_parser(defaults: io.RunConfig | None = None) -> argparse.ArgumentParser:
    d = defaults or io.RunConfig()
    p = argparse.ArgumentParser(prog="hashvpr", description=__doc__)
    p.add_argument("--config", help="key = value run configuration file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic clustered place dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--places", type=int, default=20)
    s.add_argument("--per-place", type=int, default=50)
    s.add_argument("--queries-per-place", type=int, default=5)
    s.add_argument("--float-dim", type=int, default=d.float_dim)
    s.add_argument("--code-dim", type=int, default=d.code_dim)
    s.add_argument("--spread", type=float, default=1.3)
    s.add_argument("--seed", type=int, default=d.seed)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("hash", help="sign-hash a float descriptor file into packed codes")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_hash)

    s = sub.add_parser("index", help="validate descriptors and write id-sorted snapshots")
    s.add_argument("--bin")
    s.add_argument("--float")
    s.add_argument("--out", required=True, help="snapshot path prefix")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", help="one- or two-stage retrieval")
    s.add_argument("--mode", choices=("binary", "float", "two-stage"), default="two-stage")
    s.add_argument("--topk", type=int, default=d.topk)
    s.add_argument("--db-bin")
    s.add_argument("--db-float")
    s.add_argument("--query-bin")
    s.add_argument("--query-float")
    s.add_argument("--timings", action="store_true", help="include per-stage timings")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("eval", help="Recall@N of search results")
    s.add_argument("--results", required=True)
    s.add_argument("--queries", required=True, help="query metadata (JSON lines)")
    s.add_argument("--database", required=True, help="database metadata (JSON lines)")
    s.add_argument("--gt-mode", choices=GT_MODES, default="geo")
    s.add_argument("--dist-m", type=float, default=d.dist_m)
    s.add_argument("--angle-deg", type=float, default=d.angle_deg)
    s.add_argument("--frames", type=int, default=d.frames)
    s.add_argument("--n", type=int, nargs="+", default=[1, 5, 10, 100])
    s.add_argument("--stage1", action="store_true", help="score the candidate list instead")
    s.add_argument("--exclude-no-positive", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="retrieval latency table")
    s.add_argument("--db-size", type=int, default=10_000)
    s.add_argument("--binary-dim", type=int, default=512)
    s.add_argument("--float-dims", type=int, nargs="+", default=[4096, 2048, 512])
    s.add_argument("--rerank-dim", type=int, default=2048)
    s.add_argument("--topk", type=int, default=d.topk)
    s.add_argument("--repeats", type=int, default=100)
    s.add_argument("--warmup", type=int, default=10)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("divide", help="UTM/heading category division and group manifest")
    s.add_argument("--records", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cell-m", type=float, default=15.0)
    s.add_argument("--angle-bin-deg", type=float, default=60.0)
    s.add_argument("--group-n", type=int, default=3)
    s.add_argument("--group-l", type=int, default=2)
    s.add_argument("--batches", type=int, default=0, help="also sample this many batches")
    s.add_argument("--places-per-batch", type=int, default=120)
    s.add_argument("--images-per-place", type=int, default=4)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--batch-out")
    s.set_defaults(func=cmd_divide)

    s = sub.add_parser("traintoy", help="toy hashing-head training in one loss mode")
    s.add_argument("--mode", choices=HASH_MODES + ("all",), default="sc+ste")
    s.add_argument("--steps", type=int, default=600)
    s.add_argument("--code-dim", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--lam", type=float, default=d.lam)
    s.add_argument("--pair-fraction", type=float, default=d.pair_fraction)
    s.add_argument("--ms-alpha", type=float, default=d.ms_alpha)
    s.add_argument("--ms-beta", type=float, default=d.ms_beta)
    s.add_argument("--ms-gamma", type=float, default=d.ms_gamma)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--metrics", help="write per-step records (JSON lines)")
    s.set_defaults(func=cmd_traintoy)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    defaults = None
    if known.config:
        try:
            defaults = io.RunConfig.load(known.config)
        except (OSError, ValueError, TypeError) as exc:
            print(f"hashvpr: bad config: {exc}", file=sys.stderr)
            return 2
    args = build_parser(defaults).parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"hashvpr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
