"""Desk-scale experiments shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descriptors import BinaryCode, sign_hash_rows
from .index import build_binary_index, build_float_store, hamming_topk, l2_topk
from .losses import HASH_MODES, LossConfig
from .pipeline import RetrievalConfig, two_stage_search
from .synthetic import HashingTask, PlaceSet, clustered_places, hashing_task
from .training import Adam, ProjectionHead, StepResult, lr_at_epoch, train_step


def label_recall(ranked_labels: list[np.ndarray], query_labels, ns=(1, 5, 10)) -> dict[int, float]:
    """Recall@N when a retrieved item is correct iff it shares the query's label."""
    q = np.asarray(query_labels)
    out = {}
    for n in ns:
        hits = [np.any(r[:n] == lab) for r, lab in zip(ranked_labels, q)]
        out[n] = float(np.mean(hits))
    return out


@dataclass
class AblationConfig:
    code_dim: int = 32
    steps: int = 600
    places_per_batch: int = 32
    images_per_place: int = 4
    lr: float = 1e-2
    steps_per_epoch: int = 200
    loss: LossConfig = field(default_factory=LossConfig)
    task_kwargs: dict = field(default_factory=lambda: {"eval_per_place": 20,
                                                       "queries_per_place": 10})


def binary_recall_at_1(model: ProjectionHead, task: HashingTask, code_dim: int) -> float:
    db = sign_hash_rows(model(task.db_x).data)
    index = build_binary_index(db, np.arange(len(task.db_y)), dim=code_dim)
    queries = sign_hash_rows(model(task.query_x).data)
    ranked = []
    for words in queries:
        cands = hamming_topk(index, BinaryCode(words, code_dim), 1)
        ranked.append(task.db_y[np.asarray(cands.ids)])
    return label_recall(ranked, task.query_y, ns=(1,))[1]


def train_hashing_mode(task: HashingTask, mode: str, cfg: AblationConfig, seed: int,
                       log: Callable[[StepResult], None] | None = None) -> ProjectionHead:
    model = ProjectionHead(task.train_x.shape[1], cfg.code_dim, seed=seed)
    opt = Adam(lr=cfg.lr)
    rng = np.random.default_rng(seed)
    labels_all = task.train_y
    places = np.unique(labels_all)
    for step in range(cfg.steps):
        opt.lr = lr_at_epoch(cfg.lr, step // cfg.steps_per_epoch)
        chosen = rng.choice(places, size=min(cfg.places_per_batch, len(places)), replace=False)
        rows = np.concatenate([
            rng.choice(np.flatnonzero(labels_all == p), size=cfg.images_per_place, replace=False)
            for p in chosen
        ])
        res = train_step(model, task.train_x[rows], labels_all[rows], cfg.loss, opt, mode, rng)
        if log is not None:
            log(res)
    return model


def run_hashing_ablation(seed: int, cfg: AblationConfig = AblationConfig(),
                         modes=HASH_MODES) -> dict[str, float]:
    """Binary R@1 for each hashing mode, trained from identical seeds."""
    task = hashing_task(seed=seed, **cfg.task_kwargs)
    return {mode: binary_recall_at_1(train_hashing_mode(task, mode, cfg, seed), task,
                                     cfg.code_dim)
            for mode in modes}


@dataclass
class TwoStageReport:
    float_recall: dict[int, float]
    two_stage_recall: dict[int, float]
    stage1_recall: dict[int, float]


def two_stage_vs_float(places: PlaceSet | None = None, k: int = 100,
                       per_place_queries: int = 5, ns=(1, 5, 10)) -> TwoStageReport:
    """Compare one-stage float retrieval with Hamming-then-rerank retrieval."""
    places = places if places is not None else clustered_places()
    q_idx, db_idx = places.split(per_place_queries)
    ids = np.arange(len(db_idx))
    bidx = build_binary_index(places.codes[db_idx], ids, dim=places.code_dim)
    store = build_float_store(places.floats[db_idx], ids)
    db_labels = places.labels[db_idx]
    cfg = RetrievalConfig(k_candidates=k)
    float_ranked, two_ranked, stage1_ranked = [], [], []
    for qi in q_idx:
        qf = places.floats[qi]
        qb = BinaryCode(places.codes[qi], places.code_dim)
        float_ranked.append(db_labels[np.asarray(l2_topk(store, qf, max(ns)).ids)])
        res = two_stage_search(bidx, store, qb, qf, cfg)
        two_ranked.append(db_labels[np.asarray(res.ids)])
        stage1_ranked.append(db_labels[np.asarray(res.candidates.ids)])
    q_labels = places.labels[q_idx]
    return TwoStageReport(
        label_recall(float_ranked, q_labels, ns),
        label_recall(two_ranked, q_labels, ns),
        label_recall(stage1_ranked, q_labels, tuple(sorted(set(ns) | {k}))),
    )
