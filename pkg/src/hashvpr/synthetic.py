"""Seeded synthetic place data for tests, benchmarks and toy training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import l2_normalize, sign_hash_rows


@dataclass
class PlaceSet:
    """Images of ``n_places`` places: descriptors plus their place labels."""

    labels: np.ndarray
    floats: np.ndarray          # (n, float_dim) float32, unit rows
    codes: np.ndarray | None    # (n, words) uint64
    code_dim: int
    latent: np.ndarray

    def split(self, per_place_queries: int):
        """First ``per_place_queries`` images of every place become queries."""
        q_idx, db_idx = [], []
        for lab in np.unique(self.labels):
            rows = np.flatnonzero(self.labels == lab)
            q_idx.extend(rows[:per_place_queries])
            db_idx.extend(rows[per_place_queries:])
        return np.asarray(q_idx), np.asarray(db_idx)


def clustered_places(n_places: int = 20, per_place: int = 50, latent_dim: int = 32,
                     float_dim: int = 2048, code_dim: int = 512, spread: float = 1.3,
                     code_noise: float = 0.6, seed: int = 0) -> PlaceSet:
    """Latent place centers plus per-image noise, lifted to float and code spaces.

    Floats see the latent through one random map; codes are sign hashes of a
    second map with extra noise, so the binary stage is the weaker one.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_places, latent_dim))
    labels = np.repeat(np.arange(n_places), per_place)
    latent = centers[labels] + spread * rng.standard_normal((len(labels), latent_dim))
    a_float = rng.standard_normal((latent_dim, float_dim)) / np.sqrt(latent_dim)
    floats = l2_normalize(latent @ a_float)
    codes = None
    if code_dim:
        a_code = rng.standard_normal((latent_dim, code_dim)) / np.sqrt(latent_dim)
        noisy = latent + code_noise * rng.standard_normal(latent.shape)
        codes = sign_hash_rows(noisy @ a_code)
    return PlaceSet(labels, floats, codes, code_dim, latent)


def random_unit_rows(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return l2_normalize(rng.standard_normal((n, dim)))


def dyadic_unit_rows(n: int, dim: int, nonzero: int, rng: np.random.Generator) -> np.ndarray:
    """Unit rows with ``nonzero`` entries of +-1/sqrt(nonzero); ``nonzero`` a power of 4.

    Every dot product and squared distance between such rows is exact in
    float32, so ties are genuine and reproducible.
    """
    scale = 1.0 / np.sqrt(nonzero)
    if scale * scale * nonzero != 1.0:
        raise ValueError("nonzero must make 1/sqrt(nonzero) exact")
    out = np.zeros((n, dim), dtype=np.float32)
    for i in range(n):
        cols = rng.choice(dim, size=nonzero, replace=False)
        out[i, cols] = rng.choice([-scale, scale], size=nonzero)
    return out


@dataclass
class HashingTask:
    train_x: np.ndarray
    train_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    db_x: np.ndarray
    db_y: np.ndarray


def hashing_task(n_places: int = 100, train_per_place: int = 4, eval_per_place: int = 8,
                 queries_per_place: int = 3, in_dim: int = 64, latent_dim: int = 16,
                 spread: float = 0.5, nuisance: float = 1.0, seed: int = 0) -> HashingTask:
    """Clustered input features for the hashing ablation.

    Place identity lives in a ``latent_dim`` subspace; the remaining input
    directions carry nuisance variation the model has to learn to ignore.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_places, latent_dim))
    mix = np.linalg.qr(rng.standard_normal((in_dim, in_dim)))[0]

    def draw(per_place):
        labels = np.repeat(np.arange(n_places), per_place)
        z = centers[labels] + spread * rng.standard_normal((len(labels), latent_dim))
        junk = nuisance * rng.standard_normal((len(labels), in_dim - latent_dim))
        return np.concatenate([z, junk], axis=1) @ mix.T, labels

    train_x, train_y = draw(train_per_place)
    eval_x, eval_y = draw(eval_per_place)
    is_query = np.zeros(len(eval_y), dtype=bool)
    for lab in range(n_places):
        is_query[np.flatnonzero(eval_y == lab)[:queries_per_place]] = True
    return HashingTask(train_x, train_y, eval_x[is_query], eval_y[is_query],
                       eval_x[~is_query], eval_y[~is_query])
