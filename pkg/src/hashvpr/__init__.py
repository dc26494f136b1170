"""Two-stage place retrieval with binary codes and float re-ranking, plus a toy
differentiable side-adapter network and the losses used to train it."""

from .descriptors import (
    BinaryCode,
    binary_cosine,
    cosine_similarity,
    hamming_distance,
    l2_normalize,
    sign_hash,
)
from .index import (
    BinaryIndex,
    CandidateList,
    FloatStore,
    build_binary_index,
    build_float_store,
    hamming_topk,
    l2_topk,
)
from .pipeline import RankedResult, RetrievalConfig, rerank, two_stage_search

__all__ = [
    "BinaryCode", "binary_cosine", "cosine_similarity", "hamming_distance", "l2_normalize",
    "sign_hash", "BinaryIndex", "CandidateList", "FloatStore", "build_binary_index",
    "build_float_store", "hamming_topk", "l2_topk", "RankedResult", "RetrievalConfig",
    "rerank", "two_stage_search",
]
