"""Multi-k inverse-distance retrieval scores from sorted neighbour hits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datastore import Datastore, NeighborHit

EPS_DIST = 1e-10


@dataclass(frozen=True)
class RetrievalProfile:
    distances: np.ndarray  # d_1..d_K, padded with the last real distance
    scores: np.ndarray  # S_{r,1}..S_{r,K}
    n_real: int

    @property
    def K(self) -> int:
        return len(self.scores)


def profile_arrays(dist: np.ndarray, values: np.ndarray, K: int):
    """Vector form of :func:`retrieval_profile` for one query's sorted hits."""
    n = len(dist)
    if n == 0:
        raise ValueError("retrieval profile needs at least one hit")
    if K < 1:
        raise ValueError("K must be at least 1")
    if np.any(np.diff(dist) < 0):
        raise ValueError("hits must be sorted by ascending distance")
    n = min(n, K)
    dist = np.asarray(dist[:n], dtype=np.float64)
    values = np.asarray(values[:n], dtype=np.float64)
    w = 1.0 / (dist + EPS_DIST)
    scores = np.cumsum(w * values) / np.cumsum(w)
    # rounding can push a convex combination one ulp outside its hull
    scores = np.clip(scores, np.minimum.accumulate(values), np.maximum.accumulate(values))
    if n < K:
        dist = np.concatenate([dist, np.full(K - n, dist[-1])])
        scores = np.concatenate([scores, np.full(K - n, scores[-1])])
    return dist, scores, n


def retrieval_profile(hits: Sequence[NeighborHit], K: int) -> RetrievalProfile:
    dist = np.array([h.distance for h in hits], dtype=np.float64)
    values = np.array([h.value for h in hits], dtype=np.float64)
    d, s, n = profile_arrays(dist, values, K)
    return RetrievalProfile(d, s, n)


def batch_profiles(store: Datastore, queries, K: int, exclude=None):
    """Distances and retrieval scores for every row of ``queries``.

    ``exclude`` optionally gives, per query, a store index to leave out (or None).
    Returns ``(D, S)`` arrays of shape (n_queries, K).
    """
    queries = np.asarray(queries, dtype=np.float64)
    D = np.empty((len(queries), K))
    S = np.empty((len(queries), K))
    for i, q in enumerate(queries):
        ex = None if exclude is None else exclude[i]
        idx, dist = store.search_indices(q, K, ex)
        D[i], S[i], _ = profile_arrays(dist, store.values[idx], K)
    return D, S


def vanilla_knn(profile: RetrievalProfile, k: int) -> float:
    """Fixed-k inverse-distance kNN prediction, i.e. S_{r,k}."""
    return float(profile.scores[min(k, profile.K) - 1])
