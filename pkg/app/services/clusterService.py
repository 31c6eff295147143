from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.utils.errors import ClusteringError
from config import config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClustererConfig:
    kind: config.ClustererKind = config.CLUSTERER_KIND
    seed: int = config.SEED
    max_iters: int = config.KMEANS_MAX_ITERS
    tolerance: float = config.KMEANS_TOLERANCE
    linkage: str = config.HAC_LINKAGE

    def __post_init__(self):
        if self.max_iters <= 0 or self.tolerance <= 0:
            raise ClusteringError("max_iters and tolerance must be positive")
        if self.linkage != "average":
            raise ClusteringError(f"unsupported linkage {self.linkage!r}")


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int


def _check_request(points: np.ndarray, k: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ClusteringError("points must be an n x d matrix")
    n = len(points)
    if k < 1 or k > n:
        raise ClusteringError(f"cannot form {k} clusters from {n} points")
    if not np.isfinite(points).all():
        raise ClusteringError("points contain non-finite values")
    return points


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    "|a|^2 + |b|^2 - 2ab, clamped at zero; n x m memory"
    squared = (
        np.einsum("ij,ij->i", points, points)[:, None]
        + np.einsum("ij,ij->i", centers, centers)[None, :]
        - 2.0 * (points @ centers.T)
    )
    return np.maximum(squared, 0.0)


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(idx)
        closest = np.minimum(closest, _squared_distances(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def _reseed_empty(points: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    "move the point farthest from its center into each empty cluster"
    sizes = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(sizes == 0)
    if not len(empty):
        return labels
    labels = labels.copy()
    distance = np.sum((points - centers[labels]) ** 2, axis=1)
    for j in empty:
        donors = sizes[labels] > 1
        candidates = np.where(donors, distance, -np.inf)
        idx = int(np.argmax(candidates))
        sizes[labels[idx]] -= 1
        labels[idx] = j
        sizes[j] += 1
        distance[idx] = -np.inf
    return labels


def kmeans_fit(points, k: int, clusterer: ClustererConfig) -> ClusterAssignment:
    """
    k-means++ seeding followed by Lloyd iterations until the largest center
    shift drops below the tolerance. Empty clusters take the farthest point.
    """
    points = _check_request(points, k)
    rng = np.random.default_rng(clusterer.seed)
    centers = _kmeans_plus_plus(points, k, rng)
    labels = np.zeros(len(points), dtype=np.int64)
    for _ in range(clusterer.max_iters):
        labels = np.argmin(_squared_distances(points, centers), axis=1)
        labels = _reseed_empty(points, labels, centers, k)
        updated = np.stack([points[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.linalg.norm(updated - centers, axis=1)))
        centers = updated
        if shift < clusterer.tolerance:
            break
    return ClusterAssignment(labels=labels.astype(np.int64), k=k)


def hac_fit(points, k: int, clusterer: ClustererConfig) -> ClusterAssignment:
    """
    Average-linkage agglomeration on Euclidean distance until k clusters
    remain. The closest pair is the first minimum in row-major order over
    i < j, so ties go to the smallest (i, j); a merged cluster keeps index i.
    """
    points = _check_request(points, k)
    n = len(points)
    # symmetric; the diagonal and retired clusters hold inf
    distances = np.sqrt(_squared_distances(points, points))
    np.fill_diagonal(distances, np.inf)
    sizes = np.ones(n, dtype=np.int64)
    root = np.arange(n)

    # row_min[r] / row_arg[r]: first minimum of distances[r, r+1:]
    row_min = np.full(n, np.inf)
    row_arg = np.full(n, -1, dtype=np.int64)

    def rescan(r: int):
        if r + 1 >= n:
            row_min[r], row_arg[r] = np.inf, -1
            return
        c = int(np.argmin(distances[r, r + 1:])) + r + 1
        row_min[r], row_arg[r] = distances[r, c], c

    for r in range(n):
        rescan(r)

    for _ in range(n - k):
        i = int(np.argmin(row_min))
        j = int(row_arg[i])
        # Lance-Williams update for average linkage
        merged = (sizes[i] * distances[i] + sizes[j] * distances[j]) / (sizes[i] + sizes[j])
        merged[i] = merged[j] = np.inf
        sizes[i] += sizes[j]
        root[root == j] = i
        distances[j, :] = distances[:, j] = np.inf
        distances[i, :] = distances[:, i] = merged
        row_min[j], row_arg[j] = np.inf, -1
        rescan(i)

        stale = np.flatnonzero((row_arg[:j] == i) | (row_arg[:j] == j))
        for r in stale:
            rescan(int(r))
        # rows above i whose best may now be column i
        above = np.arange(i)
        fresh = above[(row_arg[:i] != i) & (row_arg[:i] != j)]
        fresh = fresh[(merged[fresh] < row_min[fresh]) | ((merged[fresh] == row_min[fresh]) & (i < row_arg[fresh]))]
        row_min[fresh], row_arg[fresh] = merged[fresh], i

    _, labels = np.unique(root, return_inverse=True)
    return ClusterAssignment(labels=labels.astype(np.int64), k=k)


def fit(points, k: int, clusterer: ClustererConfig) -> ClusterAssignment:
    if clusterer.kind == config.ClustererKind.KMeans:
        return kmeans_fit(points, k, clusterer)
    if clusterer.kind == config.ClustererKind.HAC:
        return hac_fit(points, k, clusterer)
    raise ClusteringError(f"unknown clusterer {clusterer.kind!r}")


def _entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    total = counts.sum()
    p = counts / total
    return float(-np.sum(p * np.log(p)))


def homogeneity(truth: Sequence, predicted: Sequence) -> float:
    """
    1 - H(C|K) / H(C) with natural-log entropies; 1 when the truth has a
    single class.
    """
    truth, predicted = np.asarray(truth), np.asarray(predicted)
    if len(truth) != len(predicted):
        raise ClusteringError(f"label lists differ in length: {len(truth)} vs {len(predicted)}")
    if len(truth) == 0:
        raise ClusteringError("homogeneity of an empty labelling is undefined")
    _, classes = np.unique(truth, return_inverse=True)
    _, clusters = np.unique(predicted, return_inverse=True)
    n_classes, n_clusters = classes.max() + 1, clusters.max() + 1
    contingency = np.zeros((n_classes, n_clusters), dtype=np.int64)
    np.add.at(contingency, (classes, clusters), 1)

    n = float(len(truth))
    entropy_c = _entropy(contingency.sum(axis=1))
    if entropy_c == 0.0:
        return 1.0
    cluster_sizes = contingency.sum(axis=0)
    nz_c, nz_k = np.nonzero(contingency)
    joint = contingency[nz_c, nz_k].astype(np.float64)
    conditional = float(-np.sum((joint / n) * np.log(joint / cluster_sizes[nz_k])))
    return min(1.0, max(0.0, 1.0 - conditional / entropy_c))


def weighted_mean(scores: Sequence[float], weights: Sequence[float]) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if scores.shape != weights.shape:
        raise ClusteringError("scores and weights differ in length")
    if np.any(weights < 0):
        raise ClusteringError("weights must not be negative")
    total = weights.sum()
    if total <= 0:
        raise ClusteringError("weights are all zero")
    return float(np.dot(scores, weights) / total)
