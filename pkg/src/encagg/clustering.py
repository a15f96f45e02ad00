"""Clustering-radius selection and a deterministic DBSCAN over 2-D points."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

NOISE = -1
DEFAULT_MIN_SAMPLES = 5
DEFAULT_RADIUS_COEFF = 0.2


@dataclass(frozen=True)
class RadiusSelection:
    epsilon: float
    root_pair: tuple  # positions within the known-benign point array
    sorted_distances: np.ndarray


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray  # int array, NOISE for noise points
    clusters: list  # list of sorted index arrays, position j holds cluster id j
    centers: np.ndarray  # c x 2
    noise: np.ndarray  # sorted index array
    core: np.ndarray  # boolean mask of core points

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def select_radius(projected_known, r: float = DEFAULT_RADIUS_COEFF) -> RadiusSelection:
    """Pick epsilon as the ceil(r * C(k,2))-th smallest pairwise distance of the known-benign points.

    The returned root pair indexes into ``projected_known``. Ties in distance
    are resolved by the (i, j) lexicographic order of the pair.
    """
    pts = np.asarray(projected_known, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidInput("radius selection needs at least two known-benign points")
    if not 0.0 < r < 1.0:
        raise InvalidInput(f"r must be in (0,1), got {r}")
    k = pts.shape[0]
    iu, ju = np.triu_indices(k, 1)
    dist = pairwise_distances(pts)[iu, ju]
    order = np.argsort(dist, kind="stable")
    n_pairs = dist.size
    # tolerance guards products like 0.1 * 30 = 3.0000000000000004
    rank = min(n_pairs, max(1, math.ceil(r * n_pairs - 1e-9)))
    pick = order[rank - 1]
    return RadiusSelection(
        epsilon=float(dist[pick]),
        root_pair=(int(iu[pick]), int(ju[pick])),
        sorted_distances=dist[order],
    )


def cluster_centers(result: ClusteringResult, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if not result.clusters:
        return np.zeros((0, 2))
    return np.array([points[idx].mean(axis=0) for idx in result.clusters])


def dbscan(points, epsilon: float, min_samples: int = DEFAULT_MIN_SAMPLES) -> ClusteringResult:
    """DBSCAN with a closed epsilon-ball that counts the point itself.

    Core points are grouped into clusters by breadth-first expansion seeded in
    ascending index order, so cluster ids follow the first core point found.
    A border point joins the cluster of its lowest-indexed core neighbour.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InvalidInput("dbscan needs an m x 2 array with m >= 1")
    if not np.all(np.isfinite(pts)):
        raise InvalidInput("non-finite coordinates")
    if epsilon < 0 or not np.isfinite(epsilon):
        raise InvalidInput(f"epsilon must be finite and >= 0, got {epsilon}")
    if min_samples < 1:
        raise InvalidInput("min_samples must be >= 1")

    m = pts.shape[0]
    adj = pairwise_distances(pts) <= epsilon
    core = adj.sum(axis=1) >= min_samples
    labels = np.full(m, NOISE, dtype=int)

    next_id = 0
    for seed in range(m):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = next_id
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in np.flatnonzero(adj[p] & core):
                if labels[q] == NOISE:
                    labels[q] = next_id
                    queue.append(q)
        next_id += 1

    for i in np.flatnonzero(~core):
        core_nbrs = np.flatnonzero(adj[i] & core)
        if core_nbrs.size:
            labels[i] = labels[core_nbrs[0]]

    clusters = [np.flatnonzero(labels == c) for c in range(next_id)]
    centers = np.array([pts[idx].mean(axis=0) for idx in clusters]) if clusters else np.zeros((0, 2))
    return ClusteringResult(
        labels=labels,
        clusters=clusters,
        centers=centers,
        noise=np.flatnonzero(labels == NOISE),
        core=core,
    )
