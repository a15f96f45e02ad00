"""Root-guided benign-cluster identification and the density-constrained filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .clustering import NOISE, ClusteringResult
from .errors import InconsistentLabels

DEFAULT_GAMMA = 3.0


@dataclass(frozen=True)
class FilterOutcome:
    benign_label: int
    benign_core: frozenset
    retained: frozenset
    fallback_center_used: bool
    # global mean of all projected points, only set on the fallback branch
    provisional_center: Optional[np.ndarray] = None


def root_label(labels, root_pair) -> int:
    """Shared label of the two roots.

    If exactly one root is noise the other root's label is used. Two different
    non-noise labels cannot come from the radius construction unless a border
    point was claimed by another cluster; that raises InconsistentLabels.
    """
    a, b = (int(labels[i]) for i in root_pair)
    if a == b:
        return a
    if a == NOISE:
        return b
    if b == NOISE:
        return a
    raise InconsistentLabels(f"root clients carry labels {a} and {b}")


def identify_benign_cluster(clustering: ClusteringResult, root_pair, centers, projected_root):
    """Return (benign_label, fallback_flag) following the root/nearest-center/fallback hierarchy."""
    return resolve_benign_label(root_label(clustering.labels, root_pair), centers, projected_root)


def resolve_benign_label(label_of_roots: int, centers, projected_root):
    """Benign label given the roots' own label, the cluster centers and the root positions."""
    if label_of_roots != NOISE:
        return int(label_of_roots), False
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) > 1:
        roots = np.asarray(projected_root, dtype=float)
        avg = 0.5 * (
            np.linalg.norm(centers - roots[0], axis=1) + np.linalg.norm(centers - roots[1], axis=1)
        )
        # argmin keeps the first minimum, i.e. the lowest cluster id on ties
        return int(np.argmin(avg)), False
    return NOISE, True


def near_any(points, refs, radius: float) -> np.ndarray:
    """Boolean mask: which of ``points`` lie within ``radius`` of some row of ``refs``."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    refs = np.asarray(refs, dtype=float).reshape(-1, 2)
    if len(points) == 0 or len(refs) == 0:
        return np.zeros(len(points), dtype=bool)
    diff = points[:, None, :] - refs[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return (dist <= radius).any(axis=1)


def apply_density_constraint(candidates, projected, known_benign, gamma: float, epsilon: float) -> frozenset:
    """Keep candidates within gamma * epsilon of at least one known-benign point."""
    candidates = sorted(int(i) for i in candidates)
    known = sorted(int(k) for k in known_benign)
    pts = np.asarray(projected, dtype=float)
    ok = near_any(pts[candidates], pts[known], gamma * epsilon)
    return frozenset(c for c, keep in zip(candidates, ok) if keep)


def filter_round_one(
    clustering: ClusteringResult,
    projected,
    known_benign,
    root_pair,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = 0.0,
) -> FilterOutcome:
    """Assemble the retained set: density-constrained benign cluster plus all noise points."""
    pts = np.asarray(projected, dtype=float)
    labels = clustering.labels
    benign_label, fallback = identify_benign_cluster(
        clustering, root_pair, clustering.centers, pts[list(root_pair)]
    )
    members = np.flatnonzero(labels == benign_label)
    benign_core = apply_density_constraint(members, pts, known_benign, gamma, epsilon)
    noise = frozenset(int(i) for i in clustering.noise)
    return FilterOutcome(
        benign_label=benign_label,
        benign_core=benign_core,
        retained=benign_core | noise,
        fallback_center_used=fallback,
        provisional_center=pts.mean(axis=0) if fallback else None,
    )
