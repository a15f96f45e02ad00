"""PCA projection of client gradients onto their two principal directions.

The eigensolver is power iteration with deflation. It runs on the d x d
covariance when d <= n and on the n x n Gram matrix otherwise, so the cost of a
round stays O(n^2 d) for the usual case of a few dozen clients and a large
parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateCovariance, InvalidInput

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000
# relative size below which an eigenvalue is treated as zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class GradientMatrix:
    """n client gradients of dimension d, one row per client."""

    data: np.ndarray
    client_ids: Optional[Sequence] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise InvalidInput(f"gradient matrix must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 2:
            raise InvalidInput(f"need n >= 1 and d >= 2, got n={n}, d={d}")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("gradient matrix contains non-finite entries")
        ids = list(range(n)) if self.client_ids is None else list(self.client_ids)
        if len(ids) != n:
            raise InvalidInput("client_ids must align with rows")
        if len(set(ids)) != n:
            raise InvalidInput("client_ids must be unique")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "client_ids", tuple(ids))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def as_array(grads) -> np.ndarray:
    if isinstance(grads, GradientMatrix):
        return grads.data
    return GradientMatrix(grads).data


@dataclass(frozen=True)
class ProjectionResult:
    basis: np.ndarray  # d x 2, orthonormal columns
    eigenvalues: tuple  # (lambda_1, lambda_2), descending
    projected: np.ndarray  # n x 2
    mean: np.ndarray  # length d
    total_variance: float = field(default=0.0)

    def transform(self, vectors) -> np.ndarray:
        """Project arbitrary high-dimensional vectors with this basis and centering."""
        v = np.asarray(vectors, dtype=float)
        return (v - self.mean) @ self.basis


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, which is the lowest-index tie-break
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _orthogonalize(v: np.ndarray, against) -> np.ndarray:
    for u in against:
        v = v - (v @ u) * u
    return v


def _dominant_eigenpair(m: np.ndarray, start: np.ndarray, against=(), zero_level=0.0):
    """Power iteration for the largest eigenpair of a symmetric PSD matrix.

    The iteration matrix is first squared repeatedly, which raises the
    eigenvalue ratio to a large power cheaply; the vector iteration that
    follows then converges in a handful of steps even for small gaps.
    Iterates are kept orthogonal to ``against`` (already-found eigenvectors).
    """
    scale = np.linalg.norm(m)
    if scale <= zero_level:
        return 0.0, start
    p = m / scale
    for _ in range(30):
        q = p @ p
        s = np.linalg.norm(q)
        if s == 0.0 or not np.isfinite(s):
            break
        q = q / s
        done = np.linalg.norm(q - p) < POWER_TOL
        p = q
        if done:
            break
    v = _orthogonalize(p @ start, against)
    if np.linalg.norm(v) < 1e-8:
        v = start.copy()
    v = v / np.linalg.norm(v)
    for _ in range(POWER_MAX_ITER):
        w = _orthogonalize(m @ v, against)
        nw = np.linalg.norm(w)
        if nw <= zero_level:
            return 0.0, v
        w = w / nw
        # the sign is fixed later; compare up to sign here
        if w @ v < 0:
            w = -w
        if np.linalg.norm(w - v) < POWER_TOL:
            v = w
            break
        v = w
    return float(v @ m @ v), v


def top_eigenpairs(sym: np.ndarray, k: int = 2):
    """Top-k eigenpairs of a symmetric PSD matrix by power iteration with deflation."""
    sym = np.asarray(sym, dtype=float)
    m = sym.shape[0]
    vals, vecs = [], []
    work = sym.copy()
    zero_level = RANK_TOL * max(np.linalg.norm(sym), np.finfo(float).tiny)
    # deterministic start vector with no special alignment to coordinate axes
    start = np.cos(np.arange(1, m + 1) * 1.2345) + 0.1
    for _ in range(min(k, m)):
        s = _orthogonalize(start.copy(), vecs)
        for j in range(m):
            if np.linalg.norm(s) > 1e-6:
                break
            e = np.zeros(m)
            e[j] = 1.0
            s = _orthogonalize(e, vecs)
        s = s / np.linalg.norm(s)
        _, v = _dominant_eigenpair(work, s, vecs, zero_level)
        v = _orthogonalize(v, vecs)
        v = v / np.linalg.norm(v)
        lam = max(float(v @ sym @ v), 0.0)
        vals.append(lam)
        vecs.append(v)
        work = work - lam * np.outer(v, v)
    return np.array(vals), np.column_stack(vecs)


def _complete_basis(v1: np.ndarray) -> np.ndarray:
    """Any unit vector orthogonal to v1, chosen deterministically."""
    j = int(np.argmin(np.abs(v1)))
    e = np.zeros_like(v1)
    e[j] = 1.0
    e = e - (e @ v1) * v1
    return e / np.linalg.norm(e)


def project_gradients(grads) -> ProjectionResult:
    """Center the gradients and project them onto the top-2 covariance eigenvectors.

    Raises DegenerateCovariance when every gradient is identical; callers are
    expected to map all points to the origin in that case.
    """
    g = as_array(grads)
    n, d = g.shape
    if n < 2:
        raise InvalidInput("projection needs at least two gradients")
    mean = g.mean(axis=0)
    x = g - mean
    total = float(np.einsum("ij,ij->", x, x)) / (n - 1)
    if total <= 0.0 or not np.isfinite(total):
        raise DegenerateCovariance("all gradients are identical")

    if d <= n:
        cov = x.T @ x / (n - 1)
        vals, vecs = top_eigenpairs(cov, 2)
        v1 = vecs[:, 0]
        v2 = vecs[:, 1] if vals[1] > RANK_TOL * vals[0] else None
    else:
        gram = x @ x.T / (n - 1)
        vals, us = top_eigenpairs(gram, 2)
        v1 = x.T @ us[:, 0]
        v1 /= np.linalg.norm(v1)
        v2 = None
        if vals[1] > RANK_TOL * vals[0]:
            v2 = x.T @ us[:, 1]
            v2 = v2 - (v2 @ v1) * v1
            v2 /= np.linalg.norm(v2)
    if v2 is None:
        v2 = _complete_basis(v1)
        vals = np.array([vals[0], 0.0])
    basis = np.column_stack([_canonical_sign(v1), _canonical_sign(v2)])
    # Rayleigh quotients against the covariance, evaluated through x
    lam = [float(np.sum((x @ basis[:, j]) ** 2)) / (n - 1) for j in range(2)]
    if lam[1] > lam[0]:
        basis = basis[:, ::-1]
        lam = lam[::-1]
    return ProjectionResult(
        basis=basis,
        eigenvalues=(lam[0], lam[1]),
        projected=x @ basis,
        mean=mean,
        total_variance=total,
    )


def project_or_origin(grads) -> ProjectionResult:
    """Like project_gradients, but degenerate input maps every point to (0, 0)."""
    g = as_array(grads)
    try:
        return project_gradients(g)
    except DegenerateCovariance:
        d = g.shape[1]
        basis = np.zeros((d, 2))
        basis[0, 0] = 1.0
        basis[1, 1] = 1.0
        return ProjectionResult(basis, (0.0, 0.0), np.zeros((g.shape[0], 2)), g.mean(axis=0), 0.0)


def variance_captured(result: ProjectionResult, grads) -> float:
    """Fraction of the total variance carried by the two projected directions."""
    g = as_array(grads)
    x = g - g.mean(axis=0)
    total = float(np.einsum("ij,ij->", x, x))
    if total <= 0.0:
        raise InvalidInput("total variance is zero")
    total /= g.shape[0] - 1
    return (result.eigenvalues[0] + result.eigenvalues[1]) / total


def check_orthonormal(basis: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[1] > basis.shape[0]:
        raise InvalidInput(f"basis must be d x k with k <= d, got {basis.shape}")
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > tol:
        raise InvalidInput("basis columns are not orthonormal")
    return basis


def decompose_against_subspace(v, basis):
    """Split v into its component inside span(basis) and the orthogonal remainder."""
    basis = check_orthonormal(basis)
    v = np.asarray(v, dtype=float)
    in_plane = basis @ (basis.T @ v)
    orthogonal = v - in_plane
    # one re-orthogonalisation pass keeps basis^T orthogonal at round-off level
    orthogonal = orthogonal - basis @ (basis.T @ orthogonal)
    in_plane = v - orthogonal
    return in_plane, orthogonal
