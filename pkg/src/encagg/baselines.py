"""Reference aggregation rules: mean, Krum, coordinate-wise median, trimmed mean, FLTrust."""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import InvalidInput
from .projection import as_array

log = logging.getLogger(__name__)


def agg_mean(grads) -> np.ndarray:
    return as_array(grads).mean(axis=0)


def krum_scores(grads, f: int) -> np.ndarray:
    """Sum of squared distances from each gradient to its n - f - 2 nearest others."""
    g = as_array(grads)
    n = g.shape[0]
    if n < 2:
        raise InvalidInput("Krum needs at least two gradients")
    m = n - f - 2
    if m <= 0:
        log.warning("Krum with n=%d, f=%d leaves no neighbours; using 1", n, f)
        m = 1
    m = min(m, n - 1)
    diff = g[:, None, :] - g[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    return np.sort(d2, axis=1)[:, :m].sum(axis=1)


def agg_krum(grads, f: int) -> np.ndarray:
    g = as_array(grads)
    if g.shape[0] < 2 * f + 3:
        log.debug("Krum guarantee needs n >= 2f + 3 (n=%d, f=%d)", g.shape[0], f)
    # argmin returns the lowest index among equal scores
    return g[int(np.argmin(krum_scores(g, f)))].copy()


def agg_median(grads) -> np.ndarray:
    return np.median(as_array(grads), axis=0)


def agg_trimmed_mean(grads, trim_fraction: float) -> np.ndarray:
    g = as_array(grads)
    n = g.shape[0]
    if not 0.0 <= trim_fraction < 0.5:
        raise InvalidInput("trim_fraction must be in [0, 0.5)")
    beta = int(math.floor(trim_fraction * n))
    if 2 * beta >= n:
        raise InvalidInput(f"trimming {beta} from each side leaves nothing of {n}")
    s = np.sort(g, axis=0)
    return s[beta : n - beta].mean(axis=0)


def fltrust_scores(grads, server_gradient) -> np.ndarray:
    g = as_array(grads)
    g0 = np.asarray(server_gradient, dtype=float)
    n0 = np.linalg.norm(g0)
    if n0 == 0:
        raise InvalidInput("server gradient must be non-zero")
    norms = np.linalg.norm(g, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    cos = np.where(norms > 0, (g @ g0) / (safe * n0), 0.0)
    return np.maximum(cos, 0.0)


def agg_fltrust(grads, server_gradient) -> np.ndarray:
    """Trust-weighted mean of client gradients rescaled to the server gradient's norm."""
    g = as_array(grads)
    g0 = np.asarray(server_gradient, dtype=float)
    ts = fltrust_scores(g, g0)
    if ts.sum() == 0:
        return g0.copy()
    norms = np.linalg.norm(g, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    rescaled = g * (np.linalg.norm(g0) / safe)[:, None]
    return (ts[:, None] * rescaled).sum(axis=0) / ts.sum()


BASELINES = ("mean", "krum", "median", "trimmed_mean", "fltrust")


def aggregate(kind: str, grads, *, krum_f: int = 0, trim_fraction: float = 0.1, server_gradient=None):
    if kind == "mean":
        return agg_mean(grads)
    if kind == "krum":
        return agg_krum(grads, krum_f)
    if kind == "median":
        return agg_median(grads)
    if kind == "trimmed_mean":
        return agg_trimmed_mean(grads, trim_fraction)
    if kind == "fltrust":
        if server_gradient is None:
            raise InvalidInput("fltrust needs a server gradient")
        return agg_fltrust(grads, server_gradient)
    raise InvalidInput(f"unknown baseline {kind!r}")
