"""Model-poisoning attacks and the per-round poisoning schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import select_radius
from .errors import InvalidInput, SearchFailed
from .projection import check_orthonormal, decompose_against_subspace, project_or_origin

ATTACK_KINDS = ("none", "gaussian", "sign_flip", "scale", "lie", "min_max", "adaptive_subspace")

DEFAULT_PARAMS = {
    "none": {},
    "gaussian": {"std": 1.0},
    "sign_flip": {"scale": 10.0},
    "scale": {"scale": 10.0},
    "lie": {"z": 1.5},
    "min_max": {"search_iters": 50},
    # magnitudes are relative: in-plane as a fraction of the estimated epsilon,
    # orthogonal as a multiple of the benign mean norm (upper end of the search)
    "adaptive_subspace": {"inplane_frac": 0.5, "ortho_max": 5.0, "search_iters": 8},
}


@dataclass
class AttackSpec:
    kind: str = "none"
    params: dict = field(default_factory=dict)
    collusion: bool = True

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise InvalidInput(f"unknown attack kind {self.kind!r}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        for key, value in self.params.items():
            if key not in merged:
                raise InvalidInput(f"attack {self.kind!r} has no parameter {key!r}")
            if not math.isfinite(float(value)) or float(value) < 0:
                raise InvalidInput(f"attack parameter {key} must be finite and >= 0")
            merged[key] = value
        self.params = merged

    def param(self, key):
        return self.params[key]


@dataclass
class PoisonSchedule:
    malicious_ratio: float
    malicious_ids: tuple
    flags: np.ndarray  # rounds x len(malicious_ids) booleans

    def poisoners(self, round_index: int) -> list:
        row = self.flags[round_index]
        return [c for c, f in zip(self.malicious_ids, row) if f]


# -- constructors ------------------------------------------------------------


def attack_sign_flip(benign, scale: float = 1.0) -> np.ndarray:
    if not scale > 0:
        raise InvalidInput("scale must be positive")
    return -scale * np.asarray(benign, dtype=float)


def attack_gaussian(shape, std: float, rng) -> np.ndarray:
    return np.random.default_rng(rng).normal(0.0, std, size=shape)


def attack_scale(benign_set, scale: float) -> np.ndarray:
    """Shared directional attack: the benign mean reversed and amplified."""
    mu = np.asarray(benign_set, dtype=float).reshape(-1, np.shape(benign_set)[-1]).mean(axis=0)
    return -scale * mu


def attack_lie(benign_set, z: float = 1.5) -> np.ndarray:
    """Little-is-enough: coordinate-wise mean minus z population standard deviations."""
    b = np.asarray(benign_set, dtype=float)
    if b.ndim != 2 or b.shape[0] < 2:
        raise InvalidInput("LIE needs at least two benign gradients")
    if not z > 0:
        raise InvalidInput("z must be positive")
    return b.mean(axis=0) - z * b.std(axis=0)


def _max_pairwise(b):
    diff = b[:, None, :] - b[None, :, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))


def attack_min_max(benign_set, direction=None, search_iters: int = 50) -> np.ndarray:
    """Push the benign mean as far as possible along ``direction`` while the
    crafted gradient's largest distance to any benign gradient stays within
    the largest benign pairwise distance. The scale is found by bisection.

    Default direction is the reversed unit benign mean.
    """
    b = np.asarray(benign_set, dtype=float)
    if b.ndim != 2 or b.shape[0] < 2:
        raise InvalidInput("Min-Max needs at least two benign gradients")
    mu = b.mean(axis=0)
    if direction is None:
        nm = np.linalg.norm(mu)
        direction = -mu / nm if nm > 0 else np.eye(b.shape[1])[0]
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    bound = _max_pairwise(b)

    def feasible(gamma):
        return np.linalg.norm(b - (mu + gamma * direction), axis=1).max() <= bound

    if not feasible(0.0):
        raise SearchFailed("no feasible scaling, even the mean is too far")
    lo = 0.0
    hi = bound + np.linalg.norm(b - mu, axis=1).max() + 1e-12
    for _ in range(max(int(search_iters), 30)):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return mu + lo * direction


def attack_adaptive_subspace(
    benign_ref,
    basis,
    epsilon_est: float,
    inplane_mag: float,
    ortho_mag: float,
    rng,
    direction=None,
) -> np.ndarray:
    """Reference gradient plus a small in-plane shift and an orthogonal-complement payload.

    The in-plane part moves the point at most ``epsilon_est`` inside the
    projection plane. The orthogonal part is invisible to the 2-D projection;
    its direction is ``direction`` projected onto the complement, or random.
    """
    basis = check_orthonormal(basis)
    rng = np.random.default_rng(rng)
    if inplane_mag > epsilon_est:
        raise InvalidInput("in-plane magnitude must not exceed the estimated radius")
    if ortho_mag < 0 or inplane_mag < 0:
        raise InvalidInput("magnitudes must be non-negative")
    ref = np.asarray(benign_ref, dtype=float)
    d = ref.size

    angle = rng.uniform(0.0, 2.0 * np.pi)
    delta_par = inplane_mag * (basis @ np.array([np.cos(angle), np.sin(angle)]))

    raw = rng.standard_normal(d) if direction is None else np.asarray(direction, dtype=float)
    _, perp = decompose_against_subspace(raw, basis)
    norm = np.linalg.norm(perp)
    if norm == 0:
        _, perp = decompose_against_subspace(rng.standard_normal(d), basis)
        norm = np.linalg.norm(perp)
    delta_perp = ortho_mag * perp / norm if norm > 0 else np.zeros(d)
    return ref + delta_par + delta_perp


# -- schedule ----------------------------------------------------------------


def schedule_poisoning(n_clients, malicious_ids, malicious_ratio, rounds, rng, p: float = 0.5) -> PoisonSchedule:
    """Independent per-round coin flips conditioned on the ratio cap.

    Equivalent to redrawing each round's flips until at most
    ``floor(ratio * n)`` are set, but sampled directly: the count comes from
    the binomial truncated at the cap, then a uniform subset of that size.
    """
    ids = tuple(int(i) for i in malicious_ids)
    if len(ids) > n_clients:
        raise InvalidInput("more malicious ids than clients")
    if not 0.0 <= p <= 1.0:
        raise InvalidInput("p must be in [0,1]")
    rng = np.random.default_rng(rng)
    m = len(ids)
    cap = min(int(math.floor(malicious_ratio * n_clients + 1e-9)), m)
    flags = np.zeros((rounds, m), dtype=bool)
    if cap == 0:
        return PoisonSchedule(malicious_ratio, ids, flags)
    counts = np.arange(cap + 1)
    log_pmf = np.array([math.lgamma(m + 1) - math.lgamma(c + 1) - math.lgamma(m - c + 1) for c in counts])
    if p == 0.0 or p == 1.0:
        weights = (counts == (0 if p == 0.0 else m)).astype(float)
        if weights.sum() == 0:  # p == 1 with a binding cap: every flip must be set, never accepted
            raise InvalidInput("p=1 cannot satisfy a binding ratio cap")
    else:
        log_pmf += counts * math.log(p) + (m - counts) * math.log1p(-p)
        weights = np.exp(log_pmf - log_pmf.max())
    weights /= weights.sum()
    for t in range(rounds):
        k = int(rng.choice(counts, p=weights))
        flags[t, rng.choice(m, size=k, replace=False)] = True
    return PoisonSchedule(malicious_ratio, ids, flags)


# -- round-level crafting ----------------------------------------------------


def _jitter(base, count, scale, rng):
    noise = rng.standard_normal((count, base.size))
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    return base[None, :] + scale * noise


def _estimate_epsilon(honest, known_rows, r):
    proj = project_or_origin(honest)
    eps = select_radius(proj.projected[known_rows], r).epsilon if len(known_rows) >= 2 else 0.0
    return proj, eps


def craft_round(spec: AttackSpec, honest, poisoner_rows, reference_rows, rng, *, simulator=None, known_rows=(), r=0.2):
    """Replace the poisoners' rows of ``honest`` with crafted gradients.

    ``honest`` holds every client's genuine gradient for the round. Attackers
    build benign estimates from ``reference_rows`` (their own genuine
    gradients, or every genuine gradient under full knowledge). ``simulator``
    is used by the adaptive attack: ``simulator(grads) -> set of indices that
    would be aggregated``.
    """
    honest = np.asarray(honest, dtype=float)
    out = honest.copy()
    rows = list(poisoner_rows)
    if spec.kind == "none" or not rows:
        return out
    rng = np.random.default_rng(rng)
    ref = honest[list(reference_rows)] if len(reference_rows) >= 2 else honest
    n, d = honest.shape

    if spec.kind == "sign_flip":
        for i in rows:
            out[i] = attack_sign_flip(honest[i], spec.param("scale"))
        return out
    if spec.kind == "gaussian":
        for i in rows:
            out[i] = attack_gaussian(d, spec.param("std"), rng)
        return out

    if spec.kind == "scale":
        crafted = attack_scale(ref, spec.param("scale"))
    elif spec.kind == "lie":
        crafted = attack_lie(ref, spec.param("z"))
    elif spec.kind == "min_max":
        crafted = attack_min_max(ref, None, int(spec.param("search_iters")))
    elif spec.kind == "adaptive_subspace":
        return _craft_adaptive(spec, honest, rows, rng, simulator, known_rows, r)
    else:  # pragma: no cover - guarded by AttackSpec
        raise InvalidInput(spec.kind)

    spread = np.median(np.linalg.norm(ref - ref.mean(axis=0), axis=1)) or 1.0
    if spec.collusion:
        out[rows] = _jitter(crafted, len(rows), 1e-3 * spread, rng)
    else:
        # without collusion each attacker crafts from its own noisy view
        for i in rows:
            out[i] = crafted + _jitter(np.zeros(d), 1, 1e-3 * spread, rng)[0]
    return out


def _craft_adaptive(spec, honest, rows, rng, simulator, known_rows, r):
    """Full-knowledge attack tuned by bisection against a local simulation of the rule."""
    benign_rows = [i for i in range(honest.shape[0]) if i not in set(rows)]
    benign = honest[benign_rows]
    known_pos = [benign_rows.index(k) for k in known_rows if k in benign_rows]
    proj, eps = _estimate_epsilon(benign, known_pos, r)
    mu = benign.mean(axis=0)
    # reference: the benign gradient whose projection is closest to the benign center
    center = proj.projected.mean(axis=0)
    ref = benign[int(np.argmin(np.linalg.norm(proj.projected - center, axis=1)))]
    inplane = min(spec.param("inplane_frac"), 1.0) * eps
    ortho_max = spec.param("ortho_max") * max(np.linalg.norm(mu), 1e-12)
    direction = -mu
    angle_seed = int(rng.integers(2**31))
    jitter_seed = int(rng.integers(2**31))

    def build(ortho):
        g = attack_adaptive_subspace(ref, proj.basis, eps, inplane, ortho, angle_seed, direction)
        out = honest.copy()
        out[rows] = _jitter(g, len(rows), 1e-3 * max(eps, 1e-12), np.random.default_rng(jitter_seed))
        return out

    if simulator is None:
        return build(ortho_max)
    lo, hi = 0.0, ortho_max
    best = build(0.0)
    if not _passes(simulator(best), rows):
        return best
    if _passes(simulator(build(hi)), rows):
        return build(hi)
    for _ in range(int(spec.param("search_iters"))):
        mid = 0.5 * (lo + hi)
        cand = build(mid)
        if _passes(simulator(cand), rows):
            lo, best = mid, cand
        else:
            hi = mid
    return best


def _passes(selected, rows) -> bool:
    # the crafted copies are near-identical, so a majority vote is enough
    hits = sum(1 for i in rows if i in selected)
    return 2 * hits >= len(rows)
