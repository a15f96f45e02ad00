"""One EnCAgg aggregation round.

project -> pick radius -> DBSCAN -> root-guided filter -> re-project the
retained gradients -> add generated pseudo-gradients -> DBSCAN again ->
keep the real members of the benign cluster -> unweighted mean -> one
generator update. Any failure before aggregation downgrades the round to the
known-benign mean instead of aborting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .clustering import DEFAULT_MIN_SAMPLES, DEFAULT_RADIUS_COEFF, NOISE, dbscan, select_radius
from .errors import EmptySelection, EncAggError, InvalidInput
from .filtering import DEFAULT_GAMMA, filter_round_one, near_any, resolve_benign_label, root_label
from .generator import (
    GeneratorHyper,
    GeneratorLossReport,
    GeneratorModel,
    generate,
    init_generator,
    sample_noise,
    train_step,
)
from .projection import as_array, project_or_origin

log = logging.getLogger(__name__)


@dataclass
class EnCAggConfig:
    r: float = DEFAULT_RADIUS_COEFF
    gamma: float = DEFAULT_GAMMA
    min_samples: int = DEFAULT_MIN_SAMPLES
    n_gen: int = 100
    use_generator: bool = True
    noise_dim: int = 16
    hidden_dim: int = 32
    hyper: GeneratorHyper = field(default_factory=GeneratorHyper)

    def validate(self) -> "EnCAggConfig":
        if not 0.0 < self.r < 1.0:
            raise InvalidInput("r must be in (0,1)")
        if not self.gamma > 0:
            raise InvalidInput("gamma must be positive")
        if self.min_samples < 1:
            raise InvalidInput("min_samples must be >= 1")
        if self.n_gen < 0:
            raise InvalidInput("n_gen must be >= 0")
        return self

    def output_scale(self, epsilon: float) -> float:
        # half-width of the generator's output box around the benign center
        return 2.0 * epsilon * (1.0 + self.gamma) / 2.0

    def new_generator(self, rng=None) -> GeneratorModel:
        return init_generator(self.noise_dim, self.hidden_dim, rng)


@dataclass
class RoundRecord:
    round_index: int
    retained_round1: frozenset
    final_benign: frozenset
    benign_label_r1: int
    benign_label_r2: int
    epsilon: float
    fallback_used: bool
    pseudo_in_benign: int
    generator_losses: Optional[GeneratorLossReport]
    aggregated_norm: float
    filter_precision: Optional[float] = None
    filter_recall: Optional[float] = None
    error: Optional[str] = None


def aggregate_mean(selected, grads) -> np.ndarray:
    """Unweighted mean of the selected rows."""
    idx = sorted(int(i) for i in selected)
    if not idx:
        raise EmptySelection("cannot aggregate an empty selection")
    g = as_array(grads)
    return g[idx].mean(axis=0)


def apply_global_update(weights, aggregated, eta: float) -> np.ndarray:
    if not eta > 0:
        raise InvalidInput("eta must be positive")
    return np.asarray(weights, dtype=float) - eta * np.asarray(aggregated, dtype=float)


@dataclass
class _Stage:
    retained: frozenset = frozenset()
    label_r1: int = NOISE
    label_r2: int = NOISE
    epsilon: float = 0.0
    final: frozenset = frozenset()
    fallback: bool = False
    pseudo_in_benign: int = 0
    # inputs for the generator update, left None when generation was skipped
    train_inputs: Optional[tuple] = None


def _pseudo_points(generator, noise, real_points, center, scale, epsilon):
    """Pseudo-gradients from a GeneratorModel or from any object exposing ``propose``.

    ``propose(real_points, center, scale, epsilon, noise)`` lets a test double
    place points directly in the round-2 plane.
    """
    if isinstance(generator, GeneratorModel):
        generator.anchor(center, scale)
        return generate(generator, noise, epsilon).points
    return np.asarray(generator.propose(real_points, center, scale, epsilon, noise), dtype=float).reshape(-1, 2)


def _screen(g, known, config: EnCAggConfig, generator, rng, st: _Stage):
    proj1 = project_or_origin(g)
    p1 = proj1.projected
    sel = select_radius(p1[known], config.r)
    eps = sel.epsilon
    st.epsilon = eps
    roots = (known[sel.root_pair[0]], known[sel.root_pair[1]])

    cl1 = dbscan(p1, eps, config.min_samples)
    f1 = filter_round_one(cl1, p1, known, roots, config.gamma, eps)
    st.retained = f1.retained
    st.label_r1 = f1.benign_label

    retained = sorted(f1.retained)
    if len(retained) < config.min_samples:
        st.fallback = True
        return

    proj2 = project_or_origin(g[retained]) if len(retained) >= 2 else proj1
    real2 = proj2.transform(g[retained])
    known2 = proj2.transform(g[known])
    roots2 = proj2.transform(g[list(roots)])

    if f1.benign_core:
        center = proj2.transform(g[sorted(f1.benign_core)]).mean(axis=0)
    else:
        center = known2.mean(axis=0)

    n_gen = config.n_gen if (config.use_generator and generator is not None) else 0
    if n_gen:
        dim = generator.noise_dim if isinstance(generator, GeneratorModel) else config.noise_dim
        noise = sample_noise(n_gen, dim, rng)
        pseudo = _pseudo_points(generator, noise, real2, center, config.output_scale(eps), eps)
    else:
        noise = None
        pseudo = np.zeros((0, 2))
    n_real = len(retained)
    pts2 = np.vstack([real2, pseudo])
    cl2 = dbscan(pts2, eps, config.min_samples)

    # roots that did not survive round one count as noise in round two
    pos = {c: i for i, c in enumerate(retained)}
    root_labels = [cl2.labels[pos[r]] if r in pos else NOISE for r in roots]
    label2, fb = resolve_benign_label(root_label(root_labels, (0, 1)), cl2.centers, roots2)
    st.label_r2 = label2

    if isinstance(generator, GeneratorModel) and n_gen:
        labels = (cl2.labels[n_real:] == label2).astype(float) if label2 != NOISE else np.zeros(n_gen)
        st.pseudo_in_benign = int(labels.sum())
        st.train_inputs = (noise, labels, generator.output_center.copy(), eps)
    elif n_gen and label2 != NOISE:
        st.pseudo_in_benign = int(np.sum(cl2.labels[n_real:] == label2))

    if fb or label2 == NOISE:
        st.fallback = True
        return
    members = [i for i in range(n_real) if cl2.labels[i] == label2]
    keep = near_any(real2[members], known2, config.gamma * eps)
    final = frozenset(retained[i] for i, k in zip(members, keep) if k)
    if not final:
        st.fallback = True
        return
    st.final = final


def run_round(
    grads,
    known_benign,
    config: EnCAggConfig = None,
    generator=None,
    rng_seed=None,
    round_index: int = 0,
):
    """Aggregate one round of client gradients.

    Returns ``(aggregated, record, generator)``. ``generator`` may be a
    GeneratorModel (trained one step per round and returned updated), a
    pseudo-point test double with a ``propose`` method, or None to disable
    pseudo-gradients.
    """
    config = (config or EnCAggConfig()).validate()
    g = as_array(grads)
    n = g.shape[0]
    known = sorted(int(k) for k in known_benign)
    if len(known) < 2 or len(known) > n or known[0] < 0 or known[-1] >= n:
        raise InvalidInput("need 2 <= |known_benign| <= n with valid indices")
    rng = np.random.default_rng(rng_seed)

    st = _Stage()
    error = None
    try:
        _screen(g, known, config, generator, rng, st)
    except (EncAggError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("round %d falling back to known-benign mean: %s", round_index, exc)
        error = f"{type(exc).__name__}: {exc}"
        st.fallback = True
        st.train_inputs = None

    final = frozenset(known) if st.fallback else st.final
    aggregated = aggregate_mean(final, g)

    losses = None
    if st.train_inputs is not None:
        noise, labels, center, eps = st.train_inputs
        try:
            generator, losses = train_step(generator, noise, labels, center, eps, config.hyper)
        except EncAggError as exc:
            log.warning("generator update skipped in round %d: %s", round_index, exc)

    record = RoundRecord(
        round_index=round_index,
        retained_round1=st.retained,
        final_benign=final,
        benign_label_r1=st.label_r1,
        benign_label_r2=st.label_r2,
        epsilon=st.epsilon,
        fallback_used=st.fallback,
        pseudo_in_benign=st.pseudo_in_benign,
        generator_losses=losses,
        aggregated_norm=float(np.linalg.norm(aggregated)),
        error=error,
    )
    return aggregated, record, generator
