"""Pseudo-gradient generator: a small tanh MLP with hand-written backprop.

Noise vectors go through three tanh layers. Two heads read the last hidden
layer: a 2-D point head, squashed by tanh and mapped affinely onto the
projected-gradient plane, and a sigmoid confidence head that predicts whether
the point will land in the benign cluster.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, NonFiniteLoss

CHECKPOINT_VERSION = "encagg-gen-v1"
PROB_CLAMP = 1e-7
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Wg", "bg", "Wy", "by")


@dataclass
class GeneratorHyper:
    alpha: float = 1.0
    beta: float = 1.0
    w1: float = 2.0
    w0: float = 1.0
    tau_factor: float = 0.25  # tau = tau_factor * epsilon
    rho: float = 0.5
    lr: float = 1e-3


@dataclass
class GeneratorModel:
    params: dict
    output_scale: float = 1.0
    output_center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.params)
        if missing:
            raise InvalidInput(f"generator parameters missing: {sorted(missing)}")
        self.params = {k: np.asarray(self.params[k], dtype=float) for k in PARAM_NAMES}
        self.output_center = np.asarray(self.output_center, dtype=float).reshape(2)
        if not self.output_scale > 0:
            raise InvalidInput("output_scale must be positive")
        if self.hidden_dim < 2:
            raise InvalidInput("hidden_dim must be >= 2")

    @property
    def noise_dim(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.params["W1"].shape[0]

    def copy(self) -> "GeneratorModel":
        return copy.deepcopy(self)

    def anchor(self, center, scale: float) -> None:
        """Re-anchor the output box at ``center`` with half-width ``scale``."""
        self.output_center = np.asarray(center, dtype=float).reshape(2).copy()
        self.output_scale = float(scale) if scale > 0 else 1.0


@dataclass
class PseudoGradientBatch:
    points: np.ndarray
    confidences: np.ndarray
    source_noise: np.ndarray


@dataclass
class GeneratorLossReport:
    l_clust: float
    l_dir: float
    l_dis: float
    l_total: float
    labels: np.ndarray


def init_generator(noise_dim: int = 16, hidden_dim: int = 32, rng=None, head_gain: float = 0.5) -> GeneratorModel:
    """Xavier-style initialisation; the point head starts with a reduced gain."""
    rng = np.random.default_rng(rng)

    def dense(fan_out, fan_in, gain=1.0):
        return rng.normal(0.0, gain * np.sqrt(1.0 / fan_in), size=(fan_out, fan_in))

    params = {
        "W1": dense(hidden_dim, noise_dim),
        "b1": np.zeros(hidden_dim),
        "W2": dense(hidden_dim, hidden_dim),
        "b2": np.zeros(hidden_dim),
        "W3": dense(hidden_dim, hidden_dim),
        "b3": np.zeros(hidden_dim),
        "Wg": dense(2, hidden_dim, head_gain),
        "bg": np.zeros(2),
        "Wy": dense(1, hidden_dim, head_gain),
        "by": np.zeros(1),
    }
    return GeneratorModel(params)


def sample_noise(n_gen: int, noise_dim: int, rng) -> np.ndarray:
    return np.random.default_rng(rng).standard_normal((n_gen, noise_dim))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _forward(model: GeneratorModel, noise: np.ndarray):
    p = model.params
    h1 = np.tanh(noise @ p["W1"].T + p["b1"])
    h2 = np.tanh(h1 @ p["W2"].T + p["b2"])
    h3 = np.tanh(h2 @ p["W3"].T + p["b3"])
    t = np.tanh(h3 @ p["Wg"].T + p["bg"])
    points = model.output_center + model.output_scale * t
    conf = _sigmoid(h3 @ p["Wy"].T + p["by"])[:, 0]
    return points, conf, (noise, h1, h2, h3, t)


def generate(model: GeneratorModel, noise, epsilon: float = 0.0) -> PseudoGradientBatch:
    """Run the generator on a batch of noise vectors.

    ``epsilon`` is accepted for interface symmetry; the output box is set by
    the model's anchor, not by this argument.
    """
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape[0] < 1 or not np.all(np.isfinite(noise)):
        raise InvalidInput("noise must be a finite, non-empty batch")
    points, conf, _ = _forward(model, noise)
    return PseudoGradientBatch(points=points, confidences=conf, source_noise=noise)


# -- losses ------------------------------------------------------------------


def loss_clust(confidences, labels, w1: float = 2.0, w0: float = 1.0) -> float:
    """Weighted binary cross-entropy of the confidence head against cluster membership."""
    if not w1 > w0 > 0:
        raise InvalidInput(f"need w1 > w0 > 0, got w1={w1}, w0={w0}")
    y = np.asarray(labels, dtype=float)
    p = np.clip(np.asarray(confidences, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(w1 * y * np.log(p) + w0 * (1.0 - y) * np.log(1.0 - p)))


def _grad_clust(conf, labels, w1, w0):
    y = np.asarray(labels, dtype=float)
    n = conf.size
    p = np.clip(conf, PROB_CLAMP, 1.0 - PROB_CLAMP)
    inside = (conf > PROB_CLAMP) & (conf < 1.0 - PROB_CLAMP)
    return -(w1 * y / p - w0 * (1.0 - y) / (1.0 - p)) * inside / n


def loss_dir(points, benign_center, tau: float) -> float:
    """Penalise a shifted mean offset and any axis whose spread falls below tau.

    Standard deviations use the population convention (divide by n).
    """
    off = np.asarray(points, dtype=float) - np.asarray(benign_center, dtype=float)
    mu = off.mean(axis=0)
    sigma = off.std(axis=0)
    return float(np.abs(mu).sum() + np.maximum(tau - sigma, 0.0).sum())


def _grad_dir(points, center, tau):
    off = points - center
    n = off.shape[0]
    mu = off.mean(axis=0)
    sigma = off.std(axis=0)
    g = np.broadcast_to(np.sign(mu) / n, off.shape).copy()
    active = (sigma < tau) & (sigma > 0)
    safe = np.where(sigma > 0, sigma, 1.0)
    g -= active * (off - mu) / (n * safe)
    return g


def loss_dis(points, rho: float, epsilon: float) -> float:
    """Squared hinge on pairwise distances shorter than rho * epsilon, summed over pairs / n."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    iu, ju = np.triu_indices(n, 1)
    dist = np.linalg.norm(pts[iu] - pts[ju], axis=1)
    gap = np.maximum(rho * epsilon - dist, 0.0)
    return float(np.sum(gap**2) / n)


def _grad_dis(points, rho, epsilon):
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    gap = np.maximum(rho * epsilon - dist, 0.0)
    np.fill_diagonal(gap, 0.0)
    safe = np.where(dist > 0, dist, 1.0)
    coef = np.where(dist > 0, -2.0 * gap / safe, 0.0) / n
    # row i sums over every pair that contains point i
    return np.einsum("ij,ijk->ik", coef, diff)


def _losses(points, conf, labels, center, epsilon, hyper: GeneratorHyper):
    tau = hyper.tau_factor * epsilon
    lc = loss_clust(conf, labels, hyper.w1, hyper.w0)
    ld = loss_dir(points, center, tau)
    ls = loss_dis(points, hyper.rho, epsilon)
    total = lc + hyper.alpha * ld + hyper.beta * ls
    return lc, ld, ls, total


def total_loss(model, noise, labels, benign_center, epsilon, hyper: GeneratorHyper) -> float:
    points, conf, _ = _forward(model, np.asarray(noise, dtype=float))
    return _losses(points, conf, labels, benign_center, epsilon, hyper)[3]


def loss_and_grad(model, noise, labels, benign_center, epsilon, hyper: GeneratorHyper):
    """Composite loss report and its gradient with respect to every parameter."""
    noise = np.asarray(noise, dtype=float)
    labels = np.asarray(labels, dtype=float)
    center = np.asarray(benign_center, dtype=float)
    p = model.params
    points, conf, (x, h1, h2, h3, t) = _forward(model, noise)
    lc, ld, ls, total = _losses(points, conf, labels, center, epsilon, hyper)
    report = GeneratorLossReport(lc, ld, ls, total, labels.copy())
    if not all(np.isfinite(v) for v in (lc, ld, ls, total)):
        raise NonFiniteLoss(f"generator loss not finite: clust={lc}, dir={ld}, dis={ls}")

    tau = hyper.tau_factor * epsilon
    d_points = hyper.alpha * _grad_dir(points, center, tau) + hyper.beta * _grad_dis(points, hyper.rho, epsilon)
    d_conf = _grad_clust(conf, labels, hyper.w1, hyper.w0)

    d_zg = d_points * model.output_scale * (1.0 - t**2)
    d_zy = (d_conf * conf * (1.0 - conf))[:, None]
    grads = {
        "Wg": d_zg.T @ h3,
        "bg": d_zg.sum(axis=0),
        "Wy": d_zy.T @ h3,
        "by": d_zy.sum(axis=0),
    }
    d_h3 = d_zg @ p["Wg"] + d_zy @ p["Wy"]
    d_a3 = d_h3 * (1.0 - h3**2)
    grads["W3"] = d_a3.T @ h2
    grads["b3"] = d_a3.sum(axis=0)
    d_a2 = (d_a3 @ p["W3"]) * (1.0 - h2**2)
    grads["W2"] = d_a2.T @ h1
    grads["b2"] = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ p["W2"]) * (1.0 - h1**2)
    grads["W1"] = d_a1.T @ x
    grads["b1"] = d_a1.sum(axis=0)
    return report, grads


def grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(np.sum(g**2) for g in grads.values())))


def train_step(model: GeneratorModel, noise, labels, benign_center, epsilon: float, hyper: GeneratorHyper = None):
    """One plain gradient-descent step on the composite loss.

    Labels are constants for the step. Returns the updated model (a new
    object) and the loss report evaluated before the step.
    """
    hyper = hyper or GeneratorHyper()
    if not hyper.lr > 0:
        raise InvalidInput("lr must be positive")
    report, grads = loss_and_grad(model, noise, labels, benign_center, epsilon, hyper)
    new = model.copy()
    for name in PARAM_NAMES:
        new.params[name] = model.params[name] - hyper.lr * grads[name]
    return new, report


# -- checkpoints -------------------------------------------------------------


def to_dict(model: GeneratorModel) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "output_scale": model.output_scale,
        "output_center": model.output_center.tolist(),
        "tensors": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.params.items()
        },
    }


def from_dict(record: dict) -> GeneratorModel:
    if record.get("version") != CHECKPOINT_VERSION:
        raise InvalidInput(f"unsupported checkpoint version {record.get('version')!r}")
    params = {
        k: np.asarray(t["data"], dtype=float).reshape(t["shape"]) for k, t in record["tensors"].items()
    }
    return GeneratorModel(params, float(record["output_scale"]), np.asarray(record["output_center"]))


def save_checkpoint(model: GeneratorModel, path) -> None:
    Path(path).write_text(json.dumps(to_dict(model)))


def load_checkpoint(path) -> GeneratorModel:
    return from_dict(json.loads(Path(path).read_text()))
