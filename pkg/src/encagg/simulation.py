"""Synthetic federated tasks, client shards and the training round loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import baselines
from .attacks import AttackSpec, craft_round, schedule_poisoning
from .config import ExperimentConfig
from .errors import InvalidInput
from .generator import GeneratorHyper
from .pipeline import EnCAggConfig, RoundRecord, apply_global_update, run_round

log = logging.getLogger(__name__)

HOLDOUT_FRACTION = 0.2


@dataclass
class SyntheticTask:
    kind: str
    d: int
    true_weights: np.ndarray
    noise_std: float
    heterogeneity: float
    eval_x: np.ndarray = None
    eval_y: np.ndarray = None
    # server-held root shard for FLTrust, drawn from the unshifted distribution
    root_x: np.ndarray = None
    root_y: np.ndarray = None


@dataclass
class ClientState:
    id: int
    role: str  # "benign", "known_benign" or "malicious"
    x: np.ndarray
    y: np.ndarray
    attack: Optional[AttackSpec] = None


def _draw(task_kind, w, noise_std, shift, count, rng):
    d = w.size
    x = rng.standard_normal((count, d)) + shift
    x[:, -1] = 1.0  # intercept column
    signal = x @ w + noise_std * rng.standard_normal(count)
    if task_kind == "logistic_classification":
        y = (signal > 0).astype(float)
    else:
        y = signal
    return x, y


def make_federation(config: ExperimentConfig, rng=None):
    """Build the task and the client list. Deterministic in ``config.seed`` unless ``rng`` is given."""
    config.validate()
    rng = np.random.default_rng(config.seed if rng is None else rng)
    d = config.d
    w = rng.standard_normal(d)
    w *= 3.0 / np.linalg.norm(w)
    task = SyntheticTask(config.task, d, w, config.noise_std, config.heterogeneity)

    clients, evx, evy = [], [], []
    n_hold = int(round(HOLDOUT_FRACTION * config.samples_per_client))
    for cid in range(config.n):
        u = rng.standard_normal(d)
        u[-1] = 0.0
        u /= np.linalg.norm(u)
        x, y = _draw(config.task, w, config.noise_std, config.heterogeneity * u, config.samples_per_client, rng)
        evx.append(x[:n_hold])
        evy.append(y[:n_hold])
        clients.append(ClientState(cid, "benign", x[n_hold:], y[n_hold:]))
    task.eval_x = np.vstack(evx)
    task.eval_y = np.concatenate(evy)
    task.root_x, task.root_y = _draw(config.task, w, config.noise_std, 0.0, config.samples_per_client, rng)

    ids = np.arange(config.n)
    known = np.sort(rng.choice(ids, size=config.k, replace=False)) if config.k else np.array([], int)
    others = np.setdiff1d(ids, known)
    malicious = np.sort(rng.choice(others, size=config.n_malicious, replace=False))
    spec = config.attack_spec()
    for c in clients:
        if c.id in known:
            c.role = "known_benign"
        elif c.id in malicious:
            c.role = "malicious"
            c.attack = spec
    return clients, task


def loss_and_grad(task_kind, w, x, y):
    z = x @ w
    if task_kind == "logistic_classification":
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        return loss, x.T @ (p - y) / len(y)
    r = z - y
    return float(0.5 * np.mean(r**2)), x.T @ r / len(y)


def local_gradient(client: ClientState, weights, batch_size: int, rng=None, task_kind="logistic_classification"):
    """Exact mini-batch gradient of the task loss on the client's shard."""
    if len(client.y) == 0:
        return np.zeros_like(np.asarray(weights, dtype=float))
    rng = np.random.default_rng(rng)
    m = len(client.y)
    idx = rng.choice(m, size=min(batch_size, m), replace=False) if batch_size < m else np.arange(m)
    return loss_and_grad(task_kind, np.asarray(weights, dtype=float), client.x[idx], client.y[idx])[1]


def evaluate(task: SyntheticTask, w):
    """(accuracy, loss) on the held-out set; regression accuracy is R^2 clipped to [0, 1]."""
    loss, _ = loss_and_grad(task.kind, w, task.eval_x, task.eval_y)
    if task.kind == "logistic_classification":
        acc = float(np.mean((task.eval_x @ w > 0) == (task.eval_y > 0.5)))
    else:
        var = float(np.var(task.eval_y)) or 1.0
        acc = float(np.clip(1.0 - 2.0 * loss / var, 0.0, 1.0))
    return acc, loss


def filter_metrics(record: RoundRecord, ground_truth_poisoners, n_clients: int):
    """Precision and recall of the final selection against this round's honest clients.

    An empty selection has undefined precision; it is reported as 1.0 and the
    third element of the result flags it.
    """
    selected = set(record.final_benign)
    benign_truth = set(range(n_clients)) - set(ground_truth_poisoners)
    hit = len(selected & benign_truth)
    undefined = not selected
    precision = 1.0 if undefined else hit / len(selected)
    recall = hit / len(benign_truth) if benign_truth else 1.0
    return precision, recall, undefined


@dataclass
class RoundMetrics:
    round: int
    aggregator: str
    attack: str
    accuracy: float
    loss: float
    precision: Optional[float]
    recall: Optional[float]
    epsilon: Optional[float]
    fallback: Optional[bool]
    l_total: Optional[float]
    poisoners: tuple = ()
    excluded_all_poisoners: Optional[bool] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rounds: list
    records: list = field(default_factory=list)
    final_weights: np.ndarray = None

    @property
    def final_accuracy(self) -> float:
        return self.rounds[-1].accuracy

    def summary(self) -> dict:
        enc = [r for r in self.rounds if r.precision is not None]
        attacked = [r for r in enc if r.poisoners]
        tail = self.rounds[-max(1, len(self.rounds) // 10):]
        return {
            "aggregator": self.config.aggregator,
            "attack": self.config.attack,
            "malicious_ratio": self.config.malicious_ratio,
            "seed": self.config.seed,
            "rounds": len(self.rounds),
            "final_accuracy": self.final_accuracy,
            "tail_accuracy": float(np.mean([r.accuracy for r in tail])),
            "final_loss": self.rounds[-1].loss,
            "mean_precision": float(np.mean([r.precision for r in enc])) if enc else None,
            "mean_recall": float(np.mean([r.recall for r in enc])) if enc else None,
            "fallback_rate": float(np.mean([bool(r.fallback) for r in enc])) if enc else None,
            "exclusion_rate": (
                float(np.mean([r.excluded_all_poisoners for r in attacked])) if attacked else None
            ),
        }


def _client_seed(seed, cid, t):
    return np.random.SeedSequence([seed, cid, t, 1])


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Train a global model for ``config.total_rounds`` rounds under the configured attack and rule."""
    config.validate()
    clients, task = make_federation(config)
    n = config.n
    known = [c.id for c in clients if c.role == "known_benign"]
    malicious = [c.id for c in clients if c.role == "malicious"]
    T = config.total_rounds
    schedule = schedule_poisoning(n, malicious, config.malicious_ratio, T, np.random.SeedSequence([config.seed, 7]), config.poison_prob)
    spec = config.attack_spec()

    enc_cfg = EnCAggConfig(
        r=config.r,
        gamma=config.gamma,
        min_samples=config.min_samples,
        n_gen=config.n_gen,
        use_generator=config.use_generator,
        hyper=GeneratorHyper(lr=config.generator_lr),
    )
    generator = enc_cfg.new_generator(np.random.SeedSequence([config.seed, 11])) if config.use_generator else None
    sim_cfg = EnCAggConfig(r=config.r, gamma=config.gamma, min_samples=config.min_samples, use_generator=False)
    krum_f = len(malicious) if config.krum_f < 0 else config.krum_f

    w = np.zeros(config.d)
    rows, records = [], []
    for t in range(T):
        honest = np.vstack(
            [local_gradient(c, w, config.batch_size, _client_seed(config.seed, c.id, t), config.task) for c in clients]
        )
        poisoners = schedule.poisoners(t)
        attack_rng = np.random.SeedSequence([config.seed, 13, t])
        if spec.kind == "adaptive_subspace":
            reference = list(range(n))
        else:
            reference = malicious if len(malicious) >= 2 else list(range(n))

        def simulator(grads):
            return run_round(grads, known, sim_cfg, None, 0)[1].final_benign

        grads = craft_round(
            spec, honest, poisoners, reference, attack_rng, simulator=simulator, known_rows=known, r=config.r
        )

        record = None
        if config.aggregator == "encagg":
            agg, record, generator = run_round(grads, known, enc_cfg, generator, np.random.SeedSequence([config.seed, 17, t]), t)
            p, rc, _ = filter_metrics(record, poisoners, n)
            record.filter_precision, record.filter_recall = p, rc
            records.append(record)
        else:
            server = None
            if config.aggregator == "fltrust":
                rs = np.random.default_rng(_client_seed(config.seed, n, t))
                root = ClientState(-1, "server", task.root_x, task.root_y)
                server = local_gradient(root, w, config.batch_size, rs, config.task)
                if not np.any(server):
                    server = np.full(config.d, 1e-12)
            agg = baselines.aggregate(
                config.aggregator, grads, krum_f=krum_f, trim_fraction=config.trim_fraction, server_gradient=server
            )
        w = apply_global_update(w, agg, config.learning_rate)
        if not np.all(np.isfinite(w)):
            raise InvalidInput(f"global model diverged in round {t}")
        acc, loss = evaluate(task, w)
        rows.append(
            RoundMetrics(
                round=t,
                aggregator=config.aggregator,
                attack=config.attack,
                accuracy=acc,
                loss=loss,
                precision=record.filter_precision if record else None,
                recall=record.filter_recall if record else None,
                epsilon=record.epsilon if record else None,
                fallback=record.fallback_used if record else None,
                l_total=record.generator_losses.l_total if record and record.generator_losses else None,
                poisoners=tuple(poisoners),
                excluded_all_poisoners=(not (set(poisoners) & set(record.final_benign))) if record else None,
            )
        )
    return ExperimentResult(config, rows, records, w)


def centralized_reference(config: ExperimentConfig, steps: Optional[int] = None) -> float:
    """Held-out accuracy of full-batch gradient descent on the pooled client data."""
    clients, task = make_federation(config)
    x = np.vstack([c.x for c in clients])
    y = np.concatenate([c.y for c in clients])
    w = np.zeros(config.d)
    for _ in range(steps or config.total_rounds):
        w = w - config.learning_rate * loss_and_grad(task.kind, w, x, y)[1]
    return evaluate(task, w)[0]
