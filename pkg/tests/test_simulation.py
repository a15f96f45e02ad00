import numpy as np
import pytest

from encagg.config import ExperimentConfig
from encagg.pipeline import RoundRecord
from encagg.simulation import (
    centralized_reference,
    evaluate,
    filter_metrics,
    local_gradient,
    loss_and_grad,
    make_federation,
    run_experiment,
)
from oracles import central_diff


def small(**kw):
    base = dict(n=12, k=2, rounds=15, d=8, samples_per_client=60)
    base.update(kw)
    return ExperimentConfig(**base).validate()


def record(final):
    return RoundRecord(0, frozenset(), frozenset(final), 0, 0, 1.0, False, 0, None, 0.0)


def test_federation_roles_and_determinism():
    cfg = small(malicious_ratio=0.25)
    a, ta = make_federation(cfg)
    b, tb = make_federation(cfg)
    assert [c.role for c in a] == [c.role for c in b]
    assert np.array_equal(ta.true_weights, tb.true_weights)
    roles = [c.role for c in a]
    assert roles.count("known_benign") == 2 and roles.count("malicious") == 3
    for c in a:
        assert (c.attack is None) == (c.role != "malicious")
        assert np.all(c.x[:, -1] == 1.0)


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 4))
    y = (rng.random(30) < 0.5).astype(float)
    w = rng.normal(size=4)
    for kind in ("logistic_classification", "linear_regression"):
        _, g = loss_and_grad(kind, w, x, y)
        num = central_diff(lambda v: loss_and_grad(kind, v, x, y)[0], w)
        np.testing.assert_allclose(g, num, atol=1e-8)


def test_local_gradient_batch_and_seed():
    clients, _ = make_federation(small())
    c = clients[0]
    w = np.zeros(8)
    g1 = local_gradient(c, w, 4, 3)
    g2 = local_gradient(c, w, 4, 3)
    assert np.array_equal(g1, g2)
    full = local_gradient(c, w, 10_000, 3)
    np.testing.assert_allclose(full, loss_and_grad("logistic_classification", w, c.x, c.y)[1])


def test_filter_metrics_examples():
    assert filter_metrics(record(range(6)), [6, 7], 8)[:2] == (1.0, 1.0)
    p, r, undefined = filter_metrics(record(range(10)), [6, 7, 8, 9], 10)
    assert (p, r, undefined) == (0.6, 1.0, False)
    p, r, undefined = filter_metrics(record([]), [0], 4)
    assert p == 1.0 and r == 0.0 and undefined


def test_filter_metrics_random_against_sets():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        sel = set(rng.choice(n, size=rng.integers(1, n + 1), replace=False).tolist())
        bad = set(rng.choice(n, size=rng.integers(0, n), replace=False).tolist())
        good = set(range(n)) - bad
        p, r, _ = filter_metrics(record(sel), bad, n)
        assert p == pytest.approx(len(sel & good) / len(sel))
        assert r == pytest.approx(len(sel & good) / len(good) if good else 1.0)


def test_run_experiment_shapes_and_reproducibility():
    cfg = small(attack="lie", malicious_ratio=0.25)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert len(a.rounds) == cfg.total_rounds
    assert [r.accuracy for r in a.rounds] == [r.accuracy for r in b.rounds]
    assert np.array_equal(a.final_weights, b.final_weights)
    s = a.summary()
    assert 0 <= s["mean_precision"] <= 1 and 0 <= s["mean_recall"] <= 1


def test_client_conservation():
    cfg = small(attack="scale", malicious_ratio=0.25)
    res = run_experiment(cfg)
    for rec in res.records:
        assert rec.retained_round1 <= set(range(cfg.n))
        discarded = set(range(cfg.n)) - rec.retained_round1
        assert len(discarded) + len(rec.retained_round1) == cfg.n
        if not rec.fallback_used:
            assert rec.final_benign <= rec.retained_round1


@pytest.mark.parametrize("aggregator", ["mean", "krum", "median", "trimmed_mean", "fltrust"])
def test_baseline_runs(aggregator):
    res = run_experiment(small(aggregator=aggregator, k=0, attack="gaussian", malicious_ratio=0.25))
    assert all(r.precision is None for r in res.rounds)
    assert 0 <= res.final_accuracy <= 1


def test_clean_training_learns():
    cfg = small(rounds=60, aggregator="mean")
    assert run_experiment(cfg).final_accuracy > 0.8
    assert centralized_reference(cfg, 200) > 0.8


def test_regression_task_accuracy_is_r2():
    cfg = small(task="linear_regression", aggregator="mean", rounds=80, learning_rate=0.05)
    clients, task = make_federation(cfg)
    assert evaluate(task, np.zeros(cfg.d))[0] == 0.0
    assert evaluate(task, task.true_weights)[0] > 0.9
    assert run_experiment(cfg).final_accuracy > 0.5
