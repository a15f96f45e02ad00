import json
import math

import numpy as np
import pytest

from encagg import generator as G
from encagg.errors import InvalidInput, NonFiniteLoss
from oracles import central_diff


def tiny_instance(seed, noise_dim=3, hidden=4, n_gen=6):
    rng = np.random.default_rng(seed)
    model = G.init_generator(noise_dim, hidden, rng, head_gain=1.0)
    model.anchor(rng.normal(size=2), float(rng.uniform(0.5, 2.0)))
    noise = G.sample_noise(n_gen, noise_dim, rng)
    labels = (rng.random(n_gen) < 0.5).astype(float)
    center = rng.normal(size=2) * 0.5
    eps = float(rng.uniform(0.3, 1.5))
    return model, noise, labels, center, eps


def fd_relative_error(model, noise, labels, center, eps, hyper, h=1e-5):
    _, grads = G.loss_and_grad(model, noise, labels, center, eps, hyper)
    worst = 0.0
    for name in G.PARAM_NAMES:
        base = model.params[name].copy()

        def f(value, name=name):
            model.params[name] = value
            out = G.total_loss(model, noise, labels, center, eps, hyper)
            model.params[name] = base
            return out

        num = central_diff(f, base, h)
        scale = max(np.abs(num).max(), np.abs(grads[name]).max(), 1e-8)
        worst = max(worst, np.abs(num - grads[name]).max() / scale)
    return worst


def test_zero_model_output():
    model = G.init_generator(4, 3, 0)
    for k in model.params:
        model.params[k][...] = 0.0
    batch = G.generate(model, np.random.default_rng(1).normal(size=(5, 4)))
    assert np.all(batch.points == 0.0)
    assert np.all(batch.confidences == 0.5)


def test_hand_computed_forward():
    # two hidden units, one noise input, weights set by hand
    p = {
        "W1": np.array([[0.5], [-1.0]]),
        "b1": np.array([0.1, 0.0]),
        "W2": np.array([[1.0, 0.0], [0.0, 1.0]]),
        "b2": np.zeros(2),
        "W3": np.array([[1.0, 1.0], [0.0, 1.0]]),
        "b3": np.zeros(2),
        "Wg": np.array([[1.0, 0.0], [0.0, -1.0]]),
        "bg": np.array([0.0, 0.2]),
        "Wy": np.array([[2.0, 0.0]]),
        "by": np.array([-0.5]),
    }
    model = G.GeneratorModel(p, output_scale=3.0, output_center=np.array([1.0, -1.0]))
    z = 0.8
    h1 = [math.tanh(0.5 * z + 0.1), math.tanh(-1.0 * z)]
    h2 = [math.tanh(h1[0]), math.tanh(h1[1])]
    h3 = [math.tanh(h2[0] + h2[1]), math.tanh(h2[1])]
    gx = 1.0 + 3.0 * math.tanh(h3[0])
    gy = -1.0 + 3.0 * math.tanh(-h3[1] + 0.2)
    conf = 1.0 / (1.0 + math.exp(-(2.0 * h3[0] - 0.5)))
    batch = G.generate(model, np.array([[z]]))
    assert abs(batch.points[0, 0] - gx) < 1e-12
    assert abs(batch.points[0, 1] - gy) < 1e-12
    assert abs(batch.confidences[0] - conf) < 1e-12


def test_outputs_inside_box():
    rng = np.random.default_rng(2)
    model = G.init_generator(5, 8, rng, head_gain=4.0)
    model.anchor([2.0, -3.0], 0.7)
    batch = G.generate(model, rng.normal(size=(200, 5)) * 5)
    assert np.all(np.abs(batch.points - [2.0, -3.0]) <= 0.7)
    assert np.all((batch.confidences > 0) & (batch.confidences < 1))


def test_loss_clust_examples():
    assert G.loss_clust([1 - 1e-7] * 4, [1, 1, 1, 1], 2.0, 1.0) <= 2.0 * 1e-6
    assert G.loss_clust([0.5], [1], 2.0, 1.0) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert G.loss_clust([0.5], [1], 3.0, 1.5) / G.loss_clust([0.5], [0], 3.0, 1.5) == pytest.approx(2.0)
    with pytest.raises(InvalidInput):
        G.loss_clust([0.5], [1], 1.0, 1.0)


def test_loss_dir_examples():
    a = 0.3
    pts = np.array([[a, a], [a, -a], [-a, a], [-a, -a]])
    assert G.loss_dir(pts, [0, 0], 0.2) == pytest.approx(0.0, abs=1e-15)
    assert G.loss_dir(np.zeros((5, 2)), [0, 0], 0.4) == pytest.approx(0.8)
    assert G.loss_dir(np.array([[1.0, 0.0], [3.0, 0.0]]), [0, 0], 0.5) == pytest.approx(2.5)


def test_loss_dis_examples():
    assert G.loss_dis(np.array([[0.0, 0.0], [5.0, 0.0]]), 0.5, 1.0) == 0.0
    assert G.loss_dis(np.array([[1.0, 1.0], [1.0, 1.0]]), 0.5, 2.0) == pytest.approx(0.5)
    s = 0.5 * 1.3
    pts = np.array([[0.0, 0.0], [s / 2, 0.0], [s, 0.0]])
    assert G.loss_dis(pts, 0.5, 1.3) == pytest.approx(((s / 2) ** 2 * 2) / 3)


def test_composite_identity():
    model, noise, labels, center, eps = tiny_instance(3)
    hyper = G.GeneratorHyper(alpha=0.7, beta=1.9)
    rep, _ = G.loss_and_grad(model, noise, labels, center, eps, hyper)
    assert abs(rep.l_total - (rep.l_clust + 0.7 * rep.l_dir + 1.9 * rep.l_dis)) <= 1e-10
    assert min(rep.l_clust, rep.l_dir, rep.l_dis) >= 0


@pytest.mark.parametrize("seed", range(10))
def test_backprop_matches_finite_differences(seed):
    model, noise, labels, center, eps = tiny_instance(seed)
    assert fd_relative_error(model, noise, labels, center, eps, G.GeneratorHyper()) <= 1e-4


def test_descent_with_halving():
    for seed in range(20):
        model, noise, labels, center, eps = tiny_instance(100 + seed)
        before = G.total_loss(model, noise, labels, center, eps, G.GeneratorHyper())
        lr = 0.1
        for _ in range(21):
            new, _ = G.train_step(model, noise, labels, center, eps, G.GeneratorHyper(lr=lr))
            if G.total_loss(new, noise, labels, center, eps, G.GeneratorHyper()) <= before:
                break
            lr /= 2
        else:
            pytest.fail(f"no descent within 20 halvings for seed {seed}")


def test_zero_gradient_is_fixed_point():
    model, noise, labels, center, eps = tiny_instance(4)
    for k in model.params:
        model.params[k][...] = 0.0
    # with w1 = 2 w0, confidence 0.5 on one positive per two negatives has zero
    # head-bias gradient, and every weight gradient vanishes with zero activations
    hyper = G.GeneratorHyper(alpha=0.0, beta=0.0, w1=2.0, w0=1.0)
    labels = np.array([1, 0, 0, 1, 0, 0], dtype=float)
    new, _ = G.train_step(model, noise, labels, center, eps, hyper)
    for k in G.PARAM_NAMES:
        np.testing.assert_array_equal(new.params[k], model.params[k])


def test_train_step_returns_new_model():
    model, noise, labels, center, eps = tiny_instance(5)
    snap = {k: v.copy() for k, v in model.params.items()}
    new, rep = G.train_step(model, noise, labels, center, eps)
    for k in G.PARAM_NAMES:
        np.testing.assert_array_equal(model.params[k], snap[k])
    assert rep.l_total == pytest.approx(G.total_loss(model, noise, labels, center, eps, G.GeneratorHyper()))


def test_non_finite_loss_raises():
    model, noise, labels, center, eps = tiny_instance(6)
    with pytest.raises(NonFiniteLoss), np.errstate(invalid="ignore"):
        G.loss_and_grad(model, noise, labels, np.array([np.inf, 0.0]), eps, G.GeneratorHyper())


def test_confidences_stay_in_open_interval():
    model, noise, labels, center, eps = tiny_instance(7)
    hyper = G.GeneratorHyper(lr=0.5)
    for _ in range(200):
        model, _ = G.train_step(model, noise, np.ones_like(labels), center, eps, hyper)
    conf = G.generate(model, noise).confidences
    assert np.all((conf > 0) & (conf < 1))


def test_smooth_part_meets_averaged_gradient_bound():
    # with the mean-offset term off the objective is C1 and the averaged
    # descent bound applies; the full loss is covered in the acceptance suite
    model, noise, labels, center, eps = tiny_instance(8, noise_dim=16, hidden=32, n_gen=100)
    hyper = G.GeneratorHyper(alpha=0.0, lr=1e-3)
    norms, l0 = [], None
    for _ in range(500):
        rep, grads = G.loss_and_grad(model, noise, labels, center, eps, hyper)
        l0 = rep.l_total if l0 is None else l0
        norms.append(G.grad_norm(grads))
        model, _ = G.train_step(model, noise, labels, center, eps, hyper)
    assert min(norms) <= 1.05 * math.sqrt(2 * l0 / (hyper.lr * 500))


def test_checkpoint_round_trip(tmp_path):
    model, *_ = tiny_instance(9)
    path = tmp_path / "gen.json"
    G.save_checkpoint(model, path)
    back = G.load_checkpoint(path)
    for k in G.PARAM_NAMES:
        np.testing.assert_array_equal(back.params[k], model.params[k])
    assert back.output_scale == model.output_scale
    np.testing.assert_array_equal(back.output_center, model.output_center)
    record = json.loads(path.read_text())
    assert record["version"] == G.CHECKPOINT_VERSION
    record["version"] = "other"
    with pytest.raises(InvalidInput):
        G.from_dict(record)


def test_model_validation():
    model, *_ = tiny_instance(10)
    with pytest.raises(InvalidInput):
        G.GeneratorModel({k: v for k, v in model.params.items() if k != "Wy"})
    with pytest.raises(InvalidInput):
        G.GeneratorModel(model.params, output_scale=0.0)
