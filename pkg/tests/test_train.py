import json
import math

import numpy as np
import pytest

from anovqc.circuit import CircuitConfig, ModelParams, SchemeSpec, init_params
from anovqc.data import Dataset
from anovqc.errors import ConfigError, InputError
from anovqc.train import (
    AdamState,
    JsonlWriter,
    TrainConfig,
    adam_step,
    cross_entropy_loss,
    evaluate_accuracy,
    fit,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
    sgd_step,
    summarize_trials,
)


def small_circuit(**kw):
    return CircuitConfig(3, 2, SchemeSpec("sliding_k_local", k=2), **kw)


def toy_data(rng, m=24, n=3):
    X = rng.uniform(-np.pi / 2, np.pi / 2, size=(m, n))
    y = (X[:, 0] > 0).astype(np.int64)
    return Dataset(X, y, 2)


def test_cross_entropy_uniform_logits():
    assert cross_entropy_loss(np.zeros(10), 3) == pytest.approx(math.log(10), rel=1e-15)


def test_cross_entropy_large_logits_stable():
    assert cross_entropy_loss([1000.0, 0.0], 1) == pytest.approx(1000.0, rel=1e-15)
    assert cross_entropy_loss([1000.0, 0.0], 0) == pytest.approx(0.0, abs=1e-300)


def test_cross_entropy_extended_precision(rng):
    for _ in range(20):
        z = rng.normal(scale=5, size=6)
        label = int(rng.integers(0, 6))
        zl = z.astype(np.longdouble)
        ref = np.log(np.sum(np.exp(zl))) - zl[label]
        assert abs(cross_entropy_loss(z, label) - float(ref)) < 1e-12


def test_cross_entropy_bad_labels():
    for bad in (2, -1, 0.5):
        with pytest.raises(InputError):
            cross_entropy_loss([0.0, 1.0], bad)


def test_mse_loss():
    assert mse_loss([1.0, 2.0], [0.0, 0.0]) == 5.0
    assert mse_loss([[1.0], [3.0]], [[0.0], [0.0]]) == 5.0
    with pytest.raises(InputError):
        mse_loss([1.0], [1.0, 2.0])


def test_adam_three_steps_by_hand():
    g = [np.array([0.5, -2.0]), np.array([1.0, 0.0]), np.array([-1.0, 4.0])]
    p = np.array([1.0, 1.0])
    state = AdamState.zeros(2)
    for gt in g:
        p, state = adam_step(p, gt, state, learning_rate=0.1)
    # first moments by hand: .05, .145, .0305 and -.2, -.18, .238
    b1, b2 = 0.9, 0.999
    expected = []
    for c in range(2):
        m = v = 0.0
        x = 1.0
        for t, gt in enumerate(g, start=1):
            m = b1 * m + (1 - b1) * gt[c]
            v = b2 * v + (1 - b2) * gt[c] ** 2
            x -= 0.1 * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + 1e-8)
        expected.append(x)
    assert state.t == 3
    assert np.allclose(state.m, [0.0305, 0.238], atol=1e-15)
    assert np.allclose(p, expected, atol=1e-14)


def test_adam_first_step_is_signed_learning_rate():
    p, _ = adam_step(np.zeros(3), np.array([3.0, -0.01, 0.0]), AdamState.zeros(3), learning_rate=0.5)
    assert np.allclose(p, [-0.5, 0.5, 0.0], atol=1e-6)


def test_zero_gradient_leaves_params():
    p = np.array([0.3, -1.0])
    out, state = adam_step(p, np.zeros(2), AdamState.zeros(2))
    assert np.array_equal(out, p)
    assert np.array_equal(sgd_step(p, np.zeros(2), 0.1), p)


def test_adam_shape_mismatch():
    with pytest.raises(InputError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2))


@pytest.mark.parametrize(
    "kwargs",
    [dict(epochs=0), dict(batch_size=0), dict(learning_rate=-1.0), dict(optimizer="rmsprop"),
     dict(loss_kind="hinge"), dict(theta_gradient="fd"), dict(beta1=1.0)],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_zero_learning_rate_keeps_params(rng):
    data = toy_data(rng)
    circuit = small_circuit()
    initial = init_params(circuit, rng)
    params, _ = fit(data, TrainConfig(epochs=2, learning_rate=0.0, batch_size=8), circuit, initial=initial)
    assert np.array_equal(params.flatten(), initial.flatten())


def test_single_sample_overfits():
    X = np.array([[0.4, -0.9, 1.2]])
    data = Dataset(X, np.array([1]), 2)
    losses = []
    params, hist = fit(
        data, TrainConfig(epochs=40, batch_size=1, learning_rate=0.05), small_circuit(), on_epoch=lambda m: losses.append(m.train_loss)
    )
    assert [m.train_loss for m in hist] == losses
    assert all(b <= a for a, b in zip(losses[3:], losses[4:]))
    assert losses[-1] < 0.1 * losses[0]
    assert hist[-1].test_accuracy == 1.0


def test_training_is_deterministic(rng):
    data = toy_data(rng)
    cfg = TrainConfig(epochs=2, batch_size=8, seed=5)
    p1, h1 = fit(data, cfg, small_circuit())
    p2, h2 = fit(data, cfg, small_circuit())
    assert np.array_equal(p1.flatten(), p2.flatten())
    assert [m.record() for m in h1] == [m.record() for m in h2]


def test_fit_checks_shapes(rng):
    data = toy_data(rng, n=4)
    with pytest.raises(ConfigError):
        fit(data, TrainConfig(epochs=1), small_circuit())
    three = Dataset(np.zeros((3, 3)), np.array([0, 1, 2]), 3)
    with pytest.raises(ConfigError):
        fit(three, TrainConfig(epochs=1), small_circuit())


def test_accuracy_ties_pick_lowest_index():
    # without rotations and phi = 0 every output is 0, so argmax is class 0
    circuit = small_circuit(use_rotations=False)
    params = ModelParams(np.zeros((0, 3)), [np.zeros(16), np.zeros(16)])
    data = Dataset(np.zeros((4, 3)), np.array([0, 0, 1, 0]), 2)
    assert evaluate_accuracy(params, circuit, data) == 0.75
    with pytest.raises(InputError):
        evaluate_accuracy(params, circuit, Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int), 2))


def test_checkpoint_round_trip(tmp_path, rng):
    circuit = CircuitConfig(4, 3, SchemeSpec("pairwise_combinatorial", subset=[1, 2, 4]), n_layers=2)
    params = init_params(circuit, rng)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, circuit, {"note": "x"})
    back, circ, extra = load_checkpoint(path)
    assert circ == circuit and extra == {"note": "x"}
    assert np.array_equal(back.flatten(), params.flatten())


def test_corrupt_checkpoints(tmp_path, rng):
    circuit = small_circuit()
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, init_params(circuit, rng), circuit)
    doc = json.loads(path.read_text())
    doc["params"] = doc["params"][:-1]
    bad = tmp_path / "short.json"
    bad.write_text(json.dumps(doc))
    (tmp_path / "junk.json").write_text("{not json")
    (tmp_path / "other.json").write_text('{"format": "something"}')
    for name in ("short.json", "junk.json", "other.json", "missing.json"):
        with pytest.raises(ConfigError):
            load_checkpoint(tmp_path / name)


def test_jsonl_writer(tmp_path):
    with JsonlWriter(tmp_path / "m.jsonl") as w:
        w.write({"a": 1})
        w.write({"a": 2})
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert [json.loads(s)["a"] for s in lines] == [1, 2]


def test_summarize_trials_population_std():
    s = summarize_trials([0.8, 0.9, 1.0])
    assert s["mean_test_accuracy"] == pytest.approx(0.9)
    assert s["std_test_accuracy"] == pytest.approx(math.sqrt(2 / 300))
    assert s["n_trials"] == 3


def test_mse_examples(rng):
    assert mse_loss([0.3, 0.4], [0.3, 0.4]) == 0.0
    assert mse_loss([1.0, 0.0], [0.0, 1.0]) == 2.0
    a, b = rng.normal(size=5), rng.normal(size=5)
    total = 0.0
    for i in range(5):
        total += (a[i] - b[i]) * (a[i] - b[i])
    assert mse_loss(a, b) == pytest.approx(total, rel=1e-14)


def test_adam_constant_gradient_step_size():
    p, state = np.zeros(2), AdamState.zeros(2)
    g = np.array([0.3, -7.0])
    for _ in range(200):
        before = p
        p, state = adam_step(p, g, state, learning_rate=0.01)
    assert np.allclose(before - p, 0.01 * np.sign(g), rtol=1e-6)


def test_single_point_mse_memorization():
    circuit = CircuitConfig(2, 1, SchemeSpec("sliding_k_local", k=1), n_layers=1)
    data = Dataset(np.array([[0.5, -0.2]]), np.array([0]), 1)
    cfg = TrainConfig(epochs=300, batch_size=1, learning_rate=0.05, loss_kind="mse")
    _, hist = fit(data, cfg, circuit)
    assert hist[-1].train_loss <= 1e-3


def test_constant_output_on_balanced_set():
    circuit = small_circuit(use_rotations=False)
    params = ModelParams(np.zeros((0, 3)), [np.zeros(16), np.zeros(16)])
    data = Dataset(np.zeros((6, 3)), np.array([0, 1, 0, 1, 0, 1]), 2)
    assert evaluate_accuracy(params, circuit, data) == 0.5
